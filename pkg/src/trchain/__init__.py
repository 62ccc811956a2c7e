"""Timed-release blockchain: proof-of-work mining that recovers each block's private key."""

__version__ = "0.1.0"
