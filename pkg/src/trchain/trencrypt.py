"""Encrypt to a future block's public key; decrypt once it has been mined.

Hybrid ElGamal: the shared secret s = h^k (= c1^x) keys a SHA-256 counter
keystream, and SHA-256(s || payload) authenticates the result.

Wire layout (stored as timelock transaction metadata)::

    target_height  u64 BE
    c1_len         u16 BE
    c1             big-endian magnitude
    tag            32 bytes
    payload        remainder
"""
from __future__ import annotations

import hashlib
import math
import secrets
import struct
from dataclasses import dataclass

from .errors import FormatError, InPastError, IntegrityError
from .keychain import PrivateKey, PublicKey
from .modmath import be_bytes, mod_exp


@dataclass(frozen=True)
class Ciphertext:
    target_height: int
    c1: int
    payload: bytes
    tag: bytes

    def to_bytes(self) -> bytes:
        c1 = be_bytes(self.c1)
        return struct.pack(">QH", self.target_height, len(c1)) + c1 + self.tag + self.payload

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Ciphertext":
        if len(blob) < 10:
            raise FormatError("ciphertext shorter than its fixed header")
        target_height, c1_len = struct.unpack_from(">QH", blob)
        end = 10 + c1_len
        if c1_len == 0 or len(blob) < end + 32:
            raise FormatError("ciphertext truncated")
        c1 = int.from_bytes(blob[10:end], "big")
        if c1 < 2:
            raise FormatError("ciphertext c1 out of range")
        return cls(target_height, c1, bytes(blob[end + 32 :]), bytes(blob[end : end + 32]))


def release_height(t_now: float, t_release: float, block_time: float, current_height: int) -> int:
    """Smallest height whose expected mining time is not before ``t_release``."""
    if block_time <= 0:
        raise ValueError("block_time must be positive")
    if t_release < t_now:
        raise InPastError(f"release time {t_release} is before now ({t_now})")
    return current_height + math.ceil((t_release - t_now) / block_time)


def keystream(secret: int, length: int) -> bytes:
    sb = be_bytes(secret)
    out = bytearray()
    i = 0
    while len(out) < length:
        out += hashlib.sha256(sb + struct.pack(">Q", i)).digest()
        i += 1
    return bytes(out[:length])


def _xor(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


def _tag(secret: int, payload: bytes) -> bytes:
    return hashlib.sha256(be_bytes(secret) + payload).digest()


def encrypt_with_k(pk: PublicKey, target_height: int, plaintext: bytes, k: int) -> Ciphertext:
    if not 1 <= k < pk.n:
        raise ValueError("ephemeral exponent out of range")
    c1 = mod_exp(pk.g, k, pk.p)
    s = mod_exp(pk.h, k, pk.p)
    payload = _xor(plaintext, keystream(s, len(plaintext)))
    return Ciphertext(target_height, c1, payload, _tag(s, payload))


def encrypt(pk: PublicKey, target_height: int, plaintext: bytes, rng=None) -> Ciphertext:
    """``rng`` needs ``randint(lo, hi)``; OS entropy when omitted."""
    if rng is None:
        k = 1 + secrets.randbelow(pk.n - 1)
    else:
        k = rng.randint(1, pk.n - 1)
    return encrypt_with_k(pk, target_height, plaintext, k)


def decrypt(sk: PrivateKey, pk: PublicKey, ct: Ciphertext) -> bytes:
    s = mod_exp(ct.c1, sk.x, pk.p)
    if not secrets.compare_digest(_tag(s, ct.payload), ct.tag):
        raise IntegrityError("integrity failure: wrong key or corrupted ciphertext")
    return _xor(ct.payload, keystream(s, len(ct.payload)))
