from __future__ import annotations

import hashlib

from dataclasses import dataclass, fields
from typing import Optional

from ..errors import FormatError
from ..keychain import MIN_BITS
from ..kvfile import parse_bool, parse_int, read_kv


def sub_seed(master: int, *parts) -> int:
    """Independent 64-bit stream seed for one consumer of the master seed."""
    text = ":".join(str(p) for p in (master,) + parts).encode()
    return int.from_bytes(hashlib.sha256(text).digest()[:8], "big")


@dataclass(frozen=True)
class HashRateStep:
    """From the block at ``height`` onward every node mines ``factor`` times faster."""

    height: int
    factor: float


@dataclass(frozen=True)
class SimConfig:
    node_count: int = 5
    hash_rates: tuple[float, ...] = ()  # tortoise steps per simulated second; empty -> hash_rate
    hash_rate: float = 5.0
    latency_min_ms: float = 50.0
    latency_max_ms: float = 500.0
    block_time: float = 20.0
    retarget_window: int = 10
    initial_bits: int = 12
    blocks: int = 300
    seed: int = 1
    key_seed: int = 0x7E57
    hashrate_step: Optional[HashRateStep] = None
    messages: bool = True
    retarget: bool = True

    def __post_init__(self):
        if self.node_count < 1 or self.blocks < 2 or self.retarget_window < 1:
            raise FormatError("node_count >= 1, blocks >= 2 and retarget_window >= 1 required")
        if self.hash_rates and len(self.hash_rates) != self.node_count:
            raise FormatError("hash_rates needs one entry per node")
        if min(self.rates) <= 0 or self.block_time <= 0:
            raise FormatError("hash rates and block_time must be positive")
        if not 0 <= self.latency_min_ms <= self.latency_max_ms:
            raise FormatError("latency range must satisfy 0 <= min <= max")
        if self.initial_bits < MIN_BITS:
            raise FormatError(f"initial_bits must be >= {MIN_BITS}")
        if self.hashrate_step and self.hashrate_step.factor <= 0:
            raise FormatError("hashrate_step factor must be positive")

    @property
    def rates(self) -> tuple[float, ...]:
        return self.hash_rates or (self.hash_rate,) * self.node_count

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "SimConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(kv) - names
        if unknown:
            raise FormatError(f"unknown config keys: {', '.join(sorted(unknown))}")
        args: dict = {}
        try:
            for key, raw in kv.items():
                if key in ("node_count", "retarget_window", "initial_bits", "blocks"):
                    args[key] = parse_int(raw, key)
                elif key in ("seed", "key_seed"):
                    args[key] = parse_int(raw, key)
                elif key == "hash_rates":
                    args[key] = tuple(float(v) for v in raw.split(",") if v.strip())
                elif key == "hashrate_step":
                    at, _, factor = raw.partition(":")
                    args[key] = HashRateStep(parse_int(at.strip(), key), float(factor))
                elif key in ("messages", "retarget"):
                    args[key] = parse_bool(raw, key)
                else:
                    args[key] = float(raw)
        except ValueError as exc:
            raise FormatError(f"bad config value: {exc}") from None
        return cls(**args)

    @classmethod
    def load(cls, path) -> "SimConfig":
        return cls.from_kv(read_kv(path))
