"""The chain of per-block discrete-log public keys.

Each key is derived from its predecessor: the sum p + g + h seeds a fresh
MT19937 stream, which draws a safe prime and two random quadratic residues.
Nobody learns a private key at generation time; mining is the only way to
get one.
"""
from __future__ import annotations

import bisect
import functools
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError, InvalidDifficultyError
from .kvfile import dump_kv, parse_bool, parse_int, read_kv, parse_kv
from .modmath import DetRng, det_rng_from_biguint, gen_safe_prime, is_probable_prime, mod_exp

MIN_BITS = 4


@dataclass(frozen=True)
class PublicKey:
    p: int
    g: int
    h: int
    n: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "n", (self.p - 1) // 2)

    @property
    def bits(self) -> int:
        return self.p.bit_length()

    def to_dict(self, style: str = "hex") -> dict[str, str]:
        fmt = hex if style == "hex" else str
        return {"p": fmt(self.p), "g": fmt(self.g), "h": fmt(self.h)}

    @classmethod
    def from_dict(cls, d: dict) -> "PublicKey":
        try:
            return cls(*(parse_int(str(d[k]), k) for k in ("p", "g", "h")))
        except KeyError as exc:
            raise FormatError(f"public key is missing field {exc}") from None


@dataclass(frozen=True)
class PrivateKey:
    x: int


def public_key_problems(pk: PublicKey) -> list[str]:
    """Invariant violations of ``pk``; empty when the key is well formed."""
    problems = []
    p, g, h, n = pk.p, pk.g, pk.h, pk.n
    if p < 5 or not is_probable_prime(p) or not is_probable_prime(n):
        problems.append("p is not a safe prime")
        return problems
    for name, v in (("g", g), ("h", h)):
        if not 1 < v < p:
            problems.append(f"{name} out of range")
        elif pow(v, n, p) != 1:
            problems.append(f"{name} outside the order-n subgroup")
    return problems


@dataclass(frozen=True)
class BitSchedule:
    """Key bit length per height as (start_height, bits) steps."""

    entries: tuple[tuple[int, int], ...]

    def __post_init__(self):
        entries = tuple((int(h), int(b)) for h, b in self.entries)
        if not entries or entries[0][0] != 0:
            raise FormatError("bit schedule must start at height 0")
        for (h0, _), (h1, _) in zip(entries, entries[1:]):
            if h1 <= h0:
                raise FormatError("bit schedule heights must be strictly increasing")
        for _, b in entries:
            if b < MIN_BITS:
                raise InvalidDifficultyError(f"key bits must be >= {MIN_BITS}, got {b}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_starts", [h for h, _ in entries])

    @classmethod
    def constant(cls, bits: int) -> "BitSchedule":
        return cls(((0, bits),))

    def bits_at(self, height: int) -> int:
        i = bisect.bisect_right(self._starts, height) - 1
        return self.entries[i][1]

    @classmethod
    def parse(cls, text: str) -> "BitSchedule":
        kv = parse_kv(text)
        pairs = sorted((parse_int(k, "height"), parse_int(v, "bits")) for k, v in kv.items())
        return cls(tuple(pairs))

    @classmethod
    def load(cls, path) -> "BitSchedule":
        try:
            return cls.parse(Path(path).read_text())
        except OSError as exc:
            raise FormatError(f"cannot read {path}: {exc}") from exc


def subgroup_element(p: int, rng: DetRng) -> int:
    """Random non-identity quadratic residue mod the safe prime p."""
    while True:
        t = rng.between(2, p - 2)
        e = t * t % p
        if e != 1:
            return e


@functools.lru_cache(maxsize=4096)
def next_public_key(prev: PublicKey, bits: int) -> PublicKey:
    if bits < MIN_BITS:
        raise InvalidDifficultyError(f"key bits must be >= {MIN_BITS}, got {bits}")
    rng = det_rng_from_biguint(prev.p + prev.g + prev.h)
    p = gen_safe_prime(bits, rng)
    g = subgroup_element(p, rng)
    h = subgroup_element(p, rng)
    while h == g:
        h = subgroup_element(p, rng)
    return PublicKey(p, g, h)


def genesis_key(seed: int, bits: int) -> PublicKey:
    # pre-genesis key (0, 0, seed): its sum is the configured seed
    return next_public_key(PublicKey(0, 0, seed), bits)


def verify_keypair(pk: PublicKey, sk: PrivateKey) -> bool:
    return 0 < sk.x < pk.n and mod_exp(pk.g, sk.x, pk.p) == pk.h


@dataclass(frozen=True)
class GenesisConfig:
    """Protocol constants fixed by the genesis file."""

    seed: int
    initial_bits: int
    block_time: float
    retarget_window: int = 10
    retarget: bool = True
    genesis_time: int = 0
    reward: int = 50
    max_block_bytes: int = 65536

    def __post_init__(self):
        if self.initial_bits < MIN_BITS:
            raise InvalidDifficultyError(f"initial_bits must be >= {MIN_BITS}")
        if self.block_time <= 0 or self.retarget_window < 1:
            raise FormatError("block_time and retarget_window must be positive")

    @property
    def key(self) -> PublicKey:
        return genesis_key(self.seed, self.initial_bits)

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "GenesisConfig":
        required = ("seed", "initial_bits", "block_time")
        missing = [k for k in required if k not in kv]
        if missing:
            raise FormatError(f"genesis file is missing {', '.join(missing)}")
        known = set(cls.__dataclass_fields__)
        unknown = set(kv) - known
        if unknown:
            raise FormatError(f"unknown genesis keys: {', '.join(sorted(unknown))}")
        try:
            block_time = float(kv["block_time"])
        except ValueError:
            raise FormatError(f"block_time: not a number: {kv['block_time']!r}") from None
        return cls(
            seed=parse_int(kv["seed"], "seed"),
            initial_bits=parse_int(kv["initial_bits"], "initial_bits"),
            block_time=block_time,
            retarget_window=parse_int(kv.get("retarget_window", "10"), "retarget_window"),
            retarget=parse_bool(kv.get("retarget", "true"), "retarget"),
            genesis_time=parse_int(kv.get("genesis_time", "0"), "genesis_time"),
            reward=parse_int(kv.get("reward", "50"), "reward"),
            max_block_bytes=parse_int(kv.get("max_block_bytes", "65536"), "max_block_bytes"),
        )

    @classmethod
    def load(cls, path) -> "GenesisConfig":
        return cls.from_kv(read_kv(path))

    def dumps(self) -> str:
        return dump_kv({
            "seed": hex(self.seed),
            "initial_bits": self.initial_bits,
            "block_time": self.block_time,
            "retarget_window": self.retarget_window,
            "retarget": str(self.retarget).lower(),
            "genesis_time": self.genesis_time,
            "reward": self.reward,
            "max_block_bytes": self.max_block_bytes,
        })


class KeyChain:
    """Memoized ``key_at_height`` for one (genesis, schedule) pair."""

    def __init__(self, genesis: PublicKey, schedule: BitSchedule):
        self.genesis = genesis
        self.schedule = schedule
        self._keys = [genesis]
        self._lock = threading.Lock()

    def key_at_height(self, height: int) -> PublicKey:
        if height < 0:
            raise ValueError("height must be non-negative")
        keys = self._keys
        if height < len(keys):
            return keys[height]
        with self._lock:
            while len(self._keys) <= height:
                h = len(self._keys)
                self._keys.append(next_public_key(self._keys[-1], self.schedule.bits_at(h)))
            return self._keys[height]


def key_at_height(genesis: PublicKey, height: int, schedule: BitSchedule) -> PublicKey:
    key = genesis
    for h in range(1, height + 1):
        key = next_public_key(key, schedule.bits_at(h))
    return key
