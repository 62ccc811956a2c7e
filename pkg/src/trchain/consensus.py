"""Dual-purpose mining: a Pollard-rho walk whose steps are header hashes.

The header hash (double SHA-256 of the header carrying the current walk
element as its nonce, reduced mod p) picks one of three branch rules and
doubles as the exponent. Floyd's tortoise and hare run the walk from a
shared random start; their collision yields the block's private key, and
the hare's element one step before the collision is sealed as the nonce.
A validator replays that single step, so checking a block costs a fixed
handful of exponentiations regardless of key size.
"""
from __future__ import annotations

import concurrent.futures
import hashlib
import math
import random
import struct
import threading
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

from .chain.block import BlockHeader, magnitude, nonce_suffix
from .errors import (
    DegenerateCollisionError,
    FormatError,
    InvalidSolutionError,
    MiningExhaustedError,
    NoKeyError,
    NotInvertibleError,
    TemplateTrappedError,
)
from .keychain import PrivateKey, PublicKey, verify_keypair
from .modmath import mod_exp, mod_inv

HeaderTemplate = BlockHeader

S0, S1, S2 = 0, 1, 2
DEFAULT_MAX_RESTARTS = 64
# same degenerate collision point this many times: the walk has an absorbing
# fixed point that fresh starts keep falling into
TRAP_REPEATS = 3
MAX_DLOG_ORDER = 1 << 24


class WalkState(NamedTuple):
    y: int
    a: int
    b: int


@dataclass(frozen=True)
class MiningSolution:
    a1: int
    b1: int
    a2: int
    b2: int
    nonce: int

    def to_bytes(self) -> bytes:
        out = b""
        for v in (self.a1, self.b1, self.a2, self.b2, self.nonce):
            raw = magnitude(v)
            out += struct.pack(">H", len(raw)) + raw
        return out

    @classmethod
    def parse_prefix(cls, data: bytes) -> tuple["MiningSolution", int]:
        vals, off = [], 0
        for _ in range(5):
            if len(data) < off + 2:
                raise FormatError("solution truncated")
            (n,) = struct.unpack_from(">H", data, off)
            off += 2
            if len(data) < off + n:
                raise FormatError("solution truncated")
            vals.append(int.from_bytes(data[off : off + n], "big"))
            off += n
        return cls(*vals), off

    @classmethod
    def from_bytes(cls, data: bytes) -> "MiningSolution":
        sol, used = cls.parse_prefix(data)
        if used != len(data):
            raise FormatError("trailing bytes after solution")
        return sol


@dataclass
class MineResult:
    solution: MiningSolution
    key: PrivateKey
    steps: int  # tortoise iterations, summed over all attempts
    restarts: int

    def __iter__(self):
        return iter((self.solution, self.key))


class HeaderHasher:
    """Double-SHA256 header hash mod p, with the fixed part of the preimage pre-absorbed."""

    def __init__(self, template: HeaderTemplate, p: int):
        if p < 2:
            raise ValueError("modulus must be >= 2")
        self.p = p
        self._prefix = hashlib.sha256(template.fixed_bytes())

    def __call__(self, nonce: int) -> int:
        inner = self._prefix.copy()
        inner.update(nonce_suffix(nonce))
        return int.from_bytes(hashlib.sha256(inner.digest()).digest(), "big") % self.p


def header_hash_int(template: HeaderTemplate, nonce: int, p: int) -> int:
    return HeaderHasher(template, p)(nonce)


def partition_of(hv: int) -> int:
    return hv % 3


def _apply_rule(y: int, hv: int, pk: PublicKey) -> int:
    """The y-update alone; exactly one exponentiation."""
    part = hv % 3
    if part == S0:
        return mod_exp(y, hv, pk.p)
    if part == S1:
        return mod_exp(pk.g, hv, pk.p) * y % pk.p
    return mod_exp(pk.h, hv, pk.p) * y % pk.p


def _step(s: WalkState, hasher: HeaderHasher, pk: PublicKey) -> WalkState:
    y, a, b = s
    hv = hasher(y)
    order = pk.p - 1
    part = hv % 3
    if part == S0:
        return WalkState(mod_exp(y, hv, pk.p), a * hv % order, b * hv % order)
    if part == S1:
        return WalkState(mod_exp(pk.g, hv, pk.p) * y % pk.p, (a + hv) % order, b)
    return WalkState(mod_exp(pk.h, hv, pk.p) * y % pk.p, a, (b + hv) % order)


def walk_step(s: WalkState, template: HeaderTemplate, pk: PublicKey) -> WalkState:
    return _step(s, HeaderHasher(template, pk.p), pk)


def derive_private_key(a1: int, b1: int, a2: int, b2: int, n: int) -> PrivateKey:
    r = (b2 - b1) % n
    if r == 0:
        raise DegenerateCollisionError("b-tracks agree modulo n; collision carries no key")
    s = (a1 - a2) % n
    try:
        return PrivateKey(s * mod_inv(r, n) % n)
    except NotInvertibleError:
        raise DegenerateCollisionError("b-difference is not invertible modulo n") from None


def _start(pk: PublicKey, rng) -> WalkState:
    a0 = rng.randint(0, pk.n - 1)
    b0 = rng.randint(0, pk.n - 1)
    y0 = mod_exp(pk.g, a0, pk.p) * mod_exp(pk.h, b0, pk.p) % pk.p
    return WalkState(y0, a0, b0)


def mine(template: HeaderTemplate, pk: PublicKey, rng=None,
         max_restarts: int = DEFAULT_MAX_RESTARTS,
         cancel: Optional[threading.Event] = None) -> MineResult:
    """Seal ``template`` under ``pk``.

    ``rng`` needs ``randint(lo, hi)`` (a :class:`random.Random` or
    :class:`~trchain.modmath.DetRng`). A degenerate collision or a walk that
    runs n iterations without colliding triggers a fresh random start, at
    most ``max_restarts`` times. Raises :class:`TemplateTrappedError` early
    when restarts keep landing on the same degenerate collision; only a
    different header can help then (see :func:`mine_rolling`).
    """
    if rng is None:
        rng = random.SystemRandom()
    hasher = HeaderHasher(template, pk.p)
    n = pk.n
    steps = 0
    traps: dict[int, int] = {}
    for attempt in range(max_restarts + 1):
        tortoise = hare = _start(pk, rng)
        i = 1
        while i < n:
            if cancel is not None and cancel.is_set():
                raise MiningExhaustedError("mining cancelled")
            tortoise = _step(tortoise, hasher, pk)
            w = _step(hare, hasher, pk)
            hare = _step(w, hasher, pk)
            steps += 1
            if tortoise.y == hare.y:
                try:
                    key = derive_private_key(tortoise.a, tortoise.b, hare.a, hare.b, n)
                except DegenerateCollisionError:
                    traps[hare.y] = traps.get(hare.y, 0) + 1
                    if traps[hare.y] >= TRAP_REPEATS:
                        err = TemplateTrappedError(f"walk trapped at {hare.y} after {steps} steps")
                        err.steps = steps
                        raise err from None
                    break
                if verify_keypair(pk, key):
                    sol = MiningSolution(tortoise.a, tortoise.b, hare.a, hare.b, w.y)
                    return MineResult(sol, key, steps, attempt)
                break
            i += 1
    raise MiningExhaustedError(f"no solution after {max_restarts} restarts")


def mine_rolling(template: HeaderTemplate, pk: PublicKey, rng=None,
                 max_restarts: int = DEFAULT_MAX_RESTARTS,
                 max_templates: int = 64, workers: int = 1) -> tuple[HeaderTemplate, MineResult]:
    """Like :func:`mine`, bumping the timestamp whenever a template traps the walk.

    Returns the header actually sealed (nonce filled in) with the result;
    ``steps`` includes the work spent on abandoned templates. With
    ``workers > 1`` each template is attempted by :func:`mine_parallel`
    using that many seeds drawn from ``rng``.
    """
    if rng is None:
        rng = random.SystemRandom()
    wasted = 0
    for _ in range(max_templates):
        try:
            if workers > 1:
                seeds = [rng.getrandbits(64) for _ in range(workers)]
                res = mine_parallel(template, pk, seeds, workers, max_restarts)
            else:
                res = mine(template, pk, rng, max_restarts)
        except TemplateTrappedError as exc:
            wasted += exc.steps
            template = replace(template, timestamp=template.timestamp + 1)
            continue
        res.steps += wasted
        return template.with_nonce(res.solution.nonce), res
    raise MiningExhaustedError(f"{max_templates} consecutive templates trapped the walk")


def mine_parallel(template: HeaderTemplate, pk: PublicKey, seeds, workers: int,
                  max_restarts: int = DEFAULT_MAX_RESTARTS) -> MineResult:
    """Independent attempts, one per seed; the first success cancels the rest.

    Threads share nothing but the cancellation event.
    """
    cancel = threading.Event()
    seeds = list(seeds)

    def attempt(seed):
        return mine(template, pk, random.Random(seed), max_restarts, cancel)

    trapped = []
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(attempt, s) for s in seeds]
        try:
            for fut in concurrent.futures.as_completed(futures):
                try:
                    result = fut.result()
                except TemplateTrappedError as exc:
                    trapped.append(exc.steps)
                    continue
                except MiningExhaustedError:
                    continue
                return result
        finally:
            cancel.set()
    if trapped and len(trapped) == len(seeds):
        err = TemplateTrappedError("every parallel attempt was trapped")
        err.steps = sum(trapped)
        raise err
    raise MiningExhaustedError("every parallel attempt was exhausted")


def validate(template: HeaderTemplate, sol: MiningSolution, pk: PublicKey) -> PrivateKey:
    """Check a sealed block in six exponentiations; return its private key."""
    p = pk.p
    if template.nonce and template.nonce != sol.nonce:
        raise InvalidSolutionError("3", "header nonce differs from the solution nonce")
    if not 0 < sol.nonce < p:
        raise InvalidSolutionError("3", "nonce is not a group element")
    z = _apply_rule(sol.nonce, header_hash_int(template, sol.nonce, p), pk)
    first = mod_exp(pk.g, sol.a1, p) * mod_exp(pk.h, sol.b1, p) % p
    second = mod_exp(pk.g, sol.a2, p) * mod_exp(pk.h, sol.b2, p) % p
    if z != first or z != second:
        raise InvalidSolutionError("4", "nonce image does not match the solution tuple")
    try:
        key = derive_private_key(sol.a1, sol.b1, sol.a2, sol.b2, pk.n)
    except DegenerateCollisionError as exc:
        raise InvalidSolutionError("5", str(exc)) from None
    if not verify_keypair(pk, key):
        raise InvalidSolutionError("6", "derived private key does not pair with the public key")
    return key


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def retarget(recent_intervals, target: float, current_bits: int, max_delta: int = 2) -> int:
    """Key bits for the next epoch.

    Expected mining work grows as 2^(bits/2), so slow blocks lower the bit
    length and fast blocks raise it: delta = round(2 * log2(target / mean)),
    clamped to +-max_delta.
    """
    intervals = list(recent_intervals)
    if not intervals or target <= 0:
        raise ValueError("need at least one interval and a positive target")
    mean = sum(intervals) / len(intervals)
    if mean <= 0:
        delta = max_delta
    else:
        delta = round_half_away(2 * math.log2(target / mean))
    delta = max(-max_delta, min(max_delta, delta))
    return max(4, current_bits + delta)


def block_work(bits: int) -> float:
    """Expected mining cost of one block; the fork-choice weight."""
    return 2.0 ** (bits / 2)


def brute_force_dlog(pk: PublicKey) -> PrivateKey:
    """Baby-step giant-step over the order-n subgroup."""
    n, p = pk.n, pk.p
    if n > MAX_DLOG_ORDER:
        raise ValueError(f"subgroup order {n} above the desk-scale guard 2^24")
    m = math.isqrt(n - 1) + 1
    baby = {}
    e = 1
    for j in range(m):
        baby.setdefault(e, j)
        e = e * pk.g % p
    giant = pow(pk.g, -m, p)
    gamma = pk.h
    for i in range(m):
        j = baby.get(gamma)
        if j is not None:
            x = (i * m + j) % n
            if 0 < x < n:
                return PrivateKey(x)
        gamma = gamma * giant % p
    raise NoKeyError("no x in (0, n) with g^x = h")
