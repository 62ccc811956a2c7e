"""Modular arithmetic, primality, safe primes and deterministic randomness.

Everything downstream (key chain, walk, encryption) goes through
:func:`mod_exp`, so a counting hook lives here: inside a
:func:`count_mod_exps` block every call is tallied.
"""
from __future__ import annotations

import contextlib
import contextvars
import hashlib
import random
from typing import Iterator, Optional

from .errors import InvalidDifficultyError, InvalidModulusError, NotInvertibleError

MR_ROUNDS = 32
TRIAL_LIMIT = 1000

_exp_counter: contextvars.ContextVar[Optional[list]] = contextvars.ContextVar(
    "_exp_counter", default=None
)


def _small_primes(limit: int) -> list[int]:
    sieve = bytearray([1]) * limit
    sieve[0:2] = b"\x00\x00"
    for i in range(2, int(limit ** 0.5) + 1):
        if sieve[i]:
            sieve[i * i :: i] = bytearray(len(sieve[i * i :: i]))
    return [i for i, v in enumerate(sieve) if v]


SMALL_PRIMES = _small_primes(TRIAL_LIMIT)


@contextlib.contextmanager
def count_mod_exps() -> Iterator[list]:
    """Count :func:`mod_exp` calls made in this context.

    Yields a one-element list whose item is the running count.
    """
    box = [0]
    token = _exp_counter.set(box)
    try:
        yield box
    finally:
        _exp_counter.reset(token)


def mod_exp(base: int, exp: int, m: int) -> int:
    if m < 2:
        raise InvalidModulusError(f"modulus must be >= 2, got {m}")
    box = _exp_counter.get()
    if box is not None:
        box[0] += 1
    return pow(base, exp, m)


def mod_inv(a: int, m: int) -> int:
    if m < 2:
        raise InvalidModulusError(f"modulus must be >= 2, got {m}")
    try:
        return pow(a, -1, m)
    except ValueError:
        raise NotInvertibleError(f"{a} has no inverse modulo {m}") from None


class DetRng:
    """MT19937 stream seeded from an arbitrary non-negative integer.

    The seed is split into little-endian 32-bit words (zero gives ``[0]``)
    and fed to the reference ``init_by_array`` routine. CPython's
    :class:`random.Random` seeds integers exactly this way, so it serves as
    the engine. All derived draws are defined here in terms of raw 32-bit
    outputs so they do not depend on library helpers like ``randrange``.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed_words = seed_words(seed)
        self._mt = random.Random(seed)

    def next_u32(self) -> int:
        return self._mt.getrandbits(32)

    def bits(self, k: int) -> int:
        """Uniform k-bit integer.

        Built from ceil(k/32) outputs, least significant word first; the final
        word keeps only its top ``k mod 32`` bits.
        """
        if k <= 0:
            return 0
        return self._mt.getrandbits(k)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection on ``n.bit_length()`` bits."""
        if n <= 0:
            raise ValueError("n must be positive")
        k = n.bit_length()
        r = self.bits(k)
        while r >= n:
            r = self.bits(k)
        return r

    def between(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range [lo, hi]."""
        return lo + self.below(hi - lo + 1)

    # Lets DetRng stand in wherever a ``random.Random``-like source is taken.
    def randint(self, lo: int, hi: int) -> int:
        return self.between(lo, hi)


def seed_words(seed: int) -> list[int]:
    """Little-endian 32-bit word decomposition, ``[0]`` for zero."""
    if seed == 0:
        return [0]
    words = []
    while seed:
        words.append(seed & 0xFFFFFFFF)
        seed >>= 32
    return words


def det_rng_from_biguint(seed: int) -> DetRng:
    return DetRng(seed)


def _draw(rng, lo: int, hi: int) -> int:
    if isinstance(rng, DetRng):
        return rng.between(lo, hi)
    return rng.randint(lo, hi)


def is_probable_prime(n: int, rounds: int = MR_ROUNDS, rng=None) -> bool:
    """Miller-Rabin with ``rounds`` bases drawn uniformly from [2, n-2].

    Bases come from ``rng`` (a :class:`DetRng` for reproducible key chains);
    without one, OS entropy is used.
    """
    if rounds < 16:
        raise ValueError("at least 16 Miller-Rabin rounds are required")
    if n < 2:
        return False
    if n in (2, 3):
        return True
    if n % 2 == 0:
        return False
    if rng is None:
        rng = random.SystemRandom()
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = _draw(rng, 2, n - 2)
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def trial_division(n: int) -> Optional[bool]:
    """False if a prime below 1000 divides n (n itself excluded), True if that
    proves primality, None if undecided."""
    if n < 2:
        return False
    for d in SMALL_PRIMES:
        if d * d > n:
            return True
        if n % d == 0:
            return n == d
    return None


def gen_safe_prime(bits: int, rng: DetRng) -> int:
    """Safe prime with exactly ``bits`` bits.

    Odd candidates with the top bit forced are drawn from ``rng``. For each,
    q = (p-1)/2 goes through trial division and, when undecided, Miller-Rabin;
    then p goes through Miller-Rabin. Every base is drawn from ``rng``.
    """
    if bits < 4:
        raise InvalidDifficultyError(f"key bits must be >= 4, got {bits}")
    top = 1 << (bits - 1)
    while True:
        p = rng.bits(bits) | top | 1
        q = p >> 1
        verdict = trial_division(q)
        if verdict is False:
            continue
        if verdict is None and not is_probable_prime(q, MR_ROUNDS, rng):
            continue
        if is_probable_prime(p, MR_ROUNDS, rng):
            return p


def double_sha256(data: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def double_sha256_int(data: bytes) -> int:
    return int.from_bytes(double_sha256(data), "big")


def be_bytes(x: int) -> bytes:
    """Minimal big-endian magnitude (zero encodes as one zero byte)."""
    return x.to_bytes(max(1, (x.bit_length() + 7) // 8), "big")
