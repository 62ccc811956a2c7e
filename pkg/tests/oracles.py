"""Independent reference implementations used only by the tests."""
import hashlib
import itertools


class RefMT19937:
    """Straight transliteration of the 2002 reference C code."""

    N, M = 624, 397

    def __init__(self, key):
        self.mt = [0] * self.N
        self.mti = self.N + 1
        self._init_genrand(19650218)
        i, j = 1, 0
        for _ in range(max(self.N, len(key))):
            prev = self.mt[i - 1]
            self.mt[i] = ((self.mt[i] ^ ((prev ^ (prev >> 30)) * 1664525)) + key[j] + j) & 0xFFFFFFFF
            i += 1
            j += 1
            if i >= self.N:
                self.mt[0] = self.mt[self.N - 1]
                i = 1
            if j >= len(key):
                j = 0
        for _ in range(self.N - 1):
            prev = self.mt[i - 1]
            self.mt[i] = ((self.mt[i] ^ ((prev ^ (prev >> 30)) * 1566083941)) - i) & 0xFFFFFFFF
            i += 1
            if i >= self.N:
                self.mt[0] = self.mt[self.N - 1]
                i = 1
        self.mt[0] = 0x80000000

    def _init_genrand(self, s):
        self.mt[0] = s
        for i in range(1, self.N):
            prev = self.mt[i - 1]
            self.mt[i] = (1812433253 * (prev ^ (prev >> 30)) + i) & 0xFFFFFFFF
        self.mti = self.N

    def genrand_uint32(self):
        mag01 = (0, 0x9908B0DF)
        if self.mti >= self.N:
            for kk in range(self.N):
                y = (self.mt[kk] & 0x80000000) | (self.mt[(kk + 1) % self.N] & 0x7FFFFFFF)
                self.mt[kk] = self.mt[(kk + self.M) % self.N] ^ (y >> 1) ^ mag01[y & 1]
            self.mti = 0
        y = self.mt[self.mti]
        self.mti += 1
        y ^= y >> 11
        y ^= (y << 7) & 0x9D2C5680
        y ^= (y << 15) & 0xEFC60000
        y ^= y >> 18
        return y


def is_prime_trial(n):
    if n < 2:
        return False
    d = 2
    while d * d <= n:
        if n % d == 0:
            return False
        d += 1
    return True


def safe_primes_with_bits(bits):
    return [p for p in range(1 << (bits - 1), 1 << bits)
            if is_prime_trial(p) and is_prime_trial((p - 1) // 2)]


def exhaustive_dlog(p, g, h):
    """Smallest x in [1, n-1] with g^x = h (mod p), by repeated multiplication."""
    n = (p - 1) // 2
    acc = 1
    for x in range(1, n):
        acc = acc * g % p
        if acc == h:
            return x
    return None


def sha256d_bytewise(data):
    first = hashlib.sha256()
    first.update(data)
    second = hashlib.sha256()
    second.update(first.digest())
    return second.digest()


def priority_lex_max(order, budget, cost):
    """Exhaustive: the feasible subset whose membership vector, read in
    priority order, is lexicographically largest."""
    best = None
    for mask in itertools.product((1, 0), repeat=len(order)):
        if sum(cost(t) for t, m in zip(order, mask) if m) <= budget:
            best = mask  # product() with (1, 0) enumerates lexicographically descending
            break
    return [t for t, m in zip(order, best) if m]
