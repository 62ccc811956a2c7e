"""Attack experiments: forging by mutation, and early key recovery."""
from __future__ import annotations

import math
import random
import statistics
from dataclasses import dataclass, field, replace

from ..chain.block import ZERO_HASH, BlockHeader
from ..chain.state import ChainState
from ..consensus import derive_private_key, mine_rolling, validate
from ..errors import DegenerateCollisionError, InvalidSolutionError, MiningExhaustedError
from ..keychain import PrivateKey, PublicKey, genesis_key, verify_keypair
from ..modmath import mod_exp
from .config import sub_seed

HEADER_FIELDS = ("version", "prev_hash", "merkle_root", "timestamp", "height", "key_bits", "nonce")
MAX_EXPERIMENT_BITS = 24
MIN_EXPERIMENT_BITS = 4


@dataclass
class TamperResult:
    trials: int
    accepted: int
    by_field: dict[str, int]
    median_remine_steps: float
    median_honest_steps: float
    controls: int
    controls_accepted: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.trials if self.trials else 0.0

    @property
    def cost_ratio(self) -> float:
        return self.median_remine_steps / self.median_honest_steps


def _mutate(header: BlockHeader, name: str, p: int, rng: random.Random):
    value = getattr(header, name)
    if isinstance(value, bytes):
        i = rng.randrange(len(value) * 8)
        flipped = bytearray(value)
        flipped[i // 8] ^= 1 << (i % 8)
        return bytes(flipped)
    if name == "nonce":
        # stay a plausible group element so only the walk relation can reject it
        return (value + rng.randrange(1, p - 1) - 1) % (p - 1) + 1
    limit = {"version": 32, "key_bits": 16}.get(name, 64)
    return value ^ (1 << rng.randrange(limit))


def tamper_experiment(state: ChainState, trials: int, rng: random.Random,
                      remine: bool = True) -> TamperResult:
    """Mutate one header field of a random sealed block and revalidate.

    The original solution is reused (for a nonce mutation its nonce moves
    with the header, the most favorable case for a forger). With ``remine``
    each mutated header is mined again and compared with a fresh honest mine
    of the untouched header.
    """
    chain = [e for e in state.best_chain() if e.solution is not None]
    if not chain:
        raise ValueError("tamper_experiment needs a chain with at least one mined block")
    accepted = 0
    by_field = {name: 0 for name in HEADER_FIELDS}
    remine_steps: list[int] = []
    honest_steps: list[int] = []
    for _ in range(trials):
        entry = rng.choice(chain)
        header, sol, pk = entry.header, entry.solution, entry.public_key
        name = rng.choice(HEADER_FIELDS)
        forged = replace(header, **{name: _mutate(header, name, pk.p, rng)})
        forged_sol = replace(sol, nonce=forged.nonce) if name == "nonce" else sol
        try:
            validate(forged, forged_sol, pk)
            accepted += 1
            by_field[name] += 1
        except InvalidSolutionError:
            pass
        if remine:
            seed = rng.getrandbits(64)
            _, res = mine_rolling(forged.with_nonce(0), pk, random.Random(seed))
            remine_steps.append(res.steps)
            _, base = mine_rolling(header.with_nonce(0), pk, random.Random(seed ^ 0x5A5A))
            honest_steps.append(base.steps)
    controls = max(1, trials // 20)
    controls_ok = 0
    for _ in range(controls):
        entry = rng.choice(chain)
        name = rng.choice(HEADER_FIELDS)
        same = replace(entry.header, **{name: getattr(entry.header, name)})
        try:
            validate(same, entry.solution, entry.public_key)
            controls_ok += 1
        except InvalidSolutionError:
            pass
    return TamperResult(
        trials=trials,
        accepted=accepted,
        by_field=by_field,
        median_remine_steps=statistics.median(remine_steps) if remine_steps else math.nan,
        median_honest_steps=statistics.median(honest_steps) if honest_steps else math.nan,
        controls=controls,
        controls_accepted=controls_ok,
    )


def textbook_rho(pk: PublicKey, rng: random.Random, max_restarts: int = 64) -> tuple[PrivateKey, int]:
    """Classic three-way rho keyed on ``y mod 3``; knows nothing about headers.

    Returns the key and the tortoise iterations spent across restarts.
    """
    p, n, g, h = pk.p, pk.n, pk.g, pk.h

    def step(y, a, b):
        r = y % 3
        if r == 0:
            return y * y % p, 2 * a % n, 2 * b % n
        if r == 1:
            return y * g % p, (a + 1) % n, b
        return y * h % p, a, (b + 1) % n

    steps = 0
    for _ in range(max_restarts + 1):
        a0, b0 = rng.randint(0, n - 1), rng.randint(0, n - 1)
        t = hr = (mod_exp(g, a0, p) * mod_exp(h, b0, p) % p, a0, b0)
        for _ in range(n):
            t = step(*t)
            hr = step(*step(*hr))
            steps += 1
            if t[0] == hr[0]:
                break
        else:
            continue
        try:
            key = derive_private_key(t[1], t[2], hr[1], hr[2], n)
        except DegenerateCollisionError:
            continue
        if verify_keypair(pk, key):
            return key, steps
    raise MiningExhaustedError(f"textbook rho gave up after {max_restarts} restarts")


@dataclass
class PrematureRow:
    bits: int
    median_miner_steps: float
    median_attacker_steps: float

    @property
    def ratio(self) -> float:
        return self.median_attacker_steps / self.median_miner_steps


@dataclass
class PrematureResult:
    rows: list[PrematureRow] = field(default_factory=list)

    def _slope(self, attr: str) -> float:
        xs = [r.bits for r in self.rows]
        ys = [math.log2(getattr(r, attr)) for r in self.rows]
        return statistics.linear_regression(xs, ys).slope

    @property
    def miner_slope(self) -> float:
        return self._slope("median_miner_steps")

    @property
    def attacker_slope(self) -> float:
        return self._slope("median_attacker_steps")


def premature_release_experiment(bits_range, trials: int = 100, seed: int = 0) -> PrematureResult:
    """Miner walk vs a standalone rho attacker on the same keys, per bit length."""
    bits_range = list(bits_range)
    bad = [b for b in bits_range if not MIN_EXPERIMENT_BITS <= b <= MAX_EXPERIMENT_BITS]
    if bad:
        raise ValueError(f"bits must lie in [{MIN_EXPERIMENT_BITS}, {MAX_EXPERIMENT_BITS}], got {bad}")
    out = PrematureResult()
    for bits in bits_range:
        miner, attacker = [], []
        for t in range(trials):
            pk = genesis_key(sub_seed(seed, "premature", bits, t), bits)
            template = BlockHeader(1, ZERO_HASH, ZERO_HASH, t, 1, bits)
            _, res = mine_rolling(template, pk, random.Random(sub_seed(seed, "miner", bits, t)))
            key, steps = textbook_rho(pk, random.Random(sub_seed(seed, "attacker", bits, t)))
            if key != res.key:
                raise RuntimeError("attacker and miner disagree on the key")
            miner.append(res.steps)
            attacker.append(steps)
        out.rows.append(PrematureRow(bits, statistics.median(miner), statistics.median(attacker)))
    return out
