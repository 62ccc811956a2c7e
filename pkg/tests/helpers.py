import random

from trchain.chain.block import BlockHeader
from trchain.keychain import genesis_key


def make_template(height=1, bits=16, seed=0):
    rng = random.Random(seed)
    return BlockHeader(1, rng.randbytes(32), rng.randbytes(32), 1_700_000_000 + seed, height, bits)


def make_key(bits, seed=0):
    return genesis_key(seed * 7919 + bits, bits)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, name, ok, detail=""):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}"
    if detail:
        line += f"  ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
