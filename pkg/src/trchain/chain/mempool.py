"""Pending transactions, prioritized by fee per serialized byte."""
from __future__ import annotations

import itertools
from fractions import Fraction

from .block import Transaction, TxKind

# each included transaction also costs its u32 length prefix in the block
TX_PREFIX = 4


def block_cost(tx: Transaction) -> int:
    return tx.size + TX_PREFIX


class Mempool:
    def __init__(self):
        self._txs: dict[bytes, tuple[int, Transaction]] = {}
        self._seq = itertools.count()

    def __len__(self):
        return len(self._txs)

    def __contains__(self, txid: bytes):
        return txid in self._txs

    def add(self, tx: Transaction) -> bytes:
        if tx.kind == TxKind.COINBASE:
            raise ValueError("coinbase transactions cannot enter the mempool")
        if tx.fee < 0:
            raise ValueError("negative fee")
        txid = tx.txid()
        if txid not in self._txs:
            self._txs[txid] = (next(self._seq), tx)
        return txid

    def remove(self, txids) -> None:
        for txid in txids:
            self._txs.pop(txid, None)

    def ordered(self) -> list[Transaction]:
        """Highest fee density first; arrival order among equal densities."""
        entries = sorted(self._txs.values(), key=lambda e: (-Fraction(e[1].fee, e[1].size), e[0]))
        return [tx for _, tx in entries]

    def select(self, budget: int, exclude=frozenset()) -> list[Transaction]:
        """Greedy by density: take each transaction that still fits, skip the rest."""
        chosen = []
        for tx in self.ordered():
            if tx.txid() in exclude:
                continue
            cost = block_cost(tx)
            if cost <= budget:
                chosen.append(tx)
                budget -= cost
        return chosen
