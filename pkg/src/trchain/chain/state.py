"""Ledger state over a tree of blocks.

Every accepted block gets a :class:`BlockEntry` holding a snapshot of the
ledger after it, so forks are cheap to follow and reorgs are just a change of
tip. The best tip is the one with the most cumulative expected work.
"""
from __future__ import annotations

import itertools
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from ..consensus import HeaderTemplate, MiningSolution, block_work, retarget, validate
from ..errors import FormatError, IntegrityError, InvalidBlockError, InvalidSolutionError
from ..keychain import BitSchedule, GenesisConfig, PrivateKey, PublicKey, next_public_key
from ..trencrypt import Ciphertext, decrypt
from .block import (
    ZERO_HASH,
    Block,
    BlockHeader,
    Transaction,
    TxKind,
    coinbase,
    merkle_root,
    nonce_suffix,
)
from .mempool import TX_PREFIX, Mempool

VERSION = 1


@dataclass(frozen=True)
class Release:
    target_height: int
    txid: bytes
    plaintext: bytes


@dataclass(frozen=True)
class FailedRelease:
    target_height: int
    txid: bytes
    reason: str


@dataclass
class BlockEntry:
    block: Block
    solution: Optional[MiningSolution]
    public_key: PublicKey
    private_key: Optional[PrivateKey]
    parent: Optional[bytes]
    work: float
    arrival: int
    balances: dict[bytes, int]
    pending: dict[int, tuple[tuple[bytes, bytes], ...]]
    txids: frozenset
    released: list[Release] = field(default_factory=list)
    failed: list[FailedRelease] = field(default_factory=list)
    received_at: float = 0.0

    @property
    def header(self) -> BlockHeader:
        return self.block.header

    @property
    def height(self) -> int:
        return self.block.header.height

    @property
    def hash(self) -> bytes:
        return self.block.hash()


@dataclass(frozen=True)
class TipChange:
    old_tip: bytes
    new_tip: bytes
    reorg_depth: int  # blocks abandoned from the old best chain


def genesis_block(cfg: GenesisConfig) -> Block:
    header = BlockHeader(VERSION, ZERO_HASH, ZERO_HASH, cfg.genesis_time, 0, cfg.initial_bits, 0)
    return Block(header, ())


class ChainState:
    """Single-writer ledger; concurrent readers see complete entries only."""

    def __init__(self, genesis: GenesisConfig, schedule: Optional[BitSchedule] = None):
        self.genesis = genesis
        if schedule is None and not genesis.retarget:
            schedule = BitSchedule.constant(genesis.initial_bits)
        self.schedule = schedule
        self._arrivals = itertools.count()
        self._lock = threading.Lock()
        block = genesis_block(genesis)
        entry = BlockEntry(block, None, genesis.key, None, None, 0.0, next(self._arrivals), {},
                           {}, frozenset())
        self.entries: dict[bytes, BlockEntry] = {entry.hash: entry}
        self.genesis_hash = entry.hash
        self.tip = entry.hash
        self.children: dict[bytes, list[bytes]] = {}

    # -- views ---------------------------------------------------------------

    @property
    def tip_entry(self) -> BlockEntry:
        return self.entries[self.tip]

    @property
    def height(self) -> int:
        return self.tip_entry.height

    @property
    def balances(self) -> dict[bytes, int]:
        return dict(self.tip_entry.balances)

    def best_chain(self, tip: Optional[bytes] = None) -> list[BlockEntry]:
        """Entries from genesis to ``tip`` (the best tip by default)."""
        out = []
        h = self.tip if tip is None else tip
        while h is not None:
            e = self.entries[h]
            out.append(e)
            h = e.parent
        return out[::-1]

    def ancestor(self, tip: bytes, height: int) -> BlockEntry:
        e = self.entries[tip]
        while e.height > height:
            e = self.entries[e.parent]
        return e

    @property
    def released(self) -> dict[int, list[bytes]]:
        out: dict[int, list[bytes]] = {}
        for e in self.best_chain():
            for r in e.released:
                out.setdefault(r.target_height, []).append(r.plaintext)
        return out

    @property
    def failed_releases(self) -> list[FailedRelease]:
        return [f for e in self.best_chain() for f in e.failed]

    @property
    def supply(self) -> int:
        return sum(self.tip_entry.balances.values())

    # -- protocol rules ------------------------------------------------------

    def bits_for_child(self, parent: BlockEntry) -> int:
        """Key bit length required of a block extending ``parent``."""
        h = parent.height + 1
        if self.schedule is not None:
            return self.schedule.bits_at(h)
        w = self.genesis.retarget_window
        if h == 1 or (h - 1) % w:
            return parent.header.key_bits
        chain = [parent]
        while len(chain) <= w and chain[-1].parent is not None:
            chain.append(self.entries[chain[-1].parent])
        stamps = [e.header.timestamp for e in reversed(chain) if e.height > 0]
        intervals = [b - a for a, b in zip(stamps, stamps[1:])]
        if not intervals:
            return parent.header.key_bits
        return retarget(intervals, self.genesis.block_time, parent.header.key_bits)

    def key_for_child(self, parent: BlockEntry) -> PublicKey:
        return next_public_key(parent.public_key, self.bits_for_child(parent))

    def predict_key(self, height: int, tip: Optional[bytes] = None) -> PublicKey:
        """Key at ``height``; beyond the tip, assumes bits stay as the protocol
        has already fixed them (exact within the current epoch)."""
        tip_e = self.entries[self.tip if tip is None else tip]
        if height <= tip_e.height:
            return self.ancestor(tip_e.hash, height).public_key
        key = self.key_for_child(tip_e)
        bits = key.bits
        for h in range(tip_e.height + 2, height + 1):
            if self.schedule is not None:
                bits = self.schedule.bits_at(h)
            key = next_public_key(key, bits)
        return key

    def private_key_at(self, height: int, tip: Optional[bytes] = None) -> Optional[PrivateKey]:
        return self.ancestor(self.tip if tip is None else tip, height).private_key

    # -- mutation ------------------------------------------------------------

    def add_block(self, block: Block, solution: MiningSolution,
                  received_at: float = 0.0) -> tuple[BlockEntry, Optional[TipChange]]:
        """Fully validate and store ``block``; return its entry and any tip change.

        Raises :class:`InvalidBlockError` (or :class:`InvalidSolutionError`)
        without touching the state when any rule fails.
        """
        with self._lock:
            h = block.hash()
            if h in self.entries:
                return self.entries[h], None
            parent = self.entries.get(block.header.prev_hash)
            if parent is None:
                raise InvalidBlockError("unknown parent")
            pk = self._check_header(block, parent)
            if block.header.nonce != solution.nonce:
                raise InvalidSolutionError("3", "header nonce differs from the solution nonce")
            sk = validate(block.header, solution, pk)
            entry = self._apply(parent, block, solution, pk, sk)
            entry.received_at = received_at
            self.entries[h] = entry
            self.children.setdefault(parent.hash, []).append(h)
            return entry, self._maybe_switch(entry)

    def _check_header(self, block: Block, parent: BlockEntry) -> PublicKey:
        header = block.header
        if header.version != VERSION:
            raise InvalidBlockError(f"unsupported version {header.version}")
        if header.height != parent.height + 1:
            raise InvalidBlockError("height does not follow parent")
        if header.timestamp < parent.header.timestamp:
            raise InvalidBlockError("timestamp earlier than parent")
        pk = self.key_for_child(parent)
        if header.key_bits != pk.bits:
            raise InvalidBlockError(f"key_bits {header.key_bits}, protocol requires {pk.bits}")
        if not block.txs:
            raise InvalidBlockError("block has no coinbase")
        if header.merkle_root != merkle_root(block.txs):
            raise InvalidBlockError("merkle root mismatch")
        if block.size > self.genesis.max_block_bytes:
            raise InvalidBlockError("block exceeds max_block_bytes")
        return pk

    def _apply(self, parent: BlockEntry, block: Block, solution, pk, sk) -> BlockEntry:
        height = block.header.height
        balances = dict(parent.balances)
        txids = set(parent.txids)
        pending = dict(parent.pending)
        first, rest = block.txs[0], block.txs[1:]
        if first.kind != TxKind.COINBASE:
            raise InvalidBlockError("first transaction must be the coinbase")
        fees = 0
        blobs = []
        for tx in rest:
            txid = tx.txid()
            if tx.kind == TxKind.COINBASE:
                raise InvalidBlockError("more than one coinbase")
            if txid in txids:
                raise InvalidBlockError("transaction already on this branch")
            txids.add(txid)
            cost = tx.amount + tx.fee
            if balances.get(tx.sender, 0) < cost:
                raise InvalidBlockError(f"overspend by {tx.sender.hex()}")
            if cost:
                balances[tx.sender] -= cost
            if tx.amount:
                balances[tx.recipient] = balances.get(tx.recipient, 0) + tx.amount
            fees += tx.fee
            if tx.kind == TxKind.TIMELOCK:
                try:
                    ct = Ciphertext.from_bytes(tx.metadata)
                except FormatError as exc:
                    raise InvalidBlockError(f"timelock metadata: {exc}") from None
                blobs.append((txid, ct))
        if first.amount != self.genesis.reward + fees or first.fee:
            raise InvalidBlockError("coinbase amount must equal reward plus fees")
        cb_id = first.txid()
        if cb_id in txids:
            raise InvalidBlockError("duplicate coinbase")
        txids.add(cb_id)
        balances[first.recipient] = balances.get(first.recipient, 0) + first.amount

        entry = BlockEntry(block, solution, pk, sk, parent.hash,
                           parent.work + block_work(block.header.key_bits),
                           next(self._arrivals), balances, pending, frozenset(txids))
        for txid, ct in blobs:
            if ct.target_height > height:
                pending[ct.target_height] = pending.get(ct.target_height, ()) + ((txid, ct.to_bytes()),)
            elif ct.target_height == height:
                self._release(entry, txid, ct, pk, sk)
            elif ct.target_height == 0:
                entry.failed.append(FailedRelease(0, txid, "height 0 has no private key"))
            else:
                past = self.ancestor(parent.hash, ct.target_height)
                self._release(entry, txid, ct, past.public_key, past.private_key)
        for txid, blob in pending.pop(height, ()):
            self._release(entry, txid, Ciphertext.from_bytes(blob), pk, sk)
        return entry

    @staticmethod
    def _release(entry, txid, ct, pk, sk):
        try:
            entry.released.append(Release(ct.target_height, txid, decrypt(sk, pk, ct)))
        except IntegrityError as exc:
            entry.failed.append(FailedRelease(ct.target_height, txid, str(exc)))

    def _maybe_switch(self, entry: BlockEntry) -> Optional[TipChange]:
        current = self.entries[self.tip]
        # strict: equal work keeps the earlier arrival
        if entry.work <= current.work:
            return None
        old = self.tip
        depth = 0
        a, b = current, entry
        while a.height > b.height:
            a, depth = self.entries[a.parent], depth + 1
        while b.height > a.height:
            b = self.entries[b.parent]
        while a.hash != b.hash:
            a, depth = self.entries[a.parent], depth + 1
            b = self.entries[b.parent]
        self.tip = entry.hash
        return TipChange(old, entry.hash, depth)

    # -- block production ----------------------------------------------------

    def assemble_block(self, mempool: Mempool, miner: bytes,
                       timestamp: Optional[int] = None,
                       parent_hash: Optional[bytes] = None) -> tuple[HeaderTemplate, tuple[Transaction, ...], PublicKey]:
        """Header template (nonce unset), transactions and the key to mine under."""
        parent = self.entries[self.tip if parent_hash is None else parent_hash]
        pk = self.key_for_child(parent)
        height = parent.height + 1
        if timestamp is None:
            timestamp = int(time.time())
        timestamp = max(timestamp, parent.header.timestamp)
        cb_probe = coinbase(miner, 0, height)
        # worst case: nonce as wide as p, coinbase amount field is fixed width
        overhead = (len(BlockHeader(VERSION, ZERO_HASH, ZERO_HASH, 0, 0, 0).fixed_bytes())
                    + len(nonce_suffix(pk.p)) + 4 + TX_PREFIX + cb_probe.size)
        budget = self.genesis.max_block_bytes - overhead
        picked = self._affordable(parent, mempool.select(budget, exclude=parent.txids))
        fees = sum(tx.fee for tx in picked)
        txs = (coinbase(miner, self.genesis.reward + fees, height),) + tuple(picked)
        header = BlockHeader(VERSION, parent.hash, merkle_root(txs), timestamp, height, pk.bits)
        return header, txs, pk

    @staticmethod
    def _affordable(parent: BlockEntry, txs) -> list[Transaction]:
        balances = dict(parent.balances)
        out = []
        for tx in txs:
            cost = tx.amount + tx.fee
            if balances.get(tx.sender, 0) >= cost:
                balances[tx.sender] = balances.get(tx.sender, 0) - cost
                balances[tx.recipient] = balances.get(tx.recipient, 0) + tx.amount
                out.append(tx)
        return out


def fork_choice(state: ChainState) -> bytes:
    """Tip with the most cumulative work, earliest arrival on ties."""
    return max(state.entries.values(), key=lambda e: (e.work, -e.arrival)).hash


@dataclass
class SealedBlock:
    block: Block
    solution: MiningSolution
    private_key: PrivateKey
    steps: int


def mine_block(state: ChainState, mempool: Mempool, miner: bytes, rng=None,
               timestamp: Optional[int] = None, parent_hash: Optional[bytes] = None,
               max_restarts: int = 64, workers: int = 1) -> SealedBlock:
    """Assemble a block on the tip (or ``parent_hash``) and mine it; not added."""
    from ..consensus import mine_rolling

    template, txs, pk = state.assemble_block(mempool, miner, timestamp, parent_hash)
    header, res = mine_rolling(template, pk, rng, max_restarts, workers=workers)
    return SealedBlock(Block(header, txs), res.solution, res.key, res.steps)
