"""Deterministic discrete-event simulation of a small mining network.

Mining is not approximated: when a node starts on a tip it really mines the
block, and the tortoise-step count of that run divided by the node's hash
rate is how long the block takes in simulated time. Blocks reach the other
nodes after a uniformly sampled latency, get fully validated, and may cause a
reorg by cumulative work.
"""
from __future__ import annotations

import heapq
import itertools
import random
import statistics
from dataclasses import dataclass, field
from typing import Optional

from ..chain.block import Block, Transaction, TxKind, account_id
from ..chain.mempool import Mempool
from ..chain.state import ChainState, mine_block
from ..consensus import MiningSolution
from ..errors import InvalidBlockError, TRChainError
from ..keychain import GenesisConfig
from ..trencrypt import encrypt, release_height
from .config import SimConfig, sub_seed
from .experiments import premature_release_experiment, tamper_experiment

FOUND, RECEIVE = 0, 1


@dataclass
class Message:
    created_at: float
    t_release: float
    target_height: int
    plaintext: bytes
    released_at: Optional[float] = None
    released_height: Optional[int] = None
    recovered: Optional[bytes] = None

    block_time: float = 1.0

    @property
    def blocks_late(self) -> Optional[float]:
        """Release delay past the wall-clock target, in block-time units."""
        if self.released_at is None:
            return None
        return (self.released_at - self.t_release) / self.block_time


@dataclass
class BlockRow:
    height: int
    interval: Optional[float]
    bits: int
    forks_at_height: int


@dataclass
class SimReport:
    config: SimConfig
    intervals: list[float]
    rows: list[BlockRow]
    epoch_bits: list[int]
    fork_count: int
    max_reorg_depth: int
    messages: list[Message]
    supply: int
    balance_sum: int
    rejected_blocks: int
    converged: bool
    tip_hash: bytes
    attacks: dict = field(default_factory=dict)

    @property
    def mean_interval(self) -> float:
        return statistics.fmean(self.intervals)

    @property
    def median_interval(self) -> float:
        return statistics.median(self.intervals)

    @property
    def stdev_interval(self) -> float:
        return statistics.pstdev(self.intervals)

    def mean_interval_between(self, lo: int, hi: int) -> float:
        """Mean of intervals ending at heights lo..hi-1."""
        vals = [r.interval for r in self.rows if lo <= r.height < hi and r.interval is not None]
        return statistics.fmean(vals)


class _Node:
    def __init__(self, idx: int, genesis: GenesisConfig):
        self.idx = idx
        self.state = ChainState(genesis)
        self.mempool = Mempool()
        self.account = account_id(f"node-{idx}")
        self.job = 0
        self.orphans: dict[bytes, list[tuple[Block, MiningSolution]]] = {}


class Simulation:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.genesis = GenesisConfig(seed=cfg.key_seed, initial_bits=cfg.initial_bits,
                                     block_time=cfg.block_time,
                                     retarget_window=cfg.retarget_window, retarget=cfg.retarget,
                                     genesis_time=0)
        self.nodes = [_Node(i, self.genesis) for i in range(cfg.node_count)]
        self.latency_rng = random.Random(sub_seed(cfg.seed, "latency"))
        self.msg_rng = random.Random(sub_seed(cfg.seed, "messages"))
        self.events: list = []
        self._seq = itertools.count()
        self.now = 0.0
        self.found_at: dict[bytes, float] = {}
        self.produced: dict[bytes, int] = {}  # block hash -> height, every block mined
        self.max_reorg = 0
        self.rejected = 0
        self.messages: list[Message] = []
        self._msg_epochs: set[int] = set()
        self.stopped = False

    # -- event plumbing ------------------------------------------------------

    def _push(self, t: float, kind: int, payload) -> None:
        heapq.heappush(self.events, (t, next(self._seq), kind, payload))

    def _rate(self, node: _Node, height: int) -> float:
        rate = self.cfg.rates[node.idx]
        step = self.cfg.hashrate_step
        if step is not None and height >= step.height:
            rate *= step.factor
        return rate

    def _start_mining(self, node: _Node) -> None:
        if self.stopped:
            return
        node.job += 1
        tip = node.state.tip_entry
        rng = random.Random(sub_seed(self.cfg.seed, "mine", node.idx, node.job))
        sealed = mine_block(node.state, node.mempool, node.account, rng,
                            timestamp=int(self.genesis.genesis_time + self.now))
        duration = sealed.steps / self._rate(node, tip.height + 1)
        self._push(self.now + duration, FOUND, (node.idx, node.job, sealed))

    # -- handlers ------------------------------------------------------------

    def _on_found(self, node: _Node, job: int, sealed) -> None:
        if job != node.job or self.stopped:
            return
        block, sol = sealed.block, sealed.solution
        h = block.hash()
        self.found_at[h] = self.now
        self.produced[h] = block.header.height
        self._accept(node, block, sol)
        lo, hi = self.cfg.latency_min_ms / 1000, self.cfg.latency_max_ms / 1000
        for other in self.nodes:
            if other is not node:
                self._push(self.now + self.latency_rng.uniform(lo, hi), RECEIVE,
                           (other.idx, block, sol))
        if block.header.height >= self.cfg.blocks:
            self.stopped = True
        self._start_mining(node)

    def _on_receive(self, node: _Node, block: Block, sol: MiningSolution) -> None:
        if self._accept(node, block, sol):
            self._start_mining(node)

    def _accept(self, node: _Node, block: Block, sol: MiningSolution) -> bool:
        """Add a block (and any orphans waiting on it); True if the tip moved."""
        moved = False
        queue = [(block, sol)]
        while queue:
            b, s = queue.pop()
            try:
                entry, change = node.state.add_block(b, s, received_at=self.now)
            except InvalidBlockError as exc:
                if str(exc) == "unknown parent":
                    node.orphans.setdefault(b.header.prev_hash, []).append((b, s))
                else:
                    self.rejected += 1
                continue
            except TRChainError:
                self.rejected += 1
                continue
            if change is not None:
                moved = True
                self.max_reorg = max(self.max_reorg, change.reorg_depth)
            queue.extend(node.orphans.pop(b.hash(), []))
        if moved and node.idx == 0:
            self._maybe_message(node)
        return moved

    def _maybe_message(self, node: _Node) -> None:
        """At each epoch start, a user schedules a message half an epoch out."""
        if not self.cfg.messages:
            return
        w = self.cfg.retarget_window
        height = node.state.height
        if height % w or height in self._msg_epochs:
            return
        self._msg_epochs.add(height)
        t_release = self.now + (w // 2) * self.cfg.block_time
        # offset form keeps float rounding out of the ceiling
        target = release_height(0.0, t_release - self.now, self.cfg.block_time, height)
        if target > min(height + w, self.cfg.blocks):
            return
        pk = node.state.predict_key(target)
        plaintext = f"sealed bid #{len(self.messages)} at height {target}".encode()
        ct = encrypt(pk, target, plaintext, self.msg_rng)
        tx = Transaction(TxKind.TIMELOCK, account_id("user"), account_id("board"), 0, 0,
                         ct.to_bytes())
        for n in self.nodes:
            n.mempool.add(tx)
        self.messages.append(Message(self.now, t_release, target, plaintext,
                                     block_time=self.cfg.block_time))

    # -- driver --------------------------------------------------------------

    def run(self) -> SimReport:
        for node in self.nodes:
            self._start_mining(node)
        while self.events:
            t, _, kind, payload = heapq.heappop(self.events)
            self.now = t
            if kind == FOUND:
                idx, job, sealed = payload
                self._on_found(self.nodes[idx], job, sealed)
            else:
                idx, block, sol = payload
                self._on_receive(self.nodes[idx], block, sol)
        return self._report()

    def best_node(self) -> _Node:
        return max(self.nodes, key=lambda n: (n.state.tip_entry.work, -n.idx))

    def _report(self) -> SimReport:
        best = self.best_node()
        chain = best.state.best_chain()[1:]
        if len(chain) > self.cfg.blocks:
            chain = chain[: self.cfg.blocks]
        per_height: dict[int, int] = {}
        for h in self.produced.values():
            per_height[h] = per_height.get(h, 0) + 1
        rows, intervals = [], []
        prev_t = None
        for e in chain:
            t = self.found_at[e.hash]
            interval = None if prev_t is None else t - prev_t
            if interval is not None:
                intervals.append(interval)
            prev_t = t
            rows.append(BlockRow(e.height, interval, e.header.key_bits,
                                 per_height.get(e.height, 1) - 1))
        w = self.cfg.retarget_window
        epoch_bits = [rows[i].bits for i in range(0, len(rows), w)]
        on_chain = {e.hash for e in best.state.best_chain()}
        forks = sum(1 for h in self.produced if h not in on_chain)
        for msg in self.messages:
            e = next((e for e in chain if e.height == msg.target_height), None)
            if e is None:
                continue
            for r in e.released:
                if r.plaintext == msg.plaintext:
                    msg.released_at = self.found_at[e.hash]
                    msg.released_height = e.height
                    msg.recovered = r.plaintext
        tips = {n.state.tip for n in self.nodes}
        tip_entry = best.state.tip_entry
        return SimReport(
            config=self.cfg,
            intervals=intervals,
            rows=rows,
            epoch_bits=epoch_bits,
            fork_count=forks,
            max_reorg_depth=self.max_reorg,
            messages=self.messages,
            supply=tip_entry.height * self.genesis.reward,
            balance_sum=sum(tip_entry.balances.values()),
            rejected_blocks=self.rejected,
            converged=len(tips) == 1,
            tip_hash=best.state.tip,
        )


EXPERIMENTS = ("tamper", "premature")


def run_simulation(cfg: SimConfig, experiments=(), trials: int = 1000,
                   premature_bits=(12, 16, 20)) -> SimReport:
    """Run the network; optionally attach attack experiments to the report.

    ``tamper`` mutates blocks of the heaviest final chain; ``premature``
    compares miner and attacker costs over ``premature_bits`` with
    ``trials`` keys per bit length (capped at 200).
    """
    unknown = set(experiments) - set(EXPERIMENTS)
    if unknown:
        raise ValueError(f"unknown experiments: {', '.join(sorted(unknown))}")
    sim = Simulation(cfg)
    report = sim.run()
    if "tamper" in experiments:
        report.attacks["tamper"] = tamper_experiment(
            sim.best_node().state, trials, random.Random(sub_seed(cfg.seed, "tamper")))
    if "premature" in experiments:
        report.attacks["premature"] = premature_release_experiment(
            premature_bits, min(trials, 200), sub_seed(cfg.seed, "premature"))
    return report
