import random
from dataclasses import replace

import pytest

from oracles import exhaustive_dlog
from trchain.chain.block import account_id
from trchain.chain.mempool import Mempool
from trchain.chain.state import ChainState, mine_block
from trchain.errors import FormatError
from trchain.keychain import GenesisConfig
from trchain.netsim import (
    HashRateStep,
    SimConfig,
    premature_release_experiment,
    run_simulation,
    tamper_experiment,
    textbook_rho,
)
from trchain.netsim.config import sub_seed
from trchain.netsim.report import CSV_COLUMNS, companion_paths, render_csv, render_text, write_report
from trchain.netsim.sim import Simulation

from helpers import make_key

SMALL = SimConfig(node_count=3, blocks=40, initial_bits=12, seed=11)


@pytest.fixture(scope="module")
def small_report():
    return run_simulation(SMALL)


@pytest.fixture(scope="module")
def chain16():
    g = GenesisConfig(seed=0xBEEF, initial_bits=16, block_time=20, retarget=False)
    state = ChainState(g)
    rng = random.Random(5)
    for i in range(8):
        sealed = mine_block(state, Mempool(), account_id("m"), rng, timestamp=20 * (i + 1))
        state.add_block(sealed.block, sealed.solution)
    return state


# -- config ----------------------------------------------------------------

def test_config_from_kv():
    cfg = SimConfig.from_kv({"node_count": "2", "hash_rates": "1.5, 3", "blocks": "0x20",
                             "hashrate_step": "100:4", "messages": "false"})
    assert cfg.rates == (1.5, 3.0)
    assert cfg.blocks == 32
    assert cfg.hashrate_step == HashRateStep(100, 4.0)
    assert cfg.messages is False


@pytest.mark.parametrize("kv", [
    {"node_count": "0"},
    {"hash_rate": "-1"},
    {"hash_rates": "1,2", "node_count": "3"},
    {"latency_min_ms": "10", "latency_max_ms": "5"},
    {"blocks": "ten"},
    {"hashrate_step": "100"},
    {"colour": "blue"},
])
def test_config_rejects(kv):
    with pytest.raises(FormatError):
        SimConfig.from_kv(kv)


def test_sub_seed_streams_differ():
    seeds = {sub_seed(1, "mine", i, j) for i in range(5) for j in range(20)}
    assert len(seeds) == 100
    assert sub_seed(1, "x") == sub_seed(1, "x")


# -- simulation ------------------------------------------------------------

def test_single_node_fixed_bits_has_no_forks():
    r = run_simulation(SimConfig(node_count=1, blocks=200, initial_bits=12, retarget=False,
                                 messages=False))
    assert r.fork_count == 0
    assert r.max_reorg_depth == 0
    assert set(r.epoch_bits) == {12}
    assert len(r.intervals) == 199


def test_interval_series_length(small_report):
    assert len(small_report.intervals) == SMALL.blocks - 1
    assert len(small_report.rows) == SMALL.blocks
    assert [row.height for row in small_report.rows] == list(range(1, SMALL.blocks + 1))
    assert all(i >= 0 for i in small_report.intervals)


def test_ledger_conserved(small_report):
    assert small_report.supply == SMALL.blocks * 50
    assert small_report.balance_sum == small_report.supply


def test_determinism_same_seed(small_report):
    again = run_simulation(SMALL)
    assert render_text(again) == render_text(small_report)
    assert render_csv(again) == render_csv(small_report)


def test_different_seed_differs(small_report):
    other = run_simulation(replace(SMALL, seed=12))
    assert render_csv(other) != render_csv(small_report)


def test_messages_released_at_target(small_report):
    assert small_report.messages
    for m in small_report.messages:
        assert m.released_height == m.target_height
        assert m.recovered == m.plaintext


def test_synchronous_network_converges():
    r = run_simulation(SimConfig(node_count=4, blocks=30, latency_min_ms=0, latency_max_ms=0,
                                 seed=3))
    assert r.converged
    assert r.fork_count == 0


def test_invalid_block_never_accepted():
    sim = Simulation(SimConfig(node_count=2, blocks=10, seed=4, messages=False))
    sim.run()
    node = sim.nodes[0]
    entry = node.state.best_chain()[3]
    forged = replace(entry.block, header=replace(entry.header, timestamp=entry.header.timestamp + 1))
    before = (node.state.tip, len(node.state.entries), sim.rejected)
    assert sim._accept(node, forged, entry.solution) is False
    assert (node.state.tip, len(node.state.entries)) == before[:2]
    assert sim.rejected == before[2] + 1


def test_hashrate_step_shortens_intervals():
    cfg = SimConfig(blocks=80, seed=2, hashrate_step=HashRateStep(41, 8.0), messages=False)
    r = run_simulation(cfg)
    before = r.mean_interval_between(31, 41)
    after = r.mean_interval_between(41, 51)
    assert after < before


# -- report ----------------------------------------------------------------

def test_csv_rows(small_report):
    lines = render_csv(small_report).splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert len(lines) == SMALL.blocks + 1
    assert lines[1].split(",")[1] == ""


def test_write_report_files_byte_stable(tmp_path, small_report):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a = write_report(small_report, tmp_path / "a" / "run.txt")
    b = write_report(run_simulation(SMALL), tmp_path / "b" / "run.txt")
    assert [p.name for p in a] == ["run.txt", "run.csv", "run_intervals.png", "run_bits.png"]
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
    assert a[2].read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_companion_paths():
    paths = companion_paths("out/report.txt")
    assert str(paths["csv"]) == "out/report.csv"
    assert str(paths["bits"]) == "out/report_bits.png"


# -- experiments -----------------------------------------------------------

def test_tamper_rejects_and_costs_match(chain16):
    res = tamper_experiment(chain16, 200, random.Random(1))
    assert res.accepted == 0
    assert res.controls_accepted == res.controls > 0
    assert 0.5 <= res.cost_ratio <= 2.0
    assert sum(res.by_field.values()) == 0


def test_tamper_needs_a_mined_block():
    g = GenesisConfig(seed=1, initial_bits=12, block_time=20)
    with pytest.raises(ValueError):
        tamper_experiment(ChainState(g), 5, random.Random(0))


@pytest.mark.parametrize("bits", [6, 8, 10])
def test_textbook_rho_matches_oracle(bits):
    for seed in range(4):
        pk = make_key(bits, seed)
        key, steps = textbook_rho(pk, random.Random(seed))
        assert key.x == exhaustive_dlog(pk.p, pk.g, pk.h)
        assert steps >= 1


def test_premature_guard():
    for bad in ([3], [12, 25]):
        with pytest.raises(ValueError):
            premature_release_experiment(bad, trials=1)


def test_premature_small():
    res = premature_release_experiment([10, 14], trials=30, seed=2)
    assert [r.bits for r in res.rows] == [10, 14]
    for r in res.rows:
        assert 0.2 <= r.ratio <= 5.0
    assert res.miner_slope > 0 and res.attacker_slope > 0


def test_experiments_attached_to_report():
    r = run_simulation(replace(SMALL, blocks=20), experiments=("tamper", "premature"), trials=20)
    text = render_text(r)
    assert "[tamper]" in text and "[premature_release]" in text
    with pytest.raises(ValueError):
        run_simulation(SMALL, experiments=("selfish",))
