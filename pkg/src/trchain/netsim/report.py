"""Plain-text and CSV renderings of a simulation run."""
from __future__ import annotations

import csv
import io
from pathlib import Path

from .experiments import PrematureResult, TamperResult
from .sim import SimReport

CSV_COLUMNS = ("height", "interval", "bits", "forks_at_height")


def _fmt(x: float, digits: int = 3) -> str:
    return f"{x:.{digits}f}"


def render_text(report: SimReport) -> str:
    cfg = report.config
    lines = [
        "[config]",
        f"nodes = {cfg.node_count}",
        f"hash_rates = {','.join(_fmt(r, 2) for r in cfg.rates)}",
        f"latency_ms = {_fmt(cfg.latency_min_ms, 1)}..{_fmt(cfg.latency_max_ms, 1)}",
        f"block_time = {_fmt(cfg.block_time, 2)}",
        f"retarget_window = {cfg.retarget_window}",
        f"initial_bits = {cfg.initial_bits}",
        f"blocks = {cfg.blocks}",
        f"seed = {cfg.seed}",
    ]
    if cfg.hashrate_step:
        lines.append(f"hashrate_step = {cfg.hashrate_step.height}:{cfg.hashrate_step.factor:g}")
    lines += [
        "",
        "[intervals]",
        f"count = {len(report.intervals)}",
        f"mean = {_fmt(report.mean_interval)}",
        f"median = {_fmt(report.median_interval)}",
        f"stdev = {_fmt(report.stdev_interval)}",
        "",
        "[network]",
        f"forks = {report.fork_count}",
        f"max_reorg_depth = {report.max_reorg_depth}",
        f"rejected_blocks = {report.rejected_blocks}",
        f"converged = {str(report.converged).lower()}",
        f"tip = {report.tip_hash.hex()}",
        "",
        "[ledger]",
        f"supply = {report.supply}",
        f"balance_sum = {report.balance_sum}",
        "",
        "[epoch_bits]",
        " ".join(str(b) for b in report.epoch_bits),
    ]
    if report.messages:
        lines += ["", "[messages]", "target_height released_height blocks_late ok"]
        for m in report.messages:
            late = "-" if m.blocks_late is None else _fmt(m.blocks_late)
            rel = "-" if m.released_height is None else str(m.released_height)
            ok = str(m.recovered == m.plaintext).lower()
            lines.append(f"{m.target_height} {rel} {late} {ok}")
    tamper = report.attacks.get("tamper")
    if isinstance(tamper, TamperResult):
        lines += ["", "[tamper]", *render_tamper(tamper)]
    premature = report.attacks.get("premature")
    if isinstance(premature, PrematureResult):
        lines += ["", "[premature_release]", *render_premature(premature)]
    return "\n".join(lines) + "\n"


def render_tamper(t: TamperResult) -> list[str]:
    out = [
        f"trials = {t.trials}",
        f"accepted = {t.accepted}",
        f"acceptance_rate = {_fmt(t.acceptance_rate, 4)}",
        f"median_remine_steps = {_fmt(t.median_remine_steps, 1)}",
        f"median_honest_steps = {_fmt(t.median_honest_steps, 1)}",
        f"cost_ratio = {_fmt(t.cost_ratio)}",
        f"controls_accepted = {t.controls_accepted}/{t.controls}",
        "field accepted",
    ]
    out += [f"{name} {count}" for name, count in t.by_field.items()]
    return out


def render_premature(pr: PrematureResult) -> list[str]:
    out = ["bits miner_median attacker_median ratio"]
    out += [f"{r.bits} {_fmt(r.median_miner_steps, 1)} {_fmt(r.median_attacker_steps, 1)} "
            f"{_fmt(r.ratio)}" for r in pr.rows]
    if len(pr.rows) >= 2:
        out += [f"miner_slope = {_fmt(pr.miner_slope)}",
                f"attacker_slope = {_fmt(pr.attacker_slope)}"]
    return out


def render_csv(report: SimReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        w.writerow([r.height, "" if r.interval is None else f"{r.interval:.6f}", r.bits,
                    r.forks_at_height])
    return buf.getvalue()


def companion_paths(report_path) -> dict[str, Path]:
    """Files written next to the text report."""
    path = Path(report_path)
    stem = path.with_suffix("")
    return {
        "csv": stem.with_name(stem.name + ".csv"),
        "intervals": stem.with_name(stem.name + "_intervals.png"),
        "bits": stem.with_name(stem.name + "_bits.png"),
    }


def write_report(report: SimReport, report_path, figures: bool = True) -> list[Path]:
    """Write text report, CSV and (optionally) PNG figures; return the paths."""
    path = Path(report_path)
    extra = companion_paths(path)
    path.write_text(render_text(report))
    extra["csv"].write_text(render_csv(report))
    written = [path, extra["csv"]]
    if figures:
        from .plots import plot_bits, plot_intervals

        plot_intervals(report, extra["intervals"])
        plot_bits(report, extra["bits"])
        written += [extra["intervals"], extra["bits"]]
    return written
