"""Command-line interface.

Exit status is 0 on success, 1 for domain errors (bad keys, invalid blocks,
integrity failures, unreadable files) and 2 for usage errors or an invalid
simulation config. ``--format records`` prints one JSON object per line.
"""
from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path
from typing import Optional

from .chain import store
from .chain.block import Transaction, TxKind, account_id
from .chain.mempool import Mempool
from .chain.state import ChainState, mine_block
from .errors import FormatError, NoKeyError, TRChainError
from .keychain import BitSchedule, GenesisConfig, PrivateKey, PublicKey, public_key_problems
from .kvfile import parse_kv
from .trencrypt import Ciphertext, decrypt, encrypt


class UsageError(Exception):
    pass


# -- shared plumbing ---------------------------------------------------------

def _emit(args, records: list[dict], text: Optional[str] = None) -> None:
    if args.format == "records":
        for rec in records:
            print(json.dumps(rec, sort_keys=True))
    else:
        if text is None:
            text = "\n".join(" ".join(f"{k}={v}" for k, v in rec.items()) for rec in records)
        print(text)


def _open_chain(args) -> tuple[ChainState, store.LoadReport]:
    genesis = GenesisConfig.load(args.genesis)
    schedule = BitSchedule.load(args.bits_schedule) if getattr(args, "bits_schedule", None) else None
    chain = getattr(args, "chain", None)
    if chain:
        return store.load(chain, genesis, schedule)
    return ChainState(genesis, schedule), store.LoadReport()


def _read_single_record(path):
    data = Path(path).read_bytes()
    records = list(store.iter_records(data))
    if len(records) != 1 or records[0][1] is None:
        raise FormatError(f"{path}: expected exactly one complete block record")
    return store.decode_payload(records[0][1])


def _key_record(height: int, pk: PublicKey) -> dict:
    return {"height": height, "bits": pk.bits, "p": hex(pk.p), "g": hex(pk.g), "h": hex(pk.h),
            "p_dec": str(pk.p), "g_dec": str(pk.g), "h_dec": str(pk.h)}


# -- subcommands -------------------------------------------------------------

def cmd_keychain_show(args) -> int:
    state, _ = _open_chain(args)
    rec = _key_record(args.height, state.predict_key(args.height))
    _emit(args, [rec], "".join(f"{k} = {v}\n" for k, v in rec.items()).rstrip("\n"))
    return 0


def cmd_keychain_verify(args) -> int:
    text = Path(args.key_file).read_text()
    fields = json.loads(text) if text.lstrip().startswith("{") else parse_kv(text)
    pk = PublicKey.from_dict(fields)
    problems = public_key_problems(pk)
    for name in ("p", "g", "h"):
        dec = fields.get(f"{name}_dec")
        if dec is not None and int(str(dec)) != getattr(pk, name):
            problems.append(f"{name}_dec disagrees with {name}")
    if args.genesis and "height" in fields:
        state, _ = _open_chain(args)
        if state.predict_key(int(str(fields["height"]), 0)) != pk:
            problems.append("key differs from the chain's key at that height")
    _emit(args, [{"ok": not problems, "problems": problems}],
          "ok" if not problems else "\n".join(f"invalid: {p}" for p in problems))
    return 0 if not problems else 1


def cmd_encrypt(args) -> int:
    state, _ = _open_chain(args)
    pk = state.predict_key(args.to_height)
    rng = random.Random(args.seed) if args.seed is not None else None
    ct = encrypt(pk, args.to_height, Path(args.infile).read_bytes(), rng)
    Path(args.outfile).write_bytes(ct.to_bytes())
    _emit(args, [{"target_height": args.to_height, "bits": pk.bits, "bytes": len(ct.to_bytes())}])
    return 0


def cmd_decrypt(args) -> int:
    state, _ = _open_chain(args)
    ct = Ciphertext.from_bytes(Path(args.infile).read_bytes())
    if args.key is not None:
        sk = PrivateKey(int(args.key, 16))
    else:
        sk = state.private_key_at(ct.target_height) if ct.target_height <= state.height else None
        if sk is None:
            raise NoKeyError(f"height {ct.target_height} has not been mined; pass --key")
    plaintext = decrypt(sk, state.predict_key(ct.target_height), ct)
    Path(args.outfile).write_bytes(plaintext)
    _emit(args, [{"target_height": ct.target_height, "bytes": len(plaintext)}])
    return 0


def cmd_mine(args) -> int:
    state, report = _open_chain(args)
    if report.rejected or report.truncated_at is not None:
        raise TRChainError(f"{args.chain} does not replay cleanly; run 'chain show'")
    mempool = Mempool()
    for path in args.include or ():
        blob = Path(path).read_bytes()
        Ciphertext.from_bytes(blob)
        mempool.add(Transaction(TxKind.TIMELOCK, account_id(args.miner), account_id("board"),
                                0, 0, blob))
    rng = random.Random(args.seed) if args.seed is not None else None
    sealed = mine_block(state, mempool, account_id(args.miner), rng, timestamp=args.timestamp,
                        max_restarts=args.max_restarts, workers=args.threads)
    entry, _ = state.add_block(sealed.block, sealed.solution)
    store.append(args.chain, sealed.block, sealed.solution)
    if args.block_out:
        Path(args.block_out).write_bytes(store.encode_record(sealed.block, sealed.solution))
    rec = {"height": entry.height, "hash": entry.hash.hex(), "bits": entry.header.key_bits,
           "private_key": hex(sealed.private_key.x), "steps": sealed.steps,
           "txs": len(sealed.block.txs)}
    _emit(args, [rec])
    return 0


def cmd_validate(args) -> int:
    state, _ = _open_chain(args)
    block, sol = _read_single_record(args.block)
    try:
        entry, _ = state.add_block(block, sol)
    except TRChainError as exc:
        _emit(args, [{"valid": False, "reason": str(exc)}], f"invalid: {exc}")
        return 1
    _emit(args, [{"valid": True, "height": entry.height, "hash": entry.hash.hex(),
                  "private_key": hex(entry.private_key.x)}],
          f"valid height={entry.height} private_key={hex(entry.private_key.x)}")
    return 0


def cmd_chain_show(args) -> int:
    state, report = _open_chain(args)
    records = [{"kind": "summary", "height": state.height, "tip": state.tip.hex(),
                "work": round(state.tip_entry.work, 3), "blocks_loaded": report.accepted,
                "supply": state.supply}]
    for e in state.best_chain()[1:]:
        records.append({"kind": "block", "height": e.height, "hash": e.hash.hex(),
                        "bits": e.header.key_bits, "timestamp": e.header.timestamp,
                        "txs": len(e.block.txs), "released": len(e.released),
                        "failed": len(e.failed)})
    for acct, bal in sorted(state.balances.items()):
        records.append({"kind": "balance", "account": acct.hex(), "balance": bal})
    for off, reason in report.rejected:
        records.append({"kind": "rejected", "offset": off, "reason": reason})
    if report.truncated_at is not None:
        records.append({"kind": "truncated", "offset": report.truncated_at})
    _emit(args, records)
    return 1 if report.rejected or report.truncated_at is not None else 0


def cmd_simulate(args) -> int:
    from .netsim.config import SimConfig
    from .netsim.report import render_text, write_report
    from .netsim.sim import run_simulation

    try:
        cfg = SimConfig.load(args.config)
    except FormatError as exc:
        raise UsageError(f"invalid config: {exc}") from None
    report = run_simulation(cfg, experiments=tuple(args.experiment or ()), trials=args.trials)
    written = write_report(report, args.report, figures=not args.no_figures)
    if args.format == "records":
        _emit(args, [{"mean_interval": round(report.mean_interval, 6), "forks": report.fork_count,
                      "max_reorg_depth": report.max_reorg_depth,
                      "supply": report.supply, "balance_sum": report.balance_sum,
                      "files": [str(p) for p in written]}])
    else:
        print(render_text(report), end="")
        print("wrote " + " ".join(str(p) for p in written))
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trchain",
                                 description="Timed-release proof-of-work chain tools.")
    ap.add_argument("--format", choices=("text", "records"), default="text")
    # accepted after the subcommand too; SUPPRESS keeps it from clobbering the global flag
    fmt = argparse.ArgumentParser(add_help=False)
    fmt.add_argument("--format", choices=("text", "records"), default=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)

    def chain_opts(p, chain_required=False):
        p.add_argument("--genesis", required=True)
        p.add_argument("--chain", required=chain_required)
        p.add_argument("--bits-schedule")

    kc = sub.add_parser("keychain", help="inspect the key chain")
    kc_sub = kc.add_subparsers(dest="action", required=True)
    show = kc_sub.add_parser("show", parents=[fmt])
    chain_opts(show)
    show.add_argument("--height", type=int, required=True)
    show.set_defaults(func=cmd_keychain_show)
    verify = kc_sub.add_parser("verify", parents=[fmt])
    verify.add_argument("--key-file", required=True)
    verify.add_argument("--genesis")
    verify.add_argument("--chain")
    verify.add_argument("--bits-schedule")
    verify.set_defaults(func=cmd_keychain_verify)

    enc = sub.add_parser("encrypt", parents=[fmt], help="encrypt a file to a future height")
    chain_opts(enc)
    enc.add_argument("--to-height", type=int, required=True)
    enc.add_argument("--in", dest="infile", required=True)
    enc.add_argument("--out", dest="outfile", required=True)
    enc.add_argument("--seed", type=int)
    enc.set_defaults(func=cmd_encrypt)

    dec = sub.add_parser("decrypt", parents=[fmt], help="decrypt a released ciphertext")
    chain_opts(dec)
    dec.add_argument("--key", help="private key in hex; defaults to the chain's key")
    dec.add_argument("--in", dest="infile", required=True)
    dec.add_argument("--out", dest="outfile", required=True)
    dec.set_defaults(func=cmd_decrypt)

    mine = sub.add_parser("mine", parents=[fmt], help="mine and append one block")
    chain_opts(mine, chain_required=True)
    mine.add_argument("--miner", required=True)
    mine.add_argument("--max-restarts", type=int, default=64)
    mine.add_argument("--threads", type=int, default=1)
    mine.add_argument("--timestamp", type=int)
    mine.add_argument("--seed", type=int)
    mine.add_argument("--include", action="append", metavar="CIPHERTEXT",
                      help="ciphertext file to embed as a timelock transaction")
    mine.add_argument("--block-out")
    mine.set_defaults(func=cmd_mine)

    val = sub.add_parser("validate", parents=[fmt], help="validate a block file against a chain")
    chain_opts(val, chain_required=True)
    val.add_argument("--block", required=True)
    val.set_defaults(func=cmd_validate)

    ch = sub.add_parser("chain", help="chain file inspection")
    ch_sub = ch.add_subparsers(dest="action", required=True)
    cshow = ch_sub.add_parser("show", parents=[fmt])
    chain_opts(cshow, chain_required=True)
    cshow.set_defaults(func=cmd_chain_show)

    sim = sub.add_parser("simulate", parents=[fmt], help="run the network simulator")
    sim.add_argument("--config", required=True)
    sim.add_argument("--report", required=True)
    sim.add_argument("--experiment", action="append", choices=("tamper", "premature"))
    sim.add_argument("--trials", type=int, default=1000)
    sim.add_argument("--no-figures", action="store_true")
    sim.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TRChainError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
