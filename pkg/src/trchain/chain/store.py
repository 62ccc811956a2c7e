"""Append-only chain file.

Each record is ``u32 BE length || payload`` with payload
``u32 BE block_length || block || solution``, in arrival order. Loading
replays every record through full validation.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..consensus import MiningSolution
from ..errors import FormatError, TRChainError
from ..keychain import BitSchedule, GenesisConfig
from .block import Block
from .state import ChainState


def encode_record(block: Block, solution: MiningSolution) -> bytes:
    raw = block.serialize()
    payload = struct.pack(">I", len(raw)) + raw + solution.to_bytes()
    return struct.pack(">I", len(payload)) + payload


def decode_payload(payload: bytes) -> tuple[Block, MiningSolution]:
    if len(payload) < 4:
        raise FormatError("record payload too short")
    (blen,) = struct.unpack_from(">I", payload)
    if len(payload) < 4 + blen:
        raise FormatError("record block truncated")
    block = Block.deserialize(payload[4 : 4 + blen])
    return block, MiningSolution.from_bytes(payload[4 + blen :])


def iter_records(data: bytes):
    """Yield ``(offset, payload)``; stops at a truncated tail, yielding
    ``(offset, None)`` for it."""
    off = 0
    while off < len(data):
        if len(data) < off + 4:
            yield off, None
            return
        (n,) = struct.unpack_from(">I", data, off)
        if len(data) < off + 4 + n:
            yield off, None
            return
        yield off, data[off + 4 : off + 4 + n]
        off += 4 + n


@dataclass
class LoadReport:
    accepted: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)  # (offset, reason)
    truncated_at: Optional[int] = None


def save(state: ChainState, path) -> None:
    entries = sorted((e for e in state.entries.values() if e.solution is not None),
                     key=lambda e: e.arrival)
    Path(path).write_bytes(b"".join(encode_record(e.block, e.solution) for e in entries))


def append(path, block: Block, solution: MiningSolution) -> None:
    with open(path, "ab") as fh:
        fh.write(encode_record(block, solution))


def load(path, genesis: GenesisConfig, schedule: Optional[BitSchedule] = None
         ) -> tuple[ChainState, LoadReport]:
    state = ChainState(genesis, schedule)
    report = LoadReport()
    p = Path(path)
    data = p.read_bytes() if p.exists() else b""
    for off, payload in iter_records(data):
        if payload is None:
            report.truncated_at = off
            break
        try:
            block, sol = decode_payload(payload)
            state.add_block(block, sol)
        except TRChainError as exc:
            report.rejected.append((off, str(exc)))
            continue
        report.accepted += 1
    return state, report
