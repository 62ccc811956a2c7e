"""Canonical block, header and transaction encodings.

Header layout (this is the mining preimage)::

    version     u32 BE
    prev_hash   32 bytes
    merkle_root 32 bytes
    timestamp   u64 BE
    height      u64 BE
    key_bits    u16 BE
    nonce_len   u16 BE
    nonce       big-endian magnitude, no leading zero bytes
"""
from __future__ import annotations

import enum
import functools
import hashlib
import struct
from dataclasses import dataclass, replace

from ..errors import EmptyBlockError, FormatError, NonceTooLargeError
from ..modmath import double_sha256

HEADER_FIXED = struct.Struct(">I32s32sQQH")
MAX_NONCE_BITS = 4096
ZERO_HASH = bytes(32)
SIGNATURE_PLACEHOLDER = bytes(64)


def magnitude(x: int) -> bytes:
    """Minimal big-endian bytes; zero is the empty string."""
    return x.to_bytes((x.bit_length() + 7) // 8, "big")


@dataclass(frozen=True)
class BlockHeader:
    version: int
    prev_hash: bytes
    merkle_root: bytes
    timestamp: int
    height: int
    key_bits: int
    nonce: int = 0

    def fixed_bytes(self) -> bytes:
        """Everything before ``nonce_len``; constant while mining."""
        return HEADER_FIXED.pack(self.version, self.prev_hash, self.merkle_root,
                                 self.timestamp, self.height, self.key_bits)

    def serialize(self, nonce: int | None = None) -> bytes:
        return self.fixed_bytes() + nonce_suffix(self.nonce if nonce is None else nonce)

    def hash(self) -> bytes:
        return double_sha256(self.serialize())

    def with_nonce(self, nonce: int) -> "BlockHeader":
        return replace(self, nonce=nonce)

    @classmethod
    def deserialize(cls, data: bytes) -> "BlockHeader":
        header, used = cls.parse_prefix(data)
        if used != len(data):
            raise FormatError("trailing bytes after block header")
        return header

    @classmethod
    def parse_prefix(cls, data: bytes) -> tuple["BlockHeader", int]:
        fixed = HEADER_FIXED.size
        if len(data) < fixed + 2:
            raise FormatError("block header truncated")
        version, prev, root, ts, height, bits = HEADER_FIXED.unpack_from(data)
        (nlen,) = struct.unpack_from(">H", data, fixed)
        end = fixed + 2 + nlen
        if len(data) < end:
            raise FormatError("block header nonce truncated")
        raw = data[fixed + 2 : end]
        if raw[:1] == b"\x00":
            raise FormatError("non-canonical nonce encoding")
        return cls(version, prev, root, ts, height, bits, int.from_bytes(raw, "big")), end


def nonce_suffix(nonce: int) -> bytes:
    if nonce < 0:
        raise NonceTooLargeError("nonce must be non-negative")
    if nonce.bit_length() > MAX_NONCE_BITS:
        raise NonceTooLargeError(f"nonce exceeds {MAX_NONCE_BITS} bits")
    raw = magnitude(nonce)
    return struct.pack(">H", len(raw)) + raw


class TxKind(enum.IntEnum):
    COINBASE = 0
    TRANSFER = 1
    TIMELOCK = 2


_TX_FIXED = struct.Struct(">B32s32sQQI")


@dataclass(frozen=True)
class Transaction:
    kind: TxKind
    sender: bytes
    recipient: bytes
    amount: int
    fee: int = 0
    metadata: bytes = b""
    signature: bytes = SIGNATURE_PLACEHOLDER

    def serialize(self) -> bytes:
        return (_TX_FIXED.pack(self.kind, self.sender, self.recipient, self.amount, self.fee,
                               len(self.metadata))
                + self.metadata + self.signature)

    @classmethod
    def deserialize(cls, data: bytes) -> "Transaction":
        if len(data) < _TX_FIXED.size + 64:
            raise FormatError("transaction truncated")
        kind, sender, recipient, amount, fee, mlen = _TX_FIXED.unpack_from(data)
        end = _TX_FIXED.size + mlen
        if len(data) != end + 64:
            raise FormatError("transaction length mismatch")
        try:
            kind = TxKind(kind)
        except ValueError:
            raise FormatError(f"unknown transaction kind {kind}") from None
        return cls(kind, sender, recipient, amount, fee, bytes(data[_TX_FIXED.size : end]),
                   bytes(data[end:]))

    @property
    def size(self) -> int:
        return _TX_FIXED.size + len(self.metadata) + 64

    def txid(self) -> bytes:
        return double_sha256(self.serialize())


def coinbase(miner: bytes, amount: int, height: int) -> Transaction:
    # height in the metadata keeps coinbase txids unique across blocks
    return Transaction(TxKind.COINBASE, ZERO_HASH, miner, amount, 0, struct.pack(">Q", height))


def account_id(label: str) -> bytes:
    """64 hex characters are taken literally; anything else is hashed."""
    try:
        raw = bytes.fromhex(label)
        if len(raw) == 32:
            return raw
    except ValueError:
        pass
    return hashlib.sha256(label.encode()).digest()


def merkle_root(txs) -> bytes:
    if not txs:
        raise EmptyBlockError("a block needs at least a coinbase transaction")
    level = [tx.txid() for tx in txs]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [double_sha256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    txs: tuple[Transaction, ...]

    @functools.cached_property
    def _digest(self) -> bytes:
        return self.header.hash()

    def hash(self) -> bytes:
        return self._digest

    def serialize(self) -> bytes:
        out = [self.header.serialize(), struct.pack(">I", len(self.txs))]
        for tx in self.txs:
            raw = tx.serialize()
            out.append(struct.pack(">I", len(raw)) + raw)
        return b"".join(out)

    @classmethod
    def deserialize(cls, data: bytes) -> "Block":
        header, off = BlockHeader.parse_prefix(data)
        if len(data) < off + 4:
            raise FormatError("block truncated before transaction count")
        (count,) = struct.unpack_from(">I", data, off)
        off += 4
        txs = []
        for _ in range(count):
            if len(data) < off + 4:
                raise FormatError("block truncated in transaction list")
            (tlen,) = struct.unpack_from(">I", data, off)
            off += 4
            if len(data) < off + tlen:
                raise FormatError("block truncated in transaction body")
            txs.append(Transaction.deserialize(data[off : off + tlen]))
            off += tlen
        if off != len(data):
            raise FormatError("trailing bytes after block")
        return cls(header, tuple(txs))

    @property
    def size(self) -> int:
        return len(self.serialize())
