"""Hash-chained in-process ledger with a linear consensus-latency model.

Single writer: one owner appends blocks of meter readings, actions and
feedback records; anybody can verify. Block hashes are SHA-256 over a
canonical length-prefixed serialization, so any byte flip anywhere in a
chain breaks either a hash or a link. Consensus latency is simulated as
transactions/throughput + network delay and returned as a number; pass
real_delay=True to actually sleep it for demos.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .errors import ConfigError, DataError, InputError, UnauthorizedAuthorError

GENESIS_PREV = b"\x00" * 32
_MAGIC = b"GTLG\x01"

KIND_METER = "meter_reading"
KIND_ACTION = "action"
KIND_FEEDBACK = "feedback"
_KIND_CODE = {KIND_METER: 0, KIND_ACTION: 1, KIND_FEEDBACK: 2}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}


@dataclass(frozen=True)
class Transaction:
    seq: int
    timestamp: int  # hour index, not wall clock
    kind: str
    payload: bytes
    author: str

    def validate(self) -> None:
        if self.kind not in _KIND_CODE:
            raise InputError(f"unknown transaction kind {self.kind!r}")
        if not self.payload:
            raise InputError(f"transaction {self.seq}: empty payload")
        if self.seq < 0 or self.timestamp < 0:
            raise InputError(f"transaction {self.seq}: negative seq/timestamp")


@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: bytes
    transactions: tuple[Transaction, ...]
    hash: bytes


@dataclass(frozen=True)
class NetParams:
    throughput_tps: float
    latency_s: float = 0.0

    def validate(self) -> None:
        if self.throughput_tps <= 0:
            raise ConfigError("throughput must be > 0 transactions per second")
        if self.latency_s < 0:
            raise ConfigError("latency must be >= 0")


def consensus_time(n_transactions: int, params: NetParams) -> float:
    """Seconds to finalize a batch: n/throughput + network delay."""
    params.validate()
    if n_transactions < 0:
        raise InputError("transaction count must be >= 0")
    return n_transactions / params.throughput_tps + params.latency_s


def _tx_bytes(tx: Transaction) -> bytes:
    author = tx.author.encode()
    return b"".join(
        (
            struct.pack(">QQB", tx.seq, tx.timestamp, _KIND_CODE[tx.kind]),
            struct.pack(">I", len(author)),
            author,
            struct.pack(">I", len(tx.payload)),
            tx.payload,
        )
    )


def _participants_bytes(participants: Sequence[str]) -> bytes:
    out = [struct.pack(">I", len(participants))]
    for name in participants:
        raw = name.encode()
        out.append(struct.pack(">I", len(raw)))
        out.append(raw)
    return b"".join(out)


def _block_hash(
    index: int,
    prev_hash: bytes,
    transactions: Sequence[Transaction],
    extra: bytes = b"",
) -> bytes:
    h = hashlib.sha256()
    h.update(struct.pack(">Q", index))
    h.update(prev_hash)
    h.update(extra)
    h.update(struct.pack(">I", len(transactions)))
    for tx in transactions:
        h.update(_tx_bytes(tx))
    return h.digest()


class Chain:
    """Blocks plus the participant allow-list that stands in for the
    consensus membership. Block 0 is an empty genesis block whose hash
    also covers the participant list, so membership is tamper-evident."""

    def __init__(self, participants: Sequence[str]):
        self.participants = tuple(sorted(set(participants)))
        extra = _participants_bytes(self.participants)
        genesis = Block(0, GENESIS_PREV, (), _block_hash(0, GENESIS_PREV, (), extra))
        self.blocks: list[Block] = [genesis]

    def __len__(self) -> int:
        return len(self.blocks)


def append_block(
    chain: Chain,
    pending: Sequence[Transaction],
    params: NetParams,
    real_delay: bool = False,
) -> float:
    """Append one block of pending transactions (canonicalized by seq).

    Returns the simulated consensus time for the batch. Unauthorized
    authors or an empty batch leave the chain unchanged.
    """
    if not pending:
        raise InputError("cannot append an empty transaction batch")
    ordered = tuple(sorted(pending, key=lambda tx: tx.seq))
    for tx in ordered:
        tx.validate()
        if tx.author not in chain.participants:
            raise UnauthorizedAuthorError(
                f"author {tx.author!r} is not a ledger participant"
            )
    for a, b in zip(ordered, ordered[1:]):
        if b.seq <= a.seq:
            raise InputError(f"duplicate transaction seq {b.seq} in batch")
    elapsed = consensus_time(len(ordered), params)
    if real_delay:
        time.sleep(elapsed)
    prev = chain.blocks[-1]
    block = Block(
        index=prev.index + 1,
        prev_hash=prev.hash,
        transactions=ordered,
        hash=_block_hash(prev.index + 1, prev.hash, ordered),
    )
    chain.blocks.append(block)
    return elapsed


def verify_chain(chain: Chain) -> Optional[int]:
    """None when every hash recomputes and every link holds; otherwise
    the lowest block index that fails."""
    for i, block in enumerate(chain.blocks):
        expected_prev = GENESIS_PREV if i == 0 else chain.blocks[i - 1].hash
        extra = _participants_bytes(chain.participants) if i == 0 else b""
        if block.index != i:
            return i
        if block.prev_hash != expected_prev:
            return i
        if block.hash != _block_hash(block.index, block.prev_hash, block.transactions, extra):
            return i
    return None


def chain_to_bytes(chain: Chain) -> bytes:
    out = [_MAGIC]
    out.append(_participants_bytes(chain.participants))
    out.append(struct.pack(">I", len(chain.blocks)))
    for block in chain.blocks:
        out.append(struct.pack(">Q", block.index))
        out.append(block.prev_hash)
        out.append(block.hash)
        out.append(struct.pack(">I", len(block.transactions)))
        for tx in block.transactions:
            out.append(_tx_bytes(tx))
    return b"".join(out)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.raw):
            raise DataError("ledger file truncated or corrupt")
        piece = self.raw[self.pos : self.pos + n]
        self.pos += n
        return piece

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]


def _decode_text(raw: bytes, what: str) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"corrupt {what} in ledger file") from exc


def chain_from_bytes(raw: bytes) -> Chain:
    reader = _Reader(raw)
    if reader.take(len(_MAGIC)) != _MAGIC:
        raise DataError("not a ledger file (bad magic)")
    participants = []
    for _ in range(reader.u32()):
        participants.append(_decode_text(reader.take(reader.u32()), "participant name"))
    chain = Chain.__new__(Chain)
    chain.participants = tuple(participants)
    blocks = []
    n_blocks = reader.u32()
    if n_blocks < 1:
        raise DataError("ledger file has no blocks")
    for _ in range(n_blocks):
        index = reader.u64()
        prev_hash = reader.take(32)
        block_hash = reader.take(32)
        txs = []
        for _ in range(reader.u32()):
            seq, timestamp, code = struct.unpack(">QQB", reader.take(17))
            if code not in _CODE_KIND:
                raise DataError(f"unknown transaction kind code {code}")
            author = _decode_text(reader.take(reader.u32()), "author")
            payload = reader.take(reader.u32())
            txs.append(Transaction(seq, timestamp, _CODE_KIND[code], payload, author))
        blocks.append(Block(index, prev_hash, tuple(txs), block_hash))
    if reader.pos != len(raw):
        raise DataError("trailing bytes after the last block")
    chain.blocks = blocks
    return chain


def save_chain(chain: Chain, path: str | Path) -> None:
    Path(path).write_bytes(chain_to_bytes(chain))


def load_chain(path: str | Path) -> Chain:
    return chain_from_bytes(Path(path).read_bytes())


def verify_file(path: str | Path) -> tuple[bool, Optional[int], str]:
    """(ok, first bad block index or None, message) for a ledger file.
    Parse-level corruption counts as not ok with index None."""
    try:
        chain = load_chain(path)
    except DataError as exc:
        return False, None, str(exc)
    bad = verify_chain(chain)
    if bad is None:
        return True, None, f"ok: {len(chain.blocks)} blocks verified"
    return False, bad, f"verification failed at block {bad}"


def chain_to_json(chain: Chain) -> dict:
    def render_payload(payload: bytes) -> tuple[str, str]:
        try:
            return payload.decode("utf-8"), "utf8"
        except UnicodeDecodeError:
            return payload.hex(), "hex"

    blocks = []
    for block in chain.blocks:
        txs = []
        for tx in block.transactions:
            text, encoding = render_payload(tx.payload)
            txs.append(
                {
                    "seq": tx.seq,
                    "timestamp": tx.timestamp,
                    "kind": tx.kind,
                    "author": tx.author,
                    "payload": text,
                    "payload_encoding": encoding,
                }
            )
        blocks.append(
            {
                "index": block.index,
                "prev_hash": block.prev_hash.hex(),
                "hash": block.hash.hex(),
                "transactions": txs,
            }
        )
    return {"participants": list(chain.participants), "blocks": blocks}


def export_json(chain: Chain, path: str | Path) -> None:
    Path(path).write_text(json.dumps(chain_to_json(chain), indent=1, sort_keys=True))
