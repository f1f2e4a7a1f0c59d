"""Append-only write-ahead log of protocol inputs and own sends.

    record := length(u32) crc32(u32) offset(u64) kind(u8) instance(u64) payload

``length`` counts the payload; the CRC covers everything after itself.
``offset`` is the record's byte position, so a record copied to the wrong
place fails validation.  A short or CRC-failing record at the very end of the
file is a torn write and is cut off; anywhere else it is corruption.
"""
from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from ..protocol import Consensus
from ..types import decode_cert, decode_msg

START = 1     # payload: proposal byte
RECEIVE = 2   # payload: encoded AuxProofMsg
CERT = 3      # payload: encoded DecisionCert
TIMER = 4     # payload: u32 timer index
SEND = 5      # payload: encoded AuxProofMsg we broadcast (not replayed)
KIND_NAMES = {START: "start", RECEIVE: "receive", CERT: "cert", TIMER: "timer", SEND: "send"}

_HEAD = struct.Struct(">II")
_BODY = struct.Struct(">QBQ")
_TIMER = struct.Struct(">I")


class WalCorrupted(RuntimeError):
    pass


@dataclass(frozen=True)
class WalRecord:
    offset: int
    kind: int
    instance_id: int
    payload: bytes


def _encode(offset: int, kind: int, instance_id: int, payload: bytes) -> bytes:
    body = _BODY.pack(offset, kind, instance_id) + payload
    return _HEAD.pack(len(payload), zlib.crc32(body)) + body


def read_wal(path) -> tuple[list[WalRecord], int]:
    """Parse a log; returns the records and the number of torn trailing bytes."""
    path = Path(path)
    if not path.exists():
        return [], 0
    data = path.read_bytes()
    records, off = [], 0
    while off < len(data):
        body_start = off + _HEAD.size
        if body_start + _BODY.size > len(data):
            return records, len(data) - off
        length, crc = _HEAD.unpack_from(data, off)
        end = body_start + _BODY.size + length
        if end > len(data):
            return records, len(data) - off
        body = data[body_start:end]
        if zlib.crc32(body) != crc:
            if end == len(data):
                return records, len(data) - off
            raise WalCorrupted(f"checksum mismatch in record at byte {off}")
        offset, kind, inst = _BODY.unpack_from(body, 0)
        if offset != off or kind not in KIND_NAMES:
            raise WalCorrupted(f"malformed record at byte {off}")
        records.append(WalRecord(offset, kind, inst, body[_BODY.size:]))
        off = end
    return records, 0


class Wal:
    """Appender; opening an existing log validates it and cuts off a torn tail."""

    def __init__(self, path, sync: bool = True):
        self.path = Path(path)
        self.sync = sync
        self.records, self.truncated = read_wal(self.path)
        if self.truncated:
            with open(self.path, "r+b") as fh:
                fh.truncate(self.path.stat().st_size - self.truncated)
        self._fh = open(self.path, "ab")
        self.offset = self._fh.tell()

    def append(self, kind: int, instance_id: int, payload: bytes) -> WalRecord:
        rec = WalRecord(self.offset, kind, instance_id, payload)
        data = _encode(self.offset, kind, instance_id, payload)
        self._fh.write(data)
        self._fh.flush()
        if self.sync:
            os.fsync(self._fh.fileno())
        self.offset += len(data)
        return rec

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def timer_payload(timer: int) -> bytes:
    return _TIMER.pack(timer)


def apply_record(core: Consensus, rec: WalRecord) -> list:
    """Feed one logged input to ``core``; SEND records produce nothing."""
    if rec.kind == START:
        return core.handle_start(rec.payload[0])
    if rec.kind == RECEIVE:
        return core.handle_receive(decode_msg(rec.payload))
    if rec.kind == CERT:
        return core.handle_cert(decode_cert(rec.payload))
    if rec.kind == TIMER:
        return core.handle_timer(_TIMER.unpack(rec.payload)[0])
    return []


def wal_replay(records: Iterable[WalRecord], make_core: Callable[[int], Consensus]) -> dict[int, Consensus]:
    """Rebuild every instance's core by re-feeding the logged inputs in order."""
    cores: dict[int, Consensus] = {}
    for rec in records:
        core = cores.get(rec.instance_id)
        if core is None:
            core = cores[rec.instance_id] = make_core(rec.instance_id)
        apply_record(core, rec)
    return cores
