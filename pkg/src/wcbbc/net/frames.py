"""Datagram framing for the node runner.

    frame := length(u32) kind(u8) frame_seq(u64) sender(u16) body

``length`` counts the body only.  Acks carry the acknowledged sequence
number in ``frame_seq`` and an empty body; they are not sequenced themselves.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

from ..types import EncodingError

VOTE = 0x01
CERT = 0x02
ACK = 0x03
PROOF_REQUEST = 0x04
PROOF_RESPONSE = 0x05
KINDS = {VOTE: "vote", CERT: "cert", ACK: "ack", PROOF_REQUEST: "proof_request", PROOF_RESPONSE: "proof_response"}

_HDR = struct.Struct(">IBQH")
HEADER_SIZE = _HDR.size
_REQ = struct.Struct(">QHIB")


@dataclass(frozen=True)
class Frame:
    kind: int
    seq: int
    sender: int
    body: bytes = b""

    def encode(self) -> bytes:
        if self.kind not in KINDS:
            raise EncodingError(f"unknown frame kind {self.kind:#x}")
        return _HDR.pack(len(self.body), self.kind, self.seq, self.sender) + self.body


def decode_frame(data: bytes) -> Frame:
    if len(data) < HEADER_SIZE:
        raise EncodingError("short frame")
    length, kind, seq, sender = _HDR.unpack_from(data, 0)
    if kind not in KINDS:
        raise EncodingError(f"unknown frame kind {kind:#x}")
    if len(data) - HEADER_SIZE != length:
        raise EncodingError(f"length prefix {length} does not match body of {len(data) - HEADER_SIZE} bytes")
    return Frame(kind, seq, sender, bytes(data[HEADER_SIZE:]))


@dataclass(frozen=True)
class ProofRequest:
    """Asks the author of a vote for the proofs it attached to it."""

    instance_id: int
    sender: int
    round: int
    value: int

    def encode(self) -> bytes:
        return _REQ.pack(self.instance_id, self.sender, self.round, self.value)

    @classmethod
    def decode(cls, body: bytes) -> "ProofRequest":
        if len(body) != _REQ.size:
            raise EncodingError("malformed proof request")
        inst, sender, rnd, value = _REQ.unpack(body)
        if value not in (0, 1):
            raise EncodingError("proof request value not binary")
        return cls(inst, sender, rnd, value)
