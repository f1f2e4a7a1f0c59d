"""Reliable delivery over an unreliable datagram transport."""
from __future__ import annotations

from dataclasses import dataclass, field

from .frames import ACK, Frame

RETRANSMIT_INITIAL = 0.2
RETRANSMIT_BACKOFF = 2.0
RETRANSMIT_CAP = 5.0


@dataclass
class Pending:
    data: bytes
    last_sent: float
    interval: float


@dataclass
class PeerLink:
    """One direction-pair of a channel to ``peer``.

    Outgoing frames stay in ``unacked`` until acknowledged and are resent with
    exponential backoff.  Incoming sequence numbers are remembered so a
    retransmitted frame is acked again but handed upward only once.
    """

    me: int
    peer: int
    address: tuple
    next_seq: int = 1
    retransmit: float = RETRANSMIT_INITIAL
    backoff: float = RETRANSMIT_BACKOFF
    cap: float = RETRANSMIT_CAP
    unacked: dict = field(default_factory=dict)
    delivered_seqs: set = field(default_factory=set)
    frames_sent: int = 0
    retransmissions: int = 0

    def send(self, kind: int, body: bytes, now: float) -> bytes:
        seq = self.next_seq
        self.next_seq += 1
        data = Frame(kind, seq, self.me, body).encode()
        self.unacked[seq] = Pending(data, now, self.retransmit)
        self.frames_sent += 1
        return data

    def on_ack(self, seq: int) -> bool:
        return self.unacked.pop(seq, None) is not None

    def accept(self, frame: Frame) -> tuple[bytes, bool]:
        """Ack for ``frame`` and whether it is new (to be delivered upward)."""
        ack = Frame(ACK, frame.seq, self.me).encode()
        if frame.seq in self.delivered_seqs:
            return ack, False
        self.delivered_seqs.add(frame.seq)
        return ack, True

    def due(self, now: float) -> list[bytes]:
        out = []
        for p in self.unacked.values():
            if now - p.last_sent >= p.interval:
                out.append(p.data)
                p.last_sent = now
                p.interval = min(p.interval * self.backoff, self.cap)
                self.retransmissions += 1
        return out

    def next_deadline(self) -> float | None:
        if not self.unacked:
            return None
        return min(p.last_sent + p.interval for p in self.unacked.values())
