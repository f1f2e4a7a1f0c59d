"""Event-driven binary Byzantine consensus with a weak round coordinator.

The blocking round loop is re-expressed as a phase machine.  Each input
event (start, vote delivery, certificate delivery, timer expiry) updates the
state and then re-evaluates whatever the current phase is waiting for.  All
I/O is returned as a list of effects for the driver to carry out.
"""
from __future__ import annotations

import enum
from typing import Optional

from ..crypto import Signer, Verifier
from ..types import AuxPayload, AuxProofMsg, DecisionCert, InstanceConfig, ProcessId, SignedAux
from .events import (
    ArmTimer,
    Broadcast,
    BroadcastCert,
    Decide,
    Deliver,
    DeliverCert,
    Effect,
    InputEvent,
    NeedProofs,
    Start,
    Stopped,
    TimerExpired,
)
from .timers import timer_duration
from .validity import VoteIndex, minimal_witness, satisfied_branch

class ProtocolMisuse(RuntimeError):
    pass


class Phase(str, enum.Enum):
    IDLE = "idle"
    AWAITING_TIMER_A = "awaiting_timer_a"
    AWAITING_QUORUM = "awaiting_quorum"
    AWAITING_TIMER_B = "awaiting_timer_b"
    LOOPING = "looping"
    STOPPED = "stopped"


class TimerStatus(str, enum.Enum):
    UNARMED = "unarmed"
    ARMED = "armed"
    EXPIRED = "expired"


def cert_is_valid(config: InstanceConfig, verifier: Verifier, cert: DecisionCert) -> bool:
    if cert.instance_id != config.instance_id or cert.value != cert.round % 2:
        return False
    senders = set()
    for m in cert.quorum:
        p = m.payload
        if (p.instance_id, p.round, p.value) != (cert.instance_id, cert.round, cert.value):
            return False
        if not verifier.verify_aux(m):
            return False
        senders.add(m.sender)
    return len(senders) >= config.quorum()


class Consensus:
    """One process's state for one consensus instance."""

    def __init__(self, config: InstanceConfig, me: ProcessId, signer: Signer, verifier: Verifier):
        if not 0 <= me < config.n:
            raise ValueError(f"process {me} outside [0, {config.n})")
        self.config = config
        self.me = me
        self.signer = signer
        self.verifier = verifier

        self.r = 0
        self.phase = Phase.IDLE
        self.aux_values: set[SignedAux] = set()
        self.index = VoteIndex()
        self.timer_status: dict[int, TimerStatus] = {}
        self.catchup_mark = -1  # every timer index <= this counts as expired
        self.broadcast_done: dict[int, bool] = {}
        self.est: dict[int, int] = {}
        self.own_msgs: dict[int, AuxProofMsg] = {}
        self.decided: Optional[tuple[int, int]] = None
        self.stop_cert: Optional[DecisionCert] = None
        self.cert_sent = False
        self.decided_by_quorum = False

        self.rho = -1
        self._arrival: dict[SignedAux, int] = {}
        self.pending: dict[SignedAux, None] = {}  # lazy mode: votes awaiting proofs
        self._requested: set[SignedAux] = set()

        self.dropped = 0
        self.started = False
        self._out: list[Effect] = []

    # -- public entry points ----------------------------------------------------

    def handle(self, event: InputEvent) -> list[Effect]:
        if isinstance(event, Deliver):
            return self.handle_receive(event.msg)
        if isinstance(event, TimerExpired):
            return self.handle_timer(event.timer)
        if isinstance(event, DeliverCert):
            return self.handle_cert(event.cert)
        if isinstance(event, Start):
            return self.handle_start(event.value)
        raise TypeError(f"unknown event {event!r}")

    def handle_start(self, v: int) -> list[Effect]:
        if self.started:
            raise ProtocolMisuse(f"p{self.me}: Start delivered twice")
        if v not in (0, 1):
            raise ValueError(f"proposal must be 0 or 1, got {v!r}")
        self.started = True
        if self.phase is Phase.STOPPED:
            # decided from a certificate before our own proposal was made
            return self._flush()
        self.r = 0
        self._broadcast_vote(v, frozenset())
        self._round_entry()
        self._advance()
        return self._flush()

    def handle_receive(self, msg: AuxProofMsg) -> list[Effect]:
        vote = msg.vote
        if vote in self.aux_values:
            return self._flush()
        if not self._authentic(msg):
            self.dropped += 1
            return self._flush()
        p = vote.payload
        witness = minimal_witness(self.config, p.round, p.value, VoteIndex(msg.proofs))
        if witness is None:
            if not self.config.lazy_proofs:
                self.dropped += 1
                return self._flush()
            if satisfied_branch(self.config, p.round, p.value, self.index.count) is None:
                self.pending[vote] = None
                if vote not in self._requested:
                    self._requested.add(vote)
                    self._out.append(NeedProofs(vote))
                return self._flush()
            witness = frozenset()
        self.pending.pop(vote, None)
        self._store(vote, witness)
        if self.config.lazy_proofs:
            self._retry_pending()
        if self.phase is Phase.STOPPED:
            self._maybe_send_cert(vote)
        else:
            self._advance()
        return self._flush()

    def handle_cert(self, cert: DecisionCert) -> list[Effect]:
        if self.decided is not None or not cert_is_valid(self.config, self.verifier, cert):
            return self._flush()
        self.decided = (cert.value, cert.round)
        self.stop_cert = cert
        self._out.append(Decide(cert.value, cert.round))
        if not self.config.run_forever:
            self.phase = Phase.STOPPED
            self._out.append(Stopped())
        return self._flush()

    def handle_timer(self, timer: int) -> list[Effect]:
        self.timer_status[timer] = TimerStatus.EXPIRED
        if self.started and self.phase is not Phase.STOPPED:
            self._advance()
        return self._flush()

    # -- round structure --------------------------------------------------------

    def is_coordinator(self, r: int) -> bool:
        return r > self.config.coord_free_rounds and self.me == r % self.config.n

    def handle_round_entry(self) -> list[Effect]:
        self._round_entry()
        return self._flush()

    def perform_broadcast(self) -> list[Effect]:
        self._perform_broadcast()
        return self._flush()

    def _round_entry(self) -> None:
        self.r += 1
        self.phase = Phase.AWAITING_TIMER_A
        if self.is_coordinator(self.r):
            self._perform_broadcast()
        self._arm(2 * self.r)

    def _perform_broadcast(self) -> None:
        r = self.r
        if self.broadcast_done.get(r):
            return
        values = self.valid_values(r)
        if not values:
            return  # retried after the next delivery
        est = self.select_estimate(r, values, self.coordinator_vote(r))
        self._broadcast_vote(est, self.build_proofs(r, est))

    def check_quorum_and_decide(self) -> bool:
        """Progress through the quorum wait and second timer; True if the phase moved."""
        r, q = self.r, self.config.quorum()
        if self.phase is Phase.AWAITING_QUORUM:
            if self.index.senders_in_round(r) < q:
                return False
            self._arm(2 * r + 1)
            self.phase = Phase.AWAITING_TIMER_B
            return True
        if self.phase is Phase.AWAITING_TIMER_B:
            if not self.timer_expired(2 * r + 1):
                return False
            b = r % 2
            if self.index.count(r, b) >= q and self.decided is None:
                self.decided = (b, r)
                self.decided_by_quorum = True
                self._out.append(Decide(b, r))
                self.stop_cert = DecisionCert(self.config.instance_id, r, b, frozenset(self.index.lowest(r, b, q)))
                if not self.config.run_forever:
                    self._decide_stop()
                    return True
            self.phase = Phase.LOOPING
            self._round_entry()
            return True
        return False

    def handle_decide_stop(self) -> list[Effect]:
        if self.decided is None or self.stop_cert is None:
            raise ProtocolMisuse("stop requested before a decision")
        self._decide_stop()
        return self._flush()

    def _decide_stop(self) -> None:
        self.phase = Phase.STOPPED
        self._out.append(Stopped())
        if self.config.stop_policy == "eager":
            self._send_cert()
        else:
            # a later-round vote may already be here; otherwise wait for one
            later = [v for v in self.aux_values if v.round > self.decided[1] and v.sender != self.me]
            if later:
                self._send_cert()

    # -- perform_broadcast helpers -------------------------------------------

    def valid_values(self, r: int) -> set[int]:
        return {v for v in (0, 1) if satisfied_branch(self.config, r, v, self.index.count) is not None}

    def coordinator_vote(self, r: int) -> Optional[SignedAux]:
        if r <= self.config.coord_free_rounds:
            return None
        coord = r % self.config.n
        found = [
            self.index.by_rv.get((r, v), {}).get(coord) for v in (0, 1)
        ]
        found = [m for m in found if m is not None]
        if not found:
            return None
        return min(found, key=self._arrival.__getitem__)

    def select_estimate(self, r: int, values: set[int], coord_msg: Optional[SignedAux]) -> int:
        if coord_msg is not None and coord_msg.value in values:
            return coord_msg.value
        # "next" is (r+1) mod 2; with both values valid every round it keeps voting
        # the value this round cannot decide, so "decidable" is the default
        bv = (r + 1) % 2 if self.config.preference == "next" else r % 2
        return bv if bv in values else 1 - bv

    def build_proofs(self, r: int, est: int) -> frozenset:
        witness = minimal_witness(self.config, r, est, self.index)
        if witness is None:
            raise ProtocolMisuse(f"p{self.me}: value {est} is not valid in round {r}")
        return witness

    # -- timers -------------------------------------------------------------

    def timer_state(self, timer: int) -> TimerStatus:
        if timer <= self.catchup_mark:
            return TimerStatus.EXPIRED
        return self.timer_status.get(timer, TimerStatus.UNARMED)

    def timer_expired(self, timer: int) -> bool:
        return self.timer_state(timer) is TimerStatus.EXPIRED

    def _arm(self, timer: int) -> None:
        if self.timer_state(timer) is not TimerStatus.UNARMED:
            return
        duration = timer_duration(self.config.timer_policy, timer)
        self._out.append(ArmTimer(timer, duration))
        self.timer_status[timer] = TimerStatus.EXPIRED if duration == 0 else TimerStatus.ARMED

    # -- internals ----------------------------------------------------------

    def _advance(self) -> None:
        while True:
            if self.phase is Phase.AWAITING_TIMER_A:
                r = self.r
                if self.is_coordinator(r):
                    self._perform_broadcast()
                if not self.timer_expired(2 * r):
                    return
                self._perform_broadcast()
                if not self.broadcast_done.get(r):
                    return
                self.phase = Phase.AWAITING_QUORUM
            elif self.phase in (Phase.AWAITING_QUORUM, Phase.AWAITING_TIMER_B):
                if not self.check_quorum_and_decide():
                    return
            else:
                return

    def _authentic(self, msg: AuxProofMsg) -> bool:
        inst = self.config.instance_id
        for m in (msg.vote, *msg.proofs):
            if m.payload.instance_id != inst or not 0 <= m.sender < self.config.n:
                return False
            if not self.verifier.verify_aux(m):
                return False
        return True

    def _store(self, vote: SignedAux, proofs) -> None:
        for m in sorted((vote, *proofs), key=lambda m: (m.round, m.value, m.sender, m.signature)):
            if m in self.aux_values:
                continue
            self.aux_values.add(m)
            self._arrival[m] = len(self._arrival)
            self.index.add(m)
            if m.round > self.rho and self.index.senders_in_round(m.round) >= self.config.weak_threshold():
                self.rho = m.round
                self.catchup_mark = max(self.catchup_mark, 2 * self.rho)

    def _retry_pending(self) -> None:
        progress = True
        while progress and self.pending:
            progress = False
            for vote in sorted(self.pending, key=lambda m: (m.round, m.value, m.sender)):
                if satisfied_branch(self.config, vote.round, vote.value, self.index.count) is not None:
                    del self.pending[vote]
                    self._store(vote, ())
                    progress = True

    def _broadcast_vote(self, value: int, proofs: frozenset) -> None:
        r = self.r
        vote = self.signer.sign_aux(AuxPayload(self.config.instance_id, r, value))
        msg = AuxProofMsg(vote, proofs)
        self.est[r] = value
        self.own_msgs[r] = msg
        self.broadcast_done[r] = True
        self._out.append(Broadcast(msg))
        self._store(vote, ())

    def _maybe_send_cert(self, vote: SignedAux) -> None:
        if (self.decided_by_quorum and not self.cert_sent and vote.sender != self.me
                and vote.round > self.decided[1]):
            self._send_cert()

    def _send_cert(self) -> None:
        if not self.cert_sent:
            self.cert_sent = True
            self._out.append(BroadcastCert(self.stop_cert))

    def _flush(self) -> list[Effect]:
        out, self._out = self._out, []
        return out

    # -- queries --------------------------------------------------------------

    def proof_message(self, rnd: int, value: int) -> Optional[AuxProofMsg]:
        """Our own full message for (rnd, value), used to answer proof requests."""
        msg = self.own_msgs.get(rnd)
        if msg is None or msg.vote.value != value:
            return None
        return msg

    def snapshot(self) -> dict:
        """Comparable summary of the state, used for replay equality checks."""
        return {
            "r": self.r,
            "phase": self.phase.value,
            "aux_values": sorted((m.round, m.value, m.sender, m.signature.hex()) for m in self.aux_values),
            "decided": self.decided,
            "stop_cert": None if self.stop_cert is None else (
                self.stop_cert.round, self.stop_cert.value,
                sorted(m.sender for m in self.stop_cert.quorum)),
            "broadcast_done": sorted(r for r, done in self.broadcast_done.items() if done),
            "est": sorted(self.est.items()),
            "catchup_mark": self.catchup_mark,
            "timers": sorted((k, v.value) for k, v in self.timer_status.items()),
            "pending": sorted((m.round, m.value, m.sender) for m in self.pending),
        }


__all__ = ["Consensus", "Phase", "TimerStatus", "ProtocolMisuse", "cert_is_valid"]
