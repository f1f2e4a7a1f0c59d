"""Deterministic discrete-event simulation of one consensus instance."""
from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass
from typing import Optional

from ..crypto import MockScheme, Signer, Verifier
from ..protocol import ArmTimer, Broadcast, BroadcastCert, Consensus, Decide, Stopped
from ..types import AuxProofMsg, DecisionCert, InstanceConfig
from .adversary import Adversary
from .model import AdversaryStrategy, ProcessOutcome, RunResult, SynchronyModel

START, DELIVER, CERT, TIMER, SCRIPT = range(5)
_KIND_NAMES = {START: "start", DELIVER: "deliver", CERT: "deliver_cert", TIMER: "timer", SCRIPT: "script"}

DEFAULT_ROUND_CAP = 64


@dataclass(frozen=True)
class TraceRecord:
    time: int
    seq: int
    actor: int
    kind: str
    summary: dict
    effects: tuple = ()

    def to_json(self) -> str:
        return json.dumps(
            {"time": self.time, "seq": self.seq, "actor": self.actor, "kind": self.kind,
             "summary": self.summary, "effects": list(self.effects)},
            sort_keys=True, separators=(",", ":"))


def _effect_summary(e, msg_id=None) -> dict:
    if isinstance(e, Broadcast):
        v = e.msg.vote
        return {"type": "broadcast", "round": v.round, "value": v.value, "proofs": len(e.msg.proofs), "msg": msg_id}
    if isinstance(e, BroadcastCert):
        return {"type": "cert", "round": e.cert.round, "value": e.cert.value, "msg": msg_id}
    if isinstance(e, ArmTimer):
        return {"type": "arm", "timer": e.timer, "duration": e.duration}
    if isinstance(e, Decide):
        return {"type": "decide", "value": e.value, "round": e.round}
    if isinstance(e, Stopped):
        return {"type": "stopped"}
    return {"type": type(e).__name__.lower()}


class SimWorld:
    def __init__(self, config: InstanceConfig, proposals, synchrony: SynchronyModel,
                 adversary: AdversaryStrategy, seed: int, round_cap: int = DEFAULT_ROUND_CAP):
        if len(proposals) != config.n:
            raise ValueError(f"need {config.n} proposals, got {len(proposals)}")
        if config.lazy_proofs:
            raise ValueError("the simulator models eager proofs only")
        self.config = config
        self.proposals = tuple(int(v) for v in proposals)
        self.synchrony = synchrony
        self.seed = seed
        self.round_cap = round_cap
        self.rng = random.Random(f"{seed}/{synchrony.jitter_seed}")

        scheme = MockScheme()
        directory, pairs = scheme.keygen(config.n, seed)
        verifier = Verifier(scheme, directory)
        signers = [Signer(scheme, kp) for kp in pairs]
        self.processes = [Consensus(config, i, signers[i], verifier) for i in range(config.n)]
        self.adversary = Adversary(adversary, config, {p: signers[p] for p in adversary.corrupted}, self.rng)
        self.honest = [p for p in range(config.n) if p not in adversary.corrupted]

        self.clock = 0
        self.queue: list = []
        self._seq = 0
        self._msg_ids = 0
        self.trace: list[TraceRecord] = []
        self.outcomes = [ProcessOutcome(i, i not in adversary.corrupted, self.proposals[i]) for i in range(config.n)]
        self.gst_round: Optional[int] = None

    # -- queue ------------------------------------------------------------------

    def _push(self, time: int, kind: int, pid: int, item=None, extra=None) -> None:
        heapq.heappush(self.queue, (time, self._seq, kind, pid, item, extra))
        self._seq += 1

    def deliver_schedule(self, sender: int, item, recipients) -> int:
        """Enqueue one delivery of ``item`` per recipient; returns the message id."""
        msg_id = self._msg_ids
        self._msg_ids += 1
        kind = CERT if isinstance(item, DecisionCert) else DELIVER
        s = self.synchrony
        bound = s.pre_gst_max if self.clock < s.gst else s.delta
        for to in recipients:
            if to == sender:
                delay = 0
            else:
                delay = self.rng.randint(1, bound)
                override = self.adversary.delay_override(sender, to)
                if override is not None:
                    delay = override
            self._push(self.clock + delay, kind, to, item, (sender, msg_id))
        return msg_id

    # -- effects ----------------------------------------------------------------

    def _apply(self, pid: int, effects) -> tuple:
        out = []
        core = self.processes[pid]
        honest = pid not in self.adversary.corrupted
        everyone = range(self.config.n)
        for e in effects:
            msg_id = None
            if isinstance(e, ArmTimer):
                if e.duration > 0:
                    self._push(self.clock + e.duration, TIMER, pid, e.timer)
            elif isinstance(e, (Broadcast, BroadcastCert)):
                if honest:
                    item = e.msg if isinstance(e, Broadcast) else e.cert
                    msg_id = self.deliver_schedule(pid, item, everyone)
                    self._count_send(pid, len(everyone), isinstance(e, BroadcastCert))
                else:
                    for recipients, item in self.adversary.step(pid, core, e):
                        mid = self.deliver_schedule(pid, item, recipients)
                        self._count_send(pid, len(recipients), isinstance(item, DecisionCert))
                        out.append(_adversary_send(item, mid, recipients))
                    continue
            elif isinstance(e, Decide) and honest:
                o = self.outcomes[pid]
                o.decided, o.decision_round, o.decision_time = e.value, e.round, self.clock
            out.append(_effect_summary(e, msg_id))
        return tuple(out)

    def _count_send(self, pid: int, k: int, cert: bool) -> None:
        o = self.outcomes[pid]
        o.msgs_sent += k
        if cert:
            o.certs_sent += 1

    # -- main loop ----------------------------------------------------------------

    def run(self) -> RunResult:
        for pid in range(self.config.n):
            if pid in self.honest or self.adversary.starts(pid):
                self._push(0, START, pid, self.proposals[pid])
        for send in self.adversary.strategy.script:
            self._push(send.time, SCRIPT, send.sender, send)

        failure = None
        while self.queue:
            time, seq, kind, pid, item, extra = heapq.heappop(self.queue)
            self.clock = time
            if self.gst_round is None and time >= self.synchrony.gst:
                self.gst_round = max(self.processes[p].r for p in self.honest)
            core = self.processes[pid]
            summary: dict
            if kind == DELIVER:
                self.outcomes[pid].msgs_recv += 1
                v = item.vote
                summary = {"from": extra[0], "msg": extra[1], "round": v.round, "value": v.value, "sender": v.sender}
                effects = core.handle_receive(item)
            elif kind == CERT:
                self.outcomes[pid].msgs_recv += 1
                summary = {"from": extra[0], "msg": extra[1], "round": item.round, "value": item.value}
                effects = core.handle_cert(item)
            elif kind == TIMER:
                summary = {"timer": item}
                effects = core.handle_timer(item)
            elif kind == START:
                summary = {"value": item}
                effects = core.handle_start(item)
            else:
                recipients, msg = self.adversary.scripted(item, core)
                mid = self.deliver_schedule(pid, msg, recipients)
                self._count_send(pid, len(recipients), False)
                self.trace.append(TraceRecord(time, seq, pid, "script", {},
                                              (_adversary_send(msg, mid, recipients),)))
                continue
            self.trace.append(TraceRecord(time, seq, pid, _KIND_NAMES[kind], summary, self._apply(pid, effects)))

            worst = max(self.processes[p].r for p in self.honest)
            if worst > self.round_cap:
                if not (self.config.run_forever and all(self.outcomes[p].decided is not None for p in self.honest)):
                    failure = f"round cap {self.round_cap} exceeded at t={time}"
                break

        if failure is None:
            stuck = [p for p in self.honest if self.outcomes[p].decided is None]
            if stuck:
                failure = f"processes {stuck} never decided (queue drained at t={self.clock})"
        for o in self.outcomes:
            o.final_round = self.processes[o.pid].r
        if self.gst_round is None:
            self.gst_round = max(self.processes[p].r for p in self.honest)
        return RunResult(
            n=self.config.n, t=self.config.t, seed=self.seed, proposals=self.proposals,
            corrupted=self.adversary.corrupted, trace=self._header() + self.trace,
            outcomes=self.outcomes, liveness_failure=failure, end_time=self.clock, gst_round=self.gst_round)

    def _header(self) -> list[TraceRecord]:
        s = self.synchrony
        return [TraceRecord(-1, -1, -1, "config", {
            "n": self.config.n, "t": self.config.t, "instance": self.config.instance_id,
            "corrupted": sorted(self.adversary.corrupted), "behavior": self.adversary.strategy.behavior,
            "proposals": list(self.proposals), "seed": self.seed,
            "gst": s.gst, "delta": s.delta, "pre_gst_max": s.pre_gst_max,
        })]


def _adversary_send(item, msg_id: int, recipients) -> dict:
    if isinstance(item, AuxProofMsg):
        v = item.vote
        return {"type": "byz_broadcast", "round": v.round, "value": v.value, "sender": v.sender,
                "proofs": len(item.proofs), "msg": msg_id, "to": sorted(recipients)}
    return {"type": "byz_cert", "round": item.round, "value": item.value, "msg": msg_id, "to": sorted(recipients)}


def run_instance(config: InstanceConfig, proposals, synchrony: SynchronyModel = SynchronyModel(),
                 adversary: AdversaryStrategy = AdversaryStrategy(), seed: int = 0,
                 round_cap: int = DEFAULT_ROUND_CAP) -> RunResult:
    """Run one instance to completion (or to the round cap) and return its trace and outcomes."""
    return SimWorld(config, proposals, synchrony, adversary, seed, round_cap).run()


def export_trace(trace, path) -> None:
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(rec.to_json() + "\n")
