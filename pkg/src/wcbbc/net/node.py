"""The node daemon: one process, one or more consensus instances over UDP.

``NodeRuntime`` holds all state and is driven by two calls, ``on_datagram``
and ``tick``; it never touches sockets itself, which leaves the asyncio
driver in ``serve`` very thin and lets tests run nodes in-process.
"""
from __future__ import annotations

import argparse
import asyncio
import heapq
import logging
import os
import random
import struct
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

from ..crypto import Signer, Verifier, get_scheme, load_directory, load_keypair
from ..protocol import ArmTimer, Broadcast, BroadcastCert, Consensus, Decide, NeedProofs, TimerStatus, timer_duration
from ..types import (
    AuxProofMsg,
    EncodingError,
    InstanceConfig,
    TimerPolicy,
    decode_cert,
    decode_msg,
    encode_cert,
    encode_msg,
)
from . import frames, wal
from .link import RETRANSMIT_CAP, RETRANSMIT_INITIAL, PeerLink

log = logging.getLogger("wcbbc.node")

_START = struct.Struct(">Bd")  # proposal, wall-clock start time


@dataclass
class NodeOptions:
    id: int
    instances: int = 1
    proposal: str = "1"
    lazy_proofs: bool = False
    timer_base: int = 20
    timer_growth: int = 5
    timer_free_rounds: int = 10
    coord_free_rounds: int = 10
    seed: int = 0
    retransmit: float = RETRANSMIT_INITIAL
    retransmit_cap: float = RETRANSMIT_CAP
    quiet: float = 1.0
    linger: float = 5.0
    max_runtime: float = 60.0
    start_at: Optional[float] = None
    exit_after_records: Optional[int] = None


@dataclass
class InstanceResult:
    instance_id: int
    value: Optional[int] = None
    round: Optional[int] = None
    latency_ms: Optional[float] = None
    msgs_sent: int = 0
    msgs_recv: int = 0
    started: Optional[float] = None

    def line(self) -> str:
        lat = "nan" if self.latency_ms is None else f"{self.latency_ms:.3f}"
        val = "none" if self.value is None else self.value
        rnd = "none" if self.round is None else self.round
        return (f"instance={self.instance_id} value={val} round={rnd} latency_ms={lat} "
                f"msgs_sent={self.msgs_sent} msgs_recv={self.msgs_recv}")


def parse_result_line(line: str) -> dict:
    out = {}
    for part in line.split():
        k, _, v = part.partition("=")
        if v == "none":
            out[k] = None
        elif k == "latency_ms":
            out[k] = float(v)
        else:
            out[k] = int(v)
    return out


def draw_proposal(spec: str, seed: int, me: int, instance_id: int) -> int:
    if spec in ("0", "1"):
        return int(spec)
    if spec.startswith("random:"):
        p = float(spec.split(":", 1)[1])
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability out of range in {spec!r}")
        return int(random.Random(f"{seed}/{me}/{instance_id}").random() < p)
    raise ValueError(f"proposal must be 0, 1 or random:p, got {spec!r}")


class NodeRuntime:
    def __init__(self, opts: NodeOptions, peers: list, scheme, directory, keypair,
                 wal_log: Optional[wal.Wal] = None, now: Optional[float] = None):
        n = len(peers)
        if directory.n != n:
            raise ValueError(f"key directory has {directory.n} keys for {n} peers")
        if not 0 <= opts.id < n:
            raise ValueError(f"--id {opts.id} outside [0, {n})")
        self.opts = opts
        self.me = opts.id
        self.n = n
        self.peers = peers
        self.verifier = Verifier(scheme, directory)
        self.signer = Signer(scheme, keypair)
        self.wal = wal_log
        now = time.time() if now is None else now
        # time-based sequence base keeps frame_seq increasing across restarts
        seq_base = int(now * 1_000_000)
        self.links = {
            p: PeerLink(self.me, p, peers[p], next_seq=seq_base, retransmit=opts.retransmit, cap=opts.retransmit_cap)
            for p in range(n) if p != self.me
        }
        self.policy = TimerPolicy(opts.timer_free_rounds, opts.timer_base, opts.timer_growth)
        self.cores: dict[int, Consensus] = {}
        self.results = {i: InstanceResult(i) for i in range(opts.instances)}
        self.timers: list = []
        self.outbox: list[tuple] = []
        self.current = 0
        self.last_activity = now
        self.records_written = 0
        self.recovered = False

    # -- setup --------------------------------------------------------------------

    def config(self, instance_id: int) -> InstanceConfig:
        return InstanceConfig(
            n=self.n, t=(self.n - 1) // 3, instance_id=instance_id, timer_policy=self.policy,
            coord_free_rounds=self.opts.coord_free_rounds, lazy_proofs=self.opts.lazy_proofs)

    def make_core(self, instance_id: int) -> Consensus:
        return Consensus(self.config(instance_id), self.me, self.signer, self.verifier)

    def core(self, instance_id: int) -> Consensus:
        c = self.cores.get(instance_id)
        if c is None:
            c = self.cores[instance_id] = self.make_core(instance_id)
        return c

    def recover(self, now: float) -> None:
        """Rebuild cores from the log, re-arm pending timers and resend our own votes."""
        if self.wal is None or not self.wal.records:
            return
        self.recovered = True
        for rec in self.wal.records:
            core = self.core(rec.instance_id)
            if rec.kind == wal.START:
                self.results[rec.instance_id].started = _START.unpack(rec.payload)[1]
            effects = wal.apply_record(core, rec)
            for e in effects:
                if isinstance(e, Decide):
                    self._record_decision(rec.instance_id, e, None)
        for inst, core in sorted(self.cores.items()):
            for timer, status in core.timer_status.items():
                if status is TimerStatus.ARMED:
                    duration = timer_duration(core.config.timer_policy, timer)
                    heapq.heappush(self.timers, (now + duration / 1000.0, inst, timer))
            for msg in core.own_msgs.values():
                self._send_vote(inst, msg, now)
            if core.cert_sent and core.stop_cert is not None:
                self._send_all(frames.CERT, encode_cert(core.stop_cert), inst, now)
        self.current = 0
        self._advance_current()
        log.info("p%d recovered %d records (%d torn bytes dropped)", self.me, len(self.wal.records), self.wal.truncated)

    # -- driving ------------------------------------------------------------------

    def tick(self, now: float) -> None:
        self._maybe_start(now)
        while self.timers and self.timers[0][0] <= now:
            _, inst, timer = heapq.heappop(self.timers)
            self._log(wal.TIMER, inst, wal.timer_payload(timer))
            self._process(inst, self.core(inst).handle_timer(timer), now)
        for link in self.links.values():
            for data in link.due(now):
                self.outbox.append((link.address, data))

    def on_datagram(self, data: bytes, now: float) -> None:
        try:
            frame = frames.decode_frame(data)
        except EncodingError as exc:
            log.debug("bad frame: %s", exc)
            return
        link = self.links.get(frame.sender)
        if link is None:
            return
        if frame.kind == frames.ACK:
            link.on_ack(frame.seq)
            return
        ack, fresh = link.accept(frame)
        if fresh:
            self.last_activity = now
            try:
                self._deliver(frame, now)
            except EncodingError as exc:
                log.debug("p%d: undecodable %s from p%d: %s", self.me, frames.KINDS[frame.kind], frame.sender, exc)
        # acked only after the input is in the log
        self.outbox.append((link.address, ack))

    def _deliver(self, frame: frames.Frame, now: float) -> None:
        if frame.kind in (frames.VOTE, frames.PROOF_RESPONSE):
            msg = decode_msg(frame.body)
            inst = msg.vote.payload.instance_id
            if inst not in self.results:
                return
            self.results[inst].msgs_recv += 1
            self._log(wal.RECEIVE, inst, frame.body)
            self._process(inst, self.core(inst).handle_receive(msg), now)
        elif frame.kind == frames.CERT:
            cert = decode_cert(frame.body)
            if cert.instance_id not in self.results:
                return
            self.results[cert.instance_id].msgs_recv += 1
            self._log(wal.CERT, cert.instance_id, frame.body)
            self._process(cert.instance_id, self.core(cert.instance_id).handle_cert(cert), now)
        elif frame.kind == frames.PROOF_REQUEST:
            req = frames.ProofRequest.decode(frame.body)
            core = self.cores.get(req.instance_id)
            msg = None if core is None or req.sender != self.me else core.proof_message(req.round, req.value)
            if msg is not None:
                self._send_to(frame.sender, frames.PROOF_RESPONSE, encode_msg(msg), now)

    def _maybe_start(self, now: float) -> None:
        if self.current >= self.opts.instances:
            return
        if self.opts.start_at is not None and now < self.opts.start_at and not self.recovered:
            return
        core = self.core(self.current)
        if core.started:
            return
        inst = self.current
        v = draw_proposal(self.opts.proposal, self.opts.seed, self.me, inst)
        self.results[inst].started = now
        self._log(wal.START, inst, _START.pack(v, now))
        self._process(inst, core.handle_start(v), now)

    def _process(self, inst: int, effects, now: float) -> None:
        for e in effects:
            if isinstance(e, Broadcast):
                self._log(wal.SEND, inst, encode_msg(e.msg))
                self._send_vote(inst, e.msg, now)
            elif isinstance(e, BroadcastCert):
                self._send_all(frames.CERT, encode_cert(e.cert), inst, now)
            elif isinstance(e, ArmTimer):
                if e.duration > 0:
                    heapq.heappush(self.timers, (now + e.duration / 1000.0, inst, e.timer))
            elif isinstance(e, NeedProofs):
                req = frames.ProofRequest(inst, e.vote.sender, e.vote.round, e.vote.value)
                self._send_to(e.vote.sender, frames.PROOF_REQUEST, req.encode(), now)
            elif isinstance(e, Decide):
                self._record_decision(inst, e, now)

    def _record_decision(self, inst: int, e: Decide, now: Optional[float]) -> None:
        res = self.results[inst]
        if res.value is not None:
            return
        res.value, res.round = e.value, e.round
        end = time.time() if now is None else now
        if res.started is not None:
            res.latency_ms = (end - res.started) * 1000.0
        self._advance_current()

    def _advance_current(self) -> None:
        while self.current < self.opts.instances and self.results[self.current].value is not None:
            self.current += 1

    def _send_vote(self, inst: int, msg: AuxProofMsg, now: float) -> None:
        wire = AuxProofMsg(msg.vote) if self.opts.lazy_proofs else msg
        self._send_all(frames.VOTE, encode_msg(wire), inst, now)

    def _send_all(self, kind: int, body: bytes, inst: int, now: float) -> None:
        for p in self.links:
            self._send_to(p, kind, body, now)
            self.results[inst].msgs_sent += 1

    def _send_to(self, peer: int, kind: int, body: bytes, now: float) -> None:
        link = self.links[peer]
        self.outbox.append((link.address, link.send(kind, body, now)))

    def _log(self, kind: int, inst: int, payload: bytes) -> None:
        if self.wal is None:
            return
        self.wal.append(kind, inst, payload)
        self.records_written += 1
        limit = self.opts.exit_after_records
        if limit is not None and self.records_written >= limit:
            # fault-injection hook for recovery tests: die without cleanup
            log.warning("p%d: exiting after %d log records", self.me, self.records_written)
            sys.stdout.flush()
            os._exit(70)

    # -- status -------------------------------------------------------------------

    def all_decided(self) -> bool:
        return all(r.value is not None for r in self.results.values())

    def unacked(self) -> int:
        return sum(len(l.unacked) for l in self.links.values())

    def finished(self, now: float) -> bool:
        """Everything decided and quiet; frames a departed peer will never ack stop mattering after ``linger``."""
        if not self.all_decided():
            return False
        idle = now - self.last_activity
        return idle >= self.opts.linger or (self.unacked() == 0 and idle >= self.opts.quiet)

    def next_wakeup(self, now: float) -> float:
        times = [now + 0.05]
        if self.timers:
            times.append(self.timers[0][0])
        times += [d for d in (l.next_deadline() for l in self.links.values()) if d is not None]
        if self.opts.start_at is not None and self.current == 0:
            times.append(self.opts.start_at)
        return max(now, min(times))


# -- asyncio driver -------------------------------------------------------------------


class _Datagrams(asyncio.DatagramProtocol):
    def __init__(self, runtime: NodeRuntime, wake: asyncio.Event):
        self.runtime = runtime
        self.wake = wake

    def datagram_received(self, data, addr):
        self.runtime.on_datagram(data, time.time())
        self.wake.set()

    def error_received(self, exc):
        log.debug("socket error: %s", exc)


async def serve(runtime: NodeRuntime, listen: tuple) -> bool:
    """Run until finished or ``max_runtime``; True if every instance decided."""
    loop = asyncio.get_running_loop()
    wake = asyncio.Event()
    transport, _ = await loop.create_datagram_endpoint(lambda: _Datagrams(runtime, wake), local_addr=listen)
    deadline = time.time() + runtime.opts.max_runtime
    runtime.recover(time.time())
    try:
        while True:
            now = time.time()
            runtime.tick(now)
            for addr, data in runtime.outbox:
                transport.sendto(data, addr)
            runtime.outbox.clear()
            if runtime.finished(now) or now >= deadline:
                break
            wake.clear()
            try:
                await asyncio.wait_for(wake.wait(), timeout=runtime.next_wakeup(now) - now)
            except asyncio.TimeoutError:
                pass
    finally:
        transport.close()
    return runtime.all_decided()


def parse_address(text: str) -> tuple:
    host, _, port = text.strip().rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bad address {text!r}, expected host:port")
    return host, int(port)


def read_peers(path) -> list:
    with open(path) as fh:
        return [parse_address(line) for line in fh if line.strip() and not line.lstrip().startswith("#")]


def add_node_arguments(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--id", type=int, required=True)
    ap.add_argument("--peers", required=True, help="file with one host:port per line, in process order")
    ap.add_argument("--keys", required=True, help="directory written by the keygen command")
    ap.add_argument("--instances", type=int, default=1)
    ap.add_argument("--proposal", default="1", help="0, 1 or random:p")
    ap.add_argument("--lazy-proofs", action="store_true")
    ap.add_argument("--timer-base", type=int, default=20, help="ms")
    ap.add_argument("--timer-growth", type=int, default=5, help="ms per timer index")
    ap.add_argument("--timer-free-rounds", type=int, default=10)
    ap.add_argument("--coord-free-rounds", type=int, default=10)
    ap.add_argument("--wal", default=None)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--listen", default=None, help="bind address if different from our --peers entry")
    ap.add_argument("--retransmit-ms", type=float, default=RETRANSMIT_INITIAL * 1000)
    ap.add_argument("--retransmit-cap-ms", type=float, default=RETRANSMIT_CAP * 1000)
    ap.add_argument("--quiet-ms", type=float, default=1000.0)
    ap.add_argument("--linger-ms", type=float, default=5000.0, help="exit after this much silence even with unacked frames")
    ap.add_argument("--max-runtime", type=float, default=60.0, help="seconds")
    ap.add_argument("--start-at", type=float, default=None, help="unix time to start the first instance")
    ap.add_argument("--exit-after-records", type=int, default=None, help=argparse.SUPPRESS)


def node_main(args) -> int:
    try:
        peers = read_peers(args.peers)
        scheme_name, directory = load_directory(args.keys)
        keypair = load_keypair(args.keys, args.id)
        scheme = get_scheme(scheme_name)
        opts = NodeOptions(
            id=args.id, instances=args.instances, proposal=args.proposal, lazy_proofs=args.lazy_proofs,
            timer_base=args.timer_base, timer_growth=args.timer_growth, timer_free_rounds=args.timer_free_rounds,
            coord_free_rounds=args.coord_free_rounds, seed=args.seed, retransmit=args.retransmit_ms / 1000.0,
            retransmit_cap=args.retransmit_cap_ms / 1000.0, quiet=args.quiet_ms / 1000.0, linger=args.linger_ms / 1000.0,
            max_runtime=args.max_runtime, start_at=args.start_at, exit_after_records=args.exit_after_records)
        draw_proposal(opts.proposal, 0, 0, 0)
        wal_log = wal.Wal(args.wal) if args.wal else None
        runtime = NodeRuntime(opts, peers, scheme, directory, keypair, wal_log)
        listen = parse_address(args.listen) if args.listen else peers[args.id]
    except (OSError, ValueError, KeyError, wal.WalCorrupted) as exc:
        print(f"node {args.id}: {exc}", file=sys.stderr)
        return 2
    try:
        ok = asyncio.run(serve(runtime, listen))
    except OSError as exc:
        print(f"node {args.id}: {exc}", file=sys.stderr)
        return 2
    finally:
        if wal_log is not None:
            wal_log.close()
    for i in sorted(runtime.results):
        print(runtime.results[i].line(), flush=True)
    return 0 if ok else 1
