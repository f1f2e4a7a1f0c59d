"""Safety and liveness checks evaluated over a completed simulation trace."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field


@dataclass
class InvariantResult:
    name: str
    ok: bool
    detail: str = ""
    counterexample: list = field(default_factory=list)


@dataclass
class InvariantReport:
    results: list

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)

    def failed(self) -> list[InvariantResult]:
        return [r for r in self.results if not r.ok]

    def __getitem__(self, name: str) -> InvariantResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def summary(self) -> str:
        return ", ".join(f"{r.name}={'ok' if r.ok else 'FAIL'}" for r in self.results)


def _header(trace):
    for rec in trace:
        if rec.kind == "config":
            return rec.summary
    raise ValueError("trace has no config record")


def assert_trace_invariants(trace, config=None) -> InvariantReport:
    """Evaluate agreement, validity, parity, spread, quorum uniqueness and vote provenance.

    ``config`` (an InstanceConfig) overrides n and t from the trace header.
    """
    hdr = _header(trace)
    n = config.n if config is not None else hdr["n"]
    t = config.t if config is not None else hdr["t"]
    corrupted = set(hdr["corrupted"])
    honest = [p for p in range(n) if p not in corrupted]
    proposals = hdr["proposals"]

    decisions = []            # (record, value, round)
    votes = defaultdict(set)  # (round, value) -> signers, honest and Byzantine
    honest_votes = []         # (record, round, value)
    for rec in trace:
        for eff in rec.effects:
            kind = eff["type"]
            if kind == "decide" and rec.actor in honest:
                decisions.append((rec, eff["value"], eff["round"]))
            elif kind == "broadcast" and rec.actor in honest:
                votes[(eff["round"], eff["value"])].add(rec.actor)
                honest_votes.append((rec, eff["round"], eff["value"]))
            elif kind == "byz_broadcast":
                votes[(eff["round"], eff["value"])].add(eff["sender"])

    results = []

    values = sorted({v for _, v, _ in decisions})
    cex = []
    if len(values) > 1:
        cex = [_cite(rec, f"decide {v}@{r}") for rec, v, r in decisions if v in values[:2]]
    results.append(InvariantResult("agreement", len(values) <= 1, f"decided values {values}", cex))

    honest_props = {proposals[p] for p in honest}
    bad = []
    if len(honest_props) == 1:
        (v,) = honest_props
        bad = [_cite(rec, f"decide {d}@{r}") for rec, d, r in decisions if d != v]
    results.append(InvariantResult("validity", not bad, f"honest proposals {sorted(honest_props)}", bad))

    bad = [_cite(rec, f"decide {v}@{r}") for rec, v, r in decisions if v != r % 2]
    results.append(InvariantResult("parity", not bad, "", bad))

    bad = []
    if decisions:
        first = min(r for _, _, r in decisions)
        bad = [_cite(rec, f"decide {v}@{r} (first at {first})") for rec, v, r in decisions if r not in (first, first + 2)]
    results.append(InvariantResult("spread", not bad, "", bad))

    bad = []
    for rnd in sorted({r for r, _ in votes}):
        if len(votes[(rnd, 0)]) >= n - t and len(votes[(rnd, 1)]) >= n - t:
            bad.append(f"round {rnd}: both values signed by >= {n - t} processes")
    results.append(InvariantResult("quorum_uniqueness", not bad, "", bad))

    bad = []
    if len(honest_props) == 1:
        (v,) = honest_props
        bad = [_cite(rec, f"honest vote {val}@{r}") for rec, r, val in honest_votes if r >= 1 and val != v]
    results.append(InvariantResult("vote_provenance", not bad, "", bad))

    return InvariantReport(results)


def check_reliable_delivery(trace) -> InvariantResult:
    """Every honest broadcast reaches every honest process exactly once."""
    hdr = _header(trace)
    n = hdr["n"]
    honest = {p for p in range(n) if p not in set(hdr["corrupted"])}
    sent = {}
    delivered = defaultdict(list)
    for rec in trace:
        if rec.kind in ("deliver", "deliver_cert"):
            delivered[rec.summary["msg"]].append(rec.actor)
        for eff in rec.effects:
            if eff["type"] in ("broadcast", "cert") and rec.actor in honest:
                sent[eff["msg"]] = rec.actor
    bad = []
    for mid, sender in sent.items():
        got = sorted(p for p in delivered[mid] if p in honest)
        if got != sorted(honest):
            bad.append(f"msg {mid} from p{sender}: delivered to {got}")
    return InvariantResult("reliable_delivery", not bad, f"{len(sent)} honest broadcasts", bad[:5])


def check_post_gst_bound(trace) -> InvariantResult:
    """No honest message sent at or after GST takes longer than delta."""
    hdr = _header(trace)
    corrupted = set(hdr["corrupted"])
    sent_at = {}
    for rec in trace:
        for eff in rec.effects:
            if eff["type"] in ("broadcast", "cert") and rec.actor not in corrupted:
                sent_at[eff["msg"]] = rec.time
    bad = []
    for rec in trace:
        if rec.kind in ("deliver", "deliver_cert") and rec.summary["msg"] in sent_at:
            t0 = sent_at[rec.summary["msg"]]
            if t0 >= hdr["gst"] and rec.time - t0 > hdr["delta"]:
                bad.append(f"msg {rec.summary['msg']} sent {t0} delivered {rec.time}")
    return InvariantResult("post_gst_bound", not bad, "", bad[:5])


def _cite(rec, what: str) -> str:
    return f"t={rec.time} seq={rec.seq} p{rec.actor}: {what}"
