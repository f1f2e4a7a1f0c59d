"""Experiment specs, per-run records and metric aggregation."""
from __future__ import annotations

import csv
import io
import json
import random
import statistics
import tempfile
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from ..simnet import AdversaryStrategy, SynchronyModel, assert_trace_invariants, export_trace, run_instance
from ..types import InstanceConfig, TimerPolicy

FRACTIONS = (0.25, 0.50, 0.75)
# Simulator timers in ticks (1 tick reads as 1 us): start at half the default
# delay bound and grow by 5 ms per timer index.
SIM_TIMERS = TimerPolicy(free_rounds=10, base=50_000, growth=5_000)


class SafetyViolation(RuntimeError):
    def __init__(self, message: str, trace_path: Optional[str] = None):
        super().__init__(message if trace_path is None else f"{message} (trace: {trace_path})")
        self.trace_path = trace_path


def timer_policy_from(obj) -> TimerPolicy:
    if obj is None or obj == "default":
        return SIM_TIMERS
    if obj == "zero":
        return TimerPolicy.zero()
    if isinstance(obj, TimerPolicy):
        return obj
    return TimerPolicy(**obj)


@dataclass
class ExperimentSpec:
    mode: str = "sim"
    n: list = field(default_factory=lambda: [4])
    t: object = "max"              # "max" for floor((n-1)/3), or a fixed int
    fractions: list = field(default_factory=lambda: list(FRACTIONS))
    repeats: int = 10
    seed: int = 0                  # run seeds are seed .. seed+repeats-1 unless ``seeds`` is given
    seeds: Optional[list] = None
    synchrony: dict = field(default_factory=dict)
    timers: object = "default"
    adversary: dict = field(default_factory=dict)
    stop_policy: str = "delayed"
    preference: str = "decidable"
    round_cap: int = 64
    output: Optional[str] = None
    proposals: Optional[list] = None      # fixed vector, replaces the per-process draws
    traces: Optional[str] = None          # directory for one line-delimited trace per sim run
    net: dict = field(default_factory=dict)   # loss, lazy_proofs, timer/ retransmit flags

    def __post_init__(self):
        if self.mode not in ("sim", "net"):
            raise ValueError(f"mode must be sim or net, got {self.mode!r}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        for f in self.fractions:
            if not 0.0 <= f <= 1.0:
                raise ValueError(f"fraction {f} outside [0, 1]")
        if isinstance(self.n, int):
            self.n = [self.n]
        if self.proposals is not None:
            if isinstance(self.proposals, str):
                self.proposals = [int(c) for c in self.proposals]
            if any(v not in (0, 1) for v in self.proposals) or self.n != [len(self.proposals)]:
                raise ValueError("a fixed proposal vector needs binary entries and a single matching n")
            self.fractions = [sum(self.proposals) / len(self.proposals)]

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown spec keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def run_seeds(self) -> list:
        return list(self.seeds) if self.seeds is not None else list(range(self.seed, self.seed + self.repeats))

    def proposal_vector(self, n: int, fraction: float, seed: int) -> list[int]:
        if self.proposals is not None:
            return list(self.proposals)
        return draw_proposals(n, fraction, seed)

    def faults(self, n: int) -> int:
        return (n - 1) // 3 if self.t == "max" else int(self.t)

    def config(self, n: int) -> InstanceConfig:
        return InstanceConfig(n=n, t=self.faults(n), timer_policy=timer_policy_from(self.timers),
                              stop_policy=self.stop_policy, preference=self.preference)


@dataclass
class RunRecord:
    mode: str
    n: int
    t: int
    fraction: float
    seed: int
    proposals: str
    behavior: str
    corrupted: str
    decided: Optional[int]
    termination_round: Optional[int]
    latency: Optional[float]
    messages: int
    certs: int
    breakdown: str = ""
    liveness: str = ""
    lazy: bool = False


@dataclass
class MetricsRow:
    n: int
    fraction: float
    runs: int
    undecided: int
    latency_unit: str
    latency_mean: Optional[float]
    latency_min: Optional[float]
    latency_max: Optional[float]
    round_mean: Optional[float]
    round_max: Optional[int]
    messages_mean: float


def draw_proposals(n: int, fraction: float, seed: int) -> list[int]:
    """Independent per-process draws: 1 with probability ``fraction``."""
    rng = random.Random(f"proposals/{seed}/{n}")
    return [int(rng.random() < fraction) for _ in range(n)]


def _corrupted(spec: ExperimentSpec, n: int, seed: int) -> frozenset:
    adv = spec.adversary
    if adv.get("behavior", "none") == "none":
        return frozenset()
    count = adv.get("count", "t")
    k = spec.faults(n) if count == "t" else int(count)
    return frozenset(random.Random(f"adversary/{seed}/{n}").sample(range(n), k))


def vote_breakdown(trace) -> str:
    """Logical messages per round (n per broadcast, self-delivery included) plus certificates."""
    per_round = Counter()
    certs = 0
    n = trace[0].summary["n"]
    for rec in trace:
        for eff in rec.effects:
            if eff["type"] == "broadcast":
                per_round[eff["round"]] += n
            elif eff["type"] == "cert":
                certs += n
    parts = [f"r{r}:{c}" for r, c in sorted(per_round.items())]
    return " ".join(parts + [f"cert:{certs}"])


def run_sim_point(spec: ExperimentSpec, n: int, fraction: float, seed: int, trace_dir=None) -> RunRecord:
    cfg = spec.config(n)
    proposals = spec.proposal_vector(n, fraction, seed)
    corrupted = _corrupted(spec, n, seed)
    adv_doc = {k: v for k, v in spec.adversary.items() if k != "count"}
    if "targets" in adv_doc and adv_doc["targets"] is not None:
        adv_doc["targets"] = frozenset(adv_doc["targets"])
    adversary = AdversaryStrategy(corrupted=corrupted, **adv_doc) if corrupted else AdversaryStrategy()
    synchrony = SynchronyModel(**spec.synchrony)
    res = run_instance(cfg, proposals, synchrony, adversary, seed=seed, round_cap=spec.round_cap)
    if spec.traces:
        Path(spec.traces).mkdir(parents=True, exist_ok=True)
        export_trace(res.trace, Path(spec.traces) / f"n{n}-f{fraction}-s{seed}.jsonl")
    report = assert_trace_invariants(res.trace, cfg)
    if not report.ok:
        out = Path(trace_dir or tempfile.mkdtemp(prefix="wcbbc-"))
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"violation-n{n}-f{fraction}-s{seed}.jsonl"
        export_trace(res.trace, path)
        raise SafetyViolation(f"n={n} fraction={fraction} seed={seed}: {report.summary()}", str(path))
    return RunRecord(
        mode="sim", n=n, t=cfg.t, fraction=fraction, seed=seed, proposals="".join(map(str, proposals)),
        behavior=adversary.behavior, corrupted=" ".join(map(str, sorted(corrupted))),
        decided=min(res.decided_values) if res.decided_values else None,
        termination_round=res.termination_round,
        latency=None if res.latency is None else float(res.latency), messages=res.total_messages,
        certs=res.cert_broadcasts, breakdown=vote_breakdown(res.trace), liveness=res.liveness_failure or "")


def run_net_point(spec: ExperimentSpec, n: int, fraction: float, seed: int, workdir) -> RunRecord:
    from ..net import spawn_local

    proposals = spec.proposal_vector(n, fraction, seed)
    opts = dict(spec.net)
    loss = float(opts.pop("loss", 0.0))
    lazy = bool(opts.pop("lazy_proofs", False))
    args = ["--lazy-proofs"] if lazy else []
    for k, v in sorted(opts.items()):
        args += [f"--{k.replace('_', '-')}", str(v)]
    run = spawn_local(n, Path(workdir) / f"n{n}-f{fraction}-s{seed}", proposals, loss=loss, seed=seed, node_args=args)
    outcomes = [r for nr in run.nodes for r in nr.results]
    decided = {(r["value"], r["round"]) for r in outcomes if r["value"] is not None}
    values = {v for v, _ in decided}
    if len(values) > 1 or (len(set(proposals)) == 1 and values - set(proposals)):
        raise SafetyViolation(f"net run n={n} seed={seed} decided {sorted(decided)}", str(run.workdir))
    undecided = len(outcomes) < n or any(r["value"] is None for r in outcomes)
    lat = [r["latency_ms"] for r in outcomes if r["latency_ms"] is not None]
    return RunRecord(
        mode="net", n=n, t=(n - 1) // 3, fraction=fraction, seed=seed, proposals="".join(map(str, proposals)),
        behavior="none", corrupted="", decided=min(values) if values else None,
        termination_round=max((r for _, r in decided), default=None), latency=max(lat) if lat else None,
        messages=sum(r["msgs_sent"] for r in outcomes), certs=0,
        liveness="some node undecided" if undecided else "", lazy=lazy)


def aggregate(records) -> list[MetricsRow]:
    groups = defaultdict(list)
    for r in records:
        groups[(r.n, r.fraction)].append(r)
    rows = []
    for (n, fraction), rs in sorted(groups.items()):
        done = [r for r in rs if r.termination_round is not None and not r.liveness]
        lat = [r.latency for r in done if r.latency is not None]
        rounds = [r.termination_round for r in done]
        rows.append(MetricsRow(
            n=n, fraction=fraction, runs=len(rs), undecided=len(rs) - len(done),
            latency_unit="ticks" if rs[0].mode == "sim" else "ms",
            latency_mean=statistics.fmean(lat) if lat else None,
            latency_min=min(lat) if lat else None, latency_max=max(lat) if lat else None,
            round_mean=statistics.fmean(rounds) if rounds else None,
            round_max=max(rounds) if rounds else None,
            messages_mean=statistics.fmean(r.messages for r in rs)))
    return rows


def run_experiment(spec: ExperimentSpec, workdir=None) -> tuple[list[MetricsRow], list[RunRecord]]:
    """Every (n, fraction, seed) point of ``spec``; returns the aggregate table and raw records."""
    records = []
    trace_dir = workdir or (Path(spec.output).parent if spec.output else None)
    net_dir = None
    if spec.mode == "net":
        net_dir = Path(workdir or tempfile.mkdtemp(prefix="wcbbc-net-"))
    for n in spec.n:
        for fraction in spec.fractions:
            for seed in spec.run_seeds():
                if spec.mode == "sim":
                    records.append(run_sim_point(spec, n, fraction, seed, trace_dir))
                else:
                    records.append(run_net_point(spec, n, fraction, seed, net_dir))
    rows = aggregate(records)
    if spec.output:
        write_outputs(spec.output, rows, records)
    return rows, records


# -- CSV ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(rows) -> str:
    rows = list(rows)
    if not rows:
        return ""
    buf = io.StringIO()
    names = [f.name for f in fields(rows[0])]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in rows:
        d = asdict(r)
        w.writerow([_fmt(d[k]) for k in names])
    return buf.getvalue()


def records_from_csv(text: str) -> list[RunRecord]:
    out = []
    types = {f.name: f.type for f in fields(RunRecord)}
    for row in csv.DictReader(io.StringIO(text)):
        kw = {}
        for k, v in row.items():
            ty = types[k]
            if v == "" and "Optional" in str(ty):
                kw[k] = None
            elif ty in ("int", "Optional[int]"):
                kw[k] = int(v)
            elif ty in ("float", "Optional[float]"):
                kw[k] = float(v)
            elif ty == "bool":
                kw[k] = v == "1"
            else:
                kw[k] = v
        out.append(RunRecord(**kw))
    return out


def write_outputs(prefix, rows, records) -> tuple[Path, Path]:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    metrics = prefix.with_name(prefix.name + ".metrics.csv")
    runs = prefix.with_name(prefix.name + ".runs.csv")
    metrics.write_text(to_csv(rows))
    runs.write_text(to_csv(records))
    return metrics, runs
