"""Message-count model check and randomized safety fuzzing."""
from __future__ import annotations

import random
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

from ..simnet import AdversaryStrategy, SynchronyModel, assert_trace_invariants, run_instance
from ..types import InstanceConfig, TimerPolicy

# -- message count --------------------------------------------------------------


@dataclass
class MessageCountReport:
    checked: int = 0
    skipped: list = field(default_factory=list)      # (seed, reason)
    mismatches: list = field(default_factory=list)   # dicts with the per-round breakdown
    fit: list = field(default_factory=list)          # (n, runs, mean msgs/(R+1), n^2)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def lines(self) -> list[str]:
        out = [f"checked={self.checked} skipped={len(self.skipped)} mismatches={len(self.mismatches)}"]
        for n, runs, per_round, sq in self.fit:
            out.append(f"n={n} runs={runs} msgs_per_round={per_round:.3f} n^2={sq} ratio={per_round / sq:.4f}")
        for m in self.mismatches[:10]:
            out.append(f"MISMATCH n={m['n']} seed={m['seed']} R={m['round']} "
                       f"expected={m['expected']} got={m['got']} [{m['breakdown']}]")
        return out


def message_count_model_check(records) -> MessageCountReport:
    """Check msgs == n^2 * (termination_round + 1) for every fault-free eager-proof run.

    Runs with corrupted processes, lazy proofs or no decision are skipped and
    listed with the reason.
    """
    rep = MessageCountReport()
    per_n = defaultdict(list)
    for r in records:
        if r.lazy:
            rep.skipped.append((r.seed, "lazy proofs: request/response traffic is outside the model"))
            continue
        if r.behavior != "none":
            rep.skipped.append((r.seed, f"adversary {r.behavior}"))
            continue
        if r.termination_round is None:
            rep.skipped.append((r.seed, "no decision"))
            continue
        rep.checked += 1
        expected = r.n * r.n * (r.termination_round + 1)
        per_n[r.n].append(r.messages / (r.termination_round + 1))
        if r.messages != expected:
            rep.mismatches.append({"n": r.n, "seed": r.seed, "round": r.termination_round,
                                   "expected": expected, "got": r.messages, "breakdown": r.breakdown})
    rep.fit = [(n, len(v), statistics.fmean(v), n * n) for n, v in sorted(per_n.items())]
    return rep


# -- fuzzing --------------------------------------------------------------------

ADVERSARIAL = ("crash", "silent", "equivocate", "delay_release")
FAMILIES = {
    "mixed": ("none",) + ADVERSARIAL,
    "adversarial": ADVERSARIAL,
    **{b: (b,) for b in ("none",) + ADVERSARIAL},
}


@dataclass
class Scenario:
    index: int
    seed: int
    n: int
    behavior: str
    corrupted: frozenset
    proposals: tuple
    synchrony: SynchronyModel
    timers: TimerPolicy
    strategy: AdversaryStrategy

    def describe(self) -> str:
        s = self.synchrony
        return (f"#{self.index} seed={self.seed} n={self.n} {self.behavior} corrupted={sorted(self.corrupted)} "
                f"proposals={''.join(map(str, self.proposals))} gst={s.gst} delta={s.delta} "
                f"pre_gst_max={s.pre_gst_max} timers=({self.timers.free_rounds},{self.timers.base},{self.timers.growth})")


@dataclass
class ScenarioOutcome:
    scenario: Scenario
    failed: list
    decision_rounds: list
    liveness_failure: Optional[str]

    @property
    def ok(self) -> bool:
        return not self.failed


@dataclass
class FuzzReport:
    outcomes: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.outcomes)

    def failures(self) -> list[ScenarioOutcome]:
        return [o for o in self.outcomes if not o.ok]

    @property
    def ok(self) -> bool:
        return not self.failures()

    def by_behavior(self) -> dict:
        out = defaultdict(int)
        for o in self.outcomes:
            out[o.scenario.behavior] += 1
        return dict(sorted(out.items()))

    def lines(self) -> list[str]:
        live = sum(1 for o in self.outcomes if o.liveness_failure)
        out = [f"scenarios={self.iterations} violations={len(self.failures())} liveness_failures={live} "
               f"by_behavior={self.by_behavior()}"]
        for o in self.failures():
            out.append(f"FAIL {o.scenario.describe()}: {', '.join(o.failed)}")
        return out


def make_scenario(index: int, seed: int, behaviors, n_choices) -> Scenario:
    rng = random.Random(f"fuzz/{seed}/{index}")
    n = rng.choice(list(n_choices))
    t = (n - 1) // 3
    behavior = rng.choice(list(behaviors))
    delta = rng.randint(1, 100_000)
    synchrony = SynchronyModel(gst=rng.randint(0, 500_000), delta=delta,
                               pre_gst_max=delta * rng.randint(1, 10), jitter_seed=rng.randrange(2**32))
    timers = TimerPolicy(free_rounds=rng.randint(0, 10), base=rng.randint(0, 2 * delta),
                         growth=rng.randint(1, delta // 10 + 1))
    proposals = tuple(rng.randint(0, 1) for _ in range(n))
    if behavior == "none" or t == 0:
        behavior, corrupted, strategy = "none", frozenset(), AdversaryStrategy()
    else:
        corrupted = frozenset(rng.sample(range(n), t))
        strategy = AdversaryStrategy(
            behavior, corrupted, crash_round=rng.randint(0, 4),
            targets=frozenset(rng.sample(range(n), rng.randint(1, n))) if rng.random() < 0.5 else None,
            hold=rng.randint(1, 5 * synchrony.pre_gst_max))
    return Scenario(index, rng.randrange(2**32), n, behavior, corrupted, proposals, synchrony, timers, strategy)


def run_scenario(sc: Scenario, round_cap: int = 64) -> ScenarioOutcome:
    cfg = InstanceConfig.for_n(sc.n, timer_policy=sc.timers)
    res = run_instance(cfg, sc.proposals, sc.synchrony, sc.strategy, seed=sc.seed, round_cap=round_cap)
    report = assert_trace_invariants(res.trace, cfg)
    rounds = sorted(o.decision_round for o in res.honest() if o.decision_round is not None)
    return ScenarioOutcome(sc, [r.name for r in report.failed()], rounds, res.liveness_failure)


def fuzz_safety(iterations: int, family: str = "mixed", seed: int = 0, n_choices=(4, 7, 10),
                round_cap: int = 64) -> FuzzReport:
    """Randomized scenarios checked against every trace invariant; never raises on a violation."""
    if family not in FAMILIES:
        raise ValueError(f"unknown scenario family {family!r}; choose from {sorted(FAMILIES)}")
    report = FuzzReport()
    for i in range(iterations):
        report.outcomes.append(run_scenario(make_scenario(i, seed, FAMILIES[family], n_choices), round_cap))
    return report


# -- liveness after GST -----------------------------------------------------------

LIVENESS_TIMERS = TimerPolicy(free_rounds=10, base=50_000, growth=5_000)


@dataclass
class LivenessReport:
    bound_constant: int
    runs: list = field(default_factory=list)   # (scenario text, t, gst_round, termination_round, liveness)

    def excess(self) -> list[int]:
        """termination_round - gst_round - 3t per decided run."""
        return [r - g - 3 * t for _, t, g, r, live in self.runs if r is not None and not live]

    def violations(self) -> list:
        return [run for run in self.runs
                if run[4] or run[3] is None or run[3] - run[2] - 3 * run[1] > self.bound_constant]

    @property
    def ok(self) -> bool:
        return not self.violations()

    def lines(self) -> list[str]:
        ex = self.excess()
        out = [f"runs={len(self.runs)} C={self.bound_constant} max_excess={max(ex) if ex else None} "
               f"violations={len(self.violations())}"]
        for text, t, g, r, live in self.violations()[:10]:
            out.append(f"LATE {text} t={t} gst_round={g} termination_round={r} {live}")
        return out


def post_gst_liveness(iterations: int, seed: int = 0, n_choices=(4, 7, 10), bound_constant: int = 2,
                      round_cap: int = 64) -> LivenessReport:
    """delay_release runs with gst > 0 and growing timers, checked against 3t + C rounds after GST.

    ``gst_round`` is the highest round any honest process is in when GST arrives.
    """
    rep = LivenessReport(bound_constant)
    for i in range(iterations):
        rng = random.Random(f"liveness/{seed}/{i}")
        n = rng.choice(list(n_choices))
        t = (n - 1) // 3
        synchrony = SynchronyModel(gst=rng.randint(1, 3_000_000), delta=100_000, pre_gst_max=1_000_000,
                                   jitter_seed=rng.randrange(2**32))
        corrupted = frozenset(rng.sample(range(n), t))
        targets = frozenset(rng.sample(range(n), rng.randint(1, n))) if rng.random() < 0.5 else None
        strategy = AdversaryStrategy("delay_release", corrupted, targets=targets,
                                     hold=rng.randint(1, 5 * synchrony.pre_gst_max))
        proposals = [rng.randint(0, 1) for _ in range(n)]
        cfg = InstanceConfig.for_n(n, timer_policy=LIVENESS_TIMERS)
        run_seed = rng.randrange(2**32)
        res = run_instance(cfg, proposals, synchrony, strategy, seed=run_seed, round_cap=round_cap)
        text = (f"#{i} n={n} seed={run_seed} gst={synchrony.gst} corrupted={sorted(corrupted)} "
                f"proposals={''.join(map(str, proposals))}")
        rep.runs.append((text, t, res.gst_round, res.termination_round, res.liveness_failure or ""))
    return rep
