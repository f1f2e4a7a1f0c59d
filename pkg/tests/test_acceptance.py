"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line; the lines are repeated together in
the pytest terminal summary.
"""
import statistics

import pytest

from conftest import Keys, report_criterion
from test_validity import exhaustive_cases
from validity_oracle import oracle_is_valid
from wcbbc.harness import ExperimentSpec, fuzz_safety, message_count_model_check, post_gst_liveness, run_experiment
from wcbbc.net import spawn_local
from wcbbc.protocol import is_valid
from wcbbc.simnet import SynchronyModel, run_instance
from wcbbc.types import InstanceConfig, TimerPolicy

CFG = InstanceConfig(n=4, t=1)
K = Keys()
V = K.votes

ZERO = TimerPolicy.zero()
SYNC_SIM = {"free_rounds": 0, "base": 100_000, "growth": 1}   # timer >= delay bound

# net runs in lockstep: every node hears every vote of a round before its timer fires
LOCKSTEP = ["--timer-free-rounds", "0", "--timer-base", "800", "--timer-growth", "1",
            "--retransmit-ms", "20", "--retransmit-cap-ms", "20", "--quiet-ms", "300"]
LOCKSTEP_SIM = TimerPolicy(free_rounds=0, base=100_000, growth=1)


# 1 -------------------------------------------------------------------------------

BRANCHES = [
    ("round 0 needs no proofs", (0, 1, []), None),
    ("round 1 weak support", (1, 1, V([0, 1], 0, 1)), (1, 1, V([0], 0, 1) + V([1, 2], 0, 0))),
    ("round 2 initial support", (2, 1, V([2, 3], 0, 1)), (2, 1, V([2], 0, 1))),
    ("quorum two rounds back", (3, 0, V([0, 1, 3], 1, 0)), (3, 0, V([0, 1], 1, 0) + V([3], 1, 1))),
    ("quorum for the other value last round", (3, 1, V([0, 1, 2], 2, 1)), (3, 1, V([0, 1], 2, 1))),
    ("no rule applies", None, (4, 0, V([0, 1, 2], 2, 0))),
]


def test_criterion_1_predicate_branches_and_oracle():
    problems = []
    for name, good, bad in BRANCHES:
        if good is not None and not is_valid(CFG, *good):
            problems.append(f"{name}: accepting case rejected")
        if bad is not None and is_valid(CFG, *bad):
            problems.append(f"{name}: rejecting case accepted")
    # round 0 has no failing input by construction; cover its complement at round 1
    if is_valid(CFG, 1, 0, []):
        problems.append("empty proofs accepted past round 0")
    cases = mismatches = 0
    for r, est, proofs in exhaustive_cases():
        cases += 1
        if is_valid(CFG, r, est, proofs) != oracle_is_valid(4, 1, r, est, proofs):
            mismatches += 1
    ok = not problems and mismatches == 0 and cases > 10_000
    report_criterion(1, ok, f"{len(BRANCHES)} branches covered, {cases} oracle cases, {mismatches} mismatches"
                     + (f"; {problems}" if problems else ""))


# 2 -------------------------------------------------------------------------------

def test_criterion_2_unanimity_fast_path():
    bad = []
    runs = 0
    for n in (4, 7, 16):
        cfg = InstanceConfig(n=n, t=(n - 1) // 3, timer_policy=ZERO)
        for seed in range(100):
            for v, want in ((1, 1), (0, 2)):
                res = run_instance(cfg, [v] * n, SynchronyModel(), seed=seed)
                runs += 1
                got = {(o.decided, o.decision_round) for o in res.outcomes}
                if got != {(v, want)} or res.liveness_failure:
                    bad.append((n, seed, v, sorted(got, key=str)))
    report_criterion(2, not bad, f"{runs} runs over n=4,7,16 x 100 seeds, {len(bad)} off the fast path {bad[:3]}")


# 3 -------------------------------------------------------------------------------

def test_criterion_3_split_proposal_envelope():
    spec = ExperimentSpec(n=[16], fractions=[0.5], repeats=1000, seed=0)
    rows, records = run_experiment(spec)   # raises on any agreement or validity violation
    rounds = [r.termination_round for r in records]
    undecided = sum(1 for r in records if r.termination_round is None or r.liveness)
    mean = statistics.fmean(x for x in rounds if x is not None)
    top = max(x for x in rounds if x is not None)
    ok = undecided == 0 and mean <= 2 and top <= 8
    report_criterion(3, ok, f"1000 runs n=16 fraction=0.5: mean round {mean:.3f} (<= 2), max {top} (<= 8), "
                     f"undecided {undecided}, latency mean {rows[0].latency_mean:.0f} ticks")


# 4 -------------------------------------------------------------------------------

def test_criterion_4_message_count_model():
    records = []
    spec = ExperimentSpec(n=[4, 7, 16], fractions=[0.25, 0.5, 0.75], repeats=30, timers=SYNC_SIM)
    records += run_experiment(spec)[1]
    for v in (0, 1):
        spec = ExperimentSpec(n=[4, 7, 16], fractions=[float(v)], repeats=30, timers="zero")
        records += run_experiment(spec)[1]
    rep = message_count_model_check(records)
    ok = rep.ok and rep.checked == len(records) and {n for n, *_ in rep.fit} == {4, 7, 16}
    ratios = ", ".join(f"n={n}:{per / sq:.3f}" for n, _, per, sq in rep.fit)
    report_criterion(4, ok, f"{rep.checked} fault-free runs, {len(rep.mismatches)} mismatches, "
                     f"msgs/(R+1)/n^2 {ratios}")


# 5, 6 -------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def fuzz_reports():
    return {
        "adversarial": fuzz_safety(1000, family="adversarial", seed=0),
        "none": fuzz_safety(250, family="none", seed=1),
    }


def test_criterion_5_byzantine_safety_fuzz(fuzz_reports):
    adv = fuzz_reports["adversarial"]
    everything = adv.outcomes + fuzz_reports["none"].outcomes
    failing = [o for o in everything if not o.ok]
    stuck = [o for o in everything if o.liveness_failure]
    t_ok = all(len(o.scenario.corrupted) == (o.scenario.n - 1) // 3 for o in adv.outcomes)
    ok = adv.iterations >= 1000 and not failing and t_ok
    detail = (f"{adv.iterations} adversarial + {fuzz_reports['none'].iterations} fault-free scenarios "
              f"{adv.by_behavior()}, {len(failing)} violations, {len(stuck)} liveness failures")
    if failing:
        detail += " failing: " + "; ".join(f"{o.scenario.describe()} {o.failed}" for o in failing[:3])
    report_criterion(5, ok, detail)


def test_criterion_6_decision_spread(fuzz_reports):
    subset = fuzz_reports["none"].outcomes + [o for o in fuzz_reports["adversarial"].outcomes
                                              if o.scenario.behavior == "crash"]
    bad = []
    spreads = {0: 0, 2: 0}
    for o in subset:
        if not o.decision_rounds:
            continue
        lo = min(o.decision_rounds)
        if not set(o.decision_rounds) <= {lo, lo + 2}:
            bad.append(o.scenario.describe())
        else:
            spreads[max(o.decision_rounds) - lo] += 1
    report_criterion(6, not bad and len(subset) > 400,
                     f"{len(subset)} fault-free/crash traces, spread 0: {spreads[0]}, spread 2: {spreads[2]}, "
                     f"outside {{r, r+2}}: {len(bad)} {bad[:2]}")


# 7 -------------------------------------------------------------------------------

def test_criterion_7_liveness_after_gst():
    rep = post_gst_liveness(1000, seed=0, bound_constant=2)
    ex = rep.excess()
    report_criterion(7, rep.ok and len(ex) == 1000,
                     f"1000 delay_release runs, C=2: max(termination - gst_round - 3t) = {max(ex)}, "
                     f"{len(rep.violations())} late or capped")


# 8 -------------------------------------------------------------------------------

def test_criterion_8_no_certs_on_simultaneous_decisions():
    simultaneous = certs = 0
    for n in (4, 7, 16):
        cfg = InstanceConfig(n=n, t=(n - 1) // 3, timer_policy=ZERO)
        sync = InstanceConfig(n=n, t=(n - 1) // 3, timer_policy=TimerPolicy(**SYNC_SIM))
        for seed in range(60):
            props = [(seed * 7 + i * 3) % 5 < 2 for i in range(n)]
            for c, vec in ((cfg, [1] * n), (cfg, [0] * n), (sync, props)):
                res = run_instance(c, vec, SynchronyModel(), seed=seed)
                by_cert = any(r.kind == "deliver_cert" and any(e["type"] == "decide" for e in r.effects)
                              for r in res.trace)
                if len({o.decision_round for o in res.outcomes}) == 1 and not by_cert:
                    simultaneous += 1
                    certs += res.cert_broadcasts
    report_criterion(8, certs == 0 and simultaneous >= 400,
                     f"{simultaneous} simultaneous-decision traces, {certs} certificate broadcasts")


# 9 -------------------------------------------------------------------------------

def _sim_decision(vector, timers):
    n = len(vector)
    res = run_instance(InstanceConfig(n=n, t=(n - 1) // 3, timer_policy=timers), vector, SynchronyModel(), seed=0)
    (got,) = {(o.decided, o.decision_round) for o in res.outcomes}
    return got


def test_criterion_9_net_runner_conformance(tmp_path):
    checks = []

    def run(name, vector, args, **kw):
        r = spawn_local(4, tmp_path / name, [str(v) for v in vector], loss=0.3, seed=3, node_args=args,
                        timeout=60, **kw)
        codes = [nr.returncode for nr in r.nodes]
        got = {tuple(d) for d in r.decisions().values()}
        return r, codes, got

    want = _sim_decision([1, 1, 0, 0], LOCKSTEP_SIM)
    _, codes, eager = run("eager", [1, 1, 0, 0], LOCKSTEP)
    checks.append(("lossy split vs simulator", codes == [0] * 4 and eager == {(want,)}, f"{eager} vs {want}"))

    _, codes, lazy = run("lazy", [1, 1, 0, 0], LOCKSTEP + ["--lazy-proofs"])
    checks.append(("lazy equals eager", codes == [0] * 4 and lazy == eager, f"{lazy}"))

    want0 = _sim_decision([0] * 4, ZERO)
    _, codes, zeros = run("zeros", [0] * 4, ["--quiet-ms", "300"])
    checks.append(("lossy unanimous 0 vs simulator", codes == [0] * 4 and zeros == {(want0,)}, f"{zeros}"))

    r, codes, crashed = run("crash", [1, 1, 0, 0], LOCKSTEP, crash=(3, 4))
    restarted = r.nodes[3].restarted
    checks.append(("kill and recover", restarted and codes == [0] * 4 and crashed == {(want,)},
                   f"restarted={restarted} {crashed}"))

    failed = [f"{name}: {info}" for name, ok, info in checks if not ok]
    report_criterion(9, not failed, f"{len(checks)} local 4-node runs at 30% loss; "
                     + ("all match" if not failed else "; ".join(failed)))


# 10 ------------------------------------------------------------------------------

def test_criterion_10_determinism(tmp_path):
    def produce(tag):
        d = tmp_path / tag
        spec = ExperimentSpec(n=[4, 7, 16], fractions=[0.25, 0.5, 0.75], repeats=5, seed=42,
                              output=str(d / "out"), traces=str(d / "traces"),
                              adversary={"behavior": "equivocate"})
        run_experiment(spec)
        return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}

    a, b = produce("a"), produce("b")
    fa, fb = fuzz_safety(50, seed=9), fuzz_safety(50, seed=9)
    same_fuzz = [o.decision_rounds for o in fa.outcomes] == [o.decision_rounds for o in fb.outcomes]
    ok = a == b and len(a) == 2 + 45 and same_fuzz
    report_criterion(10, ok, f"{len(a)} files (2 metrics tables, {len(a) - 2} traces) byte-identical: {a == b}, "
                     f"fuzz outcomes identical: {same_fuzz}")
