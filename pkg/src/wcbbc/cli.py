"""Command line: simulation experiments, fuzzing, local clusters, keys and the node daemon."""
from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path

from .crypto import SCHEMES, keygen, write_key_files
from .harness import (
    FAMILIES,
    ExperimentSpec,
    SafetyViolation,
    fuzz_safety,
    message_count_model_check,
    post_gst_liveness,
    run_experiment,
    to_csv,
)
from .harness.experiment import run_sim_point
from .net.node import add_node_arguments, node_main


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def cmd_sim_run(args) -> int:
    spec = ExperimentSpec.load(args.spec)
    if args.output:
        spec.output = args.output
    try:
        rows, records = run_experiment(spec)
    except SafetyViolation as exc:
        print(f"safety violation: {exc}", file=sys.stderr)
        return 3
    sys.stdout.write(to_csv(rows))
    if args.raw:
        sys.stdout.write("\n" + to_csv(records))
    return 0


def cmd_sim_fuzz(args) -> int:
    report = fuzz_safety(args.iterations, args.family, args.seed, _int_list(args.n), args.round_cap)
    for line in report.lines():
        print(line)
    return 0 if report.ok else 1


def cmd_sim_liveness(args) -> int:
    report = post_gst_liveness(args.iterations, args.seed, _int_list(args.n), args.bound, args.round_cap)
    for line in report.lines():
        print(line)
    return 0 if report.ok else 1


def cmd_check_messages(args) -> int:
    timers = "zero" if args.timers == "zero" else {"free_rounds": 0, "base": args.delta, "growth": 1}
    spec = ExperimentSpec(n=_int_list(args.n), fractions=[args.fraction], repeats=args.seeds, seed=args.seed,
                          synchrony={"delta": args.delta, "pre_gst_max": args.delta}, timers=timers)
    records = [run_sim_point(spec, n, args.fraction, s) for n in spec.n for s in spec.run_seeds()]
    report = message_count_model_check(records)
    for line in report.lines():
        print(line)
    return 0 if report.ok else 1


def cmd_spawn_local(args) -> int:
    from .net import spawn_local

    if args.proposals:
        proposals = list(args.proposals)
        if len(proposals) != args.n:
            print(f"--proposals needs {args.n} digits", file=sys.stderr)
            return 2
    else:
        proposals = [args.proposal] * args.n
    node_args = ["--instances", str(args.instances), "--timer-base", str(args.timer_base),
                 "--timer-growth", str(args.timer_growth), "--max-runtime", str(args.max_runtime)]
    if args.lazy_proofs:
        node_args.append("--lazy-proofs")
    workdir = Path(args.workdir) if args.workdir else Path(tempfile.mkdtemp(prefix="wcbbc-local-"))
    run = spawn_local(args.n, workdir, proposals, loss=args.loss, seed=args.seed, node_args=node_args,
                      timeout=args.max_runtime + 30)
    status = 0
    for nr in run.nodes:
        for r in nr.results:
            print(f"node={nr.id} " + " ".join(f"{k}={v}" for k, v in r.items()))
        if nr.returncode != 0:
            status = 1
            print(f"node={nr.id} exit={nr.returncode} {nr.stderr.strip()[-200:]}", file=sys.stderr)
    if args.loss:
        print(f"proxy frames={run.frames_seen} dropped={run.frames_dropped}", file=sys.stderr)
    return status


def cmd_keygen(args) -> int:
    directory, pairs = keygen(args.n, seed=args.seed, scheme=args.scheme)
    write_key_files(Path(args.out), args.scheme, directory, pairs)
    print(f"wrote {args.n} {args.scheme} keys to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wcbbc", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("sim", help="simulator experiments").add_subparsers(dest="sim_command", required=True)
    p = sim.add_parser("run", help="run an experiment spec (JSON) and print the metrics table")
    p.add_argument("spec")
    p.add_argument("--output", help="write <output>.metrics.csv and <output>.runs.csv")
    p.add_argument("--raw", action="store_true", help="also print the per-run table")
    p.set_defaults(func=cmd_sim_run)

    p = sim.add_parser("fuzz", help="randomized adversarial scenarios against every trace invariant")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--family", choices=sorted(FAMILIES), default="mixed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", default="4,7,10", help="comma-separated system sizes")
    p.add_argument("--round-cap", type=int, default=64)
    p.set_defaults(func=cmd_sim_fuzz)

    p = sim.add_parser("liveness", help="delay_release runs after GST against the 3t + C round bound")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", default="4,7,10", help="comma-separated system sizes")
    p.add_argument("--bound", type=int, default=2, help="the constant C")
    p.add_argument("--round-cap", type=int, default=64)
    p.set_defaults(func=cmd_sim_liveness)

    net = sub.add_parser("net", help="real-network runs").add_subparsers(dest="net_command", required=True)
    p = net.add_parser("spawn-local", help="start n node processes on localhost")
    p.add_argument("n", type=int)
    p.add_argument("--proposals", help="one digit per node, e.g. 1101")
    p.add_argument("--proposal", default="1", help="0, 1 or random:p for every node")
    p.add_argument("--loss", type=float, default=0.0, help="drop probability of the local proxy")
    p.add_argument("--lazy-proofs", action="store_true")
    p.add_argument("--instances", type=int, default=1)
    p.add_argument("--timer-base", type=int, default=20)
    p.add_argument("--timer-growth", type=int, default=5)
    p.add_argument("--max-runtime", type=float, default=60.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workdir")
    p.set_defaults(func=cmd_spawn_local)

    p = sub.add_parser("keygen", help="write a key directory")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scheme", choices=sorted(SCHEMES), default="ed25519")
    p.add_argument("--seed", type=int, default=None, help="derive keys deterministically")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("check-messages", help="verify msgs = n^2 (R+1) on fault-free simulator runs")
    p.add_argument("--n", default="4,7,16")
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--delta", type=int, default=100_000)
    p.add_argument("--timers", choices=("sync", "zero"), default="sync",
                   help="sync: timers at least the delay bound; zero: no waiting")
    p.set_defaults(func=cmd_check_messages)

    p = sub.add_parser("node", help="run one node")
    add_node_arguments(p)
    p.set_defaults(func=node_main)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
