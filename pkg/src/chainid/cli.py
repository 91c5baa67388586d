"""Command-line front end: ``chainid {generate,learn,eval,bench,verify}``.

Exit codes: 0 success, 1 runtime or numeric failure, 2 usage error. When the
CHAINID_SEED environment variable is set it overrides ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import ChainIdError
from .evaluation import BenchmarkConfig, format_table, run_trials, score, write_outputs
from .graph import ChainGraph
from .learning import (
    DEFAULT_ALPHA,
    LearnResult,
    empirical_covariance,
    learn_order_known,
    learn_unknown,
    recover_edges,
)
from .linalg import CovMatrix
from .sem import (
    AmpSem,
    Dataset,
    check_known_condition,
    check_unknown_conditions,
    generate_certified_known_instance,
    generate_certified_unknown_instance,
    generate_sem,
    population_covariance,
    sample,
)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def _dump(obj) -> str:
    # json writes floats with repr, the shortest string that round-trips exactly
    return json.dumps(obj, indent=2) + "\n"


def _read_text(path: str) -> str:
    return sys.stdin.read() if path == "-" else Path(path).read_text()


def _seed(args) -> int:
    env = os.environ.get("CHAINID_SEED")
    if env is not None and env.strip():
        return int(env)
    return args.seed


def _fail(exc: Exception) -> int:
    err = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("block", "gap", "step", "failed_condition"):
        value = getattr(exc, attr, None)
        if value is not None:
            err[attr] = list(value) if isinstance(value, tuple) else value
    sys.stderr.write(json.dumps(err) + "\n")
    return EXIT_FAILURE


def _load_cov(text: str) -> CovMatrix:
    data = json.loads(text)
    return CovMatrix.from_dict(data) if isinstance(data, dict) else CovMatrix(data)


def _load_components(text: str) -> list[list[int]]:
    data = json.loads(text)
    if isinstance(data, dict):
        data = data["components"]
    return [list(map(int, c)) for c in data]


def cmd_generate(args, parser) -> int:
    if not 1 <= args.components <= args.n_vars:
        parser.error(f"--components must be between 1 and --n-vars ({args.n_vars})")
    seed = _seed(args)
    if args.certified == "unknown":
        sem = generate_certified_unknown_instance(
            args.n_vars, args.components, seed, margin=args.margin,
            expected_neighbors=args.expected_neighbors, noise=args.noise,
        )
    elif args.certified == "known":
        sem = generate_certified_known_instance(args.n_vars, args.components, seed, args.expected_neighbors)
    else:
        sem = generate_sem(args.n_vars, args.components, args.expected_neighbors, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "sem.json", out / "graph.json", out / "cov.json"]
    written[0].write_text(_dump(sem.to_dict()))
    written[1].write_text(_dump(sem.graph.to_dict()))
    written[2].write_text(_dump(population_covariance(sem).to_dict()))
    if args.samples:
        # sampling gets its own stream so adding --samples never changes the instance
        data = sample(sem, args.samples, seed + 1)
        written.append(out / "data.csv")
        written[-1].write_text(data.to_csv())
    for path in written:
        print(path)
    return EXIT_OK


def cmd_learn(args, parser) -> int:
    if args.cov is not None:
        sigma, n, mode = _load_cov(_read_text(args.cov)), None, "population"
    else:
        data = Dataset.from_csv(_read_text(args.data))
        sigma, n, mode = empirical_covariance(data), data.n_samples, "empirical"
    if args.known:
        result = learn_order_known(sigma, _load_components(_read_text(args.known)), args.stat)
    else:
        trace = sys.stderr if args.verbose else None
        result = learn_unknown(sigma, args.sfm, trace=trace)
    result.mode = mode
    result.recovered_graph = recover_edges(sigma, result.partition, result.order, args.alpha, n)
    sys.stdout.write(_dump(result.to_dict()))
    return EXIT_OK


def cmd_eval(args, parser) -> int:
    truth_data = json.loads(_read_text(args.truth))
    truth = ChainGraph.from_dict(truth_data)
    learned_data = json.loads(_read_text(args.learned))
    graph = ChainGraph.from_dict(learned_data["graph"]) if learned_data.get("graph") else None
    learned = LearnResult(
        list(learned_data["order"]),
        [tuple(c) for c in learned_data["partition"]],
        list(learned_data.get("step_values", [])),
        graph,
    )
    distance, order_ok, partition_ok = score(truth, learned)
    sys.stdout.write(_dump({"shd": distance, "order_correct": order_ok, "partition_correct": partition_ok}))
    return EXIT_OK


def cmd_bench(args, parser) -> int:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    overrides = {
        "d_list": args.d,
        "n_trials": args.trials,
        "n_samples": args.samples,
        "mode": args.mode,
        "algorithm": args.algorithm,
        "stat": args.stat,
        "margin": args.margin,
        "component_size": args.component_size,
        "sfm_method": args.sfm,
        "base_seed": args.seed,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    env = os.environ.get("CHAINID_SEED")
    if env is not None and env.strip():
        data["base_seed"] = int(env)
    try:
        config = BenchmarkConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        parser.error(str(exc))
    reports = run_trials(config, jobs=args.jobs)
    rows = write_outputs(args.out, config, reports)
    sys.stdout.write(format_table(rows))
    return EXIT_FAILURE if all(r.failed for r in reports) else EXIT_OK


def cmd_verify(args, parser) -> int:
    sem = AmpSem.from_dict(json.loads(_read_text(args.sem)))
    out = {}
    ok = True
    if args.conditions in ("known", "all"):
        report = check_known_condition(sem, stat=args.stat)
        out["known"] = report.to_dict()
        ok &= report.ok
    if args.conditions in ("unknown", "all"):
        report = check_unknown_conditions(sem, margin=args.margin)
        out["unknown"] = report.to_dict()
        ok &= report.ok
    out["ok"] = bool(ok)
    sys.stdout.write(_dump(out))
    return EXIT_OK if ok else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chainid", description="Identify AMP chain graphs from covariances.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a random SEM, its covariance and optional samples")
    gen.add_argument("--n-vars", type=int, required=True)
    gen.add_argument("--components", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--certified", nargs="?", const="unknown", choices=["known", "unknown"],
                     help="certify the instance for known-component ordering or full recovery (default)")
    gen.add_argument("--margin", type=float, default=0.2)
    gen.add_argument("--noise", choices=["equicorrelation", "laplacian"], default="equicorrelation")
    gen.add_argument("--expected-neighbors", type=float, default=2.0)
    gen.add_argument("--samples", type=int, default=0)
    gen.add_argument("--out", default=".")
    gen.set_defaults(func=cmd_generate)

    learn = sub.add_parser("learn", help="learn components, order and edges")
    src = learn.add_mutually_exclusive_group(required=True)
    src.add_argument("--cov", help="covariance JSON ('-' for stdin)")
    src.add_argument("--data", help="sample CSV ('-' for stdin)")
    learn.add_argument("--known", help="components JSON; selects known-component ordering")
    learn.add_argument("--stat", default="determinant")
    learn.add_argument("--sfm", choices=["brute", "mnp", "auto"], default="auto")
    learn.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    learn.add_argument("--verbose", action="store_true", help="write the SFM trace to stderr")
    learn.set_defaults(func=cmd_learn)

    ev = sub.add_parser("eval", help="score a learn result against the true graph")
    ev.add_argument("--learned", required=True)
    ev.add_argument("--truth", required=True, help="graph JSON")
    ev.set_defaults(func=cmd_eval)

    bench = sub.add_parser("bench", help="run a benchmark sweep")
    bench.add_argument("--config", help="JSON file with BenchmarkConfig fields")
    bench.add_argument("--d", type=int, nargs="+")
    bench.add_argument("--trials", type=int)
    bench.add_argument("--samples", type=int)
    bench.add_argument("--mode", choices=["population", "empirical"])
    bench.add_argument("--algorithm", choices=["known", "unknown"])
    bench.add_argument("--stat")
    bench.add_argument("--margin", type=float)
    bench.add_argument("--component-size", type=int)
    bench.add_argument("--sfm", choices=["brute", "mnp", "auto"])
    bench.add_argument("--seed", type=int)
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument("--out", default="bench_out")
    bench.set_defaults(func=cmd_bench)

    ver = sub.add_parser("verify", help="check the identifiability conditions of a SEM")
    ver.add_argument("--sem", required=True)
    ver.add_argument("--conditions", choices=["known", "unknown", "all"], default="all")
    ver.add_argument("--stat", default="determinant")
    ver.add_argument("--margin", type=float, default=0.0)
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (ChainIdError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
