"""Command-line entry point.

Exit codes: 0 success, 1 run finished but the specification is unmet (or the
run stopped on a simulation error), 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import geometry, results
from .config import load_config, make_simulator
from .errors import ConfigError, TopoAntError
from .objectives import classifier_score
from .pipeline import BENCHMARK, Evaluator, benchmark, candidate_seed, run_variable_fidelity
from .simulator import LOW

EXIT_OK, EXIT_UNMET, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("topoant")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="topoant", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, type=Path, help="JSON run configuration")
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--workers", type=int, help="override parallel_workers")
        sp.add_argument("--simulator", choices=("mock", "external"),
                        help="override the configured simulator")

    gen = sub.add_parser("generate", help="generate and score random candidates")
    common(gen)
    gen.add_argument("--n", type=int, help="number of candidates (default: n_candidates)")
    common(sub.add_parser("optimize", help="run the configured design strategy"))
    common(sub.add_parser("benchmark", help="compare optimization methods from one start"))
    exp = sub.add_parser("export", help="polygon CSV and Touchstone file from a result")
    exp.add_argument("--result", required=True, type=Path, help="result.json of a run")
    exp.add_argument("--design", default="x_f_star", choices=("x0", "x_c_star", "x_f_star"))
    exp.add_argument("--out", type=Path, default=Path("out"))
    return p


def _setup(args):
    cfg, sim_rec = load_config(args.config, seed=args.seed, workers=args.workers)
    return cfg, make_simulator(sim_rec, args.simulator)


def cmd_generate(args) -> int:
    cfg, sim = _setup(args)
    n = cfg.n_candidates if args.n is None else args.n
    if n < 1:
        raise ConfigError("--n: must be >= 1", "n")
    ev = Evaluator(sim)
    gb = cfg.generation_bounds()
    xs, scores = [], []
    for i in range(n):
        x = geometry.generate_candidate(cfg.L, candidate_seed(cfg.seed, i), gb)
        xs.append(x)
        scores.append(classifier_score(ev.response(x, cfg.narrow_sweep, LOW, "init"), cfg.band))
    args.out.mkdir(parents=True, exist_ok=True)
    results.write_candidates(args.out / "candidates.csv", xs, scores)
    results.write_json(args.out / "candidates.json", {
        "seed": cfg.seed,
        "candidates": [{**geometry.design_record(x), "score_dB": s} for x, s in zip(xs, scores)],
        "cost": ev.ledger.summary(),
    })
    print(f"wrote {n} candidates to {args.out}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg, sim = _setup(args)
    if cfg.strategy == BENCHMARK:
        raise ConfigError("strategy: use the benchmark command for 'benchmark'", "strategy")
    res = run_variable_fidelity(cfg, sim)
    results.write_run(args.out, res)
    band = "none" if res.achieved_band is None else "%.4f-%.4f GHz" % res.achieved_band
    print(f"in-band max {res.in_band_max} dB, -10 dB band {band}, "
          f"cost {res.cost['rf_equivalent']:.1f} high-fidelity equivalents")
    if res.error:
        print(f"stopped early: {res.error}", file=sys.stderr)
    return EXIT_OK if res.spec_met else EXIT_UNMET


def cmd_benchmark(args) -> int:
    cfg, sim = _setup(args)
    rows = benchmark(cfg, sim)
    args.out.mkdir(parents=True, exist_ok=True)
    results.write_benchmark(args.out / "benchmark.csv", rows)
    for r in rows:
        print(f"{r['method']:>34}  {r['total_rf']:8.1f}  {r['u0_db']:7.2f} dB  {r['note']}")
    return EXIT_OK if all(r["spec_met"] for r in rows) else EXIT_UNMET


def cmd_export(args) -> int:
    try:
        files = results.export_result(args.result, args.out, args.design)
    except FileNotFoundError:
        raise ConfigError(f"--result: {args.result} not found", "result") from None
    except KeyError as exc:
        raise ConfigError(f"--design: {exc.args[0]}", "design") from None
    for path in files.values():
        print(path)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "optimize": cmd_optimize,
            "benchmark": cmd_benchmark, "export": cmd_export}


def run_cli(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TopoAntError as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNMET


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
