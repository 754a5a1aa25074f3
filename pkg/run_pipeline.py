"""
Main script to run the pipeline
Subcommands: simulate, discover, oracle-check, evaluate, fixtures
"""
import argparse
import logging
import os
import sys
from dataclasses import dataclass
from typing import List, Optional

import pandas as pd

from ci_tests import CI_BACKENDS, CiTestError, make_ci_test
from cim import OrientationConflictError, WaveAssignment, pc_stable_baseline, run_cim
from config import (
    ALPHA, BOOTSTRAP_REPLICATES, CI_TEST, DATA_DIR, FIXTURES_DIR, LOG_LEVEL, MAX_COND_SIZE, METRIC_MIN_WAVE,
    N_JOBS, RANDOM_SEED, REPORTS_DIR,
)
from data_generator import (
    MAX_REALIZED_COMPONENTS, STANDIN_PROFILES, SynthConfig, generate_instance, generate_standin, save_instance,
)
from data_preprocessing import DataPreprocessor, parse_wave_groups
from evaluation import ALGORITHMS, Evaluator, relation_truth, synthetic_benchmark
from worked_examples import FixtureFailure, assert_fixtures_pass, worked_example_suite
from graph_core import InputError
from graph_io import read_ground_truth, read_mixed_graph, read_mixture, read_prior, read_waves, write_json, \
    write_mixed_graph, write_mixture
from property_audit import SUITE_SIZES, PropertyAuditor

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFLICT = 3
EXIT_FIXTURE = 4


@dataclass
class RunConfig:
    """Settings shared by every subcommand; flags fall back to the config module"""
    seed: int = RANDOM_SEED
    alpha: float = ALPHA
    ci_test: str = CI_TEST
    max_cond_size: Optional[int] = MAX_COND_SIZE
    n_jobs: int = N_JOBS

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InputError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.ci_test not in CI_BACKENDS:
            raise InputError(f"Unknown CI test '{self.ci_test}'; choose from {', '.join(CI_BACKENDS)}")
        if self.n_jobs == 0:
            raise InputError("--jobs must be nonzero (-1 uses every core)")
        if self.max_cond_size is not None and self.max_cond_size < 0:
            raise InputError("--max-cond-size must be nonnegative")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        return cls(
            seed=getattr(args, "seed", RANDOM_SEED),
            alpha=getattr(args, "alpha", ALPHA),
            ci_test=getattr(args, "ci_test", CI_TEST),
            max_cond_size=getattr(args, "max_cond_size", MAX_COND_SIZE),
            n_jobs=getattr(args, "jobs", N_JOBS),
        )


def _cond_size(text: str) -> Optional[int]:
    if text.lower() == "none":
        return None
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'none', got '{text}'")


def _banner(title: str):
    print("\n" + "=" * 80)
    print(title)
    print("=" * 80)


def _algorithms(text: str) -> List[str]:
    names = [a.strip() for a in text.split(",") if a.strip()]
    unknown = [a for a in names if a not in ALGORITHMS]
    if not names or unknown:
        raise InputError(f"Unknown algorithm(s) {unknown}; choose from {', '.join(ALGORITHMS)}")
    return names


def _load_inputs(args, cfg: RunConfig):
    """Dataset, waves and mixture for discover / evaluate"""
    mixture = read_mixture(args.mixture) if args.mixture else None
    data = None
    if cfg.ci_test == "oracle":
        if mixture is None:
            raise InputError("--ci-test oracle needs --mixture")
        waves = read_waves(args.waves) if args.waves else WaveAssignment(mixture.waves())
    else:
        if not args.data or not args.waves:
            raise InputError(f"--ci-test {cfg.ci_test} needs --data and --waves")
        data, waves = DataPreprocessor(verbose=False).load_dataset(args.data, args.waves)
    return data, waves, mixture


def cmd_simulate(args, cfg: RunConfig) -> int:
    _banner(f"SIMULATE ({args.profile})")
    if args.profile == "synthetic":
        low, high = SynthConfig.q_range
        if args.oracle_skeleton:
            # realized mixtures are only built for small q
            low, high = min(low, MAX_REALIZED_COMPONENTS), min(high, MAX_REALIZED_COMPONENTS)
        synth = SynthConfig(p=args.p, n_waves=args.n_waves, q_range=(low, high),
                            n_samples=args.n or SynthConfig.n_samples, seed=cfg.seed)
        sem, dataset, truth = generate_instance(synth, oracle_skeleton=args.oracle_skeleton)
        paths = save_instance(dataset, args.out, args.prefix or "synthetic", truth=truth)
        if args.oracle_skeleton:
            paths["mixture"] = os.path.join(args.out, f"{args.prefix or 'synthetic'}_mixture.json")
            write_mixture(sem.to_mixture_graph(), paths["mixture"])
        print(f"Instance: q={sem.q}, latent={sem.latent}, selection={sem.selection}")
    else:
        dataset, relations = generate_standin(args.profile, n=args.n, seed=cfg.seed)
        paths = save_instance(dataset, args.out, args.prefix or args.profile, relations=relations)
    print(f"Records: {len(dataset.data)}, variables: {dataset.data.shape[1]}")
    for kind, path in paths.items():
        print(f"✓ {kind}: {path}")
    return EXIT_OK


def cmd_discover(args, cfg: RunConfig) -> int:
    data, waves, mixture = _load_inputs(args, cfg)
    ci = make_ci_test(cfg.ci_test, data=data, mixture=mixture, alpha=cfg.alpha)
    max_cond_size = None if cfg.ci_test == "oracle" else cfg.max_cond_size
    log: list = []

    _banner(f"DISCOVER ({args.algorithm}, {cfg.ci_test})")
    if args.algorithm == "cim":
        pk = read_prior(args.prior) if args.prior else None
        est = run_cim(ci, waves, pk, max_cond_size=max_cond_size, n_jobs=cfg.n_jobs, log=log)
    else:
        if args.prior:
            raise InputError("--prior is only used by the cim algorithm")
        est = pc_stable_baseline(ci, waves, max_cond_size=max_cond_size, n_jobs=cfg.n_jobs, log=log)

    write_mixed_graph(est, args.out)
    print(f"Variables: {len(est.labels)}, edges: {len(est.edges())}, CI tests: {len(log)}")
    print(f"✓ Graph saved to {args.out}")
    if args.log:
        write_json({
            "algorithm": args.algorithm, "ci_test": cfg.ci_test, "alpha": cfg.alpha,
            "max_cond_size": max_cond_size, "decisions": log,
        }, args.log)
        print(f"✓ CI decision log saved to {args.log}")
    return EXIT_OK


def cmd_oracle_check(args, cfg: RunConfig) -> int:
    _banner(f"ORACLE PROPERTY CHECK ({args.scale})")
    auditor = PropertyAuditor(seed=cfg.seed, n_jobs=cfg.n_jobs, reports_dir=args.reports_dir)
    suites = [s.strip() for s in args.suites.split(",")] if args.suites else None
    results = auditor.run_all(scale=args.scale, suites=suites)
    auditor.generate_audit_report(results, output_file=args.out)
    if all(r.passed for r in results.values()):
        return EXIT_OK
    print("\n⚠ Property violations found")
    return EXIT_FIXTURE


def _scoring_waves(args) -> Optional[WaveAssignment]:
    """Waves for scoring an existing graph: only relation truth needs them"""
    if not args.relations:
        return None
    if args.waves:
        return read_waves(args.waves)
    if args.mixture:
        return WaveAssignment(read_mixture(args.mixture).waves())
    raise InputError("--relations needs --waves (or --mixture) to place arrowheads")


def cmd_evaluate(args, cfg: RunConfig) -> int:
    algorithms = _algorithms(args.algorithms)
    if args.benchmark:
        _banner(f"SYNTHETIC BENCHMARK ({args.benchmark} repetitions)")
        synth = SynthConfig(seed=cfg.seed)
        results = synthetic_benchmark(synth, args.benchmark, algorithms, cfg.ci_test, cfg.alpha,
                                      cfg.max_cond_size, cfg.n_jobs)
        _print_summary(results.summary)
        path = os.path.join(args.reports_dir, args.out)
        write_json(results.to_dict(), path)
        print(f"✓ Benchmark report saved to {path}")
        if args.csv:
            path = os.path.join(args.reports_dir, args.csv)
            pd.DataFrame(results.rows()).to_csv(path, index=False)
            print(f"✓ Replicate table saved to {path}")
        return EXIT_OK

    if bool(args.truth) == bool(args.relations):
        raise InputError("evaluate needs exactly one of --truth or --relations (or --benchmark)")

    if args.graph:
        data, waves, mixture = None, _scoring_waves(args), None
    else:
        data, waves, mixture = _load_inputs(args, cfg)
    if args.relations:
        truth = relation_truth(args.relations, waves)
        min_wave = None
    else:
        truth = read_ground_truth(args.truth)
        min_wave = METRIC_MIN_WAVE

    evaluator = Evaluator(truth, ci_test=cfg.ci_test, alpha=cfg.alpha, max_cond_size=cfg.max_cond_size,
                          min_wave=min_wave, n_jobs=cfg.n_jobs, mixture=mixture, reports_dir=args.reports_dir)
    if args.graph:
        _banner("EVALUATE GRAPH")
        report = evaluator.evaluate_graph(read_mixed_graph(args.graph), args.algorithm_name,
                                          {"graph": args.graph})
        print(f"Sensitivity: {report.sensitivity:.3f}")
        print(f"Fallout: {report.fallout:.3f}")
        print(f"Overall: {report.overall:.3f}")
        evaluator.save_report(report, args.out)
        return EXIT_OK

    run_waves = waves
    if args.merge_waves:
        run_waves = DataPreprocessor(verbose=False).merge_waves(waves, parse_wave_groups(args.merge_waves))

    _banner(f"BOOTSTRAP COMPARISON (B={args.bootstrap})")
    results = evaluator.bootstrap_compare(data, run_waves, algorithms, args.bootstrap, cfg.seed)
    results.metadata["merged_waves"] = args.merge_waves
    _print_summary(results.summary)
    evaluator.save_report(results, args.out)
    if args.csv:
        evaluator.save_csv(results, args.csv)
    return EXIT_OK


def _print_summary(summary: dict):
    for algorithm, metrics in summary.items():
        print(f"\n{algorithm}:")
        for metric in ("sensitivity", "fallout", "overall"):
            m = metrics[metric]
            print(f"  {metric:<12} {m['mean']:.3f}  [{m['ci_low']:.3f}, {m['ci_high']:.3f}]")
        if "n_excluded" in metrics and metrics["n_excluded"]:
            print(f"  ⚠ {metrics['n_excluded']} replicate(s) excluded")


def cmd_fixtures(args, cfg: RunConfig) -> int:
    _banner("WORKED EXAMPLES")
    results = worked_example_suite(args.fixtures_dir)
    for result in results:
        status = "✓" if result.passed else "✗"
        print(f"{status} {result.name}")
        for message in result.messages:
            print(f"    {message}")
    assert_fixtures_pass(results)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Causal discovery on longitudinal data from mixtures of DAGs")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, ci: bool = True):
        p.add_argument("--seed", type=int, default=RANDOM_SEED, help="Random seed (env CIM_SEED)")
        p.add_argument("--jobs", type=int, default=N_JOBS, help="Worker count; -1 uses every core")
        if ci:
            p.add_argument("--ci-test", choices=CI_BACKENDS, default=CI_TEST, help="Conditional independence test")
            p.add_argument("--alpha", type=float, default=ALPHA, help="Significance level")
            p.add_argument("--max-cond-size", type=_cond_size, default=MAX_COND_SIZE,
                           help="Largest conditioning set in statistical mode ('none' for unbounded)")
            p.add_argument("--data", type=str, help="Dataset CSV with a header row")
            p.add_argument("--waves", type=str, help="Waves JSON mapping every column to a wave")
            p.add_argument("--mixture", type=str, help="Mixture JSON (oracle mode)")

    p = sub.add_parser("simulate", help="Generate a synthetic or stand-in dataset")
    common(p, ci=False)
    p.add_argument("--profile", choices=["synthetic"] + list(STANDIN_PROFILES), default="synthetic")
    p.add_argument("--out", type=str, default=DATA_DIR, help="Output directory")
    p.add_argument("--prefix", type=str, help="File name prefix (default: the profile name)")
    p.add_argument("--p", type=int, default=SynthConfig.p, help="Number of variables (synthetic)")
    p.add_argument("--n-waves", type=int, default=SynthConfig.n_waves, help="Number of waves (synthetic)")
    p.add_argument("--n", type=int, default=None, help="Number of samples")
    p.add_argument("--oracle-skeleton", action="store_true",
                   help="Truth skeleton from oracle skeleton discovery (small q only); also writes the mixture")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("discover", help="Run CIM or the PC baseline")
    common(p)
    p.add_argument("--algorithm", choices=list(ALGORITHMS), default="cim")
    p.add_argument("--prior", type=str, help="Prior-knowledge JSON (cim only)")
    p.add_argument("--out", type=str, required=True, help="Mixed-graph output file")
    p.add_argument("--log", type=str, help="JSON log of every CI decision")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("oracle-check", help="Run the oracle property suites")
    common(p, ci=False)
    p.add_argument("--scale", choices=list(SUITE_SIZES), default="full")
    p.add_argument("--suites", type=str, help="Comma-separated subset of suites")
    p.add_argument("--reports-dir", type=str, default=REPORTS_DIR)
    p.add_argument("--out", type=str, default="oracle_check_report.txt")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("evaluate", help="Score algorithms against a truth file or known relations")
    common(p)
    p.add_argument("--truth", type=str, help="Ground-truth mixed-graph file")
    p.add_argument("--relations", type=str, help="Known-relation JSON")
    p.add_argument("--graph", type=str, help="Score this discovered graph instead of running algorithms")
    p.add_argument("--algorithm-name", type=str, default="external", help="Label for --graph")
    p.add_argument("--algorithms", type=str, default="cim,pc")
    p.add_argument("--bootstrap", type=int, default=BOOTSTRAP_REPLICATES, help="Bootstrap replicates")
    p.add_argument("--merge-waves", type=str, help="Wave groups to merge before discovery, e.g. 2,3")
    p.add_argument("--benchmark", type=int, default=0, help="Run the synthetic benchmark with this many repetitions")
    p.add_argument("--reports-dir", type=str, default=REPORTS_DIR)
    p.add_argument("--out", type=str, default="evaluation_report.json")
    p.add_argument("--csv", type=str, help="Per-replicate CSV file name")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fixtures", help="Reproduce the worked examples in oracle mode")
    p.add_argument("--fixtures-dir", type=str, default=FIXTURES_DIR)
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_args(args)
        return args.func(args, cfg)
    except (InputError, CiTestError) as e:
        print(f"\nError: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OrientationConflictError as e:
        print(f"\nOrientation conflict: {e}", file=sys.stderr)
        return EXIT_CONFLICT
    except FixtureFailure as e:
        print(f"\nFixture failure:\n{e}", file=sys.stderr)
        return EXIT_FIXTURE


if __name__ == "__main__":
    sys.exit(main())
