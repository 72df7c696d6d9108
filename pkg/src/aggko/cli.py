"""Command-line interface: ``aggko simulate | select | knockoffs``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import microbiome
from .data import fixture_paths
from .errors import AggkoError, SolverFailure
from .knockoffs import build_model, estimate_covariance, sample_knockoffs
from .simulation import ExperimentConfig, run_experiment

log = logging.getLogger("aggko")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="aggko", description="Knockoff and aggregated-knockoff FDR control.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run a Monte-Carlo experiment from a config file")
    sim.add_argument("config", type=Path, help="YAML or JSON experiment config")
    sim.add_argument("--out-dir", type=Path, default=Path("."))
    sim.add_argument("--seed", type=int, help="overrides master_seed in the config")
    sim.add_argument("--reps", type=int, help="overrides reps in the config")
    sim.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    sel = sub.add_parser("select", help="select taxa associated with obesity")
    src = sel.add_mutually_exclusive_group(required=True)
    src.add_argument("--counts", type=Path, help="counts CSV (sample id, then one column per taxon)")
    src.add_argument("--fixture", action="store_true", help="use the bundled synthetic 55-taxa fixture")
    sel.add_argument("--metadata", type=Path, help="metadata CSV with sample_id, age, bmi")
    sel.add_argument("--grouping", default="i", choices=list(microbiome.GROUPINGS))
    sel.add_argument("--method", default="ako", choices=["ko", "ako", "bh"])
    sel.add_argument("--q", type=float, default=0.1)
    sel.add_argument("--k", type=int, default=5)
    sel.add_argument("--schedule", default="geometric", choices=["geometric", "uniform"])
    sel.add_argument("--variant", default="ko", choices=["ko", "ko+"])
    sel.add_argument("--seed", type=int, default=0)
    sel.add_argument("--shrinkage", type=float, default=0.1)
    sel.add_argument("--zero-scope", default="global", choices=["global", "taxon"])
    sel.add_argument("--json", action="store_true", help="print the report as JSON")

    ko = sub.add_parser("knockoffs", help="sample one knockoff copy of a design matrix")
    ko.add_argument("design", type=Path, help="CSV with a header row and numeric columns")
    ko.add_argument("--seed", type=int, default=0)
    ko.add_argument("--shrinkage", type=float, default=0.1)
    ko.add_argument("--out", type=Path, help="output CSV (default: stdout)")
    return parser


def _simulate(args):
    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.reps is not None:
        cfg.reps = args.reps

    def progress(done, total):
        if done % max(1, total // 10) == 0 or done == total:
            log.info("repetition %d/%d", done, total)

    result = run_experiment(cfg, n_jobs=args.jobs, progress=progress)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    result.write_csv(args.out_dir / "raw.csv", args.out_dir / "aggregate.csv")
    for row in result.aggregate:
        print(f"q={row['q']:<5g} {row['method']:<4} FDR={row['mean_fdr']:.3f} (se {row['se_fdr']:.3f})"
              f"  power={row['mean_power']:.3f} (se {row['se_power']:.3f})")
    if result.failures:
        print(f"{len(result.failures)} repetition(s) failed and were excluded", file=sys.stderr)
    return EXIT_OK


def _select(args):
    if args.fixture:
        counts_path, metadata_path = fixture_paths()
    else:
        if args.metadata is None:
            raise _UsageError("--metadata is required with --counts")
        counts_path, metadata_path = args.counts, args.metadata
    table, metadata, n_missing = microbiome.load_table(counts_path, metadata_path)
    report = microbiome.run_selection(
        table, metadata, args.grouping,
        method=args.method, q=args.q, k=args.k, schedule=args.schedule,
        variant=args.variant, seed=args.seed, shrinkage=args.shrinkage,
        zero_scope=args.zero_scope,
    )
    if n_missing:
        report.warnings.insert(0, f"{n_missing} sample(s) without metadata were dropped")
    print(report.to_json() if args.json else report.to_text())
    return EXIT_OK


def _knockoffs(args):
    with open(args.design, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    try:
        X = np.array([[float(v) for v in r] for r in body if r])
    except ValueError as exc:
        raise microbiome.LoadError(f"{args.design}: {exc}") from None
    X_tilde = sample_knockoffs(X, build_model(estimate_covariance(X, args.shrinkage)), args.seed)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow([f"{h}_knockoff" for h in header])
        writer.writerows([[repr(float(v)) for v in r] for r in X_tilde])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"simulate": _simulate, "select": _select, "knockoffs": _knockoffs}[args.command]
    try:
        return handler(args)
    except _UsageError as exc:
        print(f"aggko: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverFailure as exc:
        print(f"aggko: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (AggkoError, OSError, KeyError) as exc:
        print(f"aggko: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
