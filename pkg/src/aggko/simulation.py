"""Monte-Carlo harness comparing plain knockoffs (KO) with aggregated knockoffs (AKO).

Each repetition draws a fresh AR(1) Gaussian design, a sparse coefficient
vector scaled to a fixed signal-to-noise ratio, and an outcome.  KO and AKO
are run on the same data; KO reuses the knockoff draw of AKO's first run, so
the two columns are paired.
"""

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml
from joblib import Parallel, delayed
from scipy.special import expit

from . import paths
from .aggregate import (
    ScheduleKind,
    empirical_fdp,
    empirical_power,
    knockoff_statistics,
    make_schedule,
    run_seed,
    union_selection,
)
from .errors import AggkoError, DegenerateSignal, InvalidInput
from .filter import Variant, select
from .knockoffs import build_model, estimate_covariance
from .paths import Model
from .seeding import derive_seed

log = logging.getLogger(__name__)

DEFAULT_Q_GRID = (0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5)
METHODS = ("KO", "AKO")

# sub-seed tags within one repetition
_TAG_DESIGN, _TAG_BETA, _TAG_OUTCOME, _TAG_KNOCKOFFS = 1, 2, 3, 4
_MAX_REDRAWS = 100


def ar1_covariance(p, rho):
    idx = np.arange(p)
    return rho ** np.abs(np.subtract.outer(idx, idx))


def gen_ar1_design(n, p, rho, seed):
    """n i.i.d. rows from N(0, Sigma) with Sigma_ij = rho^|i-j|.

    Uses the exact AR(1) recursion x_j = rho x_{j-1} + sqrt(1 - rho^2) e_j,
    which is the lower-triangular factor of Sigma applied to white noise.
    """
    if not -1.0 < rho < 1.0:
        raise InvalidInput(f"rho must lie in (-1, 1), got {rho}")
    e = np.random.default_rng(seed).standard_normal((n, p))
    X = np.empty_like(e)
    X[:, 0] = e[:, 0]
    c = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        X[:, j] = rho * X[:, j - 1] + c * e[:, j]
    return X


def gen_sparse_beta(p, sparsity, X, snr=5.0, sigma2=1.0, seed=0):
    """Ones on a uniformly drawn support, rescaled so ||X beta||^2 / (n sigma2) = snr."""
    if not 0 <= sparsity <= p:
        raise InvalidInput(f"sparsity must lie in [0, p], got {sparsity}")
    beta = np.zeros(p)
    if sparsity == 0:
        return beta
    support = np.random.default_rng(seed).choice(p, size=sparsity, replace=False)
    beta[support] = 1.0
    energy = float(np.sum((X @ beta) ** 2))
    if energy == 0.0:
        raise DegenerateSignal("X beta is identically zero")
    return beta * math.sqrt(snr * X.shape[0] * sigma2 / energy)


def gen_outcome(X, beta, model=Model.LINEAR, sigma2=1.0, seed=0):
    rng = np.random.default_rng(seed)
    eta = X @ beta
    if Model(model) is Model.LINEAR:
        return eta + math.sqrt(sigma2) * rng.standard_normal(X.shape[0])
    return (rng.random(X.shape[0]) < expit(eta)).astype(np.float64)


@dataclass
class ExperimentConfig:
    n: int = 200
    p: int = 100
    rho: float = 0.5
    sparsity: int = 20
    snr: float = 5.0
    sigma2: float = 1.0
    model: Model = Model.LINEAR
    q_grid: tuple = DEFAULT_Q_GRID
    variant: Variant = Variant.KO
    schedule_kind: ScheduleKind = ScheduleKind.GEOMETRIC
    k: int = 5
    reps: int = 100
    master_seed: int = 0
    # Sigma is known in the simulations; set True to estimate it from X
    estimate_sigma: bool = False
    shrinkage: float = 0.0
    grid_size: int = 100
    lambda_min_ratio: float = 1e-3

    def __post_init__(self):
        self.model = Model(self.model)
        self.variant = Variant(self.variant)
        self.schedule_kind = ScheduleKind(self.schedule_kind)
        self.q_grid = tuple(float(q) for q in self.q_grid)
        if not 0 <= self.sparsity <= self.p:
            raise InvalidInput("sparsity must lie in [0, p]")
        if not -1.0 < self.rho < 1.0:
            raise InvalidInput("rho must lie in (-1, 1)")
        if self.reps < 1 or self.k < 1:
            raise InvalidInput("reps and k must be at least 1")
        if self.schedule_kind is ScheduleKind.CUSTOM:
            raise InvalidInput("the harness builds geometric or uniform schedules only")

    @property
    def path_config(self):
        return paths.PathConfig(
            model=self.model, grid_size=self.grid_size, lambda_min_ratio=self.lambda_min_ratio
        )

    @classmethod
    def from_file(cls, path):
        """Read a JSON (``.json``) or YAML / ``key: value`` config file."""
        text = Path(path).read_text()
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        if not isinstance(data, dict):
            raise InvalidInput(f"{path}: expected a mapping of config fields")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidInput(f"{path}: unknown config fields {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        d = asdict(self)
        d["model"] = self.model.value
        d["variant"] = self.variant.value
        d["schedule_kind"] = self.schedule_kind.value
        d["q_grid"] = list(self.q_grid)
        return d


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    aggregate: list
    failures: list = field(default_factory=list)
    redrawn_outcomes: int = 0

    def cell(self, q, method):
        for row in self.aggregate:
            if row["method"] == method and math.isclose(row["q"], q):
                return row
        raise KeyError((q, method))

    def paired_difference(self, q, metric="power_conventional"):
        """Mean and standard error of AKO - KO for ``metric`` across repetitions."""
        by_rep = {}
        for r in self.records:
            if math.isclose(r["q"], q):
                by_rep.setdefault(r["rep"], {})[r["method"]] = r[metric]
        diffs = np.array([v["AKO"] - v["KO"] for v in by_rep.values()], dtype=float)
        se = diffs.std(ddof=1) / math.sqrt(diffs.size) if diffs.size > 1 else 0.0
        return float(diffs.mean()), float(se)

    def write_csv(self, raw_path, aggregate_path):
        raw_cols = ["rep", "q", "method", "variant", "fdp", "tdp_paper",
                    "power_conventional", "n_selected", "seed"]
        agg_cols = ["q", "method", "mean_fdr", "se_fdr", "mean_power", "se_power", "reps"]
        with open(raw_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=raw_cols, extrasaction="ignore")
            writer.writeheader()
            writer.writerows(self.records)
        with open(aggregate_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=agg_cols, extrasaction="ignore")
            writer.writeheader()
            writer.writerows(self.aggregate)


def _draw_data(cfg, rep_seed):
    X = gen_ar1_design(cfg.n, cfg.p, cfg.rho, derive_seed(rep_seed, _TAG_DESIGN))
    beta = gen_sparse_beta(cfg.p, cfg.sparsity, X, cfg.snr, cfg.sigma2, derive_seed(rep_seed, _TAG_BETA))
    redraws = 0
    while True:
        y = gen_outcome(X, beta, cfg.model, cfg.sigma2, derive_seed(rep_seed, _TAG_OUTCOME, redraws))
        if cfg.model is Model.LINEAR or 0.0 < y.mean() < 1.0:
            break
        redraws += 1
        if redraws >= _MAX_REDRAWS:
            raise AggkoError("logistic outcome kept coming out single-class")
    return X, beta, y, redraws


def run_repetition(cfg, rep):
    """Data, knockoff statistics and per-q metrics for repetition ``rep``.

    Returns ``(records, redraws)``.  The path fits do not depend on q, so the
    k W vectors are computed once and filtered at every level of every q.
    """
    rep_seed = derive_seed(cfg.master_seed, rep)
    X, beta, y, redraws = _draw_data(cfg, rep_seed)
    truth = set(np.flatnonzero(beta).tolist())

    sigma = (estimate_covariance(X, cfg.shrinkage) if cfg.estimate_sigma
             else ar1_covariance(cfg.p, cfg.rho))
    model = build_model(sigma)
    ako_master = derive_seed(rep_seed, _TAG_KNOCKOFFS)
    seeds = [run_seed(ako_master, i) for i in range(1, cfg.k + 1)]
    stats = [knockoff_statistics(X, y, model, cfg.path_config, s) for s in seeds]

    records = []
    for q in cfg.q_grid:
        schedule = make_schedule(q, cfg.k, cfg.schedule_kind)
        ako, _ = union_selection(stats, schedule, cfg.variant, seeds)
        ko = select(stats[0].w, q, cfg.variant, seed=seeds[0]).selected
        for method, sel in (("KO", ko), ("AKO", ako)):
            records.append({
                "rep": rep,
                "q": q,
                "method": method,
                "variant": cfg.variant.value,
                "fdp": empirical_fdp(sel, truth),
                "tdp_paper": empirical_power(sel, truth, "tdp_paper"),
                "power_conventional": (empirical_power(sel, truth) if truth else math.nan),
                "n_selected": len(sel),
                "seed": rep_seed,
            })
    return records, redraws


def _safe_repetition(cfg, rep):
    try:
        records, redraws = run_repetition(cfg, rep)
        return rep, records, redraws, None
    except AggkoError as exc:
        return rep, [], 0, f"{type(exc).__name__}: {exc}"


def aggregate_records(records, q_grid):
    out = []
    for q in q_grid:
        for method in METHODS:
            rows = [r for r in records if r["method"] == method and math.isclose(r["q"], q)]
            fdp = np.array([r["fdp"] for r in rows], dtype=float)
            power = np.array([r["power_conventional"] for r in rows], dtype=float)
            m = len(rows)

            def se(x):
                return float(x.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0

            out.append({
                "q": q,
                "method": method,
                "mean_fdr": float(fdp.mean()) if m else math.nan,
                "se_fdr": se(fdp),
                "mean_power": float(power.mean()) if m else math.nan,
                "se_power": se(power),
                "mean_tdp": float(np.mean([r["tdp_paper"] for r in rows])) if m else math.nan,
                "reps": m,
            })
    return out


def run_experiment(cfg, n_jobs=1, progress=None):
    """Run ``cfg.reps`` repetitions and aggregate FDR / power per (q, method).

    A repetition that raises a package error is recorded in ``failures`` and
    excluded from the means.  Results are identical for any ``n_jobs``.
    """
    if n_jobs == 1:
        outcomes = []
        for rep in range(cfg.reps):
            outcomes.append(_safe_repetition(cfg, rep))
            if progress is not None:
                progress(rep + 1, cfg.reps)
    else:
        outcomes = Parallel(n_jobs=n_jobs)(delayed(_safe_repetition)(cfg, rep) for rep in range(cfg.reps))
    outcomes.sort(key=lambda o: o[0])

    records, failures, redrawn = [], [], 0
    for rep, recs, redraws, err in outcomes:
        if err is not None:
            log.warning("repetition %d failed and is excluded: %s", rep, err)
            failures.append({"rep": rep, "error": err})
            continue
        records.extend(recs)
        redrawn += redraws
    return ExperimentResult(
        config=cfg,
        records=records,
        aggregate=aggregate_records(records, cfg.q_grid),
        failures=failures,
        redrawn_outcomes=redrawn,
    )
