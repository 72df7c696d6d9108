"""Microbiome abundance tables: loading, cohort filtering, zero imputation,
log transform, BMI groupings, and taxa selection by KO, AKO or BH.

Input files are plain CSV.  The counts file has the sample id in the first
column and one column per taxon; the metadata file has the columns
``sample_id``, ``age`` and ``bmi``.
"""

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from scipy.special import expit

from . import paths
from .aggregate import ScheduleKind, ako_select, make_schedule
from .errors import (
    AllZeroTable,
    DegenerateOutcome,
    EmptyCohort,
    EmptyGroup,
    InvalidInput,
    LoadError,
    NonPositiveEntry,
)
from .filter import Variant
from .knockoffs import build_model, estimate_covariance

log = logging.getLogger(__name__)

AGE_RANGE = (20.0, 69.0)
BMI_RANGE = (15.0, 60.0)
GROUPS = ("uw", "nor", "ow", "ob")
# lower BMI edge (kg/m^2) of each group; upper edges are exclusive
BMI_EDGES = {"uw": -math.inf, "nor": 18.5, "ow": 25.0, "ob": 30.0}


@dataclass
class AbundanceTable:
    counts: np.ndarray
    taxa_names: tuple
    sample_ids: tuple

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.float64)
        self.taxa_names = tuple(self.taxa_names)
        self.sample_ids = tuple(self.sample_ids)
        if self.counts.shape != (len(self.sample_ids), len(self.taxa_names)):
            raise InvalidInput("counts shape does not match sample ids / taxa names")
        if len(set(self.taxa_names)) != len(self.taxa_names):
            raise InvalidInput("taxa names must be unique")
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise InvalidInput("sample ids must be unique")
        if np.any(self.counts < 0):
            raise InvalidInput("counts must be non-negative")

    def rows(self, mask):
        mask = np.asarray(mask)
        ids = np.asarray(self.sample_ids, dtype=object)[mask]
        return AbundanceTable(self.counts[mask], self.taxa_names, tuple(ids))


@dataclass
class Metadata:
    """Per-sample age and BMI, aligned with the rows of an ``AbundanceTable``."""

    age: np.ndarray
    bmi: np.ndarray

    def rows(self, mask):
        return Metadata(self.age[mask], self.bmi[mask])


# -- loading -----------------------------------------------------------------

def _parse_float(text, path, line, column):
    try:
        value = float(text)
    except ValueError:
        raise LoadError(f"{path}: line {line}, column {column!r}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise LoadError(f"{path}: line {line}, column {column!r}: non-finite value {text!r}")
    return value


def _read_counts(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError(f"{path}: empty file") from None
        taxa = [t.strip() for t in header[1:]]
        if not taxa:
            raise LoadError(f"{path}: no taxa columns")
        if len(set(taxa)) != len(taxa):
            raise LoadError(f"{path}: duplicate taxa names in header")
        ids, rows = [], []
        seen = set()
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise LoadError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
            sid = row[0].strip()
            if sid in seen:
                raise LoadError(f"{path}: line {line}: duplicate sample id {sid!r}")
            seen.add(sid)
            values = [_parse_float(v, path, line, taxa[j]) for j, v in enumerate(row[1:])]
            for j, v in enumerate(values):
                if v < 0:
                    raise LoadError(f"{path}: line {line}, column {taxa[j]!r}: negative count {v}")
            ids.append(sid)
            rows.append(values)
    counts = np.array(rows, dtype=np.float64).reshape(len(rows), len(taxa))
    return ids, taxa, counts


def _read_metadata(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"sample_id", "age", "bmi"} - set(reader.fieldnames or ())
        if missing:
            raise LoadError(f"{path}: missing columns {sorted(missing)}")
        meta = {}
        for line, row in enumerate(reader, start=2):
            sid = row["sample_id"].strip()
            if sid in meta:
                raise LoadError(f"{path}: line {line}: duplicate sample id {sid!r}")
            meta[sid] = (
                _parse_float(row["age"], path, line, "age"),
                _parse_float(row["bmi"], path, line, "bmi"),
            )
    return meta


def load_table(counts_path, metadata_path):
    """Read counts and metadata, keeping samples present in both.

    Returns ``(table, metadata, n_missing)`` where ``n_missing`` counts the
    count-table samples dropped for lack of metadata.
    """
    ids, taxa, counts = _read_counts(counts_path)
    meta = _read_metadata(metadata_path)
    keep = np.array([sid in meta for sid in ids], dtype=bool)
    n_missing = int((~keep).sum())
    if n_missing:
        log.warning("%d sample(s) in %s have no metadata and were dropped", n_missing, counts_path)
    kept_ids = [sid for sid, k in zip(ids, keep) if k]
    table = AbundanceTable(counts[keep], taxa, kept_ids)
    metadata = Metadata(
        age=np.array([meta[s][0] for s in kept_ids], dtype=float),
        bmi=np.array([meta[s][1] for s in kept_ids], dtype=float),
    )
    return table, metadata, n_missing


def write_table(table, metadata, counts_path, metadata_path):
    with open(counts_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", *table.taxa_names])
        for sid, row in zip(table.sample_ids, table.counts):
            writer.writerow([sid, *(repr(float(v)) if v != int(v) else int(v) for v in row)])
    with open(metadata_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "age", "bmi"])
        for sid, age, bmi in zip(table.sample_ids, metadata.age, metadata.bmi):
            writer.writerow([sid, repr(float(age)), repr(float(bmi))])


# -- preprocessing -----------------------------------------------------------

def filter_cohort(table, metadata, age_range=AGE_RANGE, bmi_range=BMI_RANGE):
    """Keep samples with age and BMI inside the inclusive ranges."""
    mask = (
        (metadata.age >= age_range[0]) & (metadata.age <= age_range[1])
        & (metadata.bmi >= bmi_range[0]) & (metadata.bmi <= bmi_range[1])
    )
    if not mask.any():
        raise EmptyCohort(f"no samples with age in {age_range} and BMI in {bmi_range}")
    return table.rows(mask), metadata.rows(mask)


def impute_zeros(table, scope="global"):
    """Replace zeros by half the smallest positive abundance.

    ``scope="global"`` uses one minimum over the whole table; ``"taxon"``
    uses each taxon's own minimum positive value.
    """
    counts = table.counts
    positive = counts > 0
    if not positive.any():
        raise AllZeroTable("table has no positive entries")
    if scope == "global":
        fill = np.full(counts.shape[1], 0.5 * counts[positive].min())
    elif scope == "taxon":
        masked = np.where(positive, counts, np.inf)
        col_min = masked.min(axis=0)
        # an all-zero taxon falls back to the global minimum
        col_min[~np.isfinite(col_min)] = counts[positive].min()
        fill = 0.5 * col_min
    else:
        raise InvalidInput(f"unknown imputation scope {scope!r}")
    out = np.where(positive, counts, fill[None, :])
    return AbundanceTable(out, table.taxa_names, table.sample_ids)


def log_transform(table):
    """Natural log, then per-column centering and scaling (divisor n - 1).

    Zero-variance columns are dropped with a warning.  Returns ``(X, kept)``
    with ``kept`` the indices of the retained taxa.
    """
    if np.any(table.counts <= 0):
        raise NonPositiveEntry("log transform needs strictly positive entries; run impute_zeros first")
    logs = np.log(table.counts)
    sd = logs.std(axis=0, ddof=1) if logs.shape[0] > 1 else np.zeros(logs.shape[1])
    kept = np.flatnonzero(sd > 0)
    dropped = [table.taxa_names[j] for j in np.flatnonzero(~(sd > 0))]
    if dropped:
        warnings.warn(f"dropping zero-variance taxa: {', '.join(dropped)}", UserWarning, stacklevel=2)
    X = (logs[:, kept] - logs[:, kept].mean(axis=0)) / sd[kept]
    return X, kept


# -- outcome -----------------------------------------------------------------

@dataclass(frozen=True)
class GroupingSpec:
    name: str
    included_groups: frozenset
    positive_label: str = "ob"

    def __post_init__(self):
        groups = frozenset(self.included_groups)
        object.__setattr__(self, "included_groups", groups)
        if not groups <= set(GROUPS):
            raise InvalidInput(f"unknown BMI groups {sorted(groups - set(GROUPS))}")
        if "ob" not in groups or len(groups) < 2:
            raise InvalidInput("a grouping must include 'ob' and at least one other group")


GROUPINGS = {
    "i": GroupingSpec("i", {"uw", "nor", "ow", "ob"}),
    "ii": GroupingSpec("ii", {"uw", "ob"}),
    "iii": GroupingSpec("iii", {"nor", "ob"}),
    "iv": GroupingSpec("iv", {"ow", "ob"}),
    "v": GroupingSpec("v", {"uw", "nor", "ob"}),
    "vi": GroupingSpec("vi", {"uw", "ow", "ob"}),
    "vii": GroupingSpec("vii", {"nor", "ow", "ob"}),
}


def bmi_group(bmi):
    """Label each BMI: uw < 18.5 <= nor < 25 <= ow < 30 <= ob."""
    bmi = np.asarray(bmi, dtype=float)
    labels = np.full(bmi.shape, "uw", dtype=object)
    for name in ("nor", "ow", "ob"):
        labels[bmi >= BMI_EDGES[name]] = name
    return labels


def make_outcome(metadata, grouping):
    """Binary obesity outcome over the samples of the included groups.

    Returns ``(y, mask)``; ``mask`` marks the retained samples.
    """
    labels = bmi_group(metadata.bmi)
    empty = [g for g in sorted(grouping.included_groups, key=GROUPS.index) if not np.any(labels == g)]
    for g in empty:
        warnings.warn(f"grouping {grouping.name}: group {g!r} has no samples", EmptyGroup, stacklevel=2)
    mask = np.isin(labels, list(grouping.included_groups))
    y = (labels[mask] == grouping.positive_label).astype(np.float64)
    if y.size == 0 or y.min() == y.max():
        why = f" (empty groups: {', '.join(empty)})" if empty else ""
        raise DegenerateOutcome(f"grouping {grouping.name}: outcome has a single class{why}")
    return y, mask


# -- Benjamini-Hochberg baseline ----------------------------------------------

def bh_select(pvalues, q):
    """Benjamini-Hochberg step-up: reject all p <= p_(i*) for the largest i* with p_(i*) <= i* q / m."""
    p = np.asarray(pvalues, dtype=float)
    if p.ndim != 1 or np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise InvalidInput("p-values must be a vector in [0, 1]")
    m = p.size
    if m == 0:
        return frozenset()
    ordered = np.sort(p)
    passing = np.flatnonzero(ordered <= np.arange(1, m + 1) * q / m)
    if passing.size == 0:
        return frozenset()
    cutoff = ordered[passing[-1]]
    return frozenset(np.flatnonzero(p <= cutoff).tolist())


def _logistic_loglik(eta, y):
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _univariate_logistic(x, y, max_iter=50):
    """Maximized log-likelihood of y ~ 1 + x by damped Newton steps."""
    b = np.array([math.log(y.mean() / (1 - y.mean())), 0.0])
    D = np.column_stack([np.ones_like(x), x])
    ll = _logistic_loglik(D @ b, y)
    for _ in range(max_iter):
        p = expit(D @ b)
        W = p * (1 - p)
        H = D.T @ (W[:, None] * D)
        g = D.T @ (y - p)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-8:
            new_ll = _logistic_loglik(D @ (b + t * step), y)
            if new_ll >= ll:
                break
            t *= 0.5
        else:
            break
        b = b + t * step
        gain, ll = new_ll - ll, new_ll
        if gain < 1e-10:
            break
    return ll


def marginal_pvalues(X, y):
    """Per-feature likelihood-ratio p-values of y ~ 1 + x_j against y ~ 1.

    Returns ``(pvalues, separated)``.  For a feature that separates the two
    classes the MLE does not exist; the likelihood is then taken at the
    iteration cap and the feature is flagged in ``separated``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.min() == y.max():
        raise DegenerateOutcome("marginal tests need both classes")
    ybar = y.mean()
    ll_null = float(y.size * (ybar * math.log(ybar) + (1 - ybar) * math.log(1 - ybar)))
    pvals = np.ones(X.shape[1])
    separated = np.zeros(X.shape[1], dtype=bool)
    for j in range(X.shape[1]):
        x = X[:, j]
        sd = x.std()
        if sd == 0:
            continue
        x = (x - x.mean()) / sd
        x0, x1 = x[y == 0], x[y == 1]
        separated[j] = x0.max() <= x1.min() or x1.max() <= x0.min()
        stat = max(0.0, 2.0 * (_univariate_logistic(x, y) - ll_null))
        pvals[j] = stats.chi2.sf(stat, df=1)
    return pvals, separated


# -- end-to-end selection ------------------------------------------------------

@dataclass
class TaxaSelectionReport:
    method: str
    q: float
    selected: list
    params: dict
    group_counts: dict
    n_samples: int
    n_taxa: int
    dropped_taxa: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def to_text(self):
        lines = [
            f"method: {self.method}   q = {self.q:g}",
            "parameters: " + ", ".join(f"{k}={v}" for k, v in sorted(self.params.items())),
            f"samples: {self.n_samples} ("
            + ", ".join(f"{g}={n}" for g, n in self.group_counts.items()) + ")",
            f"taxa analysed: {self.n_taxa}",
        ]
        for w in self.warnings:
            lines.append(f"warning: {w}")
        lines.append(f"selected ({len(self.selected)}):")
        lines.extend(f"  {name}" for name in self.selected or ["(none)"])
        return "\n".join(lines)


def run_selection(
    table,
    metadata,
    grouping,
    method="ako",
    q=0.1,
    k=5,
    schedule="geometric",
    variant=Variant.KO,
    seed=0,
    shrinkage=0.1,
    zero_scope="global",
    age_range=AGE_RANGE,
    bmi_range=BMI_RANGE,
):
    """Cohort filter, zero imputation, log transform, outcome, then selection.

    KO is AKO with a single run under the same master seed, so with the
    geometric schedule (first level q) the AKO selection always contains KO's.
    """
    method = method.lower()
    if method not in ("ko", "ako", "bh"):
        raise InvalidInput(f"unknown method {method!r}")
    if isinstance(grouping, str):
        grouping = GROUPINGS[grouping]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        table, metadata = filter_cohort(table, metadata, age_range, bmi_range)
        table = impute_zeros(table, zero_scope)
        X, kept = log_transform(table)
        y, mask = make_outcome(metadata, grouping)
    X = X[mask]
    names = [table.taxa_names[j] for j in kept]
    labels = bmi_group(metadata.bmi[mask])
    group_counts = {g: int(np.sum(labels == g)) for g in GROUPS if g in grouping.included_groups}

    if method == "bh":
        pvals, separated = marginal_pvalues(X, y)
        chosen = bh_select(pvals, q)
        params = {"grouping": grouping.name, "test": "univariate logistic LRT",
                  "n_separated": int(separated.sum())}
    else:
        kind = ScheduleKind(schedule)
        sched = make_schedule(q, 1 if method == "ko" else k, kind)
        km = build_model(estimate_covariance(X, shrinkage))
        cfg = paths.PathConfig(model=paths.Model.LOGISTIC)
        result = ako_select(X, y, sched, km, cfg, variant=variant, master_seed=seed)
        chosen = result.selected
        params = {"grouping": grouping.name, "variant": Variant(variant).value, "seed": seed,
                  "shrinkage": shrinkage}
        if method == "ako":
            params.update(k=k, schedule=kind.value,
                          levels=[round(x, 12) for x in sched.levels])

    return TaxaSelectionReport(
        method=method.upper(),
        q=float(q),
        selected=[names[j] for j in sorted(chosen)],
        params=params,
        group_counts=group_counts,
        n_samples=int(mask.sum()),
        n_taxa=len(names),
        dropped_taxa=[table.taxa_names[j] for j in range(len(table.taxa_names)) if j not in set(kept)],
        warnings=[str(w.message) for w in caught],
    )


# -- synthetic cohorts ----------------------------------------------------------

def synthetic_cohort(n_samples=400, n_taxa=55, n_signal=5, effect=1.0, seed=0, prefix="taxon"):
    """Simulated abundance table whose obesity status follows a logistic model.

    Latent log-abundances are AR(1)-correlated Gaussians; ``n_signal`` taxa
    carry coefficient ``effect`` (alternating sign).  Obese samples get a BMI
    in [30, 45], the rest are spread over the three other groups.  About 15%
    of counts are zeroed, and a few samples fall outside the default cohort
    ranges.  Returns ``(table, metadata, signal_taxa)``.
    """
    rng = np.random.default_rng(seed)
    latent = np.empty((n_samples, n_taxa))
    latent[:, 0] = rng.standard_normal(n_samples)
    for j in range(1, n_taxa):
        latent[:, j] = 0.3 * latent[:, j - 1] + math.sqrt(1 - 0.09) * rng.standard_normal(n_samples)
    signal = np.sort(rng.choice(n_taxa, n_signal, replace=False))
    beta = np.zeros(n_taxa)
    beta[signal] = effect * np.where(np.arange(n_signal) % 2 == 0, 1.0, -1.0)
    y = rng.random(n_samples) < expit(latent @ beta - 1.0)

    bmi = np.empty(n_samples)
    bmi[y] = rng.uniform(30.0, 45.0, y.sum())
    others = rng.choice(3, size=(~y).sum(), p=[0.1, 0.55, 0.35])
    lo = np.array([15.5, 18.5, 25.0])[others]
    hi = np.array([18.4, 24.9, 29.9])[others]
    bmi[~y] = rng.uniform(lo, hi)
    age = rng.uniform(20.0, 69.0, n_samples)
    # a handful of samples outside the cohort ranges
    out = rng.choice(n_samples, size=max(1, n_samples // 100), replace=False)
    age[out[::2]] = rng.uniform(70, 80, out[::2].size)
    bmi[out[1::2]] = rng.uniform(60.5, 65, out[1::2].size)

    counts = np.round(np.exp(2.0 + 1.5 * latent))
    counts[rng.random(counts.shape) < 0.15] = 0.0
    taxa = [f"{prefix}_{j + 1:02d}" for j in range(n_taxa)]
    ids = [f"S{i + 1:04d}" for i in range(n_samples)]
    table = AbundanceTable(counts, taxa, ids)
    metadata = Metadata(age=np.round(age, 1), bmi=np.round(bmi, 2))
    return table, metadata, [taxa[j] for j in signal]
