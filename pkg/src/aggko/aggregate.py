"""Aggregated knockoffs: run the filter k times at levels q_1..q_k and union.

With knockoff+ and levels summing to at most q, the union keeps FDR <= q by
a union bound over the k runs.  Each run draws its own knockoff matrix from
a seed derived from ``(master_seed, run index)``.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from . import paths
from .errors import InvalidInput, InvalidSchedule, SolverFailure, UndefinedPower
from .filter import Variant, select, w_statistics
from .knockoffs import as_design, sample_knockoffs
from .seeding import derive_seed

DEFAULT_K = 5


class ScheduleKind(str, enum.Enum):
    GEOMETRIC = "geometric"
    UNIFORM = "uniform"
    CUSTOM = "custom"


@dataclass(frozen=True)
class AggregationSchedule:
    q: float
    k: int
    kind: ScheduleKind
    levels: tuple

    @property
    def total(self):
        return float(sum(self.levels))

    @property
    def theorem_valid(self):
        """True when the levels sum to at most q, so the FDR bound applies."""
        return self.total <= self.q + 1e-12


def make_schedule(q, k=DEFAULT_K, kind=ScheduleKind.GEOMETRIC, levels=None):
    """Build the level sequence.

    geometric: q / 2^(i-1)  (sums to more than q for k >= 2)
    uniform:   q / k
    custom:    ``levels`` as given
    """
    kind = ScheduleKind(kind)
    if not 0.0 <= q <= 1.0:
        raise InvalidSchedule(f"q must lie in [0, 1], got {q}")
    if kind is ScheduleKind.CUSTOM:
        if levels is None:
            raise InvalidSchedule("custom schedule needs explicit levels")
        levels = tuple(float(x) for x in levels)
        if not levels or any(not 0.0 <= x <= 1.0 for x in levels):
            raise InvalidSchedule(f"custom levels must be a non-empty sequence in [0, 1]: {levels}")
        return AggregationSchedule(q=float(q), k=len(levels), kind=kind, levels=levels)
    if k < 1:
        raise InvalidSchedule(f"k must be at least 1, got {k}")
    if kind is ScheduleKind.UNIFORM:
        levels = (q / k,) * k
    else:
        levels = tuple(min(1.0, q / 2.0**i) for i in range(k))
    return AggregationSchedule(q=float(q), k=int(k), kind=kind, levels=levels)


@dataclass
class AkoResult:
    selected: frozenset
    per_run: list
    schedule: AggregationSchedule
    variant: Variant
    master_seed: int
    statistics: list = field(default_factory=list, repr=False)


def run_seed(master_seed, index):
    """Seed of run ``index`` (1-based) under ``master_seed``."""
    return derive_seed(master_seed, index)


def knockoff_statistics(X, y, knockoff_model, path_cfg, seed, X_tilde=None):
    """One knockoff draw, one path fit on [X X~], and the resulting W statistics."""
    if X_tilde is None:
        X_tilde = sample_knockoffs(X, knockoff_model, seed)
    path = paths.fit_path(np.hstack([X, X_tilde]), y, path_cfg)
    z, z_tilde = paths.entry_statistics(path)
    return w_statistics(z, z_tilde)


def union_selection(stats, schedule, variant, seeds=None):
    """Apply the filter at each scheduled level to its W vector and take the union."""
    if len(stats) != schedule.k:
        raise InvalidInput(f"need {schedule.k} W vectors, got {len(stats)}")
    per_run = [
        select(s.w, level, variant, seed=None if seeds is None else seeds[i], schedule_index=i + 1)
        for i, (s, level) in enumerate(zip(stats, schedule.levels))
    ]
    selected = frozenset().union(*(r.selected for r in per_run))
    return selected, per_run


def ako_select(
    X,
    y,
    schedule,
    knockoff_model,
    path_cfg=paths.PathConfig(),
    variant=Variant.KO,
    master_seed=0,
    reuse_knockoffs=False,
):
    """Aggregated knockoff selection.

    Run i (1-based) samples knockoffs with ``run_seed(master_seed, i)``, fits
    the path on the extended design, and applies the filter at
    ``schedule.levels[i-1]``.  With ``reuse_knockoffs`` every run shares the
    draw of run 1 (an ablation; the default draws fresh knockoffs per run).
    """
    X = as_design(X)
    variant = Variant(variant)
    seeds = [run_seed(master_seed, i) for i in range(1, schedule.k + 1)]
    shared = sample_knockoffs(X, knockoff_model, seeds[0]) if reuse_knockoffs else None
    stats = []
    for i, seed in enumerate(seeds, start=1):
        if reuse_knockoffs and stats:
            stats.append(stats[0])
            continue
        try:
            stats.append(knockoff_statistics(X, y, knockoff_model, path_cfg, seed, X_tilde=shared))
        except SolverFailure as exc:
            raise SolverFailure(f"knockoff run {i} of {schedule.k}: {exc}", run_index=i) from exc
    selected, per_run = union_selection(stats, schedule, variant, seeds)
    return AkoResult(
        selected=selected,
        per_run=per_run,
        schedule=schedule,
        variant=variant,
        master_seed=master_seed,
        statistics=stats,
    )


def ko_select(X, y, q, knockoff_model, path_cfg=paths.PathConfig(), variant=Variant.KO, seed=0):
    """Plain knockoff filter with one knockoff draw from ``seed``."""
    X = as_design(X)
    stats = knockoff_statistics(X, y, knockoff_model, path_cfg, seed)
    return select(stats.w, q, variant, seed=seed)


def empirical_fdp(selected, true_support):
    """|selected \\ truth| / max(1, |selected|)."""
    selected = set(selected)
    if not selected:
        return 0.0
    return len(selected - set(true_support)) / len(selected)


class PowerConvention(str, enum.Enum):
    # |S^ n S| / max(1, |S^|), the formula printed alongside the FDR
    PAPER_TDP = "tdp_paper"
    CONVENTIONAL = "conventional"


def empirical_power(selected, true_support, convention=PowerConvention.CONVENTIONAL):
    selected = set(selected)
    truth = set(true_support)
    if PowerConvention(convention) is PowerConvention.CONVENTIONAL:
        if not truth:
            raise UndefinedPower("conventional power needs a non-empty true support")
        return len(selected & truth) / len(truth)
    if not selected:
        return 0.0
    return len(selected & truth) / len(selected)

