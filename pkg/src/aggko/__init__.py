"""Knockoff filters with aggregation for FDR-controlled variable selection."""

from .aggregate import (
    AggregationSchedule,
    AkoResult,
    ScheduleKind,
    ako_select,
    empirical_fdp,
    empirical_power,
    ko_select,
    make_schedule,
)
from .filter import SelectionResult, Variant, WStatistics, select, threshold, w_statistics
from .knockoffs import KnockoffModel, build_model, estimate_covariance, sample_knockoffs
from .paths import CoefficientPath, Model, PathConfig, entry_statistics, fit_path

__version__ = "0.1.0"

__all__ = [
    "AggregationSchedule", "AkoResult", "ScheduleKind", "ako_select", "empirical_fdp",
    "empirical_power", "ko_select", "make_schedule", "SelectionResult", "Variant",
    "WStatistics", "select", "threshold", "w_statistics", "KnockoffModel", "build_model",
    "estimate_covariance", "sample_knockoffs", "CoefficientPath", "Model", "PathConfig",
    "entry_statistics", "fit_path",
]
