import time

import numpy as np
import pytest

from aggko import aggregate, paths
from aggko.aggregate import (
    PowerConvention,
    ScheduleKind,
    ako_select,
    empirical_fdp,
    empirical_power,
    ko_select,
    make_schedule,
    run_seed,
)
from aggko.errors import InvalidSchedule, SolverFailure, UndefinedPower
from aggko.filter import Variant
from aggko.knockoffs import build_model
from aggko.simulation import ExperimentConfig, ar1_covariance, gen_ar1_design, gen_outcome, gen_sparse_beta, run_experiment


@pytest.fixture(scope="module")
def problem():
    n, p = 150, 40
    X = gen_ar1_design(n, p, 0.5, seed=1)
    beta = gen_sparse_beta(p, 8, X, snr=5, seed=2)
    y = gen_outcome(X, beta, seed=3)
    return X, y, build_model(ar1_covariance(p, 0.5)), set(np.flatnonzero(beta).tolist())


# -- schedules --------------------------------------------------------------------

def test_geometric_schedule():
    s = make_schedule(0.1, 5, "geometric")
    assert np.allclose(s.levels, [0.1, 0.05, 0.025, 0.0125, 0.00625])
    assert s.total == pytest.approx(0.19375)
    assert not s.theorem_valid


def test_uniform_schedule():
    s = make_schedule(0.1, 5, ScheduleKind.UNIFORM)
    assert np.allclose(s.levels, 0.02)
    assert s.total == pytest.approx(0.1)
    assert s.theorem_valid


@pytest.mark.parametrize("kind", ["geometric", "uniform"])
def test_single_run_schedule(kind):
    s = make_schedule(0.3, 1, kind)
    assert s.levels == (0.3,) and s.theorem_valid


def test_custom_schedule():
    s = make_schedule(0.2, kind="custom", levels=[0.1, 0.05, 0.05])
    assert s.k == 3 and s.theorem_valid
    assert not make_schedule(0.2, kind="custom", levels=[0.2, 0.1]).theorem_valid


@pytest.mark.parametrize("levels", [[0.1, 1.5], [-0.1], []])
def test_custom_levels_out_of_range(levels):
    with pytest.raises(InvalidSchedule):
        make_schedule(0.1, kind="custom", levels=levels)


@pytest.mark.parametrize("q,k", [(1.2, 5), (0.1, 0)])
def test_invalid_schedule_arguments(q, k):
    with pytest.raises(InvalidSchedule):
        make_schedule(q, k)


# -- aggregation --------------------------------------------------------------------

def test_single_run_equals_plain_filter(problem):
    X, y, km, _ = problem
    for master in (0, 7, 123456):
        ako = ako_select(X, y, make_schedule(0.2, 1), km, master_seed=master)
        ko = ko_select(X, y, 0.2, km, seed=run_seed(master, 1))
        assert ako.selected == ko.selected
        run = ako.per_run[0]
        assert (run.selected, run.threshold, run.seed) == (ko.selected, ko.threshold, ko.seed)


def test_union_identity_and_first_run_superset(problem):
    X, y, km, _ = problem
    res = ako_select(X, y, make_schedule(0.1, 5), km, master_seed=4)
    assert res.selected == frozenset().union(*(r.selected for r in res.per_run))
    assert res.selected >= res.per_run[0].selected
    assert [r.schedule_index for r in res.per_run] == [1, 2, 3, 4, 5]
    assert [r.seed for r in res.per_run] == [run_seed(4, i) for i in range(1, 6)]


def test_runs_draw_fresh_knockoffs(problem):
    X, y, km, _ = problem
    res = ako_select(X, y, make_schedule(0.1, 3), km, master_seed=4)
    assert not np.array_equal(res.statistics[0].w, res.statistics[1].w)
    shared = ako_select(X, y, make_schedule(0.1, 3), km, master_seed=4, reuse_knockoffs=True)
    assert all(np.array_equal(s.w, shared.statistics[0].w) for s in shared.statistics)
    assert np.array_equal(shared.statistics[0].w, res.statistics[0].w)


def test_zero_levels_select_nothing(problem):
    X, y, km, _ = problem
    sched = make_schedule(0.0, kind="custom", levels=[0.0] * 3)
    res = ako_select(X, y, sched, km, variant=Variant.KO_PLUS)
    assert res.selected == frozenset()


def test_deterministic(problem):
    X, y, km, _ = problem
    a = ako_select(X, y, make_schedule(0.2, 4), km, master_seed=9)
    b = ako_select(X, y, make_schedule(0.2, 4), km, master_seed=9)
    assert a.selected == b.selected
    assert all(np.array_equal(s.w, t.w) for s, t in zip(a.statistics, b.statistics))


def test_solver_failure_names_run(problem, monkeypatch):
    X, y, km, _ = problem
    calls = []
    real = paths.fit_path

    def flaky(*args, **kwargs):
        calls.append(1)
        if len(calls) == 3:
            raise SolverFailure("no grid point converged")
        return real(*args, **kwargs)

    monkeypatch.setattr(aggregate.paths, "fit_path", flaky)
    with pytest.raises(SolverFailure) as info:
        ako_select(X, y, make_schedule(0.1, 5), km)
    assert info.value.run_index == 3
    assert "run 3 of 5" in str(info.value)


def test_cost_linear_in_k(problem):
    X, y, km, _ = problem

    def best_time(k):
        sched = make_schedule(0.1, k)
        out = []
        for _ in range(3):
            t = time.perf_counter()
            ako_select(X, y, sched, km)
            out.append(time.perf_counter() - t)
        return min(out)

    best_time(1)
    t1, t4 = best_time(1), best_time(4)
    assert t4 < 1.5 * 4 * t1


# -- metrics ----------------------------------------------------------------------

def test_fdp_examples():
    assert empirical_fdp(set(), {1}) == 0
    assert empirical_fdp({1, 2, 3}, {2, 3, 4}) == pytest.approx(1 / 3)
    assert empirical_fdp({2, 3}, {2, 3}) == 0


def test_power_examples():
    assert empirical_power({2, 3}, {2, 3, 4}, PowerConvention.PAPER_TDP) == 1
    assert empirical_power({2, 3}, {2, 3, 4}) == pytest.approx(2 / 3)
    assert empirical_power(set(), {1, 2}) == 0
    assert empirical_power(set(), {1, 2}, "tdp_paper") == 0
    with pytest.raises(UndefinedPower):
        empirical_power({1}, set())


# -- Theorem 1 in Monte-Carlo form ---------------------------------------------------

@pytest.mark.slow
def test_union_bound_pure_null():
    cfg = ExperimentConfig(n=200, p=50, sparsity=0, q_grid=(0.2,), variant="ko+",
                           schedule_kind="uniform", k=5, reps=1000, master_seed=31)
    res = run_experiment(cfg)
    cell = res.cell(0.2, "AKO")
    assert cell["reps"] == 1000
    assert cell["mean_fdr"] <= 0.2 + 3 * cell["se_fdr"]
