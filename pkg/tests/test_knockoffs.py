import warnings

import numpy as np
import pytest

from aggko.errors import (
    DegenerateKnockoffs,
    InvalidInput,
    NotPositiveDefinite,
    SingularCovariance,
)
from aggko.knockoffs import (
    as_design,
    build_model,
    equi_perturbation,
    estimate_covariance,
    psd_sqrt,
    sample_knockoffs,
)
from aggko.simulation import ar1_covariance, gen_ar1_design


# -- estimate_covariance ------------------------------------------------------

def test_identical_columns_are_singular(rng):
    x = rng.standard_normal(30)
    with pytest.raises(SingularCovariance):
        estimate_covariance(np.column_stack([x, x]))


def test_zero_variance_column_is_singular():
    X = np.array([[1.0, 0.0], [-1.0, 0.0]])
    with pytest.raises(SingularCovariance):
        estimate_covariance(X)


def test_shrinkage_repairs_rank_deficiency(rng):
    x = rng.standard_normal(30)
    S = estimate_covariance(np.column_stack([x, x]), shrinkage=0.1)
    assert np.allclose(S, S.T)
    assert np.linalg.eigvalsh(S)[0] > 0


def test_shrinkage_formula(rng):
    X = rng.standard_normal((40, 4))
    S = np.cov(X, rowvar=False)
    expected = 0.7 * S + 0.3 * np.mean(np.diag(S)) * np.eye(4)
    assert np.allclose(estimate_covariance(X, 0.3), expected)


def test_ar1_estimate_close_to_truth():
    # observed max-abs error at this seed is 0.085; 0.15 bounds the 95th percentile over seeds
    X = gen_ar1_design(500, 5, 0.5, seed=0)
    assert np.abs(estimate_covariance(X) - ar1_covariance(5, 0.5)).max() < 0.15


@pytest.mark.parametrize("bad", [np.array([[1.0, np.nan], [0.0, 1.0]]), np.ones(3), np.ones((1, 3))])
def test_design_validation(bad):
    with pytest.raises(InvalidInput):
        as_design(bad)


def test_shrinkage_out_of_range(rng):
    with pytest.raises(InvalidInput):
        estimate_covariance(rng.standard_normal((10, 2)), shrinkage=1.5)


# -- equi_perturbation ----------------------------------------------------------

def test_identity_closed_form():
    m = build_model(np.eye(4), safety=0.99)
    assert np.allclose(m.a, 0.99)
    assert np.allclose(m.v, (2 * 0.99 - 0.99**2) * np.eye(4))


def test_two_by_two_hand_computation():
    sigma = np.array([[1.0, 0.5], [0.5, 1.0]])
    a = equi_perturbation(sigma, safety=1.0)
    assert np.allclose(a, [1.0, 1.0])
    inv = (4.0 / 3.0) * np.array([[1.0, -0.5], [-0.5, 1.0]])
    m = build_model(sigma, a=a)
    assert np.allclose(m.v, 2 * np.eye(2) - inv)


def test_perturbation_scales_with_variances():
    corr = np.array([[1.0, 0.5], [0.5, 1.0]])
    sd = np.array([2.0, 0.5])
    a = equi_perturbation(corr * np.outer(sd, sd), safety=0.9)
    assert np.allclose(a, 0.9 * sd**2)


def test_near_singular_warns():
    eps = 5e-13
    sigma = np.array([[1.0, 1 - eps], [1 - eps, 1.0]])
    with pytest.warns(DegenerateKnockoffs):
        a = equi_perturbation(sigma)
    assert np.all(a < 1e-10)


def test_not_positive_definite():
    with pytest.raises(NotPositiveDefinite):
        equi_perturbation(np.array([[1.0, 2.0], [2.0, 1.0]]))


@pytest.mark.parametrize("rho", [-0.6, 0.0, 0.3, 0.9])
def test_v_positive_definite_below_unit_safety(rho):
    m = build_model(ar1_covariance(10, rho), safety=0.95)
    assert np.linalg.eigvalsh(m.v)[0] > 0


# -- psd_sqrt -------------------------------------------------------------------

@pytest.mark.parametrize("rho", [0.0, 0.5, 0.9])
def test_root_reconstructs_v(rho):
    m = build_model(ar1_covariance(12, rho))
    err = np.linalg.norm(m.v_root @ m.v_root.T - m.v) / np.linalg.norm(m.v)
    assert err <= 1e-8


def test_psd_sqrt_clips_tiny_negative():
    u = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2)
    M = u @ np.diag([2.0, -1e-12]) @ u.T
    R = psd_sqrt(M)
    assert np.allclose(R @ R.T, M, atol=1e-10)


def test_psd_sqrt_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        psd_sqrt(np.diag([1.0, -0.5]))


# -- sample_knockoffs -----------------------------------------------------------

def test_independent_limit_is_pure_noise(rng):
    X = rng.standard_normal((6, 3))
    m = build_model(np.eye(3), a=np.ones(3))
    assert np.allclose(m.shift, np.eye(3))
    G = np.random.default_rng(99).standard_normal((6, 3))
    assert np.allclose(sample_knockoffs(X, m, 99), G)


def test_vanishing_perturbation_copies_x(rng):
    # at a = 1e-10 the noise term has sd ~ sqrt(2e-10) ~ 1.4e-5, so the copy is
    # exact only to that order; a = 1e-16 puts it below 1e-6
    X = rng.standard_normal((50, 4))
    sigma = ar1_covariance(4, 0.5)
    tiny = build_model(sigma, a=np.full(4, 1e-16))
    assert np.abs(sample_knockoffs(X, tiny, 3) - X).max() < 1e-6
    small = build_model(sigma, a=np.full(4, 1e-10))
    assert np.abs(sample_knockoffs(X, small, 3) - X).max() < 1e-3


def test_deterministic_given_seed(ar1_data):
    X, sigma = ar1_data
    m = build_model(sigma)
    a, b = sample_knockoffs(X, m, 11), sample_knockoffs(X, m, 11)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_knockoffs(X, m, 12))


def test_dimension_mismatch(ar1_data):
    X, _ = ar1_data
    with pytest.raises(InvalidInput):
        sample_knockoffs(X, build_model(np.eye(3)), 0)


def test_joint_covariance_block_structure():
    # observed max-abs error 0.050 at these seeds (0.061 worst over 50 seeds)
    sigma = ar1_covariance(4, 0.5)
    m = build_model(sigma)
    X = gen_ar1_design(5000, 4, 0.5, seed=0)
    Xt = sample_knockoffs(X, m, 1000)
    emp = np.cov(np.hstack([X, Xt]), rowvar=False)
    assert np.abs(emp - m.joint_covariance()).max() < 0.1


def test_conditional_mean_over_seeds(ar1_data):
    X, sigma = ar1_data
    X = X[:5]
    m = build_model(sigma)
    draws = np.stack([sample_knockoffs(X, m, s) for s in range(2000)])
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
    target = X @ (np.eye(sigma.shape[0]) - m.shift)
    z = np.abs(mean - target) / se
    # 40 entries, each within 3 se with probability 0.997
    assert np.mean(z <= 3) >= 0.95 and z.max() < 4.5


def test_estimated_covariance_end_to_end(ar1_data):
    X, _ = ar1_data
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        Xt = sample_knockoffs(X, build_model(estimate_covariance(X, 0.1)), 0)
    assert Xt.shape == X.shape and np.all(np.isfinite(Xt))
