"""Gaussian knockoff copies of a design matrix.

Rows of ``X`` are treated as draws from N(0, sigma).  Given a perturbation
vector ``a``, each knockoff row is drawn as

    x_tilde | x ~ N(x - x sigma^{-1} diag(a),  2 diag(a) - diag(a) sigma^{-1} diag(a))

using the row-vector convention throughout.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateKnockoffs,
    InvalidInput,
    NotPositiveDefinite,
    SingularCovariance,
)

PSD_RTOL = 1e-8


def as_design(X):
    """Validate and return ``X`` as a float64 (n, p) array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInput(f"design matrix must be 2-d, got shape {X.shape}")
    n, p = X.shape
    if n < 2 or p < 1:
        raise InvalidInput(f"design matrix needs n >= 2 and p >= 1, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInput("design matrix has non-finite entries")
    return X


def estimate_covariance(X, shrinkage=0.0):
    """Empirical covariance with optional shrinkage toward the average variance.

    Returns ``(1 - shrinkage) * S + shrinkage * mean(diag(S)) * I`` where ``S``
    is the centered sample covariance with divisor n - 1.
    """
    X = as_design(X)
    if not 0.0 <= shrinkage <= 1.0:
        raise InvalidInput(f"shrinkage must lie in [0, 1], got {shrinkage}")
    S = np.atleast_2d(np.cov(X, rowvar=False))
    S = 0.5 * (S + S.T)
    avg_var = float(np.mean(np.diag(S)))
    out = (1.0 - shrinkage) * S + shrinkage * avg_var * np.eye(S.shape[0])

    evals = np.linalg.eigvalsh(out)
    scale = max(abs(evals[-1]), np.finfo(float).tiny)
    if evals[0] <= 1e-12 * scale or avg_var == 0.0:
        if np.any(np.diag(S) == 0.0) and shrinkage == 0.0:
            raise SingularCovariance("covariance has a zero-variance column")
        raise SingularCovariance(
            f"covariance estimate is singular (min eigenvalue {evals[0]:.3e})"
        )
    return out


def equi_perturbation(sigma, safety=0.99):
    """Equicorrelated perturbation vector ``a`` for the knockoff construction.

    Works on the correlation matrix C of ``sigma``: s = safety * min(1, 2 lambda_min(C)),
    then a_j = s * sigma_jj.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if not 0.0 < safety <= 1.0:
        raise InvalidInput(f"safety must lie in (0, 1], got {safety}")
    d = np.diag(sigma)
    if np.any(d <= 0):
        raise NotPositiveDefinite("covariance has a non-positive diagonal entry")
    inv_sd = 1.0 / np.sqrt(d)
    corr = sigma * np.outer(inv_sd, inv_sd)
    lam_min = float(np.linalg.eigvalsh(0.5 * (corr + corr.T))[0])
    if lam_min <= 0.0:
        raise NotPositiveDefinite(f"smallest eigenvalue of the correlation is {lam_min:.3e}")
    s = safety * min(1.0, 2.0 * lam_min)
    if s < 1e-8:
        warnings.warn(
            f"equicorrelated perturbation s={s:.3e}: knockoffs will nearly copy X",
            DegenerateKnockoffs,
            stacklevel=2,
        )
    return s * d


def psd_sqrt(M, rtol=PSD_RTOL):
    """Symmetric square root of a positive semidefinite matrix.

    Negative eigenvalues within ``rtol * max|eigenvalue|`` are clipped to zero;
    anything more negative raises ``NotPositiveDefinite``.
    """
    M = 0.5 * (M + M.T)
    evals, evecs = np.linalg.eigh(M)
    tol = rtol * max(np.max(np.abs(evals)), 0.0)
    if evals[0] < -tol:
        raise NotPositiveDefinite(f"matrix has eigenvalue {evals[0]:.3e} below -{tol:.3e}")
    root = np.sqrt(np.clip(evals, 0.0, None))
    return (evecs * root) @ evecs.T


@dataclass(frozen=True)
class KnockoffModel:
    """Everything needed to sample knockoffs for a fixed covariance."""

    sigma: np.ndarray
    a: np.ndarray
    v: np.ndarray
    v_root: np.ndarray
    # sigma^{-1} diag(a), cached for the conditional mean
    shift: np.ndarray

    @property
    def p(self):
        return self.sigma.shape[0]

    def joint_covariance(self):
        """Covariance of the stacked row [x, x_tilde]."""
        off = self.sigma - np.diag(self.a)
        return np.block([[self.sigma, off], [off, self.sigma]])


def build_model(sigma, a=None, safety=0.99):
    """Assemble a ``KnockoffModel``; ``a`` defaults to the equicorrelated choice."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InvalidInput(f"sigma must be square, got shape {sigma.shape}")
    sigma = 0.5 * (sigma + sigma.T)
    if np.linalg.eigvalsh(sigma)[0] <= 0.0:
        raise NotPositiveDefinite("sigma is not positive definite")
    if a is None:
        a = equi_perturbation(sigma, safety)
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (sigma.shape[0],) or np.any(a <= 0):
        raise InvalidInput("a must be a positive vector of length p")
    shift = np.linalg.solve(sigma, np.diag(a))
    v = 2.0 * np.diag(a) - np.diag(a) @ shift
    v = 0.5 * (v + v.T)
    return KnockoffModel(sigma=sigma, a=a, v=v, v_root=psd_sqrt(v), shift=shift)


def sample_knockoffs(X, model, seed):
    """Draw one knockoff matrix for ``X``; deterministic in ``seed``."""
    X = as_design(X)
    if X.shape[1] != model.p:
        raise InvalidInput(f"X has {X.shape[1]} columns but the model has p={model.p}")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal(X.shape)
    return X - X @ model.shift + G @ model.v_root.T
