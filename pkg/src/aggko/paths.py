"""l1-regularization paths on the extended design [X X_tilde] and entry statistics.

Losses are scaled by 1/n:

* linear:   (1/2n) ||y - X a||^2 + lam ||a||_1  (no intercept)
* logistic: (1/n) sum_i [log(1 + exp(eta_i)) - y_i eta_i] + lam ||a||_1,
  eta = b0 + X a with an unpenalized intercept b0

Columns enter the penalty as given; no standardization happens here.
"""

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import _cd
from .errors import DegenerateOutcome, InvalidInput, SolverFailure


class Model(str, enum.Enum):
    LINEAR = "linear"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class PathConfig:
    model: Model = Model.LINEAR
    grid_size: int = 100
    lambda_min_ratio: float = 1e-3
    max_iter: int = 10000
    tol: float = 1e-7
    # logistic only: Newton steps per grid point, and the deviance ratio at
    # which the path is cut short (saturated / separable fits)
    max_outer: int = 100
    max_dev_ratio: float = 0.999

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if self.grid_size < 1:
            raise InvalidInput("grid_size must be positive")
        if not 0.0 < self.lambda_min_ratio < 1.0:
            raise InvalidInput("lambda_min_ratio must lie in (0, 1)")
        if self.max_iter < 1 or self.tol <= 0:
            raise InvalidInput("max_iter and tol must be positive")


@dataclass
class CoefficientPath:
    lambdas: np.ndarray
    coefs: np.ndarray
    converged: np.ndarray
    intercepts: np.ndarray | None = None

    @property
    def n_features(self):
        """Number of original features p (half the extended width)."""
        return self.coefs.shape[1] // 2


def _check_inputs(X_ext, y, model):
    X_ext = np.asarray(X_ext, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X_ext.ndim != 2 or y.shape != (X_ext.shape[0],):
        raise InvalidInput(f"shape mismatch: X_ext {X_ext.shape}, y {y.shape}")
    if not (np.all(np.isfinite(X_ext)) and np.all(np.isfinite(y))):
        raise InvalidInput("non-finite values in X_ext or y")
    if Model(model) is Model.LOGISTIC:
        if not np.all((y == 0) | (y == 1)):
            raise InvalidInput("logistic outcome must be 0/1")
        if y.min() == y.max():
            raise DegenerateOutcome("logistic outcome has a single class")
    return X_ext, y


def lambda_max(X_ext, y, model=Model.LINEAR):
    """Smallest penalty at which the all-zero coefficient vector is optimal."""
    X_ext, y = _check_inputs(X_ext, y, model)
    n = X_ext.shape[0]
    if Model(model) is Model.LOGISTIC:
        y = y - y.mean()
    return float(np.max(np.abs(X_ext.T @ y)) / n)


def lambda_grid(lam_max, cfg):
    """Log-spaced decreasing grid from ``lam_max`` to ``lam_max * lambda_min_ratio``."""
    return np.geomspace(lam_max, lam_max * cfg.lambda_min_ratio, cfg.grid_size)


def fit_path(X_ext, y, cfg=PathConfig(), lambdas=None):
    """Fit the l1 path with warm starts along a decreasing grid.

    ``lambdas`` overrides the default grid built from ``lambda_max``.  Grid
    points where the solver hit its iteration cap are flagged in
    ``converged``; a ``SolverFailure`` is raised only if no point converged.
    """
    X_ext, y = _check_inputs(X_ext, y, cfg.model)
    n, d = X_ext.shape
    if lambdas is None:
        lam_max = lambda_max(X_ext, y, cfg.model)
        if lam_max == 0.0:
            # y carries no signal along any column: every coefficient stays 0
            return CoefficientPath(
                lambdas=np.zeros(1),
                coefs=np.zeros((1, d)),
                converged=np.ones(1, dtype=bool),
                intercepts=None if cfg.model is Model.LINEAR else np.zeros(1),
            )
        lambdas = lambda_grid(lam_max, cfg)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if np.any(np.diff(lambdas) >= 0) or np.any(lambdas <= 0):
        raise InvalidInput("lambdas must be positive and strictly decreasing")

    if cfg.model is Model.LINEAR:
        coefs, converged = _fit_linear(X_ext, y, lambdas, cfg)
        intercepts = None
    else:
        coefs, intercepts, converged = _fit_logistic(X_ext, y, lambdas, cfg)
        lambdas = lambdas[: coefs.shape[0]]
    if not converged.any():
        raise SolverFailure("coordinate descent did not converge at any grid point")
    return CoefficientPath(lambdas=lambdas, coefs=coefs, converged=converged, intercepts=intercepts)


# CD passes between attempts at an exact active-set solve, and the number of
# consecutive solves allowed when each one stops at a sign flip
_POLISH_EVERY = 5
_MAX_POLISH = 10


def _sign_preserving_fraction(alpha, step):
    """Largest t in (0, 1] keeping every nonzero alpha_j + t*step_j on its side of 0.

    Returns ``(t, j)`` where ``j`` is the coordinate that reaches zero at ``t``
    (or -1 if the full step keeps all signs).
    """
    crossing = (alpha != 0.0) & (np.sign(alpha) * step < 0.0)
    if not crossing.any():
        return 1.0, -1
    ratios = np.full(alpha.shape, np.inf)
    ratios[crossing] = -alpha[crossing] / step[crossing]
    j = int(np.argmin(ratios))
    if ratios[j] >= 1.0:
        return 1.0, -1
    return float(ratios[j]), j


def _fit_linear(X, y, lambdas, cfg):
    n = X.shape[0]
    gram = X.T @ X / n
    xty = X.T @ y / n
    return _cd.lasso_path_gram(gram, xty, lambdas, cfg.tol, cfg.max_iter, _POLISH_EVERY, _MAX_POLISH)


def _logistic_objective(eta, y, alpha, lam):
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta) + lam * np.abs(alpha).sum())


def _newton_direction(X, r, w, alpha, lam):
    """Newton step for (intercept, active coefficients) with the signs held fixed."""
    n = X.shape[0]
    idx = np.flatnonzero(alpha)
    D = np.column_stack([np.ones(n), X[:, idx]])
    H = D.T @ (w[:, None] * D) / n
    g = -(D.T @ r) / n
    g[1:] += lam * np.sign(alpha[idx])
    try:
        step = -np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(step)):
        return None
    full = np.zeros(alpha.shape[0])
    full[idx] = step[1:]
    return step[0], full, float(g @ step)


def _fit_logistic(X, y, lambdas, cfg):
    n, d = X.shape
    ybar = y.mean()
    b0 = np.log(ybar / (1.0 - ybar))
    alpha = np.zeros(d)
    active = np.zeros(d, dtype=bool)
    null_loss = _logistic_objective(np.full(n, b0), y, alpha, 0.0)
    coefs = np.zeros((len(lambdas), d))
    intercepts = np.zeros(len(lambdas))
    converged = np.zeros(len(lambdas), dtype=bool)
    X2 = X * X
    fitted = len(lambdas)
    for k, lam in enumerate(lambdas):
        sweeps_left = cfg.max_iter
        eta = b0 + X @ alpha
        for _ in range(cfg.max_outer):
            prob = expit(eta)
            r = y - prob
            grad = X.T @ r / n
            if max(_cd.kkt_residual(grad, alpha, lam), abs(r.mean())) <= cfg.tol:
                converged[k] = True
                break
            w = np.maximum(prob * (1.0 - prob), 1e-5)
            newton = None
            if not np.any((alpha == 0.0) & (np.abs(grad) > lam)):
                # support looks right: Newton on the smooth restricted problem
                newton = _newton_direction(X, r, w, alpha, lam)
            if newton is not None:
                step_b0, step, slope = newton
                t, hit = _sign_preserving_fraction(alpha, step)
            else:
                # otherwise a proximal-Newton step from a capped CD solve of
                # the weighted least-squares approximation
                if sweeps_left <= 0:
                    break
                budget = min(10, sweeps_left)
                sweeps_left -= budget
                trial = alpha.copy()
                step_b0 = _cd.weighted_cd(
                    X, w, X2.T @ w / n, r.copy(), trial, active, lam, cfg.tol, budget
                )
                step = trial - alpha
                slope, t, hit = 0.0, 1.0, -1
            old_obj = _logistic_objective(eta, y, alpha, lam)
            for _ in range(40):
                cand = alpha + t * step
                if hit >= 0:
                    cand[hit] = 0.0
                cand_b0 = b0 + t * step_b0
                cand_eta = cand_b0 + X @ cand
                obj = _logistic_objective(cand_eta, y, cand, lam)
                if obj <= old_obj + 1e-4 * t * slope + 1e-15 * abs(old_obj):
                    break
                t *= 0.5
                hit = -1
            else:
                break
            alpha, b0, eta = cand, cand_b0, cand_eta
        coefs[k] = alpha
        intercepts[k] = b0
        loss = _logistic_objective(eta, y, alpha, 0.0)
        if cfg.max_dev_ratio < 1.0 and 1.0 - loss / null_loss >= cfg.max_dev_ratio:
            fitted = k + 1
            break
    return coefs[:fitted], intercepts[:fitted], converged[:fitted]


def logistic_loss(X_ext, y, alpha, b0=0.0):
    """(1/n) sum_i [log(1 + exp(eta_i)) - y_i eta_i] with eta = b0 + X_ext alpha."""
    eta = b0 + np.asarray(X_ext) @ np.asarray(alpha)
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta))


def logistic_gradient(X_ext, y, alpha, b0=0.0):
    """Gradient of ``logistic_loss`` as ``(d/d alpha, d/d b0)``."""
    X_ext = np.asarray(X_ext)
    resid = expit(b0 + X_ext @ np.asarray(alpha)) - y
    return X_ext.T @ resid / X_ext.shape[0], float(resid.mean())


def kkt_residuals(X_ext, y, path, model=Model.LINEAR):
    """Per-grid-point KKT residual of the fitted path, recomputed from scratch."""
    X_ext = np.asarray(X_ext, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X_ext.shape[0]
    out = np.empty(len(path.lambdas))
    for k, lam in enumerate(path.lambdas):
        alpha = path.coefs[k]
        if Model(model) is Model.LOGISTIC:
            g, g0 = logistic_gradient(X_ext, y, alpha, path.intercepts[k])
            grad, extra = -g, abs(g0)
        else:
            grad = X_ext.T @ (y - X_ext @ alpha) / n
            extra = 0.0
        viol = np.where(
            alpha == 0.0,
            np.abs(grad) - lam,
            np.abs(grad - lam * np.sign(alpha)),
        )
        out[k] = max(float(np.max(viol, initial=0.0)), extra, 0.0)
    return out


def entry_statistics(path, zero_tol=1e-9):
    """Largest grid penalty at which each original / knockoff coefficient is nonzero.

    Returns ``(z, z_tilde)``; a coefficient that never leaves zero gets 0.
    """
    nonzero = np.abs(path.coefs) > zero_tol
    entered = nonzero.any(axis=0)
    # grid is decreasing, so the first nonzero row carries the largest lambda
    first = np.argmax(nonzero, axis=0)
    z_all = np.where(entered, path.lambdas[first], 0.0)
    p = path.n_features
    return z_all[:p], z_all[p:]
