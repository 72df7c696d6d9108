"""Numba coordinate-descent kernels used by ``paths``.

Both kernels update their state arrays in place and run at most
``max_sweeps`` passes.  Passes alternate between a full sweep over every
coordinate and repeated sweeps over the currently active set, in the usual
glmnet fashion.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def soft_threshold(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def kkt_residual(grad, alpha, lam):
    # grad is the NEGATIVE gradient of the smooth part of the loss
    worst = 0.0
    for j in range(alpha.shape[0]):
        if alpha[j] == 0.0:
            r = abs(grad[j]) - lam
        elif alpha[j] > 0.0:
            r = abs(grad[j] - lam)
        else:
            r = abs(grad[j] + lam)
        if r > worst:
            worst = r
    return worst


@njit(cache=True)
def gram_cd(gram, grad, alpha, active, lam, tol, max_sweeps):
    """Covariance-update CD for (1/2) a'Ga - c'a + lam ||a||_1.

    ``grad`` holds c - G a and is kept in sync with ``alpha``.  Returns
    ``(converged, sweeps)``; converged means a full sweep ended with KKT
    residual <= tol.
    """
    d = alpha.shape[0]
    sweeps = 0
    full = True
    while sweeps < max_sweeps:
        sweeps += 1
        max_step = 0.0
        for j in range(d):
            if not full and not active[j]:
                continue
            gjj = gram[j, j]
            if gjj <= 0.0:
                continue
            old = alpha[j]
            new = soft_threshold(grad[j] + gjj * old, lam) / gjj
            if new != old:
                delta = new - old
                alpha[j] = new
                for i in range(d):
                    grad[i] -= delta * gram[i, j]
                step = abs(delta) * gjj
                if step > max_step:
                    max_step = step
                if new != 0.0:
                    active[j] = True
        if full:
            if kkt_residual(grad, alpha, lam) <= tol:
                return True, sweeps
            full = False
        elif max_step <= 0.1 * tol:
            full = True
    return False, sweeps


@njit(cache=True)
def weighted_cd(X, w, xwx, r, alpha, active, lam, tol, max_sweeps):
    """CD on (1/2n) sum_i w_i (z_i - b0 - x_i a)^2 + lam ||a||_1.

    ``r`` holds the weighted working residual w * (z - eta) and is updated in
    place together with ``alpha``.  Returns the accumulated intercept shift.
    """
    n, d = X.shape
    wsum = np.sum(w) / n
    b0_shift = 0.0
    full = True
    for _ in range(max_sweeps):
        max_step = 0.0
        delta0 = np.sum(r) / n / wsum
        if delta0 != 0.0:
            b0_shift += delta0
            for i in range(n):
                r[i] -= delta0 * w[i]
            max_step = abs(delta0) * wsum
        for j in range(d):
            if not full and not active[j]:
                continue
            if xwx[j] <= 0.0:
                continue
            s = 0.0
            for i in range(n):
                s += X[i, j] * r[i]
            old = alpha[j]
            new = soft_threshold(s / n + xwx[j] * old, lam) / xwx[j]
            if new != old:
                delta = new - old
                alpha[j] = new
                for i in range(n):
                    r[i] -= delta * w[i] * X[i, j]
                step = abs(delta) * xwx[j]
                if step > max_step:
                    max_step = step
                if new != 0.0:
                    active[j] = True
        if max_step <= 0.01 * tol:
            if full:
                break
            full = True
        else:
            full = False
    return b0_shift


@njit(cache=True)
def _gram_objective(xty, grad, alpha, lam):
    # with grad = c - G a:  (1/2) a'Ga - c'a = -(1/2) a'c - (1/2) a'grad
    return -0.5 * (alpha @ xty) - 0.5 * (alpha @ grad) + lam * np.sum(np.abs(alpha))


@njit(cache=True)
def _cho_solve(L, b):
    m = b.shape[0]
    z = np.empty(m)
    for i in range(m):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * z[k]
        z[i] = s / L[i, i]
    x = np.empty(m)
    for i in range(m - 1, -1, -1):
        s = z[i]
        for k in range(i + 1, m):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x


@njit(cache=True)
def polish_gram(gram, xty, grad, alpha, lam):
    """Exact solve of the lasso restricted to the current support and signs.

    Moves toward the restricted minimizer, stopping at the first coordinate
    whose sign would flip (that coordinate is set to zero).  The move is
    undone if the objective does not decrease.  Returns 0 if the move was
    undone, 1 after a full step and 2 after a step cut short at a sign flip.
    """
    d = alpha.shape[0]
    idx = np.flatnonzero(alpha)
    m = idx.shape[0]
    if m == 0:
        return 0
    sub = np.empty((m, m))
    rhs = np.empty(m)
    for a in range(m):
        ja = idx[a]
        rhs[a] = xty[ja] - lam * np.sign(alpha[ja])
        for b in range(m):
            sub[a, b] = gram[ja, idx[b]]
    try:
        chol = np.linalg.cholesky(sub)
    except Exception:
        return 0
    target = _cho_solve(chol, rhs)
    t = 1.0
    hit = -1
    for a in range(m):
        cur = alpha[idx[a]]
        step = target[a] - cur
        if cur * step < 0.0:
            ratio = -cur / step
            if ratio < t:
                t = ratio
                hit = a
    before = _gram_objective(xty, grad, alpha, lam)
    saved_alpha = alpha.copy()
    saved_grad = grad.copy()
    for a in range(m):
        ja = idx[a]
        delta = t * (target[a] - alpha[ja])
        if a == hit:
            delta = -alpha[ja]
        if delta != 0.0:
            alpha[ja] += delta
            if a == hit:
                alpha[ja] = 0.0
            for i in range(d):
                grad[i] -= delta * gram[i, ja]
    if not _gram_objective(xty, grad, alpha, lam) <= before:
        alpha[:] = saved_alpha
        grad[:] = saved_grad
        return 0
    return 2 if hit >= 0 else 1


@njit(cache=True)
def lasso_path_gram(gram, xty, lambdas, tol, max_iter, polish_every, max_polish):
    """Warm-started lasso path: CD passes interleaved with active-set solves."""
    m = lambdas.shape[0]
    d = xty.shape[0]
    coefs = np.zeros((m, d))
    converged = np.zeros(m, dtype=np.bool_)
    alpha = np.zeros(d)
    grad = xty.copy()
    active = np.zeros(d, dtype=np.bool_)
    for k in range(m):
        lam = lambdas[k]
        used = 0
        while used < max_iter:
            ok, sweeps = gram_cd(gram, grad, alpha, active, lam, tol, min(polish_every, max_iter - used))
            used += sweeps
            if ok:
                converged[k] = True
                break
            # after a sign flip, re-solve on the smaller support straight away
            for _ in range(max_polish):
                if polish_gram(gram, xty, grad, alpha, lam) != 2:
                    break
        coefs[k] = alpha
    return coefs, converged
