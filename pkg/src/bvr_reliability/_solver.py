"""Batched Newton maximizer for concave log-linear objectives.

Maximizes, independently for every row b of a batch,

    f_b(mu) = sum_k W[b, k] * log(A[k] @ mu) - C[b] @ mu,   mu >= 0,

where A has nonnegative entries. Both the full BVR likelihood and the
likelihood restricted to R = r0 have this form (up to constants).

Coordinates whose every log term can vanish may sit on the boundary
mu_j = 0. The maximizer over the closed orthant is found by running damped
Newton in the relative interior of each admissible face and keeping the best
interior stationary point; concavity makes that the global maximum.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import optimize

_REL_FLOOR = 1e-12


@dataclass
class BatchSolution:
    mu: np.ndarray          # (B, p)
    value: np.ndarray       # (B,) objective at mu
    converged: np.ndarray   # (B,) bool
    iterations: np.ndarray  # (B,) int
    score_norm: np.ndarray  # (B,) ||mu * grad|| / scale
    zero_mask: np.ndarray   # (B, p) bool, coordinates fixed at 0


def objective(A, W, C, mu):
    lin = mu @ A.T  # (B, K)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(W > 0, W * np.log(np.where(W > 0, lin, 1.0)), 0.0)
    return logs.sum(axis=1) - (C * mu).sum(axis=1)


def gradient_hessian(A, W, C, mu):
    lin = mu @ A.T
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(W > 0, 1.0 / np.where(W > 0, lin, 1.0), 0.0)
    g = (W * inv) @ A - C
    p = A.shape[1]
    outer = (A[:, :, None] * A[:, None, :]).reshape(A.shape[0], p * p)
    H = -((W * inv**2) @ outer).reshape(-1, p, p)
    return g, H


def _faces(p):
    # most zeros first, lambda0 preferred at zero among equal sizes
    out = []
    for r in range(p - 1, -1, -1):
        out.extend(itertools.combinations(range(p), r))
    return out


def _admissible(A, W, zeros):
    """Rows for which fixing ``zeros`` at 0 keeps every active log term finite."""
    free = [j for j in range(A.shape[1]) if j not in zeros]
    if not free:
        return np.zeros(W.shape[0], dtype=bool)
    alive = A[:, free].sum(axis=1) > 0  # (K,)
    dead_terms = ~alive
    if not dead_terms.any():
        return np.ones(W.shape[0], dtype=bool)
    return ~np.any(W[:, dead_terms] > 0, axis=1)


def _newton_face(A, W, C, mu0, scale, tol, max_iter):
    """Damped Newton on the free coordinates of one face for a sub-batch."""
    B, p = mu0.shape
    mu = mu0.copy()
    f = objective(A, W, C, mu)
    active = np.ones(B, dtype=bool)
    iters = np.zeros(B, dtype=int)
    eye = np.eye(p)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        m = mu[idx]
        g, H = gradient_hessian(A, W[idx], C[idx], m)
        crit = np.linalg.norm(m * g, axis=1) / scale[idx]
        go = crit >= tol
        active[idx[~go]] = False
        idx, m, g, H = idx[go], m[go], g[go], H[go]
        if idx.size == 0:
            break
        iters[idx] += 1
        negH = -H
        ridge = 1e-13 * np.abs(np.trace(negH, axis1=1, axis2=2))[:, None, None]
        try:
            d = np.linalg.solve(negH + ridge * eye, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            d = m**2 * g
        fo = f[idx]
        slack = 1e-14 * (np.abs(fo) + scale[idx])
        # largest step 2**-k that keeps every coordinate strictly positive
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(d < 0, -m / d, np.inf).min(axis=1)
            t = np.where(ratio > 1, 1.0, 2.0 ** (-np.floor(np.log2(1 / ratio)) - 1))
        accepted = np.zeros(idx.size, dtype=bool)
        new_mu = m.copy()
        new_f = fo.copy()
        for _ in range(60):
            pi = np.flatnonzero(~accepted)
            if pi.size == 0:
                break
            cand = m[pi] + t[pi, None] * d[pi]
            pos = np.all(cand > 0, axis=1)
            fc = np.full(pi.size, -np.inf)
            if pos.any():
                rows = idx[pi[pos]]
                fc[pos] = objective(A, W[rows], C[rows], cand[pos])
            ok = pos & (fc >= fo[pi] - slack[pi])
            new_mu[pi[ok]] = cand[ok]
            new_f[pi[ok]] = fc[ok]
            accepted[pi[ok]] = True
            t[pi[~ok]] *= 0.5
        mu[idx] = new_mu
        f[idx] = new_f
        # no acceptable step means the iterate is at a rounding-level optimum;
        # a coordinate collapsing to 0 means the optimum lies on a smaller face
        rel = new_mu / new_mu.sum(axis=1, keepdims=True)
        stop = ~accepted | np.any(rel < _REL_FLOOR, axis=1)
        active[idx[stop]] = False
    g, _ = gradient_hessian(A, W, C, mu)
    crit = np.linalg.norm(mu * g, axis=1) / scale
    interior = np.all(mu / mu.sum(axis=1, keepdims=True) >= _REL_FLOOR, axis=1)
    done = (crit < tol) & interior
    return mu, f, done, iters, crit


def _scipy_fallback(A, W, C, mu0, scale, tol):
    """Log-parameterized quasi-Newton ascent for a single row on the open orthant."""
    w = W[None, :]
    c = C[None, :]

    def neg(z):
        mu = np.exp(z)[None, :]
        v = objective(A, w, c, mu)[0]
        return -v if np.isfinite(v) else np.inf

    def neg_grad(z):
        mu = np.exp(z)[None, :]
        g, _ = gradient_hessian(A, w, c, mu)
        return -(g[0] * mu[0])

    res = optimize.minimize(neg, np.log(mu0), jac=neg_grad, method="BFGS",
                            options={"gtol": tol * scale * 1e-2, "maxiter": 2000})
    mu = np.exp(res.x)
    g, _ = gradient_hessian(A, w, c, mu[None, :])
    crit = float(np.linalg.norm(mu * g[0]) / scale)
    return mu, -res.fun, crit < tol, int(res.nit), crit


def maximize(A, W, C, init, scale, tol=1e-10, max_iter=200, kkt_tol=1e-8):
    """Maximize the log-linear objective row by row over the closed orthant.

    Faces are visited from most to fewest zero coordinates; a row is settled
    by the first face whose stationary point also satisfies the KKT sign
    conditions on the fixed coordinates, which for a concave objective
    certifies the global maximum.

    ``scale`` (B,) normalizes the log-parameter gradient norm used as the
    convergence criterion; the callers pass the sample size.
    """
    A = np.asarray(A, dtype=float)
    W = np.asarray(W, dtype=float)
    C = np.asarray(C, dtype=float)
    init = np.asarray(init, dtype=float)
    scale = np.asarray(scale, dtype=float)
    B, p = C.shape
    best_mu = init.copy()
    best_f = np.full(B, -np.inf)
    best_conv = np.zeros(B, dtype=bool)
    best_it = np.zeros(B, dtype=int)
    best_crit = np.full(B, np.inf)
    best_zero = np.zeros((B, p), dtype=bool)

    for zeros in _faces(p):
        rows = np.flatnonzero(_admissible(A, W, zeros) & ~best_conv)
        if rows.size == 0:
            continue
        free = [j for j in range(p) if j not in zeros]
        mu, f, conv, it, crit = _newton_face(
            A[:, free], W[rows], C[rows][:, free], init[rows][:, free], scale[rows],
            tol, max_iter)
        full = np.zeros((rows.size, p))
        full[:, free] = mu
        if zeros:
            g, _ = gradient_hessian(A, W[rows], C[rows], full)
            conv &= np.all(g[:, list(zeros)] <= kkt_tol * np.maximum(scale[rows], 1.0)[:, None],
                           axis=1)
        r = rows[conv]
        best_mu[r] = full[conv]
        best_f[r] = f[conv]
        best_conv[r] = True
        best_it[r] = it[conv]
        best_crit[r] = crit[conv]
        best_zero[np.ix_(r, list(zeros))] = True

    failed = np.flatnonzero(~best_conv)
    for b in failed:
        mu, f, conv, it, crit = _scipy_fallback(A, W[b], C[b], init[b], scale[b], tol)
        best_mu[b] = mu
        best_f[b] = f
        best_conv[b] = conv
        best_it[b] = max_iter + it
        best_crit[b] = crit
    return BatchSolution(best_mu, best_f, best_conv, best_it, best_crit, best_zero)
