"""Limited-memory BFGS with Armijo backtracking, batched over independent starts.

``minimize_batch`` advances K independent problems at once. Each row keeps its
own curvature history, step length and stopping state; rows never interact,
so the result for a row does not depend on which other rows share its batch.
That property is what lets the caller split a grid of starts across threads
and still get bit-identical answers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# status codes
RUNNING = 0
GRADIENT_SMALL = 1
F_REL_SMALL = 2
LINE_SEARCH_FAILED = 3
MAX_ITER = 4
NON_FINITE_START = 5

Objective = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass
class BatchResult:
    x: np.ndarray  # (K, n)
    f: np.ndarray  # (K,)
    grad: np.ndarray  # (K, n)
    iterations: np.ndarray  # (K,)
    status: np.ndarray  # (K,)

    @property
    def converged(self) -> np.ndarray:
        return (self.status == GRADIENT_SMALL) | (self.status == F_REL_SMALL)

    def subset(self, rows) -> "BatchResult":
        return BatchResult(self.x[rows], self.f[rows], self.grad[rows], self.iterations[rows], self.status[rows])


def _rowdot(u, v):
    return (u * v).sum(axis=-1)


def _two_loop(g, S, Y, rho):
    """Apply the inverse-Hessian approximation to ``g`` (rows with empty history get -g)."""
    m = S.shape[1]
    q = g.copy()
    alphas = np.zeros((g.shape[0], m))
    for i in range(m):  # newest first
        alphas[:, i] = rho[:, i] * _rowdot(S[:, i], q)
        q -= alphas[:, i, None] * Y[:, i]
    sy = _rowdot(S[:, 0], Y[:, 0])
    yy = _rowdot(Y[:, 0], Y[:, 0])
    has_hist = rho[:, 0] > 0
    gamma = np.where(has_hist, sy / np.where(has_hist, yy, 1.0), 1.0)
    r = gamma[:, None] * q
    for i in range(m - 1, -1, -1):
        beta = rho[:, i] * _rowdot(Y[:, i], r)
        r += S[:, i] * (alphas[:, i] - beta)[:, None]
    return -r


def _steepest(g):
    norm = np.sqrt(_rowdot(g, g))
    return -g / np.maximum(norm, 1.0)[:, None]


def minimize_batch(fun: Objective, x0, *, max_iterations: int = 1000, gradient_tolerance: float = 1e-9,
                   f_rel_tolerance: float = 1e-12, history: int = 10, c1: float = 1e-4,
                   shrink: float = 0.5, max_backtracks: int = 50, row_aware: bool = False) -> BatchResult:
    """Minimize ``fun`` from every row of ``x0``.

    ``fun`` maps a ``(k, n)`` array to ``(values (k,), gradients (k, n))`` and
    must treat rows independently. Non-finite trial values count as failed
    Armijo tests. A row stops when ``max|grad| < gradient_tolerance``, when one
    iteration lowers the objective by less than ``f_rel_tolerance`` relative to
    its previous value, when 50 halvings cannot satisfy Armijo, or after
    ``max_iterations``. With ``row_aware`` the objective is called as
    ``fun(x, rows)`` where ``rows`` holds the batch index of every row of ``x``,
    so each row can carry its own data.
    """
    x = np.array(x0, dtype=float, copy=True)
    if x.ndim != 2:
        raise ValueError("x0 must be a (K, n) array")
    K, n = x.shape
    objective = fun
    if not row_aware:
        def objective(xs, rows):
            return fun(xs)
    f, g = objective(x, np.arange(K))
    f = np.array(f, dtype=float)
    g = np.array(g, dtype=float)
    status = np.zeros(K, dtype=np.int64)
    iterations = np.zeros(K, dtype=np.int64)
    bad = ~(np.isfinite(f) & np.all(np.isfinite(g), axis=1))
    status[bad] = NON_FINITE_START
    status[(status == RUNNING) & (np.abs(g).max(axis=1) < gradient_tolerance)] = GRADIENT_SMALL

    S = np.zeros((K, history, n))
    Y = np.zeros((K, history, n))
    rho = np.zeros((K, history))

    for _ in range(max_iterations):
        act = np.flatnonzero(status == RUNNING)
        if act.size == 0:
            break
        ga = g[act]
        d = _two_loop(ga, S[act], Y[act], rho[act])
        slope = _rowdot(ga, d)
        reset = ~(slope < 0) | ~np.all(np.isfinite(d), axis=1)
        if reset.any():
            rows = act[reset]
            S[rows] = 0.0
            Y[rows] = 0.0
            rho[rows] = 0.0
            d[reset] = _steepest(ga[reset])
            slope[reset] = _rowdot(ga[reset], d[reset])

        # backtracking line search, only re-evaluating rows that still fail
        step = np.ones(act.size)
        f_new = np.empty(act.size)
        g_new = np.empty((act.size, n))
        pending = np.arange(act.size)
        for _ in range(max_backtracks + 1):
            xt = x[act[pending]] + step[pending, None] * d[pending]
            ft, gt = objective(xt, act[pending])
            ok = (np.isfinite(ft) & np.all(np.isfinite(gt), axis=1)
                  & (ft <= f[act[pending]] + c1 * step[pending] * slope[pending]))
            f_new[pending[ok]] = ft[ok]
            g_new[pending[ok]] = gt[ok]
            pending = pending[~ok]
            if pending.size == 0:
                break
            step[pending] *= shrink
        failed = np.zeros(act.size, dtype=bool)
        failed[pending] = True
        status[act[failed]] = LINE_SEARCH_FAILED

        acc = np.flatnonzero(~failed)
        rows = act[acc]
        s_vec = step[acc, None] * d[acc]
        y_vec = g_new[acc] - g[rows]
        f_old = f[rows]
        x[rows] = x[rows] + s_vec
        f[rows] = f_new[acc]
        g[rows] = g_new[acc]
        iterations[rows] += 1

        sy = _rowdot(s_vec, y_vec)
        good = sy > 1e-12 * np.sqrt(_rowdot(s_vec, s_vec) * _rowdot(y_vec, y_vec))
        upd = rows[good]
        if upd.size:
            S[upd] = np.roll(S[upd], 1, axis=1)
            Y[upd] = np.roll(Y[upd], 1, axis=1)
            rho[upd] = np.roll(rho[upd], 1, axis=1)
            S[upd, 0] = s_vec[good]
            Y[upd, 0] = y_vec[good]
            rho[upd, 0] = 1.0 / sy[good]

        small_g = np.abs(g[rows]).max(axis=1) < gradient_tolerance
        scale = np.maximum(np.abs(f_old), np.finfo(float).tiny)
        small_f = (f_old - f[rows]) < f_rel_tolerance * scale
        status[rows[small_g]] = GRADIENT_SMALL
        status[rows[~small_g & small_f]] = F_REL_SMALL

    # a row stopped by the line search may still sit at a stationary point
    ls = status == LINE_SEARCH_FAILED
    status[ls & (np.abs(g).max(axis=1) < gradient_tolerance)] = GRADIENT_SMALL
    status[status == RUNNING] = MAX_ITER
    return BatchResult(x=x, f=f, grad=g, iterations=iterations, status=status)


def minimize(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], x0, **kwargs) -> BatchResult:
    """Single-start convenience wrapper around :func:`minimize_batch`."""

    def batched(X):
        vals, grads = zip(*(fun(row) for row in X))
        return np.array(vals, dtype=float), np.array(grads, dtype=float)

    return minimize_batch(batched, np.atleast_2d(np.asarray(x0, dtype=float)), **kwargs)
