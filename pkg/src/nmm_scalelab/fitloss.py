"""Fit ``L = E + A/N**alpha + B/D**beta`` to observed runs.

The loss is fitted in log space: each additive term is written as
``exp(const - exponent * log x)`` so that the prediction becomes a
log-sum-exp, and residuals ``LSE(...) - log L`` are scored with a Huber loss.
The parameter vector is ``(a, b, e, alpha, beta)`` with ``A = exp(a)``,
``B = exp(b)``, ``E = exp(e)``, which keeps every coefficient positive.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import LossSurfaceFit, RunRecord, points_from_records
from .errors import AllInitsFailed, InvariantViolation, NonFiniteObjective, TooFewPoints
from .lbfgs import BatchResult, minimize_batch

PARAM_NAMES = ("a", "b", "e", "alpha", "beta")
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class FitConfig:
    huber_delta: float = 1e-3
    init_grid_alpha_beta: tuple[float, ...] = (0.0, 0.5, 2.5)
    init_grid_a_b: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    init_grid_e: tuple[float, ...] = (-1.0, -0.5, 0.5, 1.0)
    max_iterations: int = 1000
    gradient_tolerance: float = 1e-9
    f_rel_tolerance: float = 1e-12
    lbfgs_history: int = 10

    def __post_init__(self):
        if not self.huber_delta > 0:
            raise InvariantViolation("huber_delta", "must be > 0")
        for name in ("init_grid_alpha_beta", "init_grid_a_b", "init_grid_e"):
            grid = tuple(float(v) for v in getattr(self, name))
            if not grid:
                raise InvariantViolation(name, "grid must be non-empty")
            object.__setattr__(self, name, grid)
        for name in ("gradient_tolerance", "f_rel_tolerance"):
            if not getattr(self, name) > 0:
                raise InvariantViolation(name, "must be > 0")
        if self.max_iterations < 1 or self.lbfgs_history < 1:
            raise InvariantViolation("max_iterations", "iteration and history limits must be >= 1")

    def lbfgs_options(self) -> dict:
        return dict(max_iterations=self.max_iterations, gradient_tolerance=self.gradient_tolerance,
                    f_rel_tolerance=self.f_rel_tolerance, history=self.lbfgs_history)

    def init_grid(self) -> np.ndarray:
        """Cartesian grid of starts, enumerated in ``(a, b, e, alpha, beta)`` order."""
        return np.array(list(itertools.product(self.init_grid_a_b, self.init_grid_a_b, self.init_grid_e,
                                               self.init_grid_alpha_beta, self.init_grid_alpha_beta)))


# --- generic Huber-over-LSE objective ---------------------------------------

@dataclass(frozen=True)
class LseTerm:
    """One additive term ``exp(theta[const] - sum_k theta[exps[k]] * features[k])``."""

    const: int
    exps: tuple[int, ...] = ()
    features: tuple[np.ndarray, ...] = ()


def huber(r, delta):
    r = np.asarray(r, dtype=float)
    absr = np.abs(r)
    return np.where(absr <= delta, 0.5 * r * r, delta * (absr - 0.5 * delta))


def huber_grad(r, delta):
    return np.clip(r, -delta, delta)


def lse_huber_batch(theta: np.ndarray, terms: Sequence[LseTerm], log_l: np.ndarray, delta: float):
    """Objective and gradient for a ``(K, n_params)`` batch of parameter vectors.

    Features and ``log_l`` are either shared ``(P,)`` arrays or ``(K, P)``
    arrays giving every row its own points.
    """
    theta = np.asarray(theta, dtype=float)
    log_l = np.atleast_2d(log_l)
    shape = (theta.shape[0], log_l.shape[-1])
    logits = []
    for term in terms:
        t = np.broadcast_to(theta[:, term.const, None], shape)
        for k, feat in zip(term.exps, term.features):
            t = t - theta[:, k, None] * np.atleast_2d(feat)
        logits.append(t)
    stacked = np.stack(logits)  # (T, K, P)
    with np.errstate(over="ignore", invalid="ignore"):
        m = stacked.max(axis=0)
        w = np.exp(stacked - m)
        total = w.sum(axis=0)
        lse = m + np.log(total)
        resid = lse - log_l
        value = huber(resid, delta).sum(axis=1)
        psi = huber_grad(resid, delta)
        weights = w / total  # softmax over terms
        grad = np.zeros_like(theta)
        for j, term in enumerate(terms):
            pw = psi * weights[j]
            grad[:, term.const] += pw.sum(axis=1)
            for k, feat in zip(term.exps, term.features):
                grad[:, k] -= (pw * np.atleast_2d(feat)).sum(axis=1)
    return value, grad


def _as_points(points) -> np.ndarray:
    if len(points) and isinstance(points[0], RunRecord):
        return points_from_records(points)
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvariantViolation("points", "expected rows of (N, D, L)")
    return arr


def _check_points(pts: np.ndarray):
    if not np.all(np.isfinite(pts)):
        raise InvariantViolation("points", "must be finite")
    if np.any(pts[:, 0] < 1) or np.any(pts[:, 1] < 1):
        raise InvariantViolation("points", "N and D must be >= 1")
    if np.any(pts[:, 2] <= 0):
        raise InvariantViolation("loss", "must be > 0")


def dense_terms(pts: np.ndarray) -> list[LseTerm]:
    log_n, log_d = np.log(pts[:, 0]), np.log(pts[:, 1])
    return [LseTerm(0, (3,), (log_n,)), LseTerm(1, (4,), (log_d,)), LseTerm(2)]


def objective(params, points, delta: float = 1e-3) -> tuple[float, np.ndarray]:
    """Summed Huber loss of log-space residuals and its exact gradient over ``(a, b, e, alpha, beta)``."""
    pts = _as_points(points)
    _check_points(pts)
    theta = np.asarray(params, dtype=float).reshape(1, 5)
    value, grad = lse_huber_batch(theta, dense_terms(pts), np.log(pts[:, 2]), delta)
    if not (np.isfinite(value[0]) and np.all(np.isfinite(grad))):
        raise NonFiniteObjective(f"objective is not finite at {theta[0].tolist()}")
    return float(value[0]), grad[0]


# --- multi-start driver -------------------------------------------------------

def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("NMM_SCALELAB_THREADS")
        # numpy work here holds the GIL for short stretches; extra threads only add overhead
        threads = int(env) if env else 1
    return max(1, int(threads))


def run_starts(fun, starts: np.ndarray, lbfgs_options: dict, threads: int | None = None) -> BatchResult:
    """Run L-BFGS from every start, splitting the batch over threads.

    Chunks are contiguous slices of the start list and results are written
    back by index, so the outcome does not depend on the thread count.
    """
    starts = np.asarray(starts, dtype=float)
    threads = min(resolve_threads(threads), len(starts))
    if threads <= 1:
        return minimize_batch(fun, starts, **lbfgs_options)
    bounds = np.linspace(0, len(starts), threads + 1).astype(int)
    chunks = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda c: minimize_batch(fun, starts[c[0]:c[1]], **lbfgs_options), chunks))
    return BatchResult(*(np.concatenate([getattr(p, name) for p in parts])
                         for name in ("x", "f", "grad", "iterations", "status")))


def select_winner(result: BatchResult) -> int:
    """Index of the lowest final objective; near-ties go to the earliest start."""
    best = -1
    for i, val in enumerate(result.f):
        if not np.isfinite(val):
            continue
        if best < 0 or val < result.f[best] - TIE_TOLERANCE:
            best = i
    if best < 0:
        raise AllInitsFailed("no initialization produced a finite objective")
    return best


def rank_starts(result: BatchResult) -> np.ndarray:
    """Start indices ordered by final objective (ties by index)."""
    f = np.where(np.isfinite(result.f), result.f, np.inf)
    return np.lexsort((np.arange(len(f)), f))


def fit_from_starts(pts: np.ndarray, starts: np.ndarray, config: FitConfig,
                    threads: int | None = None) -> tuple[LossSurfaceFit, BatchResult]:
    terms = dense_terms(pts)
    log_l = np.log(pts[:, 2])
    delta = config.huber_delta

    def fun(theta):
        return lse_huber_batch(theta, terms, log_l, delta)

    result = run_starts(fun, starts, config.lbfgs_options(), threads)
    i = select_winner(result)
    a, b, e, alpha, beta = result.x[i]
    fit = LossSurfaceFit(
        e_irreducible=math.exp(e), a_coef=math.exp(a), b_coef=math.exp(b), alpha=float(alpha),
        beta=float(beta), objective=float(result.f[i]), winning_init_index=int(i),
        converged=bool(result.converged[i]), huber_delta=delta,
    )
    return fit, result


def fit_detailed(points, config: FitConfig | None = None,
                 threads: int | None = None) -> tuple[LossSurfaceFit, BatchResult]:
    """Like :func:`fit` but also returns the per-start optimizer results."""
    config = config or FitConfig()
    pts = _as_points(points)
    if len(pts) < 6:
        raise TooFewPoints(f"need at least 6 points to fit 5 parameters, got {len(pts)}")
    _check_points(pts)
    return fit_from_starts(pts, config.init_grid(), config, threads)


def fit(points, config: FitConfig | None = None, threads: int | None = None) -> LossSurfaceFit:
    """Best fit over the full initialization grid.

    ``points`` is a sequence of ``(N, D, L)`` rows or of :class:`RunRecord`.
    """
    return fit_detailed(points, config, threads)[0]


def predict_loss(fit: LossSurfaceFit, n, d):
    n_arr, d_arr = np.asarray(n, dtype=float), np.asarray(d, dtype=float)
    if np.any(n_arr < 1) or np.any(d_arr < 1):
        raise InvariantViolation("n", "N and D must be >= 1")
    out = fit.predict(n_arr, d_arr)
    return float(out) if out.ndim == 0 else out
