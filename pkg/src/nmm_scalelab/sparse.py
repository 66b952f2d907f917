"""Sparsity-aware loss law for mixture-of-experts runs.

    L(N, D, S) = E + A/N**alpha + B/D**beta + C/(1-S)**lam + d/((1-S)**delta_s * N**gamma)

N counts active parameters and S = 1 - active/total. The fit reuses the
Huber-over-log-sum-exp objective of :mod:`fitloss` with five terms. Any
parameter can be pinned to a fixed value, which is needed whenever the
design cannot separate it (for example a single sparsity level).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .core import RunRecord, SparseLossSurfaceFit
from .errors import DegenerateSparsity, InvariantViolation, TooFewPoints
from .fitloss import LseTerm, lse_huber_batch, resolve_threads, run_starts, select_winner

# log-space parameter vector; coefficients are stored as logs, exponents as is
PARAMS = ("a_coef", "b_coef", "e_irr", "alpha", "beta", "c_coef", "d_coef", "lam", "delta_s", "gamma")
LOG_PARAMS = {"a_coef", "b_coef", "e_irr", "c_coef", "d_coef"}
SPARSITY_EXPONENTS = ("lam", "delta_s", "gamma")


@dataclass(frozen=True)
class SparseFitConfig:
    """Initialization grid and optimizer settings for the five-term law.

    The coefficient grids are coarser than the dense fit's, since crossing
    them with the sparsity exponents multiplies the number of starts.
    """

    huber_delta: float = 1e-3
    init_grid_a_b_d: tuple[float, ...] = (0.0, 10.0, 20.0)
    init_grid_e_c: tuple[float, ...] = (0.0,)
    init_grid_alpha_beta: tuple[float, ...] = (0.5,)
    init_grid_lam_delta: tuple[float, ...] = (0.1, 0.2, 0.5)
    init_grid_gamma: tuple[float, ...] = (0.3, 0.7, 1.0)
    fixed: Mapping[str, float] = field(default_factory=dict)
    max_iterations: int = 1000
    gradient_tolerance: float = 1e-9
    f_rel_tolerance: float = 1e-12
    lbfgs_history: int = 10

    def __post_init__(self):
        if not self.huber_delta > 0:
            raise InvariantViolation("huber_delta", "must be > 0")
        for name in ("init_grid_a_b_d", "init_grid_e_c", "init_grid_alpha_beta", "init_grid_lam_delta",
                     "init_grid_gamma"):
            grid = tuple(float(v) for v in getattr(self, name))
            if not grid:
                raise InvariantViolation(name, "grid must be non-empty")
            object.__setattr__(self, name, grid)
        fixed = dict(self.fixed)
        for name, value in fixed.items():
            if name not in PARAMS:
                raise InvariantViolation("fixed", f"unknown parameter {name!r}")
            if not math.isfinite(value) or (name in LOG_PARAMS and value <= 0):
                raise InvariantViolation("fixed", f"bad value {value!r} for {name!r}")
        object.__setattr__(self, "fixed", fixed)

    def lbfgs_options(self) -> dict:
        return dict(max_iterations=self.max_iterations, gradient_tolerance=self.gradient_tolerance,
                    f_rel_tolerance=self.f_rel_tolerance, history=self.lbfgs_history)

    def init_grid(self) -> np.ndarray:
        """Starts in :data:`PARAMS` order, with fixed parameters set to their values."""
        abd, ec, ab = self.init_grid_a_b_d, self.init_grid_e_c, self.init_grid_alpha_beta
        ld, g = self.init_grid_lam_delta, self.init_grid_gamma
        rows = np.array([(a, b, e, al, be, c, d, lam, dl, gm) for a, b, e, al, be, c, d, lam, dl, gm
                         in itertools.product(abd, abd, ec, ab, ab, ec, abd, ld, ld, g)])
        for name, value in self.fixed.items():
            rows[:, PARAMS.index(name)] = math.log(value) if name in LOG_PARAMS else value
        # pinning collapses grid axes; keep the first occurrence of each start
        _, first = np.unique(rows, axis=0, return_index=True)
        return rows[np.sort(first)]


def sparse_points(records) -> np.ndarray:
    """``(P, 4)`` array of ``(n_active, tokens, sparsity, loss)``."""
    if len(records) and isinstance(records[0], RunRecord):
        return np.array([(r.n_active, r.tokens, r.sparsity, r.loss) for r in records], dtype=float)
    arr = np.asarray(records, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise InvariantViolation("points", "expected rows of (N, D, S, L)")
    return arr


def sparse_terms(pts: np.ndarray) -> list[LseTerm]:
    log_n, log_d, log_dense = np.log(pts[:, 0]), np.log(pts[:, 1]), np.log1p(-pts[:, 2])
    return [LseTerm(0, (3,), (log_n,)), LseTerm(1, (4,), (log_d,)), LseTerm(2),
            LseTerm(5, (7,), (log_dense,)), LseTerm(6, (8, 9), (log_dense, log_n))]


def sparse_objective(theta, points, delta: float = 1e-3):
    """Huber objective and gradient at one or more parameter vectors (rows of ``theta``)."""
    pts = sparse_points(points)
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    return lse_huber_batch(theta, sparse_terms(pts), np.log(pts[:, 3]), delta)


def fit_sparse(points, config: SparseFitConfig | None = None, threads: int | None = None) -> SparseLossSurfaceFit:
    """Best five-term fit over the initialization grid.

    ``points`` holds ``(N_active, D, S, L)`` rows or MoE :class:`RunRecord`.
    """
    config = config or SparseFitConfig()
    pts = sparse_points(points)
    if len(pts) < 10:
        raise TooFewPoints(f"need at least 10 points, got {len(pts)}")
    if not np.all(np.isfinite(pts)) or np.any(pts[:, :2] < 1) or np.any(pts[:, 3] <= 0):
        raise InvariantViolation("points", "need finite N, D >= 1 and L > 0")
    if np.any(pts[:, 2] < 0) or np.any(pts[:, 2] >= 1):
        raise InvariantViolation("sparsity", "must lie in [0, 1)")
    free_exps = [n for n in SPARSITY_EXPONENTS if n not in config.fixed]
    if np.unique(pts[:, 2]).size < 2 and free_exps:
        raise DegenerateSparsity(f"all runs share one sparsity level; fix {free_exps}")

    terms = sparse_terms(pts)
    log_l = np.log(pts[:, 3])
    delta = config.huber_delta
    mask = np.array([name not in config.fixed for name in PARAMS], dtype=float)

    def fun(theta):
        value, grad = lse_huber_batch(theta, terms, log_l, delta)
        return value, grad * mask  # fixed coordinates never move

    result = run_starts(fun, config.init_grid(), config.lbfgs_options(), resolve_threads(threads))
    i = select_winner(result)
    v = dict(zip(PARAMS, result.x[i]))
    for name in LOG_PARAMS:
        v[name] = math.exp(v[name])
    return SparseLossSurfaceFit(objective=float(result.f[i]), converged=bool(result.converged[i]),
                                winning_init_index=int(i), huber_delta=delta, **v)
