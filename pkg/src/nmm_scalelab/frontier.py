"""Compute-optimal allocation laws: N_opt ∝ C^a, D_opt ∝ C^b, D_opt ∝ N_opt^d.

Two routes are provided and kept independent so that each can check the other:

* :func:`closed_form_frontier` minimizes ``A/N**alpha + B/D**beta`` under
  ``C = 6 N D`` analytically.
* :func:`regress_frontier` scans a token grid for every budget, picks the
  loss-minimizing allocation numerically and regresses the optima in log space.
  It also accepts the late-fusion budget relation, for which no closed form
  exists without fixing the encoder size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import Arch, FrontierLaws, FrontierSource, LossSurfaceFit, PowerLawFit, RunRecord
from .errors import DegenerateGrid, InvalidFit, InvariantViolation, SingularRelation, TooFewPoints
from .flops import run_flops

DEFAULT_VISION_OFFSET = 0.483
DEFAULT_C_RANGE = (5e18, 1e22)

BudgetRelation = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TokenGrid:
    """Log-spaced candidate token counts scanned for each compute budget."""

    d_min: float = 1e10
    d_max: float = 6e11
    points: int = 200

    def __post_init__(self):
        if not (0 < self.d_min < self.d_max):
            raise InvariantViolation("d_min", "need 0 < d_min < d_max")
        if self.points < 3:
            raise InvariantViolation("points", "need at least 3 grid points")

    def values(self) -> np.ndarray:
        return np.geomspace(self.d_min, self.d_max, self.points)


def fit_power_law(x, y) -> PowerLawFit:
    """Ordinary least squares of ``log y`` on ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise TooFewPoints("need at least 2 (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise InvariantViolation("x", "power-law regression needs positive values")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise TooFewPoints("need at least 2 distinct x values")
    xm, ym = lx.mean(), ly.mean()
    slope = float(((lx - xm) * (ly - ym)).sum() / ((lx - xm) ** 2).sum())
    intercept = float(ym - slope * xm)
    resid = ly - (intercept + slope * lx)
    ss_tot = float(((ly - ym) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(k=math.exp(intercept), p=slope, x_min=float(x.min()), x_max=float(x.max()),
                       r_squared=min(r2, 1.0))


# --- closed form --------------------------------------------------------------

def closed_form_frontier(fit: LossSurfaceFit, c_range: tuple[float, float] = DEFAULT_C_RANGE) -> FrontierLaws:
    """Analytic optimum of the fitted law under ``C = 6 N D``.

    ``N_opt = G (C/6)**a`` and ``D_opt = G**-1 (C/6)**b`` with
    ``G = (alpha A / (beta B))**(1/(alpha+beta))``, ``a = beta/(alpha+beta)``
    and ``b = 1 - a``. Tokens then grow as ``N_opt**(b/a)``.
    """
    alpha, beta = fit.alpha, fit.beta
    if not (alpha > 0 and beta > 0):
        raise InvalidFit(f"closed form needs alpha, beta > 0, got {alpha}, {beta}")
    s = alpha + beta
    a = beta / s
    b = 1.0 - a
    log_g = (math.log(alpha * fit.a_coef) - math.log(beta * fit.b_coef)) / s
    log6 = math.log(6.0)
    c_lo, c_hi = c_range
    n_lo, n_hi = (math.exp(log_g + a * (math.log(c) - log6)) for c in (c_lo, c_hi))

    def law(log_k, p, lo, hi):
        return PowerLawFit(k=math.exp(log_k), p=p, x_min=lo, x_max=hi, r_squared=1.0)

    return FrontierLaws(
        n_of_c=law(log_g - a * log6, a, c_lo, c_hi),
        d_of_c=law(-log_g - b * log6, b, c_lo, c_hi),
        d_of_n=law(-log_g * (1.0 + b / a), b / a, n_lo, n_hi),
        ratio_of_c=law(2.0 * log_g - (a - b) * log6, a - b, c_lo, c_hi),
        source=FrontierSource.CLOSED_FORM,
    )


def exponent_columns(laws: FrontierLaws) -> dict[str, float]:
    """Exponents in the layout ``a, b, d, n, dn`` (``n = a/b``, ``dn = b - a``)."""
    return {"a": laws.a, "b": laws.b, "d": laws.d, "n": laws.a / laws.b, "dn": laws.b - laws.a}


# --- budget relations -------------------------------------------------------------

def early_budget_relation(c, d):
    """Model size spending budget ``c`` on ``d`` tokens with ``C = 6 N D``."""
    return np.asarray(c, dtype=float) / (6.0 * np.asarray(d, dtype=float))


def late_budget_relation(c, d, vision_model: tuple[float, float], vision_offset: float = DEFAULT_VISION_OFFSET):
    """Total size N solving ``N = C/(6D) + offset * N_v`` with ``N_v = p N + q``."""
    p, q = vision_model
    denom = 1.0 - vision_offset * p
    if not denom > 0:
        raise SingularRelation(f"1 - vision_offset * p = {denom} must be > 0")
    return (early_budget_relation(c, d) + vision_offset * q) / denom


def make_late_relation(vision_model: tuple[float, float],
                       vision_offset: float = DEFAULT_VISION_OFFSET) -> BudgetRelation:
    p = vision_model[0]
    if not 1.0 - vision_offset * p > 0:
        raise SingularRelation(f"1 - vision_offset * p = {1.0 - vision_offset * p} must be > 0")
    return partial(late_budget_relation, vision_model=vision_model, vision_offset=vision_offset)


def fit_vision_linear(records: Iterable[RunRecord]) -> tuple[float, float]:
    """Least-squares line ``N_v = p * N_total + q`` over late-fusion runs."""
    pairs = [(r.n_total, r.n_vision) for r in records if r.n_vision is not None]
    if len({n for n, _ in pairs}) < 2:
        raise TooFewPoints("need at least 2 distinct n_total values")
    n, nv = np.array(pairs, dtype=float).T
    nm = n.mean()
    p = float(((n - nm) * (nv - nv.mean())).sum() / ((n - nm) ** 2).sum())
    return p, float(nv.mean() - p * nm)


# --- regression route ---------------------------------------------------------------

@dataclass(frozen=True)
class FrontierScan:
    """Per-budget optima found on the token grid."""

    flops: np.ndarray
    n_opt: np.ndarray
    d_opt: np.ndarray
    at_boundary: np.ndarray


def scan_optima(fit: LossSurfaceFit, flops_values: Sequence[float], relation: BudgetRelation | None = None,
                grid: TokenGrid | None = None) -> FrontierScan:
    """For each budget, the grid token count minimizing predicted loss."""
    relation = relation or early_budget_relation
    grid = grid or TokenGrid()
    c = np.unique(np.asarray(flops_values, dtype=float))
    if c.size < 2:
        raise TooFewPoints("need at least 2 distinct FLOPs values")
    if np.any(c <= 0):
        raise InvariantViolation("flops_values", "must be > 0")
    d = grid.values()
    n = relation(c[:, None], d[None, :])  # (C, D)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        loss = np.where(n >= 1, fit.predict(np.maximum(n, 1.0), d[None, :]), np.inf)
    idx = np.argmin(loss, axis=1)
    rows = np.arange(c.size)
    return FrontierScan(flops=c, n_opt=n[rows, idx], d_opt=d[idx],
                        at_boundary=(idx == 0) | (idx == d.size - 1))


def regress_frontier(fit: LossSurfaceFit, flops_values: Sequence[float], relation: BudgetRelation | None = None,
                     grid: TokenGrid | None = None) -> FrontierLaws:
    """Regress the grid optima against compute and against each other.

    A minimum on a grid edge is censored (the true optimum lies outside the
    grid), so those budgets are dropped. Fewer than two interior optima raise
    :class:`DegenerateGrid`.
    """
    scan = scan_optima(fit, flops_values, relation, grid)
    keep = ~scan.at_boundary
    if keep.sum() < 2:
        raise DegenerateGrid("loss minima lie on the token-grid boundary for all but "
                             f"{int(keep.sum())} budget(s); widen the grid")
    c, n, d = scan.flops[keep], scan.n_opt[keep], scan.d_opt[keep]
    return FrontierLaws(
        n_of_c=fit_power_law(c, n),
        d_of_c=fit_power_law(c, d),
        d_of_n=fit_power_law(n, d),
        ratio_of_c=fit_power_law(c, n / d),
        source=FrontierSource.REGRESSION,
    )


def run_flops_values(records: Iterable[RunRecord], arch: Arch | str | None = None) -> np.ndarray:
    """Distinct training FLOPs of the given runs, the default budget set for regression."""
    arch = Arch(arch) if arch is not None else None
    vals = {run_flops(r) for r in records if arch is None or r.arch is arch}
    return np.array(sorted(vals))
