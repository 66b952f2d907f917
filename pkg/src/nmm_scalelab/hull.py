"""Loss-versus-compute frontier ``L = k * C**c`` from raw training curves.

Each model size contributes a curve of (FLOPs, loss) points. The curves are
interpolated in log-log space, the pointwise minimum across sizes is taken on a
dense grid, and the lower convex hull of that envelope is the frontier.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import PowerLawFit, RunRecord
from .errors import EmptySeries, InvariantViolation, TooFewPoints
from .flops import run_flops
from .frontier import fit_power_law

DEFAULT_MIN_FLOPS = 3e19
ENVELOPE_POINTS = 512
RESAMPLE_POINTS = 512

Series = Mapping[object, Sequence[tuple[float, float]]]


def series_from_records(records: Iterable[RunRecord]) -> dict[float, list[tuple[float, float]]]:
    """Group runs into one (FLOPs, loss) curve per model size."""
    out: dict[float, list[tuple[float, float]]] = defaultdict(list)
    for r in records:
        out[r.n_total if r.n_vision is not None else r.n_active].append((run_flops(r), r.loss))
    return dict(out)


def _log_curves(series: Series) -> list[tuple[np.ndarray, np.ndarray]]:
    if not series:
        raise EmptySeries("no series given")
    curves = []
    for key, pts in series.items():
        arr = np.asarray(pts, dtype=float).reshape(-1, 2)
        if len(arr) < 2:
            raise EmptySeries(f"series {key!r} needs at least 2 points, has {len(arr)}")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise InvariantViolation("series", f"series {key!r} needs positive finite (C, L)")
        arr = arr[np.lexsort((arr[:, 1], arr[:, 0]))]
        lc, ll = np.log(arr[:, 0]), np.log(arr[:, 1])
        # repeated budgets keep their lowest loss
        first = np.concatenate(([True], np.diff(lc) > 0))
        if first.sum() < 2:
            raise EmptySeries(f"series {key!r} needs at least 2 distinct FLOPs values")
        curves.append((lc[first], ll[first]))
    return curves


def envelope(series: Series, points: int = ENVELOPE_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise minimum of the log-log interpolated curves on a log-spaced grid.

    Returns ``(log C, log L)``; a curve only competes inside its own FLOPs range.
    """
    curves = _log_curves(series)
    lo = min(c[0][0] for c in curves)
    hi = max(c[0][-1] for c in curves)
    grid = np.linspace(lo, hi, points)
    # the data's own budgets join the grid so that no observed point is skipped
    grid = np.unique(np.concatenate([grid] + [c[0] for c in curves]))
    best = np.full(grid.shape, np.inf)
    for lc, ll in curves:
        inside = (grid >= lc[0]) & (grid <= lc[-1])
        best[inside] = np.minimum(best[inside], np.interp(grid[inside], lc, ll))
    keep = np.isfinite(best)
    return grid[keep], best[keep]


def lower_hull(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices of the lower convex hull of points sorted by ``x`` (monotone chain)."""
    idx: list[int] = []
    for i in range(len(x)):
        while len(idx) >= 2:
            o, a = idx[-2], idx[-1]
            cross = (x[a] - x[o]) * (y[i] - y[o]) - (y[a] - y[o]) * (x[i] - x[o])
            if cross <= 0:
                idx.pop()
            else:
                break
        idx.append(i)
    return np.array(idx)


def frontier_points(series: Series, points: int = ENVELOPE_POINTS) -> list[tuple[float, float]]:
    """Vertices ``(C, L)`` of the lower convex hull of the minimum-loss envelope, sorted by C."""
    lx, ly = envelope(series, points)
    idx = lower_hull(lx, ly)
    return [(float(np.exp(lx[i])), float(np.exp(ly[i]))) for i in idx]


def fit_compute_law(hull: Sequence[tuple[float, float]], c_min_flops: float = DEFAULT_MIN_FLOPS,
                    samples: int = RESAMPLE_POINTS) -> PowerLawFit:
    """Least-squares ``log L = log k + c log C`` along the hull above ``c_min_flops``.

    The hull is a polyline; it is sampled at ``samples`` log-spaced budgets
    between the threshold (or the hull start, if later) and its end, so every
    stretch of compute carries the same weight regardless of where the
    vertices happen to fall.
    """
    arr = np.asarray(hull, dtype=float).reshape(-1, 2)
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise InvariantViolation("hull", "points must be positive and finite")
    arr = arr[np.argsort(arr[:, 0], kind="stable")]
    if int((arr[:, 0] > c_min_flops).sum()) < 2:
        raise TooFewPoints(f"need at least 2 hull points above {c_min_flops:g} FLOPs")
    lc, ll = np.log(arr[:, 0]), np.log(arr[:, 1])
    first = np.concatenate(([True], np.diff(lc) > 0))
    lc, ll = lc[first], ll[first]
    lo = max(np.log(c_min_flops), lc[0])
    grid = np.linspace(lo, lc[-1], samples)
    grid = grid[grid > np.log(c_min_flops)]
    law = fit_power_law(np.exp(grid), np.exp(np.interp(grid, lc, ll)))
    return PowerLawFit(k=law.k, p=law.p, x_min=float(np.exp(grid[0])), x_max=float(np.exp(grid[-1])),
                       r_squared=law.r_squared)


def compute_law_from_records(records: Iterable[RunRecord], c_min_flops: float = DEFAULT_MIN_FLOPS) -> PowerLawFit:
    return fit_compute_law(frontier_points(series_from_records(records)), c_min_flops)
