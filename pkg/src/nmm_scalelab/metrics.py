"""Prediction-error metrics for a fitted loss law on a set of runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LossSurfaceFit
from .errors import InvariantViolation, TooFewPoints, ZeroVariance
from .fitloss import _as_points


@dataclass(frozen=True)
class Evaluation:
    mse: float
    r_squared: float
    mae_percent: float

    def __iter__(self):
        return iter((self.mse, self.r_squared, self.mae_percent))


def score_predictions(predicted, observed) -> Evaluation:
    """MSE, R² and mean absolute error relative to the observed value, in percent."""
    pred = np.asarray(predicted, dtype=float)
    obs = np.asarray(observed, dtype=float)
    if pred.shape != obs.shape or pred.ndim != 1:
        raise InvariantViolation("predicted", "predictions and observations must be equal-length vectors")
    if obs.size < 2:
        raise TooFewPoints("need at least 2 points")
    if np.any(obs <= 0):
        raise InvariantViolation("loss", "observed losses must be > 0")
    err = pred - obs
    ss_tot = float(((obs - obs.mean()) ** 2).sum())
    if ss_tot == 0:
        raise ZeroVariance("observed losses are all equal; R² is undefined")
    return Evaluation(mse=float(np.mean(err ** 2)), r_squared=1.0 - float((err ** 2).sum()) / ss_tot,
                      mae_percent=100.0 * float(np.mean(np.abs(err) / obs)))


def evaluate(fit: LossSurfaceFit, points) -> Evaluation:
    """Score ``fit`` on ``(N, D, L)`` rows or run records."""
    pts = _as_points(points)
    return score_predictions(fit.predict(pts[:, 0], pts[:, 1]), pts[:, 2])
