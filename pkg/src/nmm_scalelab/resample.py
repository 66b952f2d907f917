"""Bootstrap spread of the fitted loss-law coefficients.

Resampling uses xoshiro256** seeded through splitmix64. Each iteration gets
its own stream derived from ``(seed, iteration)``, so results do not depend on
the order in which iterations run or how many threads run them. The generator
is written out here, rather than taken from numpy, because its output must be
identical on every platform and numpy version.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import BootstrapFailed, InvariantViolation, ScaleLabError
from .fitloss import (FitConfig, LseTerm, _as_points, fit_detailed, lse_huber_batch, rank_starts, resolve_threads,
                      select_winner)
from .lbfgs import minimize_batch

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
COEFFICIENTS = ("E", "alpha", "beta", "a", "b", "d")
FALLBACK_STARTS = 3


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def splitmix64_mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


class Xoshiro256:
    """xoshiro256** with its state filled by splitmix64 from a 64-bit seed."""

    def __init__(self, seed: int):
        x = seed & MASK64
        state = []
        for _ in range(4):
            x = (x + GOLDEN) & MASK64
            state.append(splitmix64_mix(x))
        self.s = state

    @classmethod
    def for_stream(cls, seed: int, stream: int) -> "Xoshiro256":
        """Independent generator for sub-stream ``stream`` of ``seed``."""
        return cls(splitmix64_mix(seed & MASK64) ^ splitmix64_mix((stream + 1) * GOLDEN & MASK64))

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s
        result = (_rotl(s1 * 5 & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def below(self, n: int) -> int:
        """Unbiased integer in ``[0, n)`` (multiply-shift with rejection)."""
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = (1 << 64) % n
        while True:
            m = self.next_u64() * n
            if (m & MASK64) >= threshold:
                return m >> 64

    def indices(self, n: int, size: int) -> np.ndarray:
        return np.array([self.below(n) for _ in range(size)], dtype=np.int64)


def resample_indices(seed: int, iteration: int, n: int) -> np.ndarray:
    """The ``n`` draws with replacement used by bootstrap iteration ``iteration``."""
    return Xoshiro256.for_stream(seed, iteration).indices(n, n)


def derived_coefficients(alpha: float, beta: float) -> tuple[float, float, float]:
    """Closed-form ``(a, b, d)`` of the compute-optimal allocation."""
    if not (alpha > 0 and beta > 0):
        raise InvariantViolation("alpha", f"closed form needs alpha, beta > 0, got {alpha}, {beta}")
    a = beta / (alpha + beta)
    b = 1.0 - a
    return a, b, b / a


@dataclass(frozen=True)
class BootstrapSummary:
    iterations: int
    seed: int
    samples: np.ndarray  # (iterations, 6) in COEFFICIENTS order

    @property
    def mean(self) -> dict[str, float]:
        return dict(zip(COEFFICIENTS, (float(v) for v in self.samples.mean(axis=0))))

    @property
    def std(self) -> dict[str, float]:
        return dict(zip(COEFFICIENTS, (float(v) for v in self.samples.std(axis=0, ddof=1))))

    def to_dict(self) -> dict:
        mean, std = self.mean, self.std
        return {"iterations": self.iterations, "seed": self.seed,
                "coefficients": {k: {"mean": mean[k], "std": std[k]} for k in COEFFICIENTS}}


def _refit_batch(samples: np.ndarray, starts: np.ndarray, config: FitConfig, first: int) -> list[np.ndarray]:
    """Fit every resample in ``samples`` (shape ``(I, P, 3)``) from the same starts, in one batch."""
    n_iter, n_starts = samples.shape[0], starts.shape[0]
    log_n, log_d, log_l = (np.log(samples[:, :, j]) for j in range(3))
    owner = np.repeat(np.arange(n_iter), n_starts)
    delta = config.huber_delta

    def fun(theta, rows):
        it = owner[rows]
        terms = [LseTerm(0, (3,), (log_n[it],)), LseTerm(1, (4,), (log_d[it],)), LseTerm(2)]
        return lse_huber_batch(theta, terms, log_l[it], delta)

    result = minimize_batch(fun, np.tile(starts, (n_iter, 1)), row_aware=True, **config.lbfgs_options())
    rows = []
    for i in range(n_iter):
        try:
            part = result.subset(slice(i * n_starts, (i + 1) * n_starts))
            alpha, beta = part.x[select_winner(part), 3:5]
            a, b, d = derived_coefficients(alpha, beta)
        except ScaleLabError as exc:
            raise BootstrapFailed(first + i, exc) from exc
        e = part.x[select_winner(part), 2]
        rows.append(np.array([math.exp(e), alpha, beta, a, b, d]))
    return rows


def bootstrap(points, config: FitConfig | None = None, iterations: int = 100, seed: int = 0,
              threads: int | None = None) -> BootstrapSummary:
    """Refit the loss law on ``iterations`` resamples of ``points``.

    Each refit starts from the full-data optimum plus the grid starts that
    ranked best on the full data, instead of the whole grid. All refits run as
    one batch of independent optimizer rows; with several threads the
    iterations are split into contiguous blocks.
    """
    if iterations < 2:
        raise InvariantViolation("iterations", "need at least 2 bootstrap iterations")
    config = config or FitConfig()
    pts = _as_points(points)
    full, result = fit_detailed(pts, config, threads=threads)
    grid = config.init_grid()
    starts = np.vstack([full.log_params[None, :], grid[rank_starts(result)[:FALLBACK_STARTS]]])
    samples = np.stack([pts[resample_indices(seed, i, len(pts))] for i in range(iterations)])

    workers = min(resolve_threads(threads), iterations)
    bounds = np.linspace(0, iterations, workers + 1).astype(int)
    blocks = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

    def run(block):
        lo, hi = block
        return _refit_batch(samples[lo:hi], starts, config, lo)

    if len(blocks) == 1:
        parts = [run(blocks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            parts = list(pool.map(run, blocks))
    return BootstrapSummary(iterations=iterations, seed=seed, samples=np.vstack([r for p in parts for r in p]))
