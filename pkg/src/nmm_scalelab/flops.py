"""Training-compute accounting.

Dense and sparse decoders cost ``6 * N * D``; MoE models count only active
parameters. Late fusion adds the vision encoder, which sees only the image
share of the tokens.
"""

from __future__ import annotations

from .core import Arch, RunRecord
from .errors import InvariantViolation

DEFAULT_VISION_TOKEN_FRACTION = 0.544


def _positive(name, value):
    if not value >= 1:
        raise InvariantViolation(name, f"must be >= 1, got {value!r}")


def early_flops(n: float, d: float) -> float:
    _positive("n", n)
    _positive("d", d)
    return 6.0 * n * d


def late_flops(n_vision: float, n_decoder: float, d: float,
               vision_token_fraction: float = DEFAULT_VISION_TOKEN_FRACTION) -> float:
    _positive("n_vision", n_vision)
    _positive("n_decoder", n_decoder)
    _positive("d", d)
    if not 0.0 <= vision_token_fraction <= 1.0:
        raise InvariantViolation("vision_token_fraction", "must lie in [0, 1]")
    return early_flops(n_decoder, d) + 6.0 * n_vision * vision_token_fraction * d


def moe_flops(n_active: float, d: float) -> float:
    return early_flops(n_active, d)


def run_flops(record: RunRecord) -> float:
    """FLOPs of a run according to its architecture."""
    if record.arch is Arch.LATE:
        frac = record.vision_token_fraction
        if frac is None:
            frac = DEFAULT_VISION_TOKEN_FRACTION
        return late_flops(record.n_vision, record.n_total - record.n_vision, record.tokens, frac)
    if record.arch.is_moe:
        return moe_flops(record.n_active, record.tokens)
    return early_flops(record.n_active, record.tokens)
