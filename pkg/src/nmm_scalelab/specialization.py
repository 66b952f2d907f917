"""How strongly MoE experts specialize by modality, from routing counts.

Two per-layer scores are provided. The entropy score averages ``1 - H2(p)``
over experts, where ``p`` is the text share of the tokens an expert received
and ``H2`` the base-2 binary entropy, so a pure expert scores 1 and a balanced
one 0. The uniform-deviation score compares each expert's share of a
modality's tokens with the ``1/E`` share a uniform router would give it.
"""

from __future__ import annotations

import numpy as np

from .core import AssignmentTable
from .errors import AllExpertsEmpty, EmptyExpert, InvariantViolation


def _check_layer(table: AssignmentTable, layer: int):
    if not 0 <= layer < table.num_layers:
        raise InvariantViolation("layer", f"layer {layer} not in [0, {table.num_layers})")


def expert_distribution(table: AssignmentTable, layer: int, expert: int) -> float:
    """Text share ``text / (text + image)`` of one expert's tokens."""
    _check_layer(table, layer)
    if not 0 <= expert < table.num_experts:
        raise InvariantViolation("expert", f"expert {expert} not in [0, {table.num_experts})")
    t = table.text_tokens[layer, expert]
    total = t + table.image_tokens[layer, expert]
    if total == 0:
        raise EmptyExpert(f"expert {expert} in layer {layer} received no tokens")
    return float(t / total)


def binary_entropy(p) -> np.ndarray:
    """Base-2 entropy with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log2(p) + (1 - p) * np.log2(1 - p))
    return np.where((p == 0) | (p == 1), 0.0, h)


def entropy_specialization(table: AssignmentTable, layer: int) -> float:
    """Mean ``1 - H2(p)`` over the experts of ``layer`` that received tokens."""
    _check_layer(table, layer)
    text = table.text_tokens[layer]
    total = text + table.image_tokens[layer]
    used = total > 0
    if not used.any():
        raise AllExpertsEmpty(f"no expert in layer {layer} received tokens")
    p = text[used] / total[used]
    return float(np.mean(1.0 - binary_entropy(p)))


def uniform_deviation_specialization(table: AssignmentTable, layer: int) -> float:
    """Mean over both modalities and all experts of ``|share - 1/num_experts|``."""
    _check_layer(table, layer)
    devs = []
    for name, counts in (("text", table.text_tokens[layer]), ("image", table.image_tokens[layer])):
        total = counts.sum()
        if total == 0:
            raise AllExpertsEmpty(f"no {name} tokens routed in layer {layer}")
        devs.append(np.abs(counts / total - 1.0 / table.num_experts))
    return float(np.mean(np.concatenate(devs)))


METRICS = {"entropy": entropy_specialization, "uniform": uniform_deviation_specialization}


def layer_scores(table: AssignmentTable, metric: str = "entropy") -> list[float]:
    """One score per layer, in layer order."""
    if metric not in METRICS:
        raise InvariantViolation("metric", f"choose from {sorted(METRICS)}")
    return [METRICS[metric](table, layer) for layer in range(table.num_layers)]
