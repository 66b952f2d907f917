"""Domain types shared across the package.

All types are frozen dataclasses that validate their fields on construction,
so an instance that exists is an instance that satisfies its invariants.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .errors import DuplicateRun, EmptyDataset, InvariantViolation


class Arch(str, Enum):
    EARLY = "early"
    LATE = "late"
    MOE_AGNOSTIC = "moe_agnostic"
    MOE_AWARE = "moe_aware"

    @property
    def is_moe(self) -> bool:
        return self in (Arch.MOE_AGNOSTIC, Arch.MOE_AWARE)


class EvalSet(str, Enum):
    CAPTION = "caption"
    INTERLEAVED = "interleaved"
    TEXT = "text"
    AVG = "avg"


class FrontierSource(str, Enum):
    REGRESSION = "regression"
    CLOSED_FORM = "closed_form"


def _finite(name: str, value: float, run_id: str | None = None) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise InvariantViolation(name, f"must be finite, got {value!r}", run_id)
    return value


@dataclass(frozen=True)
class RunRecord:
    """One training run evaluated on one validation set.

    Parameter and token counts are absolute (not billions). ``loss`` is the
    validation cross-entropy in nats.
    """

    run_id: str
    arch: Arch
    n_active: float
    n_total: float
    tokens: float
    loss: float
    eval_set: EvalSet = EvalSet.AVG
    mixture: str = "45-45-10"
    n_vision: float | None = None
    vision_token_fraction: float | None = None

    def __post_init__(self):
        rid = self.run_id
        if not isinstance(rid, str) or not rid:
            raise InvariantViolation("run_id", "must be a non-empty string")
        try:
            object.__setattr__(self, "arch", Arch(self.arch))
        except ValueError:
            raise InvariantViolation("arch", f"unknown architecture {self.arch!r}", rid) from None
        try:
            object.__setattr__(self, "eval_set", EvalSet(self.eval_set))
        except ValueError:
            raise InvariantViolation("eval_set", f"unknown eval set {self.eval_set!r}", rid) from None
        for name in ("n_active", "n_total", "tokens", "loss"):
            object.__setattr__(self, name, _finite(name, getattr(self, name), rid))
        if self.n_active < 1:
            raise InvariantViolation("n_active", "must be >= 1", rid)
        if self.n_total < self.n_active:
            raise InvariantViolation("n_total", "must be >= n_active", rid)
        if self.tokens < 1:
            raise InvariantViolation("tokens", "must be >= 1", rid)
        if self.loss <= 0:
            raise InvariantViolation("loss", "must be > 0", rid)
        if self.n_vision is not None:
            nv = _finite("n_vision", self.n_vision, rid)
            object.__setattr__(self, "n_vision", nv)
            if not 1 <= nv < self.n_total:
                raise InvariantViolation("n_vision", "must satisfy 1 <= n_vision < n_total", rid)
        elif self.arch is Arch.LATE:
            raise InvariantViolation("n_vision", "required for late-fusion runs", rid)
        if self.vision_token_fraction is not None:
            f = _finite("vision_token_fraction", self.vision_token_fraction, rid)
            object.__setattr__(self, "vision_token_fraction", f)
            if not 0.0 <= f <= 1.0:
                raise InvariantViolation("vision_token_fraction", "must lie in [0, 1]", rid)

    @property
    def sparsity(self) -> float:
        """Fraction of inactive parameters, ``1 - n_active / n_total``."""
        return 1.0 - self.n_active / self.n_total


@dataclass(frozen=True)
class LossSurfaceFit:
    """Fitted ``L(N, D) = E + A / N**alpha + B / D**beta``."""

    e_irreducible: float
    a_coef: float
    b_coef: float
    alpha: float
    beta: float
    objective: float = 0.0
    winning_init_index: int = -1
    converged: bool = True
    huber_delta: float = 1e-3

    def __post_init__(self):
        for name in ("e_irreducible", "a_coef", "b_coef"):
            if not getattr(self, name) > 0:
                raise InvariantViolation(name, "must be > 0")
        for name in ("alpha", "beta"):
            _finite(name, getattr(self, name))
        if not self.objective >= 0:
            raise InvariantViolation("objective", "must be >= 0")
        if not self.huber_delta > 0:
            raise InvariantViolation("huber_delta", "must be > 0")

    def predict(self, n, d):
        n = np.asarray(n, dtype=float)
        d = np.asarray(d, dtype=float)
        return self.e_irreducible + self.a_coef * n ** -self.alpha + self.b_coef * d ** -self.beta

    @property
    def log_params(self) -> np.ndarray:
        """Parameter vector ``(a, b, e, alpha, beta)`` of the log-sum-exp form."""
        return np.array([math.log(self.a_coef), math.log(self.b_coef), math.log(self.e_irreducible),
                         self.alpha, self.beta])


@dataclass(frozen=True)
class PowerLawFit:
    """``y = k * x**p`` fitted over ``[x_min, x_max]``."""

    k: float
    p: float
    x_min: float
    x_max: float
    r_squared: float

    def __post_init__(self):
        if not (math.isfinite(self.k) and self.k > 0):
            raise InvariantViolation("k", "must be finite and > 0")
        _finite("p", self.p)
        if not self.x_min < self.x_max:
            raise InvariantViolation("x_min", "must be < x_max")
        if not self.r_squared <= 1.0:
            raise InvariantViolation("r_squared", "must be <= 1")

    def __call__(self, x):
        return self.k * np.asarray(x, dtype=float) ** self.p


@dataclass(frozen=True)
class FrontierLaws:
    """Compute-optimal allocation laws.

    ``n_of_c.p`` is the model-size exponent (a), ``d_of_c.p`` the token
    exponent (b), ``d_of_n.p`` the tokens-vs-params exponent (d = b / a) and
    ``ratio_of_c.p`` the exponent of N/D against compute (a - b).
    """

    n_of_c: PowerLawFit
    d_of_c: PowerLawFit
    d_of_n: PowerLawFit
    ratio_of_c: PowerLawFit
    source: FrontierSource

    def __post_init__(self):
        try:
            object.__setattr__(self, "source", FrontierSource(self.source))
        except ValueError:
            raise InvariantViolation("source", f"unknown frontier source {self.source!r}") from None
        if self.source is FrontierSource.CLOSED_FORM and self.n_of_c.p + self.d_of_c.p != 1.0:
            raise InvariantViolation("d_of_c", "closed-form exponents must sum to exactly 1")

    @property
    def a(self) -> float:
        return self.n_of_c.p

    @property
    def b(self) -> float:
        return self.d_of_c.p

    @property
    def d(self) -> float:
        return self.d_of_n.p


@dataclass(frozen=True)
class SparseLossSurfaceFit:
    """Sparsity-aware law ``E + A/N**alpha + B/D**beta + C/(1-S)**lam + d/((1-S)**delta_s * N**gamma)``."""

    e_irr: float
    a_coef: float
    b_coef: float
    alpha: float
    beta: float
    lam: float
    delta_s: float
    gamma: float
    c_coef: float
    d_coef: float
    objective: float = 0.0
    converged: bool = True
    winning_init_index: int = -1
    huber_delta: float = 1e-3

    def __post_init__(self):
        for name in ("e_irr", "a_coef", "b_coef", "c_coef", "d_coef"):
            if not (math.isfinite(getattr(self, name)) and getattr(self, name) > 0):
                raise InvariantViolation(name, "must be finite and > 0")
        for name in ("alpha", "beta", "lam", "delta_s", "gamma"):
            _finite(name, getattr(self, name))
        if not self.objective >= 0:
            raise InvariantViolation("objective", "must be >= 0")

    def predict(self, n, d, s):
        n = np.asarray(n, dtype=float)
        d = np.asarray(d, dtype=float)
        dense = 1.0 - np.asarray(s, dtype=float)
        return (self.e_irr + self.a_coef * n ** -self.alpha + self.b_coef * d ** -self.beta
                + self.c_coef * dense ** -self.lam
                + self.d_coef * dense ** -self.delta_s * n ** -self.gamma)

    def dense_equivalent(self, n_ref: float) -> LossSurfaceFit:
        """Dense fit matching this law at S = 0 for models of size ``n_ref``.

        The interaction term depends on N, so the fold into E is exact only at
        ``n_ref``; the C term folds exactly for every N.
        """
        return LossSurfaceFit(
            e_irreducible=self.e_irr + self.c_coef + self.d_coef * n_ref ** -self.gamma,
            a_coef=self.a_coef, b_coef=self.b_coef, alpha=self.alpha, beta=self.beta,
            objective=self.objective, converged=self.converged, huber_delta=self.huber_delta,
        )


@dataclass(frozen=True, eq=False)
class AssignmentTable:
    """Per-(layer, expert) counts of text and image tokens routed to that expert."""

    source: str
    text_tokens: np.ndarray
    image_tokens: np.ndarray

    def __post_init__(self):
        text = np.array(self.text_tokens, dtype=float)
        image = np.array(self.image_tokens, dtype=float)
        if text.ndim != 2 or text.shape != image.shape or text.size == 0:
            raise InvariantViolation("counts", "text and image counts must be equal-shape (layers, experts) arrays")
        if not (np.all(np.isfinite(text)) and np.all(np.isfinite(image))):
            raise InvariantViolation("counts", "must be finite")
        if np.any(text < 0) or np.any(image < 0):
            raise InvariantViolation("counts", "must be non-negative")
        text.setflags(write=False)
        image.setflags(write=False)
        object.__setattr__(self, "text_tokens", text)
        object.__setattr__(self, "image_tokens", image)

    @property
    def num_layers(self) -> int:
        return self.text_tokens.shape[0]

    @property
    def num_experts(self) -> int:
        return self.text_tokens.shape[1]

    @property
    def counts(self) -> dict[tuple[int, int], dict[str, float]]:
        return {(layer, e): {"text_tokens": float(self.text_tokens[layer, e]),
                             "image_tokens": float(self.image_tokens[layer, e])}
                for layer in range(self.num_layers) for e in range(self.num_experts)}

    @classmethod
    def from_cells(cls, source: str, cells: Mapping[tuple[int, int], tuple[float, float]],
                   num_layers: int | None = None, num_experts: int | None = None) -> "AssignmentTable":
        if not cells:
            raise InvariantViolation("counts", "no cells")
        layers = num_layers if num_layers is not None else 1 + max(k[0] for k in cells)
        experts = num_experts if num_experts is not None else 1 + max(k[1] for k in cells)
        text = np.zeros((layers, experts))
        image = np.zeros((layers, experts))
        seen = set()
        for (layer, expert), (t, i) in cells.items():
            if not (0 <= layer < layers and 0 <= expert < experts):
                raise InvariantViolation("counts", f"cell ({layer}, {expert}) out of range")
            text[layer, expert], image[layer, expert] = t, i
            seen.add((layer, expert))
        if len(seen) != layers * experts:
            missing = sorted({(l, e) for l in range(layers) for e in range(experts)} - seen)
            raise InvariantViolation("counts", f"missing cells, e.g. {missing[0]}")
        return cls(source, text, image)

    def __eq__(self, other):
        if not isinstance(other, AssignmentTable):
            return NotImplemented
        return (self.source == other.source and np.array_equal(self.text_tokens, other.text_tokens)
                and np.array_equal(self.image_tokens, other.image_tokens))

    __hash__ = None


GroupKey = tuple[Arch, str, EvalSet]


@dataclass(frozen=True)
class Dataset:
    """Validated records grouped by ``(arch, mixture, eval_set)``."""

    records: tuple[RunRecord, ...]
    groups: Mapping[GroupKey, tuple[RunRecord, ...]] = field(repr=False)

    def select(self, arch: Arch | str | None = None, mixture: str | None = None,
               eval_set: EvalSet | str | None = None) -> list[RunRecord]:
        arch = Arch(arch) if arch is not None else None
        eval_set = EvalSet(eval_set) if eval_set is not None else None
        out = []
        for (g_arch, g_mix, g_eval), recs in self.groups.items():
            if arch is not None and g_arch is not arch:
                continue
            if mixture is not None and g_mix != mixture:
                continue
            if eval_set is not None and g_eval is not eval_set:
                continue
            out.extend(recs)
        return out

    def __len__(self):
        return len(self.records)


def validate_dataset(records: Iterable[RunRecord]) -> Dataset:
    records = tuple(records)
    if not records:
        raise EmptyDataset("dataset contains no runs")
    seen: set[tuple[str, EvalSet]] = set()
    groups: dict[GroupKey, list[RunRecord]] = defaultdict(list)
    for rec in records:
        if not isinstance(rec, RunRecord):
            raise TypeError(f"expected RunRecord, got {type(rec).__name__}")
        key = (rec.run_id, rec.eval_set)
        if key in seen:
            raise DuplicateRun(f"run {rec.run_id!r} appears twice for eval set {rec.eval_set.value!r}")
        seen.add(key)
        groups[(rec.arch, rec.mixture, rec.eval_set)].append(rec)
    return Dataset(records, {k: tuple(v) for k, v in groups.items()})


def points_from_records(records: Iterable[RunRecord]) -> np.ndarray:
    """``(P, 3)`` array of ``(n_active, tokens, loss)``."""
    rows = [(r.n_active, r.tokens, r.loss) for r in records]
    return np.array(rows, dtype=float).reshape(-1, 3)
