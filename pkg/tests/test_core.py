import math

import numpy as np
import pytest

from nmm_scalelab.core import (Arch, AssignmentTable, EvalSet, FrontierLaws, LossSurfaceFit, PowerLawFit, RunRecord,
                               SparseLossSurfaceFit, points_from_records, validate_dataset)
from nmm_scalelab.errors import DuplicateRun, EmptyDataset, InvariantViolation


def run(run_id="r1", **kw):
    base = dict(run_id=run_id, arch="early", n_active=1e9, n_total=1e9, tokens=1e11, loss=2.5)
    base.update(kw)
    return RunRecord(**base)


class TestRunRecord:
    def test_coerces_enums(self):
        r = run(eval_set="caption")
        assert r.arch is Arch.EARLY
        assert r.eval_set is EvalSet.CAPTION

    @pytest.mark.parametrize("field, value", [
        ("arch", "hybrid"), ("eval_set", "nope"), ("n_active", 0.5), ("tokens", 0), ("loss", 0.0),
        ("loss", float("nan")), ("run_id", ""),
    ])
    def test_rejects_bad_values(self, field, value):
        with pytest.raises(InvariantViolation):
            run(**{field: value})

    def test_total_below_active(self):
        with pytest.raises(InvariantViolation, match="n_total"):
            run(n_total=5e8)

    def test_late_needs_vision_size(self):
        with pytest.raises(InvariantViolation, match="n_vision"):
            run(arch="late")
        assert run(arch="late", n_total=1.3e9, n_vision=3e8).n_vision == 3e8

    def test_vision_size_bounds(self):
        with pytest.raises(InvariantViolation):
            run(arch="late", n_vision=1e9)

    def test_sparsity(self):
        assert run(arch="moe_aware", n_total=8e9).sparsity == pytest.approx(0.875)
        assert run().sparsity == 0.0


class TestDataset:
    def test_groups_and_select(self):
        recs = [run("a"), run("b", mixture="30-30-40"), run("a", eval_set="interleaved")]
        ds = validate_dataset(recs)
        assert len(ds) == 3
        assert {r.run_id for r in ds.select(mixture="45-45-10")} == {"a"}
        assert len(ds.select(eval_set="avg")) == 2

    def test_duplicate(self):
        with pytest.raises(DuplicateRun):
            validate_dataset([run("a"), run("a", loss=3.0)])

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            validate_dataset([])

    def test_points(self):
        pts = points_from_records([run(), run("b", loss=3.0)])
        assert pts.shape == (2, 3)
        assert pts[1].tolist() == [1e9, 1e11, 3.0]


class TestFits:
    def test_loss_surface_predict(self):
        f = LossSurfaceFit(e_irreducible=1.0, a_coef=100.0, b_coef=50.0, alpha=0.5, beta=0.25)
        assert f.predict(1e4, 1e4) == pytest.approx(1.0 + 1.0 + 5.0)
        a, b, e, alpha, beta = f.log_params
        assert (math.exp(a), math.exp(b), math.exp(e), alpha, beta) == pytest.approx((100.0, 50.0, 1.0, 0.5, 0.25))

    @pytest.mark.parametrize("field", ["e_irreducible", "a_coef", "b_coef", "huber_delta"])
    def test_loss_surface_positivity(self, field):
        kw = dict(e_irreducible=1.0, a_coef=1.0, b_coef=1.0, alpha=0.3, beta=0.3)
        kw[field] = 0.0
        with pytest.raises(InvariantViolation):
            LossSurfaceFit(**kw)

    def test_power_law(self):
        law = PowerLawFit(k=2.0, p=0.5, x_min=1.0, x_max=100.0, r_squared=0.9)
        assert law(16.0) == pytest.approx(8.0)
        with pytest.raises(InvariantViolation):
            PowerLawFit(k=2.0, p=0.5, x_min=10.0, x_max=10.0, r_squared=0.9)
        with pytest.raises(InvariantViolation):
            PowerLawFit(k=2.0, p=0.5, x_min=1.0, x_max=10.0, r_squared=1.5)

    def test_closed_form_exponents_must_sum(self):
        law = lambda p: PowerLawFit(k=1.0, p=p, x_min=1.0, x_max=2.0, r_squared=1.0)
        with pytest.raises(InvariantViolation):
            FrontierLaws(law(0.5), law(0.4), law(0.8), law(0.1), source="closed_form")
        laws = FrontierLaws(law(0.5), law(0.4), law(0.8), law(0.1), source="regression")
        assert (laws.a, laws.b, laws.d) == (0.5, 0.4, 0.8)

    def test_sparse_fold_is_exact_at_reference(self):
        f = SparseLossSurfaceFit(e_irr=1.1, a_coef=3.0, b_coef=4000.0, alpha=0.6, beta=0.37, lam=0.2, delta_s=0.2,
                                 gamma=0.7, c_coef=1.1, d_coef=3.8e5)
        for n in (1e8, 3e9):
            dense = f.dense_equivalent(n)
            assert float(dense.predict(n, 2e11)) == pytest.approx(float(f.predict(n, 2e11, 0.0)), rel=1e-14)


class TestAssignmentTable:
    def test_shapes(self):
        with pytest.raises(InvariantViolation):
            AssignmentTable("x", [[1, 2]], [[1, 2, 3]])
        with pytest.raises(InvariantViolation):
            AssignmentTable("x", [[1, -2]], [[1, 2]])

    def test_from_cells_needs_every_cell(self):
        cells = {(0, 0): (1, 2), (0, 1): (3, 4), (1, 0): (5, 6)}
        with pytest.raises(InvariantViolation, match="missing"):
            AssignmentTable.from_cells("x", cells)
        cells[(1, 1)] = (7, 8)
        t = AssignmentTable.from_cells("x", cells)
        assert (t.num_layers, t.num_experts) == (2, 2)
        assert t.counts[(1, 1)] == {"text_tokens": 7.0, "image_tokens": 8.0}

    def test_equality(self):
        assert AssignmentTable("x", [[1, 2]], [[3, 4]]) == AssignmentTable("x", [[1.0, 2.0]], [[3.0, 4.0]])
        assert AssignmentTable("x", [[1, 2]], [[3, 4]]) != AssignmentTable("y", [[1, 2]], [[3, 4]])
