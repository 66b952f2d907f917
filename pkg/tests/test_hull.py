import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmm_scalelab.errors import EmptySeries, InvariantViolation, TooFewPoints
from nmm_scalelab.hull import (envelope, fit_compute_law, frontier_points, lower_hull, series_from_records)


def power_series(k=30.0, c=-0.05, sizes=(1, 2, 4, 8)):
    """Curves that each touch ``k C^c`` at one budget and lie above it elsewhere."""
    out = {}
    for s in sizes:
        budgets = np.geomspace(1e19, 1e21, 7) * s
        mid = budgets[3]
        loss = k * budgets ** c * (1 + 0.05 * np.log(budgets / mid) ** 2)
        out[s] = list(zip(budgets, loss))
    return out


class TestLowerHull:
    def test_drops_points_above(self):
        x = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
        y = np.array([4.0, 1.0, 2.0, 0.5, 3.0])
        assert lower_hull(x, y).tolist() == [0, 1, 3, 4]

    def test_collinear_interior_removed(self):
        x = np.arange(5.0)
        assert lower_hull(x, 2 * x + 1).tolist() == [0, 4]

    @settings(max_examples=100)
    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=40))
    def test_all_points_on_or_above(self, ys):
        x = np.arange(len(ys), dtype=float)
        y = np.array(ys)
        idx = lower_hull(x, y)
        assert idx[0] == 0 and idx[-1] == len(x) - 1
        assert np.all(y >= np.interp(x, x[idx], y[idx]) - 1e-9)


class TestEnvelope:
    def test_is_pointwise_minimum(self):
        series = {"a": [(1e19, 3.0), (1e21, 2.0)], "b": [(1e20, 2.2), (1e22, 1.9)]}
        lc, ll = envelope(series)
        assert lc[0] == pytest.approx(np.log(1e19)) and lc[-1] == pytest.approx(np.log(1e22))
        at = np.argmin(np.abs(lc - np.log(1e20)))
        assert np.exp(ll[at]) == pytest.approx(2.2, rel=1e-6)

    def test_includes_observed_budgets(self):
        series = {"a": [(1.234e19, 3.0), (5.67e20, 2.0)]}
        lc, _ = envelope(series, points=4)
        assert np.any(np.isclose(lc, np.log(1.234e19))) and np.any(np.isclose(lc, np.log(5.67e20)))

    def test_errors(self):
        with pytest.raises(EmptySeries):
            envelope({})
        with pytest.raises(EmptySeries):
            envelope({"a": [(1e19, 2.0)]})
        with pytest.raises(EmptySeries):
            envelope({"a": [(1e19, 2.0), (1e19, 1.9)]})
        with pytest.raises(InvariantViolation):
            envelope({"a": [(1e19, -2.0), (1e20, 1.9)]})


class TestComputeLaw:
    def test_exact_power_law_hull(self):
        c = np.geomspace(1e19, 1e22, 6)
        law = fit_compute_law(list(zip(c, 25.0 * c ** -0.047)), c_min_flops=1e18)
        assert law.k == pytest.approx(25.0, rel=1e-9)
        assert law.p == pytest.approx(-0.047, abs=1e-12)

    def test_hull_passes_through_touch_points(self):
        series = power_series()
        verts = np.log(np.array(frontier_points(series)))
        for pts in series.values():
            c, loss = pts[3]
            assert np.interp(np.log(c), verts[:, 0], verts[:, 1]) == pytest.approx(np.log(loss), abs=1e-9)

    def test_fit_between_touch_points(self):
        verts = [v for v in frontier_points(power_series()) if 1e20 <= v[0] <= 8e20 * (1 + 1e-9)]
        law = fit_compute_law(verts, c_min_flops=9e19)
        assert law.p == pytest.approx(-0.05, abs=1e-9)
        assert law.k == pytest.approx(30.0, rel=1e-7)

    def test_threshold(self):
        c = np.geomspace(1e18, 1e20, 5)
        with pytest.raises(TooFewPoints):
            fit_compute_law(list(zip(c, c ** -0.05)), c_min_flops=5e19)
        law = fit_compute_law(list(zip(c, c ** -0.05)), c_min_flops=1e19)
        assert law.x_min > 1e19

    def test_series_from_records(self, early_avg):
        series = series_from_records(early_avg)
        assert set(series) == {r.n_active for r in early_avg}
        assert sum(len(v) for v in series.values()) == len(early_avg)
