import numpy as np
import pytest

from nmm_scalelab.lbfgs import minimize, minimize_batch


def rosenbrock(x):
    f = (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
    g = np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])
    return f, g


def batch_quadratic(X, centers):
    diff = X - centers
    return 0.5 * (diff ** 2).sum(axis=1), diff


class TestMinimize:
    def test_rosenbrock(self):
        res = minimize(rosenbrock, [-1.2, 1.0], max_iterations=2000)
        assert res.converged[0]
        assert np.allclose(res.x[0], [1.0, 1.0], atol=1e-6)

    def test_rows_are_independent(self):
        starts = np.array([[5.0, -3.0], [0.0, 0.0], [-7.0, 2.0]])
        centers = np.array([1.0, 2.0])
        res = minimize_batch(lambda X: batch_quadratic(X, centers), starts)
        assert np.allclose(res.x, centers, atol=1e-8)
        alone = minimize_batch(lambda X: batch_quadratic(X, centers), starts[2:])
        assert np.array_equal(alone.x[0], res.x[2])

    def test_row_aware_gets_own_data(self):
        centers = np.array([[1.0, 1.0], [-2.0, 4.0], [0.5, -0.5]])
        res = minimize_batch(lambda X, rows: batch_quadratic(X, centers[rows]), np.zeros((3, 2)), row_aware=True)
        assert np.allclose(res.x, centers, atol=1e-8)
        assert np.allclose(res.subset([1]).x, centers[1], atol=1e-8)

    def test_iteration_cap(self):
        res = minimize(rosenbrock, [-1.2, 1.0], max_iterations=3)
        assert res.iterations[0] <= 3
        assert not res.converged[0]

    def test_nonfinite_trial_backtracks(self):
        def f(X):
            with np.errstate(invalid="ignore", divide="ignore"):
                val = np.where(X[:, 0] > 0, X[:, 0] - np.log(X[:, 0]), np.inf)
            return val, np.where(X[:, 0] > 0, 1 - 1 / X[:, 0], 0.0)[:, None]

        res = minimize_batch(f, np.array([[0.1]]))
        assert res.x[0, 0] == pytest.approx(1.0, abs=1e-6)

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            minimize_batch(lambda X: batch_quadratic(X, 0.0), np.zeros(3))
