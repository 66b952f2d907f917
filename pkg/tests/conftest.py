import numpy as np
import pytest

from nmm_scalelab.fitloss import fit
from nmm_scalelab.ingest import load_fixture

_CRITERIA: list[tuple[int, str, bool, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.fixture
def criterion(request):
    """Call ``check(n, title, ok, detail)`` once per criterion; the line is echoed and reported at the end."""

    def check(n: int, title: str, ok: bool, detail: str = ""):
        _CRITERIA.append((n, title, bool(ok), detail))
        print(f"[criterion {n:2d}] {'PASS' if ok else 'FAIL'}  {title}  {detail}")
        return ok

    return check


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n, title, ok, detail in sorted(_CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(f"[criterion {n:2d}] {'PASS' if ok else 'FAIL'}  {title}  {detail}")


@pytest.fixture(scope="session")
def early_records():
    return load_fixture("early")


@pytest.fixture(scope="session")
def early_avg(early_records):
    """Early-fusion 45-45-10 runs on the averaged validation loss."""
    return [r for r in early_records if r.mixture == "45-45-10" and r.eval_set.value == "avg"]


@pytest.fixture(scope="session")
def early_fit(early_avg):
    return fit(early_avg)


def synthetic_grid(n_range=(2.75e8, 3.35e9), d_range=(2.5e9, 6e11), shape=(6, 10)):
    n = np.geomspace(*n_range, shape[0])
    d = np.geomspace(*d_range, shape[1])
    nn, dd = np.meshgrid(n, d, indexing="ij")
    return nn.ravel(), dd.ravel()


TRUE = dict(e=1.9, a=460.0, b=330.0, alpha=0.30, beta=0.34)


def synthetic_points(noise=0.0, seed=0, **grid_kw):
    n, d = synthetic_grid(**grid_kw)
    loss = TRUE["e"] + TRUE["a"] * n ** -TRUE["alpha"] + TRUE["b"] * d ** -TRUE["beta"]
    if noise:
        loss = loss * np.exp(np.random.default_rng(seed).normal(0.0, noise, loss.size))
    return np.column_stack([n, d, loss])
