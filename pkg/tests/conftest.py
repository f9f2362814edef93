import numpy as np
import pytest

from strokeforge.edges import GrayImage
from strokeforge.geometry import Canvas, Sketch, Stroke

_ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE_RESULTS.append((name, report.outcome))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS:
        tag = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line(f"[{tag}] {name}")


@pytest.fixture
def step_edge_image() -> GrayImage:
    """64x64, left half black / right half white: one vertical step edge."""
    img = np.zeros((64, 64))
    img[:, 32:] = 1.0
    return GrayImage(img, provenance="step-fixture")


@pytest.fixture
def circle_target() -> np.ndarray:
    """Black circle outline (radius 0.3, ~3px wide) on white, 224x224."""
    n = 224
    yy, xx = np.mgrid[0:n, 0:n]
    d = np.hypot(xx + 0.5 - n / 2, yy + 0.5 - n / 2)
    return np.where(np.abs(d - 0.3 * n) <= 1.5, 0.0, 1.0)


def random_sketch(seed: int, n_strokes: int = 8, canvas: Canvas | None = None) -> Sketch:
    rng = np.random.default_rng(seed)
    canvas = canvas or Canvas(224, 224)
    strokes = tuple(Stroke(rng.uniform(0.0, 1.0, (4, 2))) for _ in range(n_strokes))
    return Sketch(canvas=canvas, strokes=strokes)
