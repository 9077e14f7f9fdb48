import numpy as np
import pytest

from spmlattice import ModelParams

# Criterion verdicts collected by test_acceptance.py, echoed once at the end of the run.
ACCEPTANCE_LINES: dict[int, str] = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])


def bump(half_width: int, width: float = 2.0, amp: float = 1.0) -> np.ndarray:
    i = np.arange(-half_width, half_width + 1)
    return amp * np.exp(-(i**2) / (2 * width**2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def forced_params():
    """N=16 stochastic model with a Gaussian forcing bump and a small a."""
    n = 16
    return ModelParams.build(n, lam=1.0, p=2.0, alpha=0.5, g=bump(n), a=0.1 * bump(n, 1.0))
