import numpy as np
import pytest

from ddeif import geometry as geo


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_quat(rng: np.random.Generator) -> np.ndarray:
    return geo.normalize(rng.standard_normal(4))


def random_spd(rng: np.random.Generator, n: int, floor: float = 0.1) -> np.ndarray:
    A = rng.standard_normal((n, n))
    return A @ A.T + floor * np.eye(n)


# acceptance lines, echoed again in the terminal summary so they survive output capture
ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict(pytestconfig):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    capture = pytestconfig.pluginmanager.getplugin("capturemanager")

    def emit(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  criterion {number}: {title} | {detail}"
        ACCEPTANCE.append(line)
        with capture.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
