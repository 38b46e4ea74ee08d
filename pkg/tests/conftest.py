import numpy as np
import pytest

from mmvcf import SynthConfig, generate_planted_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def planted40():
    """N=40, K=3, 16x16 planted-template set used by the collapse/equivalence tests."""
    cfg = SynthConfig(k=3, h=16, w=16, n_pos=20, n_neg=20, noise_sigma=1.0, shift_range=2, seed=11)
    return generate_planted_dataset(cfg)


@pytest.fixture(scope="session")
def small_set():
    cfg = SynthConfig(k=2, h=8, w=8, n_pos=6, n_neg=6, noise_sigma=1.0, seed=3)
    return generate_planted_dataset(cfg)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one summary line per acceptance criterion."""
    def record(number, name, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:2d} {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
