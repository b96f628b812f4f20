import sys

import numpy as np
import pytest

from ggr_lab.diagrams import TorusData
from ggr_lab.freegas import lattice_model
from ggr_lab.thermo import GrandParams


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: runs longer than a few seconds")


def gaussian_torus(M, d=1, depth=0.3, width=2.0, log_z=0.3, beta=1.0):
    """Lattice free gas with a Gaussian g of the given depth (g < 0)."""
    model = lattice_model(M, d, GrandParams.from_log_z(d, beta, log_z))
    r2 = (model.radii() ** 2)
    return TorusData(model, -depth * np.exp(-r2 / width))


@pytest.fixture(scope="session")
def torus8():
    return gaussian_torus(8)


@pytest.fixture(scope="session")
def torus6():
    return gaussian_torus(6)


def pytest_terminal_summary(terminalreporter):
    results = sys.modules.get("test_acceptance")
    results = getattr(results, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number][1])
    n_pass = sum(p for p, _ in results.values())
    terminalreporter.write_line(f"{n_pass}/{len(results)} criteria passed")
