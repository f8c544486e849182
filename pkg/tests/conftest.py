import numpy as np
import pytest

from steklov_lab.fields import EuclideanMetric
from steklov_lab.mesh import generate_annulus_mesh, generate_disk_mesh
from steklov_lab.steklov import build_dtn, steklov_eigs


@pytest.fixture(scope="session")
def disk_coarse():
    return generate_disk_mesh(1.0, 0.2)


@pytest.fixture(scope="session")
def disk_mid():
    return generate_disk_mesh(1.0, 0.1)


@pytest.fixture(scope="session")
def disk_fine():
    return generate_disk_mesh(1.0, 0.05)


@pytest.fixture(scope="session")
def annulus_mid():
    return generate_annulus_mesh(0.5, 1.0, 0.1)


@pytest.fixture(scope="session")
def disk_dtn(disk_mid):
    return build_dtn(disk_mid, EuclideanMetric())


@pytest.fixture(scope="session")
def disk_spec(disk_dtn):
    return steklov_eigs(disk_dtn)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion, shown at the end
# --------------------------------------------------------------------------

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    def record(criterion: int, passed: bool, detail: str) -> bool:
        line = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
