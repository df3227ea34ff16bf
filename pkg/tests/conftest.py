import numpy as np
import pytest

from lrcurrent.currents import Direction, FieldProfile, assemble_K, build_system
from lrcurrent.lattice import DisorderSpec
from lrcurrent.ldp import make_instance

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def small_instance(seed=0, d=1, L=3, margin=6, lam=1.0, theta=0.0, beta=1.0,
                   field=None, w=None):
    spec = DisorderSpec(onsite="uniform", edge="phase", seed=seed)
    field = field or FieldProfile("half_sine", 0.5, (1.0,) * d)
    w = w or Direction.of(np.ones(d))
    sys_ = build_system(d, L, spec, lam, theta, margin=margin)
    return make_instance(sys_, assemble_K(sys_, field, w), beta)


@pytest.fixture
def instance():
    return small_instance()
