import numpy as np
import pytest

from semrb.assembly import Discretization
from semrb.geometry import GeometryConfig
from semrb.mesh import ChannelMesh
from semrb.sem import ReferenceElement


def _straight_channel(p, x_breaks=(0.0, 1.0, 2.0), y_breaks=(0.0, 1.0, 2.0, 3.0)):
    """A 2 x 3 channel meshed on every cell, i.e. without solid blocks."""
    cfg = GeometryConfig(channel_length=x_breaks[-1], narrowing_x_span=(1.0, 1.5),
                         inflow_strip_width=1.0)
    return ChannelMesh.from_breaks(cfg, ReferenceElement(p), x_breaks, y_breaks)


@pytest.fixture(scope="session")
def straight_channel():
    return _straight_channel


@pytest.fixture(scope="session")
def small_disc():
    """Default channel at p = 4 (40 elements)."""
    return Discretization(p=4)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
