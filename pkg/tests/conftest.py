import numpy as np
import pytest

from tubeflock import (
    CommKernel,
    Configuration,
    ModelParams,
    PairPotential,
    TAPERED_COSINE,
    TubeGeometry,
)

AXIS = np.array([1.0, 0.0, 0.0])


@pytest.fixture
def geometry():
    return TubeGeometry(AXIS, 1.0, 0.5, 2.0, 1.0)


@pytest.fixture
def kernel():
    return CommKernel(TAPERED_COSINE, 1.0, support=2.0)


@pytest.fixture
def potential():
    return PairPotential(1.0, 2.0, 2.0, 0.5)


@pytest.fixture
def params(geometry, kernel, potential):
    """Mild parameters used by most module tests (short-range kernel)."""
    return ModelParams(kernel, potential, geometry)


@pytest.fixture
def default_params(geometry, potential):
    """The tuned CLI defaults (long-range kernel for ladder studies)."""
    return ModelParams(CommKernel(TAPERED_COSINE, 2.0, support=8.0), potential, geometry)


def on_axis(axial_positions, velocities=None, geometry=None, time=0.0):
    """Configuration with all particles on the tube axis."""
    axial_positions = np.asarray(axial_positions, dtype=float)
    n = len(axial_positions)
    pos = np.zeros((n, 3))
    pos[:, 0] = axial_positions
    vel = np.zeros((n, 3)) if velocities is None else np.asarray(velocities, dtype=float)
    return Configuration(np.arange(n, dtype=np.int64), pos, vel, geometry, time)
