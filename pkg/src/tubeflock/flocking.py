"""Classical free-space alignment model with flocking diagnostics.

N particles in R^3 couple through the long-range inverse-power rate with
mean-field amplitude lam / N; no confinement, no repulsion.  Flocking means
the velocity spread around the center of mass vanishes while positions stay
within a bounded distance of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import IntegratorConfig, Trajectory, simulate
from .model import INVERSE_POWER, CommKernel, Configuration, ModelParams


def center_of_mass(config: Configuration):
    """Arithmetic mean position and velocity; raises on an empty
    configuration."""
    if not len(config):
        raise ValueError("center of mass of an empty configuration")
    return config.positions.mean(axis=0), config.velocities.mean(axis=0)


def velocity_diameter(config: Configuration) -> float:
    """Max distance of any velocity from the mean velocity."""
    _, v_c = center_of_mass(config)
    return float(np.linalg.norm(config.velocities - v_c, axis=1).max())


def position_spread(config: Configuration) -> float:
    """Max distance of any position from the mean position."""
    x_c, _ = center_of_mass(config)
    return float(np.linalg.norm(config.positions - x_c, axis=1).max())


def sample_gaussian_cloud(
    n: int, seed: int, pos_scale: float = 1.0, vel_scale: float = 1.0
) -> Configuration:
    """Standard-normal positions and velocities (times the given scales),
    deterministic in the seed."""
    g = np.random.Generator(
        np.random.Philox(key=np.array([seed & ((1 << 64) - 1), 97], dtype=np.uint64))
    )
    positions = pos_scale * g.standard_normal((n, 3))
    velocities = vel_scale * g.standard_normal((n, 3))
    return Configuration(np.arange(n, dtype=np.int64), positions, velocities, None, 0.0)


def classical_params(n: int, beta: float, lam: float) -> ModelParams:
    """Free-space model: inverse-power rate with mean-field amplitude
    lam / n, no wall, no repulsion."""
    if n < 2:
        raise ValueError("the classical model needs at least 2 particles")
    if not (beta > 0 and lam >= 0):
        raise ValueError(f"need beta > 0 and lam >= 0, got beta={beta}, lam={lam}")
    kernel = CommKernel(INVERSE_POWER, amplitude=lam / n, exponent=beta)
    return ModelParams(kernel=kernel, potential=None, geometry=None)


def simulate_classical(
    n: int,
    beta: float,
    lam: float,
    seed: int,
    T: float,
    icfg: IntegratorConfig | None = None,
    stride: float | None = None,
) -> Trajectory:
    """Integrate the classical model from a Gaussian cloud drawn from the
    seed."""
    params = classical_params(n, beta, lam)
    initial = sample_gaussian_cloud(n, seed)
    return simulate(initial, params, icfg, T, stride)


@dataclass(frozen=True)
class FlockVerdict:
    """Flocking check on a finished run.

    Passes when the final velocity diameter is at or below the threshold and
    the position spread never exceeded the bound.  ``decay_rate`` is the
    least-squares slope of log velocity-diameter over the last half of the
    run (transients skipped), or None when the diameter is not strictly
    positive there.
    """

    final_velocity_diameter: float
    max_position_spread: float
    v_threshold: float
    x_bound: float
    passed: bool
    decay_rate: float | None

    def to_dict(self) -> dict:
        return {
            "final_velocity_diameter": self.final_velocity_diameter,
            "max_position_spread": self.max_position_spread,
            "v_threshold": self.v_threshold,
            "x_bound": self.x_bound,
            "passed": bool(self.passed),
            "decay_rate": self.decay_rate,
        }


def flocking_verdict(traj: Trajectory, v_threshold: float, x_bound: float) -> FlockVerdict:
    """Evaluate the flocking conditions on a trajectory."""
    if not traj.snapshots:
        raise ValueError("empty trajectory")
    vdiams = np.array([velocity_diameter(c) for c in traj.snapshots])
    spreads = np.array([position_spread(c) for c in traj.snapshots])
    passed = bool(vdiams[-1] <= v_threshold and spreads.max() <= x_bound)
    times = traj.times
    half = times >= times[0] + 0.5 * (times[-1] - times[0])
    rate = None
    if half.sum() >= 2 and np.all(vdiams[half] > 0):
        rate = float(np.polyfit(times[half], np.log(vdiams[half]), 1)[0])
    return FlockVerdict(
        float(vdiams[-1]), float(spreads.max()), v_threshold, x_bound, passed, rate
    )
