"""Right-hand-side assembly and adaptive time integration.

The velocity equation couples an alignment term (communication rate times
velocity differences) with conservative forces (short-range repulsion plus
the wall).  Because forces depend on velocities, a velocity-Verlet style
splitting does not apply; integration uses an explicit embedded
Dormand-Prince 5(4) pair with three rejection criteria per step:

* embedded error estimate above tolerance,
* max particle displacement above ``eta`` times the current minimum pair
  distance (prevents tunneling through the singular core),
* any particle on or past the tube wall.

Accepted step sizes move on a dyadic grid (double / keep / halve) so that a
dynamically decoupled subsystem sees bitwise-identical arithmetic across
runs that only differ far away.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    Configuration,
    ModelParams,
    OutOfDomainError,
    SingularConfigurationError,
    comm_rate,
    min_pair_distance,
    wall_energies,
    wall_forces,
)
from .neighbors import interacting_pairs


class IntegrationError(RuntimeError):
    """Time integration failed; the failure time is in the message."""


class StiffnessError(IntegrationError):
    """Step size underflowed while resolving a singularity or the wall."""


class MaxStepsError(IntegrationError):
    """Step budget exhausted before reaching the target time."""


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    initial_step: float = 0.01
    max_step: float = 0.1
    displacement_safety: float = 0.2
    max_steps: int = 2_000_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if not (self.initial_step > 0 and self.max_step > 0):
            raise ValueError("step sizes must be positive")
        if not 0 < self.displacement_safety < 1:
            raise ValueError("displacement_safety must lie in (0, 1)")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


@dataclass
class RhsTerms:
    """Per-particle acceleration split into its two physical contributions."""

    alignment: np.ndarray
    force: np.ndarray

    @property
    def acceleration(self) -> np.ndarray:
        return self.alignment + self.force


@dataclass
class IntegratorStats:
    accepted: int = 0
    rejected: int = 0
    min_step: float = math.inf
    rhs_evals: int = 0


@dataclass
class Trajectory:
    """Snapshots at strictly increasing times plus integrator statistics."""

    snapshots: list[Configuration]
    stats: IntegratorStats = field(default_factory=IntegratorStats)

    @property
    def times(self) -> np.ndarray:
        return np.array([c.time for c in self.snapshots])

    def at_time(self, t: float, tol: float = 1e-9) -> Configuration:
        times = self.times
        idx = int(np.argmin(np.abs(times - t)))
        if abs(times[idx] - t) > tol * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}; nearest is {times[idx]}")
        return self.snapshots[idx]


def _rhs_arrays(positions, velocities, params: ModelParams):
    """Alignment and force accelerations on raw arrays.

    Returns ``(alignment, force, rmin)`` where ``rmin`` is the smallest pair
    distance among the enumerated short-range pairs (inf when none), used by
    the displacement guard.  Pair contributions are applied antisymmetrically
    from a single evaluation, so momentum cancellation is exact up to
    summation rounding; scatter-adds run in ascending (i, j) order.
    """
    n = len(positions)
    align = np.zeros((n, 3))
    force = np.zeros((n, 3))
    rmin = math.inf
    kernel = params.kernel
    pot = params.potential
    rng = params.interaction_range
    if rng is not None and n >= 2:
        i_idx, j_idx = interacting_pairs(positions, params.axis, rng)
        if len(i_idx):
            d = positions[i_idx] - positions[j_idx]
            r = np.sqrt((d * d).sum(axis=1))
            rmin = float(r.min())
            if rmin == 0.0:
                raise SingularConfigurationError("overlapping particles in force evaluation")
            if kernel.compact and kernel.amplitude > 0:
                psi = comm_rate(kernel, r)
                c = psi[:, None] * (velocities[j_idx] - velocities[i_idx])
                np.add.at(align, i_idx, c)
                np.subtract.at(align, j_idx, c)
            if pot is not None and pot.active:
                _, du = pot.radial(r)
                g = (du / r)[:, None] * d
                np.subtract.at(force, i_idx, g)
                np.add.at(force, j_idx, g)
    if not kernel.compact and kernel.amplitude > 0 and n >= 2:
        # long-range rate: dense all-pairs alignment (classical flocking runs
        # are small); plain reductions keep the summation order fixed
        diff = positions[:, None, :] - positions[None, :, :]
        r = np.sqrt((diff * diff).sum(axis=2))
        psi = comm_rate(kernel, r)
        align += (psi[:, :, None] * (velocities[None, :, :] - velocities[:, None, :])).sum(axis=1)
    force += wall_forces(params.geometry, positions)
    return align, force, rmin


def total_rhs(config: Configuration, params: ModelParams) -> RhsTerms:
    """Acceleration of every particle, split into alignment and force parts.

    Sums run over the short-range pairs only (both terms vanish beyond the
    interaction range); the wall force enters the force part.
    """
    align, force, _ = _rhs_arrays(config.positions, config.velocities, params)
    return RhsTerms(align, force)


def particle_energies(config: Configuration, params: ModelParams) -> np.ndarray:
    """Per-particle energy: v^2/2 + half the pair energies touching the
    particle + wall energy."""
    n = len(config)
    eps = 0.5 * (config.velocities * config.velocities).sum(axis=1)
    pot = params.potential
    if pot is not None and pot.active and n >= 2:
        i_idx, j_idx = interacting_pairs(config.positions, params.axis, pot.support)
        if len(i_idx):
            d = config.positions[i_idx] - config.positions[j_idx]
            r = np.sqrt((d * d).sum(axis=1))
            if r.min() == 0.0:
                raise SingularConfigurationError("overlapping particles in energy evaluation")
            u, _ = pot.radial(r)
            half = 0.5 * u
            np.add.at(eps, i_idx, half)
            np.add.at(eps, j_idx, half)
    eps += wall_energies(params.geometry, config.positions)
    return eps


def energy(config: Configuration, params: ModelParams) -> float:
    """Total energy: kinetic + pair + wall (each pair counted once)."""
    return float(particle_energies(config, params).sum())


def dissipation_rate(config: Configuration, params: ModelParams) -> float:
    """Instantaneous energy derivative due to alignment:
    ``-1/2 sum_{i != j} psi_ij |v_i - v_j|^2`` (always <= 0)."""
    n = len(config)
    kernel = params.kernel
    if kernel.amplitude == 0 or n < 2:
        return 0.0
    v = config.velocities
    if kernel.compact:
        i_idx, j_idx = interacting_pairs(config.positions, params.axis, kernel.support)
        if not len(i_idx):
            return 0.0
        d = config.positions[i_idx] - config.positions[j_idx]
        r = np.sqrt((d * d).sum(axis=1))
        psi = comm_rate(kernel, r)
        dv2 = ((v[i_idx] - v[j_idx]) ** 2).sum(axis=1)
        return -float((psi * dv2).sum())
    diff = config.positions[:, None, :] - config.positions[None, :, :]
    r = np.sqrt((diff * diff).sum(axis=2))
    psi = comm_rate(kernel, r)
    dv2 = ((v[:, None, :] - v[None, :, :]) ** 2).sum(axis=2)
    return -0.5 * float((psi * dv2).sum())


def axial_momentum(config: Configuration, params: ModelParams) -> float:
    """Sum of velocity components along the tube axis (conserved)."""
    return float((config.velocities @ params.axis).sum())


# Dormand-Prince 5(4) tableau; stage 7 is the FSAL evaluation at the
# propagated (5th order) solution.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
_UNDERFLOW_FACTOR = 1e-14


class _Stepper:
    """One integration in progress: state, FSAL cache, dyadic step size."""

    def __init__(self, config: Configuration, params: ModelParams, icfg: IntegratorConfig):
        config.validate()
        self.params = params
        self.icfg = icfg
        self.geometry = config.geometry
        self.ids = config.ids.copy()
        self.x = config.positions.copy()
        self.v = config.velocities.copy()
        self.t = float(config.time)
        self.dt = min(icfg.initial_step, icfg.max_step)
        self.stats = IntegratorStats()
        self.k1: tuple[np.ndarray, np.ndarray] | None = None
        self._guard_base: float | None = None
        pot = params.potential
        self.guard_active = pot is not None and pot.singular_amplitude > 0 and len(self.x) >= 2
        geo = params.geometry
        self.wall_active = geo is not None and geo.wall_active

    def snapshot(self) -> Configuration:
        return Configuration(self.ids.copy(), self.x.copy(), self.v.copy(), self.geometry, self.t)

    def _eval(self, x, v):
        self.stats.rhs_evals += 1
        align, force, rmin = _rhs_arrays(x, v, self.params)
        return (v, align + force), rmin

    def _diagnostics(self) -> str:
        parts = [f"t={self.t:.6g}"]
        if len(self.x) >= 2:
            dmin = min_pair_distance(self.x, self.params.axis)
            parts.append(f"min pair distance {dmin:.6g}")
        if self.wall_active:
            s = np.linalg.norm(self.params.geometry.transverse(self.x), axis=1)
            parts.append(f"wall margin {self.params.geometry.radius - s.max():.6g}")
        return ", ".join(parts)

    def _attempt(self, dt):
        """Try one step of size dt; return (accepted, err_norm, x_new, v_new, k7, rmin_new)."""
        if self.k1 is None:
            self.k1, rmin = self._eval(self.x, self.v)
            self._guard_base = rmin
        kx = [self.k1[0]]
        kv = [self.k1[1]]
        rmin_new = math.inf
        try:
            for s in range(1, 7):
                a = _DP_A[s]
                xs = self.x + dt * sum(a[j] * kx[j] for j in range(s))
                vs = self.v + dt * sum(a[j] * kv[j] for j in range(s))
                k, rmin_new = self._eval(xs, vs)
                kx.append(k[0])
                kv.append(k[1])
        except (OutOfDomainError, SingularConfigurationError):
            return False, math.inf, None, None, None, None
        # stage 7 sits at the propagated solution (FSAL)
        x_new = xs
        v_new = vs
        err_x = dt * sum(_DP_E[j] * kx[j] for j in range(7))
        err_v = dt * sum(_DP_E[j] * kv[j] for j in range(7))
        scale_x = self.icfg.atol + self.icfg.rtol * np.maximum(np.abs(self.x), np.abs(x_new))
        scale_v = self.icfg.atol + self.icfg.rtol * np.maximum(np.abs(self.v), np.abs(v_new))
        n_comp = err_x.size + err_v.size
        if n_comp == 0:
            return True, 0.0, x_new, v_new, (kx[6], kv[6]), rmin_new
        err_norm = math.sqrt(
            (((err_x / scale_x) ** 2).sum() + ((err_v / scale_v) ** 2).sum()) / n_comp
        )
        if not math.isfinite(err_norm) or err_norm > 1.0:
            return False, err_norm, None, None, None, None
        if self.guard_active:
            disp = np.sqrt(((x_new - self.x) ** 2).sum(axis=1)).max()
            rng = self.params.interaction_range
            base = min(self._guard_base, rng if rng is not None else math.inf)
            if disp > self.icfg.displacement_safety * base:
                return False, err_norm, None, None, None, None
        if self.wall_active:
            s = np.linalg.norm(self.params.geometry.transverse(x_new), axis=1)
            if len(s) and s.max() >= self.params.geometry.radius:
                return False, err_norm, None, None, None, None
        return True, err_norm, x_new, v_new, (kx[6], kv[6]), rmin_new

    def step(self, t_bound: float):
        """Advance by one accepted step, not beyond t_bound.

        Returns (dt_accepted, err_norm)."""
        floor = _UNDERFLOW_FACTOR * self.icfg.initial_step
        while True:
            if self.stats.accepted + self.stats.rejected >= self.icfg.max_steps:
                raise MaxStepsError(
                    f"exceeded {self.icfg.max_steps} steps ({self._diagnostics()})"
                )
            dt = min(self.dt, t_bound - self.t)
            truncated = dt < self.dt
            accepted, err_norm, x_new, v_new, k7, rmin_new = self._attempt(dt)
            if accepted:
                self.stats.accepted += 1
                self.stats.min_step = min(self.stats.min_step, dt)
                self.t = t_bound if truncated else self.t + dt
                self.x, self.v = x_new, v_new
                self.k1 = k7
                self._guard_base = rmin_new
                if not truncated:
                    factor = 4.0 if err_norm == 0.0 else 0.9 * err_norm ** -0.2
                    if factor >= 2.0 and 2.0 * self.dt <= self.icfg.max_step:
                        self.dt *= 2.0
                    elif factor < 0.95:
                        self.dt *= 0.5
                return dt, err_norm
            self.stats.rejected += 1
            if dt * 0.5 < floor:
                raise StiffnessError(
                    f"step size underflow at dt={dt:.3e} ({self._diagnostics()})"
                )
            self.dt = dt * 0.5

    def advance_to(self, t_target: float):
        slack = 1e-12 * max(1.0, abs(t_target))
        while self.t < t_target - slack:
            self.step(t_target)
        self.t = t_target


@dataclass
class StepResult:
    config: Configuration
    dt_accepted: float
    error_estimate: float
    dt_next: float


def step_adaptive(
    config: Configuration, params: ModelParams, icfg: IntegratorConfig | None = None
) -> StepResult:
    """Take a single accepted step from ``config`` (halving on rejection) and
    return the new configuration, the accepted step size, the embedded error
    estimate, and the step size suggested for the next step."""
    icfg = icfg or IntegratorConfig()
    stepper = _Stepper(config, params, icfg)
    dt, err = stepper.step(t_bound=math.inf)
    return StepResult(stepper.snapshot(), dt, err, stepper.dt)


def simulate(
    initial: Configuration,
    params: ModelParams,
    icfg: IntegratorConfig | None = None,
    T: float = 1.0,
    stride: float | None = None,
) -> Trajectory:
    """Integrate for duration ``T``, snapshotting at multiples of ``stride``
    (relative to the initial time) and at the final time.

    Snapshot times are hit exactly (the step is truncated at each boundary)
    so diagnostics on different runs compare on identical grids.  The run is
    deterministic: identical inputs give bitwise-identical snapshots.
    """
    if T < 0:
        raise ValueError("T must be >= 0")
    icfg = icfg or IntegratorConfig()
    t0 = float(initial.time)
    offsets = [0.0]
    if T > 0:
        if stride is None or stride <= 0 or stride > T:
            stride = T
        k = 1
        while k * stride < T * (1 - 1e-12):
            offsets.append(k * stride)
            k += 1
        offsets.append(T)
    stepper = _Stepper(initial, params, icfg)
    snapshots = [stepper.snapshot()]
    try:
        for off in offsets[1:]:
            stepper.advance_to(t0 + off)
            snapshots.append(stepper.snapshot())
    except IntegrationError as exc:
        raise type(exc)(f"{exc} [integration failed at t={stepper.t:.6g}]") from exc
    return Trajectory(snapshots, stepper.stats)
