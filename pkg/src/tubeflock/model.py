"""Domain types and point evaluations for tube-confined alignment dynamics.

Geometry: particles live in an infinite tube around a unit axis ``n`` with
radius ``L``.  A soft wall potential switches on at transverse distance ``h``
and diverges at ``L``.  Pairs communicate through a non-negative symmetric
kernel and repel through a short-range potential; both vanish beyond a shared
support radius ``rbar``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TAPERED_COSINE = "tapered_cosine"
INVERSE_POWER = "inverse_power"


class SingularConfigurationError(ValueError):
    """Two particles coincide: the pair force is undefined."""


class OutOfDomainError(ValueError):
    """A position lies on or outside the tube wall."""


def _smoothstep5(t):
    """Quintic smoothstep: 0 -> 1 on [0, 1] with zero first and second
    derivatives at both ends (so every piecewise profile built from it is C2)."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def _smoothstep5_deriv(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    out = np.zeros_like(t)
    ti = t[inside]
    out[inside] = 30.0 * ti * ti * (1.0 - ti) ** 2
    return out


@dataclass(frozen=True)
class TubeGeometry:
    """Infinite tube of radius ``L`` around the unit vector ``axis``.

    The wall potential is ``theta(s) / (L - s)**gamma`` with
    ``theta(s) = theta0 * ((s - h)/(L - h))**3`` for transverse distance
    ``s >= h`` and zero below: the lowest-order ramp that is C2 at ``s = h``
    and strictly positive at ``s = L``.  ``theta0 = 0`` disables the wall
    entirely (used by interaction-free studies); the tube-interior constraint
    is then not enforced.
    """

    axis: np.ndarray
    radius: float
    wall_onset: float
    wall_exponent: float
    wall_amplitude: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        if axis.shape != (3,):
            raise ValueError(f"axis must be a 3-vector, got shape {axis.shape}")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValueError("axis must be a unit vector (|axis| = 1 within 1e-12)")
        object.__setattr__(self, "axis", axis)
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not 0 < self.wall_onset < self.radius:
            raise ValueError(
                f"wall_onset must lie in (0, radius), got {self.wall_onset}"
            )
        if not self.wall_exponent > 0:
            raise ValueError(f"wall_exponent must be positive, got {self.wall_exponent}")
        if self.wall_amplitude < 0:
            raise ValueError(f"wall_amplitude must be >= 0, got {self.wall_amplitude}")

    @property
    def wall_active(self) -> bool:
        return self.wall_amplitude > 0

    def axial(self, positions: np.ndarray) -> np.ndarray:
        """Signed coordinate(s) along the axis."""
        return np.asarray(positions, dtype=float) @ self.axis

    def transverse(self, positions: np.ndarray) -> np.ndarray:
        """Component(s) of position perpendicular to the axis."""
        positions = np.asarray(positions, dtype=float)
        s = positions @ self.axis
        return positions - np.multiply.outer(s, self.axis)


@dataclass(frozen=True)
class CommKernel:
    """Pairwise communication rate as a function of distance.

    Two families:

    * ``tapered_cosine`` -- ``K0 * (1 + cos(pi*u/rbar)) / 2`` for ``u <= rbar``
      and exactly zero beyond: compactly supported, used for the tube dynamics.
    * ``inverse_power`` -- ``K0 / (1 + u)**beta``: the classical long-range
      rate, used only by the free-space flocking module.
    """

    family: str
    amplitude: float
    support: float | None = None
    exponent: float | None = None

    def __post_init__(self):
        if self.family not in (TAPERED_COSINE, INVERSE_POWER):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.family == TAPERED_COSINE:
            if self.support is None or not self.support > 0:
                raise ValueError("tapered_cosine kernel needs a positive support radius")
        else:
            if self.exponent is None or not self.exponent > 0:
                raise ValueError("inverse_power kernel needs a positive exponent")

    @property
    def compact(self) -> bool:
        return self.family == TAPERED_COSINE


def comm_rate(kernel: CommKernel, u) -> np.ndarray | float:
    """Evaluate the communication rate at distance(s) ``u``.

    Symmetric in ``u`` (the absolute value is used), non-negative, and for the
    tapered-cosine family bitwise zero at and beyond the support radius.
    """
    u = np.abs(np.asarray(u, dtype=float))
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    if kernel.family == TAPERED_COSINE:
        out = np.zeros_like(u)
        inside = u < kernel.support
        out[inside] = 0.5 * kernel.amplitude * (1.0 + np.cos(np.pi * u[inside] / kernel.support))
        # the cosine can round to slightly below -1 near the edge
        np.maximum(out, 0.0, out=out)
    else:
        out = kernel.amplitude / (1.0 + u) ** kernel.exponent
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class PairPotential:
    """Short-range repulsive pair potential, zero at and beyond ``support``.

    ``U(x) = a * |x|**(-b) * S(|x|/support)`` where ``S`` is a C2 taper equal
    to 1 on ``[0, core_fraction]`` and 0 from 1 on (quintic smoothstep in
    between).  With ``a = 0`` the singular core is replaced by a finite one,
    ``U(x) = finite_core * S(|x|/support)``; ``a = 0`` together with
    ``finite_core = 0`` switches the potential off.
    """

    singular_amplitude: float
    singular_exponent: float
    support: float
    core_fraction: float = 0.5
    finite_core: float = 1.0

    def __post_init__(self):
        if self.singular_amplitude < 0:
            raise ValueError(f"singular_amplitude must be >= 0, got {self.singular_amplitude}")
        if not self.singular_exponent > 0:
            raise ValueError(f"singular_exponent must be positive, got {self.singular_exponent}")
        if not self.support > 0:
            raise ValueError(f"support must be positive, got {self.support}")
        if not 0 < self.core_fraction < 1:
            raise ValueError(f"core_fraction must lie in (0, 1), got {self.core_fraction}")
        if self.finite_core < 0:
            raise ValueError(f"finite_core must be >= 0, got {self.finite_core}")

    @property
    def active(self) -> bool:
        return self.singular_amplitude > 0 or self.finite_core > 0

    def _taper(self, rho):
        """S(rho) and S'(rho) for the normalized distance rho = r / support."""
        rho = np.asarray(rho, dtype=float)
        s0 = self.core_fraction
        t = (rho - s0) / (1.0 - s0)
        s = 1.0 - _smoothstep5(t)
        ds = -_smoothstep5_deriv(t) / (1.0 - s0)
        return s, ds

    def radial(self, r: np.ndarray):
        """Potential value and radial derivative at distance(s) ``r > 0``."""
        r = np.asarray(r, dtype=float)
        u = np.zeros_like(r)
        du = np.zeros_like(r)
        if not self.active:
            return u, du
        inside = r < self.support
        ri = r[inside]
        s, ds = self._taper(ri / self.support)
        if self.singular_amplitude > 0:
            a, b = self.singular_amplitude, self.singular_exponent
            core = a * ri ** (-b)
            u[inside] = core * s
            du[inside] = core * (-b / ri * s + ds / self.support)
        else:
            u[inside] = self.finite_core * s
            du[inside] = self.finite_core * ds / self.support
        return u, du


def pair_interaction(potential: PairPotential, d: np.ndarray):
    """Energy and force on the particle at ``+d`` due to a particle at the
    origin (force = minus the gradient of the pair potential at ``d``).

    Raises :class:`SingularConfigurationError` for ``|d| = 0``.
    """
    d = np.asarray(d, dtype=float)
    r = float(np.linalg.norm(d))
    if r == 0.0:
        raise SingularConfigurationError("overlapping particles: |d| = 0")
    u, du = potential.radial(np.array([r]))
    energy = float(u[0])
    force = (-float(du[0]) / r) * d
    return energy, force


def confinement(geometry: TubeGeometry, x: np.ndarray):
    """Wall energy and force at position ``x``.

    The force is perpendicular to the axis and points toward it. Raises
    :class:`OutOfDomainError` when the wall is active and ``x`` is not
    strictly inside the tube.
    """
    x = np.asarray(x, dtype=float)
    if not geometry.wall_active:
        return 0.0, np.zeros(3)
    xp = geometry.transverse(x)
    s = float(np.linalg.norm(xp))
    if s >= geometry.radius:
        raise OutOfDomainError(
            f"position at transverse distance {s} >= tube radius {geometry.radius}"
        )
    if s <= geometry.wall_onset:
        return 0.0, np.zeros(3)
    energy, denergy = _wall_radial(geometry, np.array([s]))
    force = (-float(denergy[0]) / s) * xp
    return float(energy[0]), force


def _wall_radial(geometry: TubeGeometry, s: np.ndarray):
    """Wall energy and its radial derivative at transverse distance(s) ``s``,
    assumed valid (inside the tube, wall active)."""
    L, h, g, t0 = (
        geometry.radius,
        geometry.wall_onset,
        geometry.wall_exponent,
        geometry.wall_amplitude,
    )
    s = np.asarray(s, dtype=float)
    energy = np.zeros_like(s)
    denergy = np.zeros_like(s)
    on = s > h
    si = s[on]
    rho = (si - h) / (L - h)
    gap = L - si
    ramp = t0 * rho**3
    dramp = 3.0 * t0 * rho**2 / (L - h)
    energy[on] = ramp / gap**g
    denergy[on] = dramp / gap**g + g * ramp / gap ** (g + 1.0)
    return energy, denergy


def wall_energies(geometry: TubeGeometry | None, positions: np.ndarray):
    """Wall energy per particle; raises on wall contact when active."""
    n = len(positions)
    if geometry is None or not geometry.wall_active:
        return np.zeros(n)
    xp = geometry.transverse(positions)
    s = np.linalg.norm(xp, axis=1)
    if n and s.max() >= geometry.radius:
        raise OutOfDomainError("particle on or outside the tube wall")
    energy, _ = _wall_radial(geometry, s)
    return energy


def wall_forces(geometry: TubeGeometry | None, positions: np.ndarray):
    """Wall force per particle (perpendicular to the axis, toward it)."""
    out = np.zeros_like(positions, dtype=float)
    if geometry is None or not geometry.wall_active or not len(positions):
        return out
    xp = geometry.transverse(positions)
    s = np.linalg.norm(xp, axis=1)
    if s.max() >= geometry.radius:
        raise OutOfDomainError("particle on or outside the tube wall")
    _, denergy = _wall_radial(geometry, s)
    on = denergy != 0.0
    out[on] = (-denergy[on] / s[on])[:, None] * xp[on]
    return out


@dataclass(frozen=True)
class ParticleState:
    """Immutable view of one particle: id, position, velocity."""

    id: int
    x: np.ndarray
    v: np.ndarray


@dataclass
class Configuration:
    """Finite ordered collection of particle states at one instant.

    ``geometry`` may be ``None`` for free-space runs (classical flocking).
    Arrays are row-per-particle; ``ids`` are distinct integers preserved by
    every restriction/selection operation.
    """

    ids: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    geometry: TubeGeometry | None = None
    time: float = 0.0

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(-1, 3)
        if not (len(self.ids) == len(self.positions) == len(self.velocities)):
            raise ValueError("ids, positions and velocities must have equal length")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def particles(self) -> list[ParticleState]:
        return [
            ParticleState(int(i), x, v)
            for i, x, v in zip(self.ids, self.positions, self.velocities)
        ]

    def axial(self) -> np.ndarray:
        axis = self.geometry.axis if self.geometry is not None else np.array([1.0, 0.0, 0.0])
        return self.positions @ axis

    def copy(self) -> "Configuration":
        return Configuration(
            self.ids.copy(),
            self.positions.copy(),
            self.velocities.copy(),
            self.geometry,
            self.time,
        )

    def index_of(self, pid: int) -> int:
        hits = np.flatnonzero(self.ids == pid)
        if len(hits) != 1:
            raise KeyError(f"particle id {pid} not present exactly once")
        return int(hits[0])

    def validate(self) -> None:
        """Check invariants: distinct ids, strictly inside the tube when the
        wall is active, all pair distances positive."""
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("particle ids must be distinct")
        if not np.all(np.isfinite(self.positions)) or not np.all(np.isfinite(self.velocities)):
            raise ValueError("positions and velocities must be finite")
        if self.geometry is not None and self.geometry.wall_active and len(self):
            xp = self.geometry.transverse(self.positions)
            s = np.linalg.norm(xp, axis=1)
            if s.max() >= self.geometry.radius:
                raise OutOfDomainError("particle on or outside the tube wall")
        if len(self) >= 2:
            axis = self.geometry.axis if self.geometry is not None else np.array([1.0, 0.0, 0.0])
            if min_pair_distance(self.positions, axis) <= 0.0:
                raise SingularConfigurationError("configuration contains coincident particles")

    @classmethod
    def from_particles(
        cls,
        particles: list[ParticleState] | list[tuple],
        geometry: TubeGeometry | None = None,
        time: float = 0.0,
    ) -> "Configuration":
        if not particles:
            return cls(np.zeros(0, dtype=np.int64), np.zeros((0, 3)), np.zeros((0, 3)), geometry, time)
        ids, xs, vs = [], [], []
        for p in particles:
            if isinstance(p, ParticleState):
                ids.append(p.id), xs.append(p.x), vs.append(p.v)
            else:
                i, x, v = p
                ids.append(i), xs.append(x), vs.append(v)
        return cls(np.array(ids), np.array(xs, dtype=float), np.array(vs, dtype=float), geometry, time)


def min_pair_distance(positions: np.ndarray, axis: np.ndarray) -> float:
    """Exact minimum pair distance via a sweep over axially sorted particles.

    Near-linear for spread-out configurations: the inner window only spans
    particles whose axial gap is below the best distance found so far.
    """
    n = len(positions)
    if n < 2:
        return math.inf
    s = positions @ axis
    order = np.argsort(s, kind="stable")
    ps = positions[order]
    ss = s[order]
    best = math.inf
    for a in range(n - 1):
        hi = int(np.searchsorted(ss, ss[a] + best, side="right")) if math.isfinite(best) else n
        if hi <= a + 1:
            continue
        d = np.linalg.norm(ps[a + 1 : hi] - ps[a], axis=1)
        m = float(d.min())
        if m < best:
            best = m
    return best


@dataclass(frozen=True)
class ModelParams:
    """Bundle of geometry, communication kernel, and pair potential.

    ``geometry`` and ``potential`` may be ``None`` (free space / no
    repulsion).  When both the kernel and the potential are compactly
    supported they share a common interaction range, the max of the two
    supports.
    """

    kernel: CommKernel
    potential: PairPotential | None = None
    geometry: TubeGeometry | None = None

    @property
    def interaction_range(self) -> float | None:
        """Largest compact support among the active pair terms, or None if
        only non-compact terms are present."""
        r = 0.0
        if self.kernel.compact and self.kernel.amplitude > 0:
            r = max(r, self.kernel.support)
        if self.potential is not None and self.potential.active:
            r = max(r, self.potential.support)
        return r if r > 0 else None

    @property
    def axis(self) -> np.ndarray:
        if self.geometry is not None:
            return self.geometry.axis
        return np.array([1.0, 0.0, 0.0])


DEFAULT_AXIS = np.array([1.0, 0.0, 0.0])
