"""Deterministic samplers for admissible initial data, class-membership
diagnostics, and snapshot persistence.

Sampling is keyed by a counter-based PRNG on (seed, draw index, attempt), so
a configuration is a pure function of its spec: ladder studies can share one
full configuration bit-for-bit, and individual draws do not depend on
evaluation order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .functionals import SupDensityEstimate, sup_energy_density
from .model import (
    Configuration,
    ModelParams,
    TubeGeometry,
    min_pair_distance,
    wall_energies,
)

_MASK64 = (1 << 64) - 1
_TAG_COUNT = 1
_TAG_PARTICLE = 2
_MAX_ATTEMPTS_TOTAL = 1_000_000


class InfeasibleDensityError(RuntimeError):
    """Separation rejection failed too often: the spec is too dense."""


class SnapshotFormatError(ValueError):
    """Snapshot file malformed; the message names the offending line."""


class SnapshotVersionError(ValueError):
    """Snapshot written by an incompatible format version."""


@dataclass(frozen=True)
class SamplerSpec:
    """Poisson axial positions, uniform-in-disk transverse positions,
    Gaussian velocities, with a hard minimum pair separation.

    ``log_growth`` scales velocities by sqrt(log(e + |axial|)), exercising
    exactly the admissible logarithmic divergence of local energy.
    ``transverse_cap`` keeps particles at transverse distance at most
    ``cap * radius`` so wall energy is finite at t = 0.
    """

    seed: int
    density: float
    sigma: float
    span: float
    d_min: float
    log_growth: bool = False
    transverse_cap: float = 0.5

    def __post_init__(self):
        if not self.density > 0:
            raise ValueError(f"density must be positive, got {self.density}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not self.span > 0:
            raise ValueError(f"span must be positive, got {self.span}")
        if not self.d_min > 0:
            raise ValueError(f"d_min must be positive, got {self.d_min}")
        if not self.d_min < 1.0 / self.density:
            raise ValueError(
                f"infeasible spec: d_min {self.d_min} >= mean axial spacing "
                f"{1.0 / self.density}"
            )
        if not 0 < self.transverse_cap < 1:
            raise ValueError(f"transverse_cap must lie in (0, 1), got {self.transverse_cap}")


def _generator(seed: int, tag: int, idx: int = 0, attempt: int = 0) -> np.random.Generator:
    key = np.array([seed & _MASK64, tag], dtype=np.uint64)
    counter = np.array([idx & _MASK64, attempt & _MASK64, 0, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _transverse_basis(axis: np.ndarray):
    pivot = np.zeros(3)
    pivot[int(np.argmin(np.abs(axis)))] = 1.0
    e1 = np.cross(axis, pivot)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return e1, e2


def sample_configuration(
    spec: SamplerSpec, geometry: TubeGeometry, params: ModelParams | None = None
) -> Configuration:
    """Draw a finite configuration on the axial interval [-span, span].

    The particle count is Poisson with mean ``2 * span * density``; each
    particle is re-drawn (bumping only its own attempt counter) until it
    clears ``d_min`` against the ones already placed.  Identical specs give
    bitwise-identical configurations.
    """
    seed = int(spec.seed)
    count = int(_generator(seed, _TAG_COUNT).poisson(2.0 * spec.span * spec.density))
    axis = geometry.axis
    e1, e2 = _transverse_basis(axis)
    r_cap = spec.transverse_cap * geometry.radius
    positions = np.zeros((count, 3))
    velocities = np.zeros((count, 3))
    attempts_left = _MAX_ATTEMPTS_TOTAL
    for idx in range(count):
        attempt = 0
        while True:
            if attempts_left <= 0:
                raise InfeasibleDensityError(
                    f"could not place particle {idx} of {count} after "
                    f"{_MAX_ATTEMPTS_TOTAL} total attempts (d_min={spec.d_min})"
                )
            attempts_left -= 1
            g = _generator(seed, _TAG_PARTICLE, idx, attempt)
            draws = g.random(3)
            normals = g.standard_normal(3)
            axial = spec.span * (2.0 * draws[0] - 1.0)
            rho = r_cap * math.sqrt(draws[1])
            phi = 2.0 * math.pi * draws[2]
            pos = axial * axis + rho * (math.cos(phi) * e1 + math.sin(phi) * e2)
            if idx:
                gaps = positions[:idx] - pos
                if float((gaps * gaps).sum(axis=1).min()) < spec.d_min * spec.d_min:
                    attempt += 1
                    continue
            positions[idx] = pos
            scale = spec.sigma
            if spec.log_growth:
                scale = scale * math.sqrt(math.log(math.e + abs(axial)))
            velocities[idx] = scale * normals
            break
    return Configuration(np.arange(count, dtype=np.int64), positions, velocities, geometry, 0.0)


@dataclass(frozen=True)
class MembershipReport:
    """Finite-configuration certificate: all fields finite means the
    truncation is an admissible restriction."""

    count: int
    sup_density: SupDensityEstimate
    min_separation: float
    max_wall_energy: float
    max_speed: float

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "sup_density": self.sup_density.value,
            "sup_density_mu": self.sup_density.mu,
            "sup_density_r": self.sup_density.r,
            "min_separation": self.min_separation,
            "max_wall_energy": self.max_wall_energy,
            "max_speed": self.max_speed,
        }


def verify_membership(config: Configuration, params: ModelParams) -> MembershipReport:
    """Report the quantities whose finiteness certifies admissibility."""
    sup = sup_energy_density(config, params)
    if len(config) >= 2:
        min_sep = min_pair_distance(config.positions, params.axis)
    else:
        min_sep = math.inf
    walls = wall_energies(params.geometry, config.positions)
    max_wall = float(walls.max()) if len(walls) else 0.0
    speeds = np.linalg.norm(config.velocities, axis=1)
    max_speed = float(speeds.max()) if len(speeds) else 0.0
    return MembershipReport(len(config), sup, min_sep, max_wall, max_speed)


FORMAT_VERSION = 1


def _geometry_dict(geometry: TubeGeometry | None):
    if geometry is None:
        return None
    return {
        "axis": [float(c) for c in geometry.axis],
        "radius": geometry.radius,
        "wall_onset": geometry.wall_onset,
        "wall_exponent": geometry.wall_exponent,
        "wall_amplitude": geometry.wall_amplitude,
    }


def _geometry_from_dict(d) -> TubeGeometry | None:
    if d is None:
        return None
    return TubeGeometry(
        np.array(d["axis"], dtype=float),
        float(d["radius"]),
        float(d["wall_onset"]),
        float(d["wall_exponent"]),
        float(d["wall_amplitude"]),
    )


def params_digest(params: ModelParams | None) -> str | None:
    """Stable digest of the model parameters, recorded in snapshot headers."""
    if params is None:
        return None
    pot = params.potential
    doc = {
        "geometry": _geometry_dict(params.geometry),
        "kernel": {
            "family": params.kernel.family,
            "amplitude": params.kernel.amplitude,
            "support": params.kernel.support,
            "exponent": params.kernel.exponent,
        },
        "potential": None
        if pot is None
        else {
            "singular_amplitude": pot.singular_amplitude,
            "singular_exponent": pot.singular_exponent,
            "support": pot.support,
            "core_fraction": pot.core_fraction,
            "finite_core": pot.finite_core,
        },
    }
    payload = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def _snapshot_lines(config: Configuration, params: ModelParams | None):
    header = {
        "format_version": FORMAT_VERSION,
        "time": config.time,
        "geometry": _geometry_dict(config.geometry),
        "params_digest": params_digest(params),
    }
    yield json.dumps(header, separators=(",", ":"))
    for i, x, v in zip(config.ids, config.positions, config.velocities):
        yield json.dumps(
            {"id": int(i), "x": [x[0], x[1], x[2]], "v": [v[0], v[1], v[2]]},
            separators=(",", ":"),
        )


def save_snapshot(config: Configuration, path, params: ModelParams | None = None) -> None:
    """Write one configuration as JSON lines: a header object, then one
    object per particle.  Floats are serialized with shortest round-trip
    precision, so a reload is bit-exact."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in _snapshot_lines(config, params):
            fh.write(line)
            fh.write("\n")


def _read_records(path):
    """Non-blank lines parsed as JSON, tagged with 1-based line numbers."""
    with open(path, encoding="utf-8") as fh:
        for lineno, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                yield lineno, json.loads(text)
            except json.JSONDecodeError as exc:
                raise SnapshotFormatError(f"line {lineno}: invalid JSON: {exc.msg}") from exc


def _parse_blocks(path) -> list[Configuration]:
    """Split header-delimited particle records into configurations."""
    configs = []
    header = None
    ids, xs, vs = [], [], []

    def flush():
        configs.append(
            Configuration(
                np.array(ids, dtype=np.int64),
                np.array(xs, dtype=float).reshape(-1, 3),
                np.array(vs, dtype=float).reshape(-1, 3),
                _geometry_from_dict(header.get("geometry")),
                float(header.get("time", 0.0)),
            )
        )

    for lineno, rec in _read_records(path):
        if isinstance(rec, dict) and "format_version" in rec:
            if rec["format_version"] != FORMAT_VERSION:
                raise SnapshotVersionError(
                    f"line {lineno}: format version {rec['format_version']} "
                    f"(this build reads version {FORMAT_VERSION})"
                )
            if header is not None:
                flush()
            header = rec
            ids, xs, vs = [], [], []
            continue
        if header is None:
            raise SnapshotFormatError(f"line {lineno}: particle record before any header")
        try:
            x = [float(c) for c in rec["x"]]
            v = [float(c) for c in rec["v"]]
            if len(x) != 3 or len(v) != 3:
                raise ValueError("x and v must be 3-vectors")
            ids.append(int(rec["id"]))
            xs.append(x)
            vs.append(v)
        except (KeyError, TypeError, ValueError) as exc:
            raise SnapshotFormatError(f"line {lineno}: bad particle record: {exc}") from exc
    if header is None:
        raise SnapshotFormatError("line 1: expected a snapshot header")
    flush()
    return configs


def load_snapshot(path) -> Configuration:
    """Read a snapshot written by :func:`save_snapshot`."""
    configs = _parse_blocks(path)
    if len(configs) != 1:
        raise SnapshotFormatError(
            f"expected a single snapshot, found {len(configs)}; use load_trajectory"
        )
    return configs[0]


def save_trajectory(snapshots, path, params: ModelParams | None = None) -> None:
    """Write a sequence of configurations as consecutive snapshot blocks."""
    with open(path, "w", encoding="utf-8") as fh:
        for config in snapshots:
            for line in _snapshot_lines(config, params):
                fh.write(line)
                fh.write("\n")


def load_trajectory(path) -> list[Configuration]:
    """Read back all snapshot blocks of a trajectory file."""
    return _parse_blocks(path)
