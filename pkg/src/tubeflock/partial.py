"""Truncation-ladder dynamics: run the finite restriction of a configuration
to the axial ball |x . axis| <= n for an increasing ladder of n, measure
inter-level discrepancies on tracked windows, and certify decay and locality.

Force loops sum in ascending particle-id order, so two levels whose particle
sets coincide produce bitwise-identical trajectories: a measured discrepancy
is purely the dynamical influence of the extra shell, not floating-point
reordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import IntegratorConfig, Trajectory, simulate
from .functionals import MAX_ENVELOPE_STRIDE
from .model import Configuration, ModelParams

#: snapshot stride for ladder runs, as a fraction of the run length
LADDER_STRIDE_FRACTION = 0.05


def _ladder_stride(T: float, stride: float | None) -> float | None:
    """Cap the stride so discrepancies resolve the run (<= 5% of T) and
    growth envelopes stay buildable (absolute cap)."""
    if T <= 0:
        return stride
    cap = min(LADDER_STRIDE_FRACTION * T, MAX_ENVELOPE_STRIDE)
    return cap if stride is None else min(stride, cap)


class MembershipError(KeyError):
    """A particle id is missing from one of the compared runs."""


class HorizonTooLargeError(RuntimeError):
    """The tracked window plus the measured interaction horizon reaches the
    smallest ladder level; a bigger ladder is needed."""


@dataclass
class PartialRun:
    """One truncation level: the level, its member ids, and the trajectory."""

    n: int
    ids: np.ndarray
    trajectory: Trajectory

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times

    def initial_axial(self) -> np.ndarray:
        return self.trajectory.snapshots[0].axial()

    def max_speed(self) -> float:
        """Largest particle speed over all snapshots of the run."""
        out = 0.0
        for snap in self.trajectory.snapshots:
            if len(snap):
                out = max(out, float(np.linalg.norm(snap.velocities, axis=1).max()))
        return out


def restrict_axial(full: Configuration, n: float) -> Configuration:
    """Particles with |x . axis| <= n (boundary included), ids and order
    preserved."""
    keep = np.abs(full.axial()) <= n
    return Configuration(
        full.ids[keep],
        full.positions[keep],
        full.velocities[keep],
        full.geometry,
        full.time,
    )


def run_ladder(
    full: Configuration,
    levels,
    params: ModelParams,
    icfg: IntegratorConfig | None = None,
    T: float = 1.0,
    stride: float | None = None,
) -> list[PartialRun]:
    """Integrate every truncation level with identical integrator settings
    and identical snapshot grids."""
    levels = list(levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError(f"ladder levels must be strictly increasing, got {levels}")
    stride = _ladder_stride(T, stride)
    runs = []
    for n in levels:
        restricted = restrict_axial(full, n)
        try:
            traj = simulate(restricted, params, icfg, T, stride)
        except Exception as exc:
            raise type(exc)(f"[ladder level n={n}] {exc}") from exc
        runs.append(PartialRun(int(n), restricted.ids.copy(), traj))
    times = runs[0].times
    for run in runs[1:]:
        if len(run.times) != len(times) or not np.array_equal(run.times, times):
            raise AssertionError("ladder levels produced different snapshot grids")
    return runs


def _time_index(run: PartialRun, t: float) -> int:
    times = run.times
    idx = int(np.argmin(np.abs(times - t)))
    if abs(times[idx] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"t={t} is not on the snapshot grid")
    return idx


def discrepancy(run_a: PartialRun, run_b: PartialRun, pid: int, t: float) -> float:
    """Position-plus-velocity gap of one particle between two levels at a
    common snapshot time: |x_a - x_b| + |v_a - v_b|."""
    deltas = _discrepancy_table(run_a, run_b, np.array([pid], dtype=np.int64))
    it = _time_index(run_a, t)
    return float(deltas[it, 0])


def _shared_rows(run: PartialRun, pids: np.ndarray) -> np.ndarray:
    id_to_row = {int(i): r for r, i in enumerate(run.ids)}
    rows = np.empty(len(pids), dtype=np.int64)
    for k, pid in enumerate(pids):
        try:
            rows[k] = id_to_row[int(pid)]
        except KeyError:
            raise MembershipError(f"particle id {int(pid)} not in level n={run.n}") from None
    return rows


def _discrepancy_table(run_a: PartialRun, run_b: PartialRun, pids: np.ndarray) -> np.ndarray:
    """delta[t_index, particle] for the given ids, which must live in both runs."""
    rows_a = _shared_rows(run_a, pids)
    rows_b = _shared_rows(run_b, pids)
    n_t = len(run_a.trajectory.snapshots)
    out = np.zeros((n_t, len(pids)))
    for it, (snap_a, snap_b) in enumerate(
        zip(run_a.trajectory.snapshots, run_b.trajectory.snapshots)
    ):
        dx = np.linalg.norm(snap_a.positions[rows_a] - snap_b.positions[rows_b], axis=1)
        dv = np.linalg.norm(snap_a.velocities[rows_a] - snap_b.velocities[rows_b], axis=1)
        out[it] = dx + dv
    return out


@dataclass(frozen=True)
class WindowSup:
    """Sup of the discrepancy over a tracked window; ``empty`` flags a window
    containing no particles (value 0 by convention)."""

    value: float
    members: int

    @property
    def empty(self) -> bool:
        return self.members == 0


def window_ids(run: PartialRun, k: float) -> np.ndarray:
    """Ids of particles initially within axial distance k of the origin."""
    return run.ids[np.abs(run.initial_axial()) <= k]


def window_sup_discrepancy(
    run_a: PartialRun, run_b: PartialRun, k: float, t: float
) -> WindowSup:
    """Sup over the tracked window |initial axial| <= k of the per-particle
    discrepancy between two levels at time t."""
    pids = window_ids(run_a if run_a.n <= run_b.n else run_b, k)
    if not len(pids):
        return WindowSup(0.0, 0)
    deltas = _discrepancy_table(run_a, run_b, pids)
    return WindowSup(float(deltas[_time_index(run_a, t)].max()), len(pids))


def interaction_horizon(v_max: float, t: float, rbar: float) -> float:
    """Maximal distance over which influence can propagate in time t: the
    kernel range plus twice the distance covered at the measured top speed."""
    if v_max < 0:
        raise ValueError(f"v_max must be >= 0, got {v_max}")
    return rbar + 2.0 * t * v_max


def measured_min_level(k: float, horizon: float, rbar: float) -> float:
    """Smallest level beyond which the tracked window cannot feel the newest
    shell within the horizon."""
    return rbar + k + horizon


@dataclass
class LadderPair:
    """Discrepancy series between two consecutive ladder levels."""

    n_low: int
    n_high: int
    times: np.ndarray
    u: np.ndarray
    members: int


@dataclass
class ConvergenceReport:
    """Inter-level discrepancies across a ladder with the decay verdict."""

    k: float
    levels: list[int]
    pairs: list[LadderPair]
    horizon: float
    v_max: float
    min_level_needed: float
    final_u: np.ndarray
    final_ratios: np.ndarray
    slope: float | None
    decay_ok: bool
    tracked_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    tracked_deltas: list[np.ndarray] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "k": self.k,
            "levels": self.levels,
            "v_max": self.v_max,
            "horizon": self.horizon,
            "min_level_needed": self.min_level_needed,
            "final_u": [float(u) for u in self.final_u],
            "final_ratios": [float(r) for r in self.final_ratios],
            "log_slope": self.slope,
            "decay_ok": bool(self.decay_ok),
        }


def _decay_verdict(final_u: np.ndarray, n_high: np.ndarray):
    """Ratios between consecutive pair discrepancies, the slope of log u
    against the level, and the pass flag (strictly decreasing, zeros allowed)."""
    ratios = np.full(max(len(final_u) - 1, 0), math.nan)
    ok = True
    for j in range(len(final_u) - 1):
        lo, hi = final_u[j], final_u[j + 1]
        if lo == 0.0 and hi == 0.0:
            ratios[j] = 0.0
        elif lo == 0.0:
            ratios[j] = math.inf
            ok = False
        else:
            ratios[j] = hi / lo
            if hi >= lo:
                ok = False
    slope = None
    positive = final_u > 0
    if positive.sum() >= 2:
        idx = np.flatnonzero(positive)
        slope = float(np.polyfit(n_high[idx].astype(float), np.log(final_u[idx]), 1)[0])
    return ratios, slope, ok


def convergence_study(
    full: Configuration,
    levels,
    k: float,
    params: ModelParams,
    icfg: IntegratorConfig | None = None,
    T: float = 1.0,
    stride: float | None = None,
) -> ConvergenceReport:
    """Run the ladder, measure the tracked-window discrepancy between every
    consecutive level pair, and report its decay.

    Raises :class:`HorizonTooLargeError` when the tracked window plus the
    measured interaction horizon reaches the smallest level: discrepancies
    would then mix truncation effects with direct shell interactions.
    """
    runs = run_ladder(full, levels, params, icfg, T, stride)
    rng = params.interaction_range
    rbar = rng if rng is not None else 0.0
    v_max = max(run.max_speed() for run in runs)
    horizon = interaction_horizon(v_max, T, rbar)
    needed = measured_min_level(k, horizon, rbar)
    if needed >= min(r.n for r in runs):
        raise HorizonTooLargeError(
            f"window k={k} plus horizon {horizon:.3g} needs levels above "
            f"{needed:.3g}, but the ladder starts at {min(r.n for r in runs)}"
        )
    times = runs[0].times
    tracked = window_ids(runs[0], k)
    pairs = []
    deltas_list = []
    for lo, hi in zip(runs, runs[1:]):
        if len(tracked):
            deltas = _discrepancy_table(lo, hi, tracked)
            u = deltas.max(axis=1)
        else:
            deltas = np.zeros((len(times), 0))
            u = np.zeros(len(times))
        deltas_list.append(deltas)
        pairs.append(LadderPair(lo.n, hi.n, times, u, len(tracked)))
    final_u = np.array([p.u[-1] for p in pairs])
    ratios, slope, ok = _decay_verdict(final_u, np.array([p.n_high for p in pairs]))
    return ConvergenceReport(
        k=k,
        levels=[r.n for r in runs],
        pairs=pairs,
        horizon=horizon,
        v_max=v_max,
        min_level_needed=needed,
        final_u=final_u,
        final_ratios=ratios,
        slope=slope,
        decay_ok=ok,
        tracked_ids=tracked,
        tracked_deltas=deltas_list,
    )


def locality_probe(
    full: Configuration,
    perturb_id: int,
    perturb_offset,
    window_k: float,
    n: float,
    params: ModelParams,
    icfg: IntegratorConfig | None = None,
    T: float = 1.0,
    stride: float | None = None,
    require_decoupled: bool = True,
) -> float:
    """Twin-run probe of locality: perturb one particle's position, rerun the
    same truncation level, and return the max discrepancy over the tracked
    window and all snapshot times.

    With ``require_decoupled`` the perturbed particle must start farther from
    the origin than the window plus the measured interaction horizon (checked
    after the runs, using the measured top speed); set it to False for
    sanity probes inside the coupled region.
    """
    offset = np.asarray(perturb_offset, dtype=float).reshape(3)
    perturbed = full.copy()
    perturbed.positions[perturbed.index_of(perturb_id)] += offset
    stride = _ladder_stride(T, stride)

    base_run, twin_run = (
        PartialRun(int(n), cfg_n.ids.copy(), simulate(cfg_n, params, icfg, T, stride))
        for cfg_n in (restrict_axial(full, n), restrict_axial(perturbed, n))
    )
    rng = params.interaction_range
    rbar = rng if rng is not None else 0.0
    v_max = max(base_run.max_speed(), twin_run.max_speed())
    horizon = interaction_horizon(v_max, T, rbar)
    s_p = abs(float(full.axial()[full.index_of(perturb_id)]))
    if require_decoupled and s_p <= window_k + horizon:
        raise ValueError(
            f"perturbed particle at axial distance {s_p:.3g} is within the "
            f"window {window_k} plus horizon {horizon:.3g}"
        )
    shared = np.intersect1d(window_ids(base_run, window_k), twin_run.ids)
    if not len(shared):
        return 0.0
    deltas = _discrepancy_table(base_run, twin_run, shared)
    return float(deltas.max())
