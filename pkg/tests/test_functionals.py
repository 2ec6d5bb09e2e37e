import math

import numpy as np
import pytest

from tubeflock import (
    Configuration,
    IntegratorConfig,
    Trajectory,
    WindowSpec,
    energy,
    envelope_ratio_series,
    growth_envelope,
    local_energy_count,
    mollified_energy_count,
    mollifier,
    normalized_speed_series,
    simulate,
    sup_energy_density,
)
from tubeflock.dynamics import IntegratorStats

from conftest import on_axis


def static_trajectory(config, times):
    snaps = []
    for t in times:
        c = config.copy()
        c.time = float(t)
        snaps.append(c)
    return Trajectory(snaps, IntegratorStats())


# ---------------------------------------------------------------- mollifier


def test_mollifier_profile():
    assert mollifier(0.0) == 1.0
    assert mollifier(1.0) == 1.0
    assert mollifier(1.5) == pytest.approx(0.5, abs=1e-15)
    assert mollifier(2.0) == 0.0
    assert mollifier(5.0) == 0.0


def test_mollifier_monotone_and_slope_bounded():
    grid = np.arange(0.0, 2.5, 1e-3)
    vals = mollifier(grid)
    assert np.all(np.diff(vals) <= 0.0)
    slopes = np.abs(np.diff(vals) / 1e-3)
    assert slopes.max() <= 2.0


# ---------------------------------------------------------------- window sums


def test_local_count_single_particle(geometry, params):
    config = on_axis([0.0], geometry=geometry)
    assert local_energy_count(config, params, WindowSpec(0.0, 1.0)) == 1.0


def test_local_count_pair(geometry, params):
    config = on_axis([0.0, 0.5], geometry=geometry)
    assert local_energy_count(config, params, WindowSpec(0.0, 1.0)) == pytest.approx(6.0, rel=1e-14)
    assert local_energy_count(config, params, WindowSpec(10.0, 1.0)) == 0.0


def test_window_monotone_in_radius(geometry, params):
    rng = np.random.default_rng(2)
    config = on_axis(rng.uniform(-10, 10, 30), geometry=geometry)
    values = [
        local_energy_count(config, params, WindowSpec(1.0, r)) for r in np.linspace(0.5, 15, 40)
    ]
    assert np.all(np.diff(values) >= 0.0)


def test_mollified_weights(geometry, params):
    config = on_axis([0.0], geometry=geometry)
    assert mollified_energy_count(config, params, WindowSpec(0.0, 1.0)) == 1.0
    config2 = on_axis([1.5], geometry=geometry)
    assert mollified_energy_count(config2, params, WindowSpec(0.0, 1.0)) == pytest.approx(0.5)


def test_sandwich_exact(geometry, params):
    """Indicator <= mollifier <= wide indicator, with no tolerance."""
    rng = np.random.default_rng(17)
    for _ in range(200):
        n = int(rng.integers(1, 40))
        pos = np.column_stack(
            [rng.uniform(-15, 15, n), rng.uniform(-0.4, 0.4, n), rng.uniform(-0.4, 0.4, n)]
        )
        config = Configuration(np.arange(n), pos, rng.normal(0, 1, (n, 3)), geometry)
        mu = float(rng.uniform(-16, 16))
        radius = float(rng.uniform(0.05, 20.0))
        w = WindowSpec(mu, radius)
        q = local_energy_count(config, params, w)
        m = mollified_energy_count(config, params, w)
        q2 = local_energy_count(config, params, WindowSpec(mu, 2 * radius))
        assert q <= m <= q2


def test_window_sums_tile_total_energy(geometry, params):
    """Disjoint windows covering all particles sum to count + energy."""
    rng = np.random.default_rng(23)
    config = on_axis(rng.uniform(-9, 9, 25), velocities=rng.normal(0, 1, (25, 3)), geometry=geometry)
    total = sum(
        local_energy_count(config, params, WindowSpec(c, 2.5)) for c in (-7.5, -2.5, 2.5, 7.5)
    )
    assert total == pytest.approx(25 + energy(config, params), rel=1e-12)


# ---------------------------------------------------------------- sup density


def test_sup_density_empty(geometry, params):
    assert sup_energy_density(on_axis([], geometry=geometry), params).value == 0.0


def test_sup_density_single_particle(geometry, params):
    est = sup_energy_density(on_axis([0.0], geometry=geometry), params)
    assert abs(est.value - 0.5) <= 0.05 * 0.5
    assert est.value <= 0.5


def test_sup_density_refinement_monotone(geometry, params):
    rng = np.random.default_rng(4)
    config = on_axis(rng.uniform(-20, 20, 40), velocities=rng.normal(0, 1, (40, 3)), geometry=geometry)
    coarse = sup_energy_density(config, params, mu_step=0.5, r_factor=1.25)
    fine = sup_energy_density(config, params, mu_step=0.25, r_factor=math.sqrt(1.25))
    finer = sup_energy_density(config, params, mu_step=0.125, r_factor=1.25 ** 0.25)
    assert coarse.value <= fine.value <= finer.value


# ---------------------------------------------------------------- envelopes


def test_growth_envelope_static(geometry, params):
    config = on_axis([0.0], geometry=geometry)
    traj = static_trajectory(config, np.arange(0.0, 1.0001, 0.05))
    env = growth_envelope(traj, 10, 1.0)
    assert env.radius[0] == pytest.approx(2 * math.log(math.e + 10))
    assert env.radius[-1] == pytest.approx(2 * math.log(math.e + 10) + 1.0)
    assert np.all(env.m == 1.0)


def test_growth_envelope_running_max(geometry, params):
    config = on_axis([0.0, 5.0], geometry=geometry)
    times = np.arange(0.0, 0.2001, 0.05)
    snaps = []
    for i, t in enumerate(times):
        c = config.copy()
        c.time = float(t)
        c.velocities[0, 0] = [0.0, 2.0, 1.0, 0.5, 0.1][i]
        snaps.append(c)
    env = growth_envelope(Trajectory(snaps, IntegratorStats()), 5, 1.0)
    assert np.all(np.diff(env.speed_max) >= 0)
    assert env.speed_max[-1] == 2.0
    assert np.all(np.diff(env.radius) > 0)


def test_growth_envelope_rejects_coarse_stride(geometry):
    config = on_axis([0.0], geometry=geometry)
    traj = static_trajectory(config, [0.0, 0.5, 1.0])
    with pytest.raises(ValueError):
        growth_envelope(traj, 10, 1.0)


def test_growth_envelope_rejects_empty():
    with pytest.raises(ValueError):
        growth_envelope(Trajectory([], IntegratorStats()), 3, 1.0)


# ---------------------------------------------------------------- checkers


def test_ratio_series_initial_bound(geometry, default_params):
    """At t=0 the windowed ratio is at most 2 by the density definition."""
    from tubeflock.sampling import SamplerSpec, sample_configuration

    spec = SamplerSpec(seed=21, density=0.8, sigma=0.5, span=30.0, d_min=0.35)
    full = sample_configuration(spec, geometry, default_params)
    q0 = sup_energy_density(full, default_params).value
    traj = static_trajectory(full, np.arange(0.0, 0.1001, 0.05))
    series = envelope_ratio_series(traj, 20, default_params, q0)
    assert series.ratios[0] <= 2.0


def test_ratio_series_static_near_constant(geometry, params):
    """A frozen configuration keeps the windowed ratio nearly constant (the
    only drift is the slow envelope half-width growth)."""
    comb = on_axis(np.arange(-60.0, 60.5, 3.0), geometry=geometry)
    q0 = sup_energy_density(comb, params).value
    traj = static_trajectory(comb, np.arange(0.0, 2.0001, 0.05))
    series = envelope_ratio_series(traj, 30, params, q0)
    assert series.ratios.max() / series.ratios.min() <= 1.25


def test_ratio_series_rejects_zero_q0(geometry, params):
    traj = static_trajectory(on_axis([], geometry=geometry), [0.0, 0.05])
    with pytest.raises(ZeroDivisionError):
        envelope_ratio_series(traj, 5, params, 0.0)


def test_normalized_speed_zero_velocities(geometry):
    config = on_axis([0.0, 3.0], geometry=geometry)
    traj = static_trajectory(config, np.arange(0.0, 0.2001, 0.05))
    assert np.all(normalized_speed_series(traj, 25, 1.0) == 0.0)


def test_normalized_speed_initial_value(geometry):
    config = on_axis([0.0, 3.0], velocities=[[0.6, 0, 0], [0.0, 0.8, 0]], geometry=geometry)
    traj = static_trajectory(config, [0.0, 0.05])
    series = normalized_speed_series(traj, 25, 1.0)
    assert series[0] == pytest.approx(0.8 / math.sqrt(math.log(math.e + 25)))
