import math

import numpy as np
import pytest

from tubeflock import (
    CommKernel,
    Configuration,
    IntegratorConfig,
    ModelParams,
    PairPotential,
    SingularConfigurationError,
    StiffnessError,
    TAPERED_COSINE,
    TubeGeometry,
    dissipation_rate,
    energy,
    simulate,
    step_adaptive,
    total_rhs,
)
from tubeflock.dynamics import MaxStepsError, axial_momentum
from tubeflock.model import min_pair_distance
from tubeflock.sampling import SamplerSpec, sample_configuration

from conftest import AXIS, on_axis


def kernel_off():
    return CommKernel(TAPERED_COSINE, 0.0, support=2.0)


# ---------------------------------------------------------------- rhs


def test_single_particle_no_acceleration(geometry, params):
    config = on_axis([0.0], velocities=[[3.0, 0.0, 0.0]], geometry=geometry)
    rhs = total_rhs(config, params)
    assert np.all(rhs.acceleration == 0.0)


def test_two_body_repulsion_accelerations(geometry):
    params = ModelParams(kernel_off(), PairPotential(1.0, 2.0, 2.0, 0.5), geometry)
    config = on_axis([0.0, 1.0], geometry=geometry)
    acc = total_rhs(config, params).acceleration
    assert acc[0] == pytest.approx([-2.0, 0.0, 0.0], abs=1e-14)
    assert acc[1] == pytest.approx([2.0, 0.0, 0.0], abs=1e-14)


def test_alignment_pair(geometry):
    params = ModelParams(CommKernel(TAPERED_COSINE, 1.0, support=2.0), None, geometry)
    config = on_axis([0.0, 1.0], velocities=[[1.0, 0, 0], [0.0, 0, 0]], geometry=geometry)
    rhs = total_rhs(config, params)
    assert rhs.acceleration[0] == pytest.approx([-0.5, 0.0, 0.0], abs=1e-14)
    assert rhs.acceleration[1] == pytest.approx([0.5, 0.0, 0.0], abs=1e-14)
    assert np.all(rhs.force == 0.0)


def test_rhs_terms_sum(geometry, params):
    config = on_axis([0.0, 0.8], velocities=[[0.5, 0, 0], [-0.2, 0.1, 0]], geometry=geometry)
    rhs = total_rhs(config, params)
    assert np.array_equal(rhs.acceleration, rhs.alignment + rhs.force)
    assert np.any(rhs.alignment != 0.0) and np.any(rhs.force != 0.0)


def test_rhs_overlap_raises(geometry, params):
    config = Configuration(
        np.array([0, 1]), np.zeros((2, 3)), np.zeros((2, 3)), geometry
    )
    with pytest.raises(SingularConfigurationError):
        total_rhs(config, params)


# ---------------------------------------------------------------- energy


def test_energy_single_particle(geometry, params):
    config = on_axis([0.0], velocities=[[1.0, 0, 0]], geometry=geometry)
    assert energy(config, params) == 0.5


def test_energy_two_resting(geometry):
    params = ModelParams(kernel_off(), PairPotential(1.0, 2.0, 2.0, 0.5), geometry)
    config = on_axis([0.0, 0.5], geometry=geometry)
    assert energy(config, params) == pytest.approx(4.0, rel=1e-14)


def test_energy_empty(geometry, params):
    config = on_axis([], geometry=geometry)
    assert energy(config, params) == 0.0


def test_dissipation_equal_velocities(geometry, params):
    config = on_axis([0.0, 1.0], velocities=[[1.0, 0, 0], [1.0, 0, 0]], geometry=geometry)
    assert dissipation_rate(config, params) == 0.0


def test_dissipation_pair_value(geometry):
    params = ModelParams(CommKernel(TAPERED_COSINE, 1.0, support=2.0), None, geometry)
    config = on_axis([0.0, 1.0], velocities=[[1.0, 0, 0], [0.0, 0, 0]], geometry=geometry)
    assert dissipation_rate(config, params) == pytest.approx(-0.5, abs=1e-15)


def test_dissipation_matches_energy_slope(geometry, default_params):
    """Centered finite difference of the energy along a tight integration
    reproduces the dissipation rate."""
    spec = SamplerSpec(seed=3, density=0.5, sigma=0.4, span=20.0, d_min=0.4)
    config = sample_configuration(spec, geometry, default_params)
    assert len(config) >= 10
    icfg = IntegratorConfig(rtol=1e-11, atol=1e-13)
    traj = simulate(config, default_params, icfg, T=0.004, stride=0.0005)
    e = np.array([energy(c, default_params) for c in traj.snapshots])
    t = traj.times
    mid = len(t) // 2
    fd = (e[mid + 1] - e[mid - 1]) / (t[mid + 1] - t[mid - 1])
    rate = dissipation_rate(traj.snapshots[mid], default_params)
    assert rate <= 0
    assert abs(fd - rate) <= 1e-4 * abs(rate)


# ---------------------------------------------------------------- stepping


def test_free_particle_exact(geometry):
    params = ModelParams(kernel_off(), None, None)
    config = on_axis([0.0], velocities=[[1.0, 0, 0]])
    traj = simulate(config, params, IntegratorConfig(), T=1.0, stride=0.5)
    assert np.abs(traj.snapshots[-1].positions[0] - [1.0, 0.0, 0.0]).max() <= 1e-12


def test_self_refinement_oracle(geometry):
    """Default-tolerance two-body scattering matches a 100x tighter run."""
    params = ModelParams(kernel_off(), PairPotential(1.0, 2.0, 2.0, 0.5), geometry)
    config = Configuration(
        np.array([0, 1]),
        np.array([[-1.0, 0.05, 0.0], [1.0, -0.05, 0.0]]),
        np.array([[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0]]),
        geometry,
    )
    coarse = simulate(config, params, IntegratorConfig(), T=1.0).snapshots[-1]
    fine = simulate(
        config, params, IntegratorConfig(rtol=1e-10, atol=1e-12), T=1.0
    ).snapshots[-1]
    assert np.abs(coarse.positions - fine.positions).max() <= 1e-7
    assert np.abs(coarse.velocities - fine.velocities).max() <= 1e-7


def test_observed_order_at_least_four(geometry):
    """Step-halving slopes on two-body repulsion inside the power-law core."""
    params = ModelParams(
        CommKernel(TAPERED_COSINE, 0.0, support=10.0),
        PairPotential(1.0, 2.0, 10.0, 0.5),
        geometry,
    )
    config = Configuration(
        np.array([0, 1]),
        np.array([[-1.0, 0.05, 0.0], [1.0, -0.05, 0.0]]),
        np.array([[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0]]),
        geometry,
    )
    ref = simulate(
        config, params, IntegratorConfig(rtol=3e-14, atol=1e-15, max_step=0.005), T=1.0
    ).snapshots[-1]
    errors = []
    for dt in (0.1, 0.05, 0.025):
        icfg = IntegratorConfig(rtol=1e6, atol=1e6, initial_step=dt, max_step=dt)
        fin = simulate(config, params, icfg, T=1.0).snapshots[-1]
        errors.append(
            max(
                np.abs(fin.positions - ref.positions).max(),
                np.abs(fin.velocities - ref.velocities).max(),
            )
        )
    slopes = [math.log2(errors[i] / errors[i + 1]) for i in range(len(errors) - 1)]
    assert min(slopes) >= 4.0 - 0.3


def test_step_adaptive_returns(geometry, params):
    config = on_axis([0.0, 1.2], velocities=[[0.1, 0, 0], [0.0, 0, 0]], geometry=geometry)
    result = step_adaptive(config, params)
    assert result.dt_accepted > 0
    assert result.config.time == pytest.approx(result.dt_accepted)
    assert result.error_estimate <= 1.0
    assert result.dt_next > 0


def test_simulate_t_zero(geometry, params):
    config = on_axis([0.0], geometry=geometry)
    traj = simulate(config, params, IntegratorConfig(), T=0.0)
    assert len(traj.snapshots) == 1
    assert traj.snapshots[0].time == 0.0


def test_simulate_deterministic(geometry, default_params):
    spec = SamplerSpec(seed=8, density=0.8, sigma=0.5, span=10.0, d_min=0.35)
    config = sample_configuration(spec, geometry, default_params)
    a = simulate(config, default_params, IntegratorConfig(), T=0.4, stride=0.1)
    b = simulate(config, default_params, IntegratorConfig(), T=0.4, stride=0.1)
    for sa, sb in zip(a.snapshots, b.snapshots):
        assert np.array_equal(sa.positions, sb.positions)
        assert np.array_equal(sa.velocities, sb.velocities)


def test_snapshot_grid(geometry, params):
    config = on_axis([0.0, 1.5], geometry=geometry)
    traj = simulate(config, params, IntegratorConfig(), T=0.55, stride=0.2)
    assert traj.times == pytest.approx([0.0, 0.2, 0.4, 0.55], abs=1e-12)


def test_tube_run_invariants(geometry, default_params):
    """Energy non-increasing, axial momentum conserved, confinement kept,
    no overlap, along an N~20 tube run."""
    spec = SamplerSpec(seed=99, density=0.25, sigma=0.5, span=40.0, d_min=0.3)
    config = sample_configuration(spec, geometry, default_params)
    traj = simulate(config, default_params, IntegratorConfig(), T=2.0, stride=0.05)
    e = np.array([energy(c, default_params) for c in traj.snapshots])
    increases = np.diff(e) / np.maximum(np.abs(e[:-1]), 1e-300)
    assert increases.max() <= 1e-6
    p = np.array([axial_momentum(c, default_params) for c in traj.snapshots])
    assert np.abs(p - p[0]).max() <= 1e-8 * 2.0
    for snap in traj.snapshots:
        s = np.linalg.norm(geometry.transverse(snap.positions), axis=1)
        assert s.max() < geometry.radius
        assert min_pair_distance(snap.positions, AXIS) > 0.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_stiffness_error_on_unresolvable_core(geometry):
    """A pair so close that the core force overflows can never pass error
    control; the step size underflows with a diagnostic."""
    params = ModelParams(kernel_off(), PairPotential(1.0, 2.0, 2.0, 0.5), geometry)
    config = on_axis([0.0, 1e-160], geometry=geometry)
    with pytest.raises(StiffnessError) as err:
        simulate(config, params, IntegratorConfig(), T=1.0)
    assert "min pair distance" in str(err.value)


def test_max_steps_error(geometry, params):
    config = on_axis([0.0, 1.2], velocities=[[0.3, 0, 0], [0.0, 0, 0]], geometry=geometry)
    with pytest.raises(MaxStepsError):
        simulate(config, params, IntegratorConfig(max_steps=2), T=5.0)


def test_integrator_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(rtol=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(displacement_safety=1.0)
