"""Alignment dynamics with short-range repulsion in an infinite tube.

Simulator, truncation-ladder convergence studies, growth-bound checkers, and
a classical free-space flocking module, with a CLI for reproducible runs.
"""

from .model import (
    INVERSE_POWER,
    TAPERED_COSINE,
    CommKernel,
    Configuration,
    ModelParams,
    OutOfDomainError,
    PairPotential,
    ParticleState,
    SingularConfigurationError,
    TubeGeometry,
    comm_rate,
    confinement,
    min_pair_distance,
    pair_interaction,
)
from .neighbors import AxialCellIndex, InvalidCellWidthError, build_index, neighbors
from .dynamics import (
    IntegrationError,
    IntegratorConfig,
    RhsTerms,
    StiffnessError,
    Trajectory,
    dissipation_rate,
    energy,
    simulate,
    step_adaptive,
    total_rhs,
)
from .functionals import (
    GrowthEnvelope,
    SupDensityEstimate,
    WindowSpec,
    envelope_ratio_series,
    growth_envelope,
    local_energy_count,
    mollified_energy_count,
    mollifier,
    normalized_speed_series,
    sup_energy_density,
)
from .partial import (
    ConvergenceReport,
    HorizonTooLargeError,
    PartialRun,
    convergence_study,
    discrepancy,
    interaction_horizon,
    locality_probe,
    restrict_axial,
    run_ladder,
    window_sup_discrepancy,
)
from .sampling import (
    MembershipReport,
    SamplerSpec,
    load_snapshot,
    load_trajectory,
    sample_configuration,
    save_snapshot,
    save_trajectory,
    verify_membership,
)
from .flocking import (
    FlockVerdict,
    center_of_mass,
    flocking_verdict,
    simulate_classical,
)

__version__ = "0.1.0"
