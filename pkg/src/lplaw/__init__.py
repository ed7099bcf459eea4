"""Sample-covariance spectral toolkit.

Self-consistent Marchenko-Pastur-type solver, Ledoit-Wolf style nonlinear
eigenvalue shrinkage with its infeasible oracle, linearized resolvent
identities, and a seeded Monte Carlo harness that measures how fast the
finite-N quantities approach their deterministic limits.
"""

__version__ = "0.1.0"

from .core import (
    AtomicMeasure,
    ComplexSpectralPoint,
    DomainError,
    IndexedMatrix,
    ModelConfig,
    NumericError,
    PoleError,
    PopulationCovariance,
    PopulationSpectralMeasure,
    SampleEigensystem,
    indexed_matmul,
    matrix_function,
    stieltjes_transform,
)
from .mp import (
    BoundaryProfile,
    LocalLawBound,
    SolverError,
    StieltjesSolution,
    boundary_profile,
    boundary_value,
    default_profile,
    psi,
    solve_m,
)
from .sampling import (
    DataMatrix,
    SampleCovariance,
    derive_seed,
    sample_cov,
    sample_data,
    simulate,
)
from .shrinkage import (
    LossReport,
    ShrinkageEstimate,
    baseline_estimates,
    delta,
    delta_from_companion,
    delta_shrink,
    mv_loss,
    oracle_shrink,
)
from .resolvent import (
    DeterministicApprox,
    ResolventBundle,
    build_bundle,
    build_pi,
    entrywise_residual,
    green_identity_check,
    resolvent_identity_check,
    theta,
    top_trace_limit,
    trace_residual_bottom,
    trace_residual_top,
)
from .measures import (
    DeterministicMeasure,
    Interval,
    deterministic_mass,
    empirical_measures,
    interval_sup_distance,
    vector_measure,
)
from .experiments import (
    DominanceReport,
    ExperimentConfig,
    RateFit,
    ResultTable,
    dominance_check,
    fit_rate,
    identity_sweep,
    load_config,
    loss_comparison,
    persist_run,
    run_experiment,
)
