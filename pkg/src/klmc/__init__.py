"""Kinetic Langevin Monte Carlo with the exponential integrator."""

from .errors import (
    ConditionViolation,
    DegenerateStepError,
    KlmcError,
    MomentOverflowError,
    NoStationaryLawError,
    PoisonedStateError,
)
from .integrator import (
    ChainResult,
    DecayResult,
    Kernel,
    NoiseCovariance,
    RngStream,
    coupled_step,
    coupling_decay,
    noise_covariance,
    run_chain,
    run_chains,
    step,
)
from .model import (
    ConvexityProfile,
    KlmcParams,
    LogCoshPotential,
    PhaseState,
    Potential,
    QuadraticPotential,
    WeightedNorm,
    derive,
    norm_for,
    weighted_norm_sq,
)
from .theory import (
    BiasReport,
    ComplexityPlan,
    ContractionReport,
    PolyCoeffs,
    bias_bounds,
    c_minus,
    check_condition_general,
    check_condition_linear,
    complexity_plan,
    contraction_exact,
    contraction_linear,
    critical_zeta,
    f_mom,
    f_pos,
    poly_coeffs,
    r_lin,
    r_max,
)

__version__ = "0.1.0"
