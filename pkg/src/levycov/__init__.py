"""Co-integrated volatility of bivariate Lévy processes from high-frequency data."""
from .estimators import (
    EcfValue,
    RealizedCovariance,
    SpectralConfig,
    SpectralCoVolatility,
    SpectralEstimate,
    TrcConfig,
    TruncatedRealizedCovariance,
    ecf,
    frequency_rule,
    realized_covariance,
    spectral_estimate,
    trc_estimate,
)
from .harness import (
    BenchmarkReport,
    EstimatorSpec,
    ExperimentPlan,
    RateTarget,
    deterministic_error_diagnostic,
    fit_rate,
    run_experiment,
)
from .model import (
    BrownianSpec,
    ClassParams,
    LevyModelSpec,
    StableJumpSpec,
    check_class_membership,
    cojump_integral,
    dependence_graph,
    harmonic_mean_bound,
    large_jump_mass,
)
from .simulate import PathSample, SimulationConfig, simulate_brownian, simulate_path, simulate_stable_jumps

__version__ = "0.1.0"
