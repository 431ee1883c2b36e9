"""Exact finite-sample and high-dimensional sampling laws of mean-variance
frontier estimators."""
from .asymptotics import (
    AsymptoticLaw,
    draw_limit_quantities,
    omega_lg,
    omega_lg_consistent,
    xi_h,
    xi_h_consistent,
    xi_matrix,
)
from .errors import (
    ConfigError,
    DegenerateDof,
    DegenerateSlope,
    DomainError,
    FrontierError,
    InsufficientSample,
    NonpositiveSlopeEstimate,
    NumericalError,
    SingularCovariance,
    SingularOmega,
    SingularSampleCovariance,
)
from .estimators import (
    confidence_region,
    consistent_estimates,
    membership,
    omega_hat_plugin,
    sample_estimates,
    test_weights,
)
from .harness import ExperimentConfig, build_scenario, run_coverage, run_experiment
from .model import (
    LinearCombination,
    PopulationModel,
    PortfolioKind,
    PortfolioSpec,
    characteristics,
    frontier_quantities,
    g_gradient,
    g_value,
    linear_targets,
    weights,
)
from .samplers import (
    DrawBatch,
    SamplerInputs,
    brute_force_batch,
    characteristics_batch,
    draw_brute_force,
    draw_characteristics,
    draw_joint,
    draw_weights,
    representation_batch,
)

__version__ = "0.1.0"
