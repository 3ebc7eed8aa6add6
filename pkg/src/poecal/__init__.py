"""Evidence-driven calibration of product-of-experts priors for linear-Gaussian inverse problems."""

from .core import (
    ConfigurationError,
    DomainError,
    Exponents,
    IntegrationDivergedError,
    NoiseSchedule,
    NumericalError,
    ReconstructionError,
    RunConfig,
    ShapeError,
    UnsupportedConfigurationError,
    beta_schedule,
    build_schedule,
    derive_seed,
    stream,
)
from .density import DensityConfig, batch_logdensity, exact_logdensity, ode_logdensity
from .em import EMTrajectory, em_run, gradient_step
from .evidence import GradientEstimate, analytic_evidence, constrained_evidence_gradient, evidence_gradient
from .experts import GaussianExpert, MixtureExpert, ProductPrior, analytic_product, effective_noise
from .field import (
    EvidenceField,
    GradientGrid,
    analytic_field,
    build_gradient_grid,
    field_argmax,
    nrmse,
    pearson,
    reconstruct_field,
)
from .likelihood import LinearGaussianMeasurement, guided_score, loglik, loglik_grad, simulate_measurement
from .sampler import SampleBatch, init_state, langevin_step, predictor_step, sample_posterior, sample_unconditional

__version__ = "0.1.0"
