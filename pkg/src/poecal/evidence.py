"""Monte Carlo evidence gradients over prior exponents, plus the Gaussian oracle.

The gradient of the log-evidence with respect to exponent a_i is the gap
between the posterior and prior expectations of log p_i; under the sum-to-one
constraint the free-component gradient is the same gap for log p_i - log p_n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigurationError, DomainError, NoiseSchedule, NumericalError, RunConfig
from .density import DensityConfig, batch_logdensity
from .experts import ProductPrior, analytic_product
from .likelihood import LinearGaussianMeasurement
from .sampler import SampleBatch, sample_posterior, sample_unconditional

__all__ = [
    "GradientEstimate",
    "gradient_from_batches",
    "evidence_gradient",
    "constrained_evidence_gradient",
    "analytic_evidence",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GradientEstimate:
    """Evidence-gradient estimate with per-component Monte Carlo standard errors."""

    g: np.ndarray
    stderr: np.ndarray
    n_posterior: int
    n_prior: int
    mode: str  # "unconstrained" | "sum_to_one"
    a: np.ndarray
    master_seed: int

    def to_record(self) -> dict:
        return {
            "a": [float(v) for v in self.a],
            "g": [float(v) for v in self.g],
            "stderr": [float(v) for v in self.stderr],
            "n_samples": {"posterior": self.n_posterior, "prior": self.n_prior},
            "mode": self.mode,
            "seeds": {"master": int(self.master_seed)},
        }


def _check_finite(L: np.ndarray, side: str):
    if not np.all(np.isfinite(L)):
        bad = np.argwhere(~np.isfinite(L))
        i, j = bad[0]
        raise NumericalError(
            f"nonfinite log-density in {side} batch (sample {i}, expert {j}); "
            f"{bad.shape[0]} offending entries in total"
        )


def gradient_from_batches(
    prior: ProductPrior,
    posterior_batch: SampleBatch,
    prior_batch: SampleBatch,
    density_cfg: DensityConfig,
    mode: str = "ode",
    constrained: bool = False,
    master_seed: int = 0,
) -> GradientEstimate:
    """Estimate the evidence gradient from already-drawn sample batches.

    With constrained=True the estimate has one entry per free component and
    equals, componentwise and exactly, the difference between that component
    and the last component of the unconstrained estimate on the same batches.
    """
    n_post = posterior_batch.n_chains
    n_pri = prior_batch.n_chains
    if n_post < 2 or n_pri < 2:
        raise ConfigurationError("evidence gradients need at least 2 samples per side")
    L_post = batch_logdensity(prior.experts, posterior_batch.samples, density_cfg, mode)
    L_pri = batch_logdensity(prior.experts, prior_batch.samples, density_cfg, mode)
    _check_finite(L_post, "posterior")
    _check_finite(L_pri, "prior")
    g_full = L_post.mean(axis=0) - L_pri.mean(axis=0)
    if not constrained:
        stderr = np.sqrt(L_post.var(axis=0, ddof=1) / n_post + L_pri.var(axis=0, ddof=1) / n_pri)
        return GradientEstimate(g_full, stderr, n_post, n_pri, "unconstrained", prior.exponents.a, master_seed)
    if prior.exponents.n < 2:
        g = np.zeros(0)
        stderr = np.zeros(0)
    else:
        g = g_full[:-1] - g_full[-1]
        d_post = L_post[:, :-1] - L_post[:, -1:]
        d_pri = L_pri[:, :-1] - L_pri[:, -1:]
        stderr = np.sqrt(d_post.var(axis=0, ddof=1) / n_post + d_pri.var(axis=0, ddof=1) / n_pri)
    return GradientEstimate(g, stderr, n_post, n_pri, "sum_to_one", prior.exponents.a, master_seed)


def evidence_gradient(
    prior: ProductPrior,
    meas: LinearGaussianMeasurement,
    schedule: NoiseSchedule,
    run_cfg: RunConfig,
    density_cfg: DensityConfig,
    mode: str = "ode",
) -> GradientEstimate:
    """Sample posterior and prior batches at the current exponents and difference them."""
    post = sample_posterior(prior, meas, schedule, run_cfg)
    pri = sample_unconditional(prior, schedule, run_cfg)
    return gradient_from_batches(
        prior, post, pri, density_cfg, mode=mode, constrained=False, master_seed=run_cfg.master_seed
    )


def constrained_evidence_gradient(
    prior: ProductPrior,
    meas: LinearGaussianMeasurement,
    schedule: NoiseSchedule,
    run_cfg: RunConfig,
    density_cfg: DensityConfig,
    mode: str = "ode",
) -> GradientEstimate:
    """Evidence gradient along the sum-to-one constraint surface."""
    if prior.exponents.constraint_mode != "sum_to_one":
        raise ConfigurationError("constrained gradient requires sum_to_one exponents")
    post = sample_posterior(prior, meas, schedule, run_cfg)
    pri = sample_unconditional(prior, schedule, run_cfg)
    return gradient_from_batches(
        prior, post, pri, density_cfg, mode=mode, constrained=True, master_seed=run_cfg.master_seed
    )


def analytic_evidence(gaussians, exponents, meas: LinearGaussianMeasurement) -> float:
    """Closed-form log-evidence log N(y; A m, A P^-1 A^T + sigma_y^2 I) for Gaussian experts."""
    if meas.sigma_y <= 0.0:
        raise DomainError("analytic evidence requires sigma_y > 0")
    product, _ = analytic_product(gaussians, exponents)
    A = meas.A
    cov = (A * product.var) @ A.T + meas.sigma_y**2 * np.eye(meas.m)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise DomainError("singular predictive covariance") from exc
    r = meas.y - A @ product.mean
    z = np.linalg.solve(chol, r)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return float(-0.5 * (z @ z) - 0.5 * logdet - 0.5 * meas.m * _LOG_2PI)
