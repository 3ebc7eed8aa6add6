"""Annealed predictor-corrector sampling of product priors and twisted posteriors.

Each annealing iteration performs one deterministic predictor step between
consecutive effective-noise levels followed by M unadjusted Langevin corrector
steps at the new level; the first iteration's predictor is the zero step from
the initialization level to itself. Chains are independent, with one seeded
stream per (master_seed, kind, chain) so results do not depend on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ConfigurationError,
    DomainError,
    NoiseSchedule,
    NumericalError,
    RunConfig,
    beta_schedule,
    stream,
)
from .experts import ProductPrior
from .likelihood import LinearGaussianMeasurement, guided_score

__all__ = [
    "SampleBatch",
    "chain_streams",
    "init_state",
    "predictor_step",
    "langevin_step",
    "sample_unconditional",
    "sample_posterior",
]


@dataclass(frozen=True)
class SampleBatch:
    """Final chain states plus an echo of the settings that produced them."""

    samples: np.ndarray  # (n_chains, d)
    kind: str  # "prior" | "posterior"
    config: dict

    def __post_init__(self):
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise ConfigurationError("samples must be a (n_chains, d) matrix")
        if not np.all(np.isfinite(self.samples)):
            raise NumericalError("sample batch contains nonfinite values")

    @property
    def n_chains(self) -> int:
        return self.samples.shape[0]


def chain_streams(master_seed: int, kind: str, n_chains: int) -> list[np.random.Generator]:
    return [stream(master_seed, "sampler", kind, i) for i in range(n_chains)]


def init_state(
    schedule: NoiseSchedule,
    exponents,
    dim: int,
    seed: int | None = None,
    n_chains: int | None = None,
    kind: str = "prior",
    rngs: list[np.random.Generator] | None = None,
) -> np.ndarray:
    """Draw the initial batch from N(0, sigma_max_eff^2 I), one row per chain.

    The schedule already lives in effective-noise space, so the initial
    standard deviation is its first level for any exponent total.
    """
    if exponents.total <= 0.0:
        raise DomainError("exponent total must be positive")
    if rngs is None:
        rngs = chain_streams(seed, kind, n_chains)
    return schedule.sigma_max_eff * np.stack([g.standard_normal(dim) for g in rngs])


def predictor_step(x: np.ndarray, prior: ProductPrior, sigma_eff_next: float, sigma_eff_curr: float) -> np.ndarray:
    """Deterministic half step of the flow ODE between effective-noise levels."""
    if not (sigma_eff_curr >= sigma_eff_next > 0.0):
        raise DomainError("predictor requires sigma_eff_curr >= sigma_eff_next > 0")
    sigma_model = sigma_eff_curr * np.sqrt(prior.total)
    return x + 0.5 * (sigma_eff_curr**2 - sigma_eff_next**2) * prior.score(x, sigma_model)


def langevin_step(
    x: np.ndarray,
    score: np.ndarray,
    lr: float,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """One ULA step x + lr * score + sqrt(2 lr) z with z ~ N(0, I)."""
    if not (lr > 0.0):
        raise DomainError("langevin step size must be positive")
    if noise is None:
        noise = rng.standard_normal(np.shape(x))
    return x + lr * score + np.sqrt(2.0 * lr) * noise


def _anneal(
    prior: ProductPrior,
    schedule: NoiseSchedule,
    cfg: RunConfig,
    kind: str,
    meas: LinearGaussianMeasurement | None = None,
) -> np.ndarray:
    if cfg.annealing_steps != schedule.steps:
        raise ConfigurationError("config annealing_steps must match the schedule length")
    d = prior.dim
    gens = chain_streams(cfg.master_seed, kind, cfg.n_chains)
    x = init_state(schedule, prior.exponents, d, kind=kind, rngs=gens)
    root_total = np.sqrt(prior.total)
    for t in range(schedule.steps):
        if t > 0:
            x = predictor_step(x, prior, schedule.sigma_eff[t], schedule.sigma_eff[t - 1])
        sig_eff = schedule.sigma_eff[t]
        sig_model = sig_eff * root_total
        lr = cfg.langevin_coef * sig_eff**2
        noise = np.stack([g.standard_normal((cfg.mixing_steps, d)) for g in gens])
        if kind == "posterior":
            beta_t = beta_schedule(sig_eff, cfg.beta_coef)
        for m in range(cfg.mixing_steps):
            if kind == "posterior":
                # The surrogate denoiser mean is recomputed inside guided_score
                # at every mixing step, always at the current annealing level.
                s = guided_score(prior, meas, x, sig_model, beta_t, cfg.jacobian_mode)
            else:
                s = prior.score(x, sig_model)
            x = langevin_step(x, s, lr, noise=noise[:, m])
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"sampler produced nonfinite state at annealing step {t}")
    return x


def _echo(prior: ProductPrior, cfg: RunConfig, kind: str) -> dict:
    return {
        "kind": kind,
        "annealing_steps": cfg.annealing_steps,
        "mixing_steps": cfg.mixing_steps,
        "n_chains": cfg.n_chains,
        "master_seed": cfg.master_seed,
        "exponents": [float(v) for v in prior.exponents.a],
        "constraint_mode": prior.exponents.constraint_mode,
        "jacobian_mode": cfg.jacobian_mode,
    }


def sample_unconditional(prior: ProductPrior, schedule: NoiseSchedule, cfg: RunConfig) -> SampleBatch:
    """Sample the normalized product prior via annealed predictor-corrector MCMC."""
    x = _anneal(prior, schedule, cfg, "prior")
    return SampleBatch(x, "prior", _echo(prior, cfg, "prior"))


def sample_posterior(
    prior: ProductPrior,
    meas: LinearGaussianMeasurement,
    schedule: NoiseSchedule,
    cfg: RunConfig,
) -> SampleBatch:
    """Sample the posterior by annealing the twisted path toward prior * likelihood."""
    if prior.dim != meas.dim:
        raise ConfigurationError("prior and measurement dimensions differ")
    x = _anneal(prior, schedule, cfg, "posterior", meas=meas)
    return SampleBatch(x, "posterior", _echo(prior, cfg, "posterior"))
