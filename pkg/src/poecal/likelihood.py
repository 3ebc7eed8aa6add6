"""Linear-Gaussian forward model: simulation, log-likelihood, and guided scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DomainError, ShapeError, UnsupportedConfigurationError, stream
from .experts import GaussianExpert, ProductPrior

__all__ = [
    "LinearGaussianMeasurement",
    "simulate_measurement",
    "loglik",
    "loglik_grad",
    "guided_score",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class LinearGaussianMeasurement:
    """Observation y = A x + eps with eps ~ N(0, sigma_y^2 I).

    sigma_y == 0 is tolerated at construction for noiseless test fixtures;
    likelihood evaluations require sigma_y > 0.
    """

    A: np.ndarray
    y: np.ndarray
    sigma_y: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma_y", float(self.sigma_y))
        if A.ndim != 2 or y.ndim != 1 or y.size != A.shape[0]:
            raise ShapeError("A must be (m, d) and y length m")
        if A.shape[0] < 1:
            raise ShapeError("need at least one measurement row")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(y))):
            raise DomainError("A and y must be finite")
        if self.sigma_y < 0.0:
            raise DomainError("sigma_y must be nonnegative")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]


def simulate_measurement(x_true: np.ndarray, A: np.ndarray, sigma_y: float, seed: int) -> LinearGaussianMeasurement:
    """Draw y = A x_true + sigma_y * z with z from the seeded measurement stream."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    x_true = np.atleast_1d(np.asarray(x_true, dtype=float))
    if x_true.size != A.shape[1]:
        raise ShapeError("x_true length must match the columns of A")
    rng = stream(seed, "measurement")
    y = A @ x_true + sigma_y * rng.standard_normal(A.shape[0])
    return LinearGaussianMeasurement(A, y, sigma_y)


def _require_noise(meas: LinearGaussianMeasurement):
    if meas.sigma_y <= 0.0:
        raise DomainError("likelihood evaluation requires sigma_y > 0")


def loglik(meas: LinearGaussianMeasurement, x: np.ndarray) -> np.ndarray:
    """Gaussian log-likelihood log N(y; A x, sigma_y^2 I), including its normalizer."""
    _require_noise(meas)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != meas.dim:
        raise ShapeError("x dimension must match the columns of A")
    r = meas.y - x @ meas.A.T
    m = meas.m
    return -0.5 * np.sum(r**2, axis=-1) / meas.sigma_y**2 - 0.5 * m * (_LOG_2PI + 2.0 * np.log(meas.sigma_y))


def loglik_grad(meas: LinearGaussianMeasurement, x: np.ndarray) -> np.ndarray:
    """Gradient A^T (y - A x) / sigma_y^2 of the log-likelihood in x."""
    _require_noise(meas)
    x = np.asarray(x, dtype=float)
    r = meas.y - x @ meas.A.T
    return (r @ meas.A) / meas.sigma_y**2


def guided_score(
    prior: ProductPrior,
    meas: LinearGaussianMeasurement,
    x: np.ndarray,
    sigma_model: float,
    beta: float,
    jacobian_mode: str = "exact",
) -> np.ndarray:
    """Mixing score of the twisted target: prior score + beta * grad log p(y | mu(x)).

    The chain rule through the surrogate denoiser mean mu(x) uses the analytic
    diagonal Jacobian in "exact" mode (Gaussian experts only) or the identity
    approximation in "identity" mode.
    """
    _require_noise(meas)
    if not (0.0 <= beta <= 1.0):
        raise DomainError("beta must lie in [0, 1]")
    base = prior.score(x, sigma_model)
    mu = prior.denoiser_mean(x, sigma_model)
    grad_mu = (meas.y - mu @ meas.A.T) @ meas.A / meas.sigma_y**2
    if jacobian_mode == "identity":
        guide = grad_mu
    elif jacobian_mode == "exact":
        if not all(isinstance(e, GaussianExpert) for e in prior.experts):
            raise UnsupportedConfigurationError(
                "exact jacobian mode requires Gaussian experts; use identity mode instead"
            )
        a = prior.exponents.a
        jdiag = 1.0 - (sigma_model**2 / prior.total) * sum(
            ai / (e.var + sigma_model**2) for ai, e in zip(a, prior.experts)
        )
        guide = jdiag * grad_mu
    else:
        raise UnsupportedConfigurationError(f"unknown jacobian mode {jacobian_mode!r}")
    return base + beta * guide
