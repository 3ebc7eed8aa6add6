"""Analytic score experts and the product-of-experts prior built from them.

Every expert exposes its score and exact log-density at any noise level sigma
(the sigma-convolved marginal), plus the Jacobian-vector product of the score
for divergence estimation. Products of Gaussian experts additionally have a
closed-form normalized product and log-normalizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DomainError, Exponents, ShapeError, UnsupportedConfigurationError

__all__ = [
    "GaussianExpert",
    "MixtureExpert",
    "ProductPrior",
    "analytic_product",
    "effective_noise",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


def _logsumexp(logs: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(logs, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.log(np.sum(np.exp(logs - m), axis=axis)) + np.squeeze(m, axis=axis)


@dataclass(frozen=True)
class GaussianExpert:
    """Diagonal Gaussian N(mean, diag(var)); var holds per-dimension variances."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        var = np.atleast_1d(np.asarray(self.var, dtype=float))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)
        if mean.ndim != 1 or var.shape != mean.shape:
            raise ShapeError("mean and var must be 1-D vectors of equal length")
        if not np.all(var > 0.0):
            raise DomainError("variances must be positive")

    @property
    def dim(self) -> int:
        return self.mean.size

    def score(self, x: np.ndarray, sigma: float = 0.0) -> np.ndarray:
        v = self.var + sigma**2
        return -(np.asarray(x, dtype=float) - self.mean) / v

    def score_jvp(self, x: np.ndarray, sigma: float, eps: np.ndarray) -> np.ndarray:
        # Score Jacobian is the constant diagonal -1/(var + sigma^2).
        return -np.asarray(eps, dtype=float) / (self.var + sigma**2)

    def logpdf(self, x: np.ndarray, sigma: float = 0.0) -> np.ndarray:
        v = self.var + sigma**2
        z = np.asarray(x, dtype=float) - self.mean
        return -0.5 * np.sum(z**2 / v + np.log(v) + _LOG_2PI, axis=-1)


@dataclass(frozen=True)
class MixtureExpert:
    """Gaussian mixture with diagonal component covariances."""

    weights: np.ndarray
    means: np.ndarray
    vars: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        v = np.atleast_2d(np.asarray(self.vars, dtype=float))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "vars", v)
        if mu.shape != v.shape or mu.shape[0] != w.size:
            raise ShapeError("weights, means, vars must agree on the component count")
        if np.any(w < 0.0) or not np.isclose(np.sum(w), 1.0, rtol=0.0, atol=1e-12):
            raise DomainError("weights must be a probability vector")
        if not np.all(v > 0.0):
            raise DomainError("variances must be positive")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _component_logpdfs(self, x: np.ndarray, sigma: float) -> np.ndarray:
        v = self.vars + sigma**2  # (K, d)
        z = np.asarray(x, dtype=float)[..., None, :] - self.means  # (..., K, d)
        return -0.5 * np.sum(z**2 / v + np.log(v) + _LOG_2PI, axis=-1)

    def logpdf(self, x: np.ndarray, sigma: float = 0.0) -> np.ndarray:
        return _logsumexp(np.log(self.weights) + self._component_logpdfs(x, sigma), axis=-1)

    def _responsibilities(self, x: np.ndarray, sigma: float) -> np.ndarray:
        logs = np.log(self.weights) + self._component_logpdfs(x, sigma)
        logs = logs - _logsumexp(logs, axis=-1)[..., None]
        return np.exp(logs)

    def score(self, x: np.ndarray, sigma: float = 0.0) -> np.ndarray:
        v = self.vars + sigma**2
        x = np.asarray(x, dtype=float)
        r = self._responsibilities(x, sigma)  # (..., K)
        s = -(x[..., None, :] - self.means) / v  # (..., K, d)
        return np.sum(r[..., None] * s, axis=-2)

    def score_jvp(self, x: np.ndarray, sigma: float, eps: np.ndarray) -> np.ndarray:
        # d(score)/dx eps = sum_k r_k [ -eps/v_k + ((s_k - score) . eps) s_k ]
        # with s_k the component scores and r_k the responsibilities.
        v = self.vars + sigma**2
        x = np.asarray(x, dtype=float)
        eps = np.asarray(eps, dtype=float)
        r = self._responsibilities(x, sigma)[..., None]  # (..., K, 1)
        s = -(x[..., None, :] - self.means) / v  # (..., K, d)
        score = np.sum(r * s, axis=-2)  # (..., d)
        proj = np.sum((s - score[..., None, :]) * eps[..., None, :], axis=-1)  # (..., K)
        terms = -eps[..., None, :] / v + proj[..., None] * s
        return np.sum(r * terms, axis=-2)


@dataclass(frozen=True)
class ProductPrior:
    """Normalized product prior: density proportional to prod_i p_i(x)^(a_i)."""

    experts: tuple
    exponents: Exponents

    def __post_init__(self):
        experts = tuple(self.experts)
        object.__setattr__(self, "experts", experts)
        if len(experts) == 0:
            raise ShapeError("product prior needs at least one expert")
        if len(experts) != self.exponents.n:
            raise ShapeError("one exponent per expert required")
        dims = {e.dim for e in experts}
        if len(dims) != 1:
            raise ShapeError("all experts must share the same dimension")

    @property
    def dim(self) -> int:
        return self.experts[0].dim

    @property
    def total(self) -> float:
        return self.exponents.total

    def score(self, x: np.ndarray, sigma: float = 0.0) -> np.ndarray:
        a = self.exponents.a
        out = a[0] * self.experts[0].score(x, sigma)
        for ai, expert in zip(a[1:], self.experts[1:]):
            out = out + ai * expert.score(x, sigma)
        return out

    def effective_noise(self, sigma: float) -> float:
        return effective_noise(sigma, self.exponents)

    def denoiser_mean(self, x: np.ndarray, sigma: float) -> np.ndarray:
        """Surrogate denoiser mean x + (sigma^2 / sum a) * score(x, sigma).

        Equals the exponent-weighted average of the per-expert Tweedie means.
        """
        total = self.total
        if total <= 0.0:
            raise DomainError("exponent total must be positive")
        return np.asarray(x, dtype=float) + (sigma**2 / total) * self.score(x, sigma)


def effective_noise(sigma: float, exponents: Exponents) -> float:
    """Effective noise sigma / sqrt(sum a); requires positive exponent total."""
    total = exponents.total
    if total <= 0.0:
        raise DomainError("exponent total must be positive")
    return float(sigma) / float(np.sqrt(total))


def analytic_product(gaussians, exponents: Exponents) -> tuple[GaussianExpert, float]:
    """Closed-form normalized product of diagonal Gaussians raised to exponents.

    Returns the product Gaussian N(m, 1/prec) with per-dimension precision
    prec = sum_i a_i / var_i, plus log Z(a), the log-integral of the
    unnormalized product of the (individually normalized) expert densities.
    """
    gaussians = tuple(gaussians)
    if not all(isinstance(g, GaussianExpert) for g in gaussians):
        raise UnsupportedConfigurationError("analytic product requires Gaussian experts")
    if len(gaussians) != exponents.n:
        raise ShapeError("one exponent per expert required")
    a = exponents.a
    V = np.stack([g.var for g in gaussians])  # (n, d)
    MU = np.stack([g.mean for g in gaussians])  # (n, d)
    prec = np.sum(a[:, None] / V, axis=0)
    if np.any(prec <= 0.0):
        raise DomainError("product precision must be positive in every dimension")
    m = np.sum(a[:, None] * MU / V, axis=0) / prec
    cross = np.sum(a[:, None] * MU**2 / V, axis=0)
    log_z = float(
        np.sum(
            0.5 * (_LOG_2PI - np.log(prec))
            - 0.5 * (cross - prec * m**2)
            - 0.5 * np.sum(a[:, None] * (np.log(V) + _LOG_2PI), axis=0)
        )
    )
    return GaussianExpert(m, 1.0 / prec), log_z
