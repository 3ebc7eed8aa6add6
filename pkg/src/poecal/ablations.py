"""Failure-mode ablations: single-measurement finetuning collapse and field weighting.

The collapse study iterates exact conjugate posterior updates of a 2-D mixture
prior, showing the prior concentrating onto the measurement hyperplane; the
weighting study rescores one shared gradient grid under different
inverse-gradient weight exponents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DomainError, ShapeError
from .experts import MixtureExpert, _logsumexp
from .field import EvidenceField, GradientGrid, nrmse, reconstruct_field
from .likelihood import LinearGaussianMeasurement

__all__ = [
    "FullCovMixture",
    "CollapseState",
    "exact_posterior_update",
    "run_collapse",
    "run_weighting_ablation",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class FullCovMixture:
    """2-D Gaussian mixture with full component covariances.

    Posterior updates of diagonal mixtures generally produce correlated
    components, so the collapse iteration carries full 2x2 covariances.
    """

    weights: np.ndarray
    means: np.ndarray  # (K, 2)
    covs: np.ndarray  # (K, 2, 2)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cv = np.asarray(self.covs, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", cv)
        if mu.shape != (w.size, 2) or cv.shape != (w.size, 2, 2):
            raise ShapeError("mixture must be 2-D with matching component counts")
        if np.any(w < 0) or not np.isclose(np.sum(w), 1.0, rtol=0.0, atol=1e-9):
            raise DomainError("weights must be a probability vector")
        if np.any(np.linalg.det(cv) <= 0.0):
            raise DomainError("component covariances must be positive definite")

    @classmethod
    def from_diagonal(cls, mix: MixtureExpert) -> "FullCovMixture":
        if mix.dim != 2:
            raise ShapeError("collapse ablation works on 2-D mixtures")
        covs = np.stack([np.diag(v) for v in mix.vars])
        return cls(mix.weights.copy(), mix.means.copy(), covs)

    @property
    def n_components(self) -> int:
        return self.weights.size

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = x[..., None, :] - self.means  # (..., K, 2)
        inv = np.linalg.inv(self.covs)
        quad = np.einsum("...ki,kij,...kj->...k", z, inv, z)
        logdet = np.log(np.linalg.det(self.covs))
        comp = -0.5 * (quad + logdet + 2.0 * _LOG_2PI)
        return _logsumexp(np.log(self.weights) + comp, axis=-1)

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def covariance(self) -> np.ndarray:
        m = self.mean()
        second = np.einsum("k,kij->ij", self.weights, self.covs)
        second += np.einsum("k,ki,kj->ij", self.weights, self.means, self.means)
        return second - np.outer(m, m)


@dataclass(frozen=True)
class CollapseState:
    """Diagnostics after k exact posterior updates of the prior."""

    iteration: int
    prior: FullCovMixture
    truth_logpdf: float
    row_residual: float
    row_std: float
    null_std: float

    def to_record(self) -> dict:
        return {
            "iteration": self.iteration,
            "truth_logpdf": self.truth_logpdf,
            "row_residual": self.row_residual,
            "row_std": self.row_std,
            "null_std": self.null_std,
            "weights": [float(v) for v in self.prior.weights],
            "means": [[float(v) for v in row] for row in self.prior.means],
            "covs": [[[float(v) for v in row] for row in c] for c in self.prior.covs],
        }


def _as_full(prior) -> FullCovMixture:
    if isinstance(prior, MixtureExpert):
        return FullCovMixture.from_diagonal(prior)
    if isinstance(prior, FullCovMixture):
        return prior
    raise ShapeError("collapse ablation expects a 2-D Gaussian mixture prior")


def exact_posterior_update(prior, meas: LinearGaussianMeasurement) -> FullCovMixture:
    """Exact conjugate posterior of a 2-D mixture prior under the linear-Gaussian likelihood.

    Component k keeps conjugate form: precision gains A^T A / sigma_y^2 and the
    weight is rescaled by the component evidence N(y; A mu_k, A S_k A^T + sigma_y^2 I).
    """
    mix = _as_full(prior)
    if meas.sigma_y <= 0.0:
        raise DomainError("posterior update requires sigma_y > 0")
    if meas.dim != 2:
        raise ShapeError("forward matrix must have 2 columns")
    A = meas.A
    lik_prec = A.T @ A / meas.sigma_y**2
    new_means = np.zeros_like(mix.means)
    new_covs = np.zeros_like(mix.covs)
    log_ev = np.zeros(mix.n_components)
    for k in range(mix.n_components):
        S = mix.covs[k]
        try:
            S_inv = np.linalg.inv(S)
            post_cov = np.linalg.inv(S_inv + lik_prec)
        except np.linalg.LinAlgError as exc:
            raise DomainError(f"singular covariance in component {k}") from exc
        mu = mix.means[k]
        new_covs[k] = 0.5 * (post_cov + post_cov.T)
        new_means[k] = post_cov @ (S_inv @ mu + A.T @ meas.y / meas.sigma_y**2)
        pred_cov = A @ S @ A.T + meas.sigma_y**2 * np.eye(meas.m)
        r = meas.y - A @ mu
        log_ev[k] = -0.5 * (
            r @ np.linalg.solve(pred_cov, r)
            + float(np.log(np.linalg.det(pred_cov)))
            + meas.m * _LOG_2PI
        )
    logw = np.log(mix.weights) + log_ev
    logw -= _logsumexp(logw, axis=-1)
    return FullCovMixture(np.exp(logw), new_means, new_covs)


def _diagnostics(k: int, mix: FullCovMixture, meas: LinearGaussianMeasurement, x_true: np.ndarray) -> CollapseState:
    a = meas.A[0]
    unit = a / np.linalg.norm(a)
    null = np.array([-unit[1], unit[0]])
    cov = mix.covariance()
    xbar = mix.mean()
    return CollapseState(
        iteration=k,
        prior=mix,
        truth_logpdf=float(mix.logpdf(x_true)),
        row_residual=float(np.abs(a @ xbar - meas.y[0])),
        row_std=float(np.sqrt(a @ cov @ a)),
        null_std=float(np.sqrt(null @ cov @ null)),
    )


def run_collapse(prior0, meas: LinearGaussianMeasurement, iterations: int, x_true) -> list[CollapseState]:
    """Iterate prior <- exact posterior, recording concentration diagnostics.

    Uses a single-row forward matrix so row- and null-space statistics are scalars.
    """
    if meas.m != 1:
        raise ShapeError("collapse diagnostics assume a single measurement row")
    x_true = np.asarray(x_true, dtype=float)
    mix = _as_full(prior0)
    states = [_diagnostics(0, mix, meas, x_true)]
    for k in range(1, iterations + 1):
        mix = exact_posterior_update(mix, meas)
        states.append(_diagnostics(k, mix, meas, x_true))
    return states


def run_weighting_ablation(
    grid: GradientGrid,
    log_z1: float,
    log_z2: float,
    reference: EvidenceField,
    p_values,
) -> list[tuple[float, float]]:
    """Reconstruct the field once per weighting exponent from one shared grid.

    Only the least-squares weights are re-derived per p; the gradient
    estimates themselves are reused, so rows differ only through weighting.
    """
    out = []
    for p in p_values:
        rec = reconstruct_field(grid, log_z1, log_z2, p_weight=float(p))
        out.append((float(p), nrmse(rec, reference)))
    return out
