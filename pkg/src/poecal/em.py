"""Generalized EM over prior exponents with normalized-gradient ascent steps.

Each iteration redraws posterior and prior batches at the current exponents
(E-step) and takes the step a + eta * g / (||g|| + c) followed by the
constraint projection for the active mode (M-step).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    EPS_SUM,
    ConfigurationError,
    Exponents,
    NoiseSchedule,
    NumericalError,
    RunConfig,
    ShapeError,
    derive_seed,
)
from .density import DensityConfig
from .evidence import GradientEstimate, gradient_from_batches
from .experts import ProductPrior
from .likelihood import LinearGaussianMeasurement
from .sampler import SampleBatch, sample_posterior, sample_unconditional

__all__ = ["EMRecord", "EMTrajectory", "EMRunError", "gradient_step", "em_run"]


@dataclass(frozen=True)
class EMRecord:
    """One trajectory entry: the iterate plus the gradient and step that produced it."""

    a: np.ndarray
    gradient: GradientEstimate | None
    step: np.ndarray | None
    wall_time: float


@dataclass(frozen=True)
class EMTrajectory:
    records: list[EMRecord]
    final_posterior: SampleBatch | None
    config: dict

    @property
    def iterates(self) -> list[np.ndarray]:
        return [r.a for r in self.records]

    def to_records(self) -> list[dict]:
        out = []
        for k, r in enumerate(self.records):
            out.append(
                {
                    "iteration": k,
                    "a": [float(v) for v in r.a],
                    "gradient": None if r.gradient is None else r.gradient.to_record(),
                    "step": None if r.step is None else [float(v) for v in r.step],
                    "wall_time": r.wall_time,
                }
            )
        return out


class EMRunError(NumericalError):
    """EM failed mid-run; carries the partial trajectory."""

    def __init__(self, trajectory: EMTrajectory, message: str):
        self.trajectory = trajectory
        super().__init__(message)


def gradient_step(exponents: Exponents, g, eta: float, c: float, eps_a: float = EPS_SUM) -> Exponents:
    """Normalized ascent step followed by the mode's constraint projection."""
    if not (eta > 0.0):
        raise ConfigurationError("eta must be positive")
    if c < 0.0:
        raise ConfigurationError("c must be nonnegative")
    g = np.atleast_1d(np.asarray(g, dtype=float))
    mode = exponents.constraint_mode
    if mode == "sum_to_one":
        free = exponents.a[:-1].copy()
        if g.shape != free.shape:
            raise ShapeError("sum_to_one mode expects one gradient entry per free component")
        norm = float(np.linalg.norm(g))
        if norm > 0.0:
            free = free + eta * g / (norm + c)
        return Exponents.sum_to_one(free)
    if g.shape != exponents.a.shape:
        raise ShapeError("gradient and exponent shapes differ")
    norm = float(np.linalg.norm(g))
    a = exponents.a.copy()
    if norm > 0.0:
        a = a + eta * g / (norm + c)
    if mode == "box_01":
        a = np.clip(a, 0.0, 1.0)
        total = float(np.sum(a))
        if total < eps_a:
            a = a * (eps_a / total) if total > 0.0 else np.full_like(a, eps_a / a.size)
    else:
        total = float(np.sum(a))
        if total < eps_a:
            a = a + (eps_a - total) / a.size
    return Exponents(a, mode)


def em_run(
    experts,
    init: Exponents,
    meas: LinearGaussianMeasurement,
    iterations: int,
    eta: float,
    c: float,
    schedule: NoiseSchedule,
    run_cfg: RunConfig,
    density_cfg: DensityConfig,
    mode: str = "ode",
) -> EMTrajectory:
    """Run the EM loop and record every iterate with its gradient estimate."""
    if iterations < 1:
        raise ConfigurationError("iterations must be >= 1")
    experts = tuple(experts)
    constrained = init.constraint_mode == "sum_to_one"
    config = {
        "iterations": iterations,
        "eta": eta,
        "c": c,
        "constraint_mode": init.constraint_mode,
        "master_seed": run_cfg.master_seed,
        "density_mode": mode,
        "init": [float(v) for v in init.a],
    }
    records = [EMRecord(init.a.copy(), None, None, 0.0)]
    current = init
    final_post: SampleBatch | None = None
    for k in range(1, iterations + 1):
        t0 = time.perf_counter()
        prior = ProductPrior(experts, current)
        rc = replace(run_cfg, master_seed=derive_seed(run_cfg.master_seed, "em-iter", k))
        dc = replace(density_cfg, probe_seed=derive_seed(run_cfg.master_seed, "em-probes", k))
        try:
            post = sample_posterior(prior, meas, schedule, rc)
            pri = sample_unconditional(prior, schedule, rc)
            est = gradient_from_batches(
                prior, post, pri, dc, mode=mode, constrained=constrained, master_seed=rc.master_seed
            )
        except NumericalError as exc:
            partial = EMTrajectory(records, final_post, config)
            raise EMRunError(partial, f"EM iteration {k} failed: {exc}") from exc
        stepped = gradient_step(current, est.g, eta, c)
        records.append(EMRecord(stepped.a.copy(), est, stepped.a - current.a, time.perf_counter() - t0))
        current = stepped
        final_post = post
    return EMTrajectory(records, final_post, config)
