"""Built-in experiment presets: the two-Gaussian toy benchmark and the collapse setup."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import ConfigurationError, DomainError, RunConfig, build_schedule, stream
from .density import DensityConfig
from .experts import GaussianExpert, MixtureExpert
from .likelihood import LinearGaussianMeasurement, simulate_measurement

__all__ = ["GaussianToyPreset", "ToyBundle", "toy_preset", "build_toy", "collapse_setup"]

PRESET_NAMES = ("paper-4.1", "none")

TRUTH_SCALES = (0.9, 0.8, 0.7)


@dataclass(frozen=True)
class GaussianToyPreset:
    """Two-Gaussian benchmark: a narrow expert at 1 and a broad expert at 0.

    Component standard deviations are drawn uniformly per dimension; the
    ground truth is a constant vector whose level selects how far outside the
    narrow expert the measurement lies.
    """

    name: str = "paper-4.1"
    d: int = 1000
    m: int = 200
    sigma_y: float = 0.2
    truth_scale: float = 0.9
    mean_p: float = 1.0
    mean_q: float = 0.0
    sigma_p_low: float = 0.1
    sigma_p_high: float = 0.2
    sigma_q_low: float = 0.1
    sigma_q_high: float = 1.0
    grid_start: float = 0.0
    grid_stop: float = 1.0
    grid_step: float = 0.1
    n_samples: int = 20  # per side (posterior and prior)
    annealing_steps: int = 50
    mixing_steps: int = 20
    sigma_max_eff: float = 50.0
    sigma_min_eff: float = 0.01
    rho: float = 7.0
    langevin_coef: float = 0.05
    beta_coef: float = 0.005
    jacobian_mode: str = "exact"
    integration_steps: int = 200
    n_probes: int = 8
    probe_kind: str = "rademacher"
    density_mode: str = "ode"
    em_iterations: int = 12
    em_eta: float = 0.5
    em_c: float = 200.0
    em_inits: tuple = ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0))
    em_constraint_mode: str = "unconstrained"
    p_weight: float = 2.0
    p_values: tuple = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    collapse_iterations: int = 10

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise ConfigurationError("d and m must be positive")
        if not (self.sigma_p_low <= self.sigma_p_high and self.sigma_q_low <= self.sigma_q_high):
            raise ConfigurationError("std ranges must be ordered")


def toy_preset(reduced: bool = False, truth_scale: float = 0.9) -> GaussianToyPreset:
    """The default benchmark preset; reduced swaps in d=200, m=50 for quick runs."""
    preset = GaussianToyPreset(truth_scale=float(truth_scale))
    if reduced:
        preset = replace(preset, d=200, m=50)
    return preset


@dataclass(frozen=True)
class ToyBundle:
    """Everything a command needs: experts, measurement, schedule, and configs."""

    preset: GaussianToyPreset
    experts: tuple
    x_true: np.ndarray
    meas: LinearGaussianMeasurement
    schedule: object
    run_cfg: RunConfig
    density_cfg: DensityConfig
    grid_a1: np.ndarray
    grid_a2: np.ndarray


def build_toy(preset: GaussianToyPreset, master_seed: int, meas: LinearGaussianMeasurement | None = None) -> ToyBundle:
    """Draw the preset's experts and measurement from the seeded streams.

    Expert covariances and the forward matrix are keyed only by the seed, so
    the same draws are reused across the different ground-truth levels. A
    caller-provided measurement (for file-loaded A and y) skips simulation.
    """
    d, m = preset.d, preset.m
    std_p = stream(master_seed, "preset", "p-std").uniform(preset.sigma_p_low, preset.sigma_p_high, d)
    std_q = stream(master_seed, "preset", "q-std").uniform(preset.sigma_q_low, preset.sigma_q_high, d)
    expert_p = GaussianExpert(np.full(d, preset.mean_p), std_p**2)
    expert_q = GaussianExpert(np.full(d, preset.mean_q), std_q**2)
    x_true = np.full(d, preset.truth_scale)
    if meas is None:
        # Entries N(0, 1/d): keeps rows O(1) and the corrector's step size times
        # likelihood curvature below the ULA stability threshold at any d.
        A = stream(master_seed, "preset", "forward").standard_normal((m, d)) / np.sqrt(d)
        meas = simulate_measurement(x_true, A, preset.sigma_y, master_seed)
    schedule = build_schedule(preset.sigma_max_eff, preset.sigma_min_eff, preset.annealing_steps, preset.rho)
    run_cfg = RunConfig(
        annealing_steps=preset.annealing_steps,
        mixing_steps=preset.mixing_steps,
        n_chains=preset.n_samples,
        master_seed=master_seed,
        langevin_coef=preset.langevin_coef,
        beta_coef=preset.beta_coef,
        jacobian_mode=preset.jacobian_mode,
    )
    density_cfg = DensityConfig(
        integration_steps=preset.integration_steps,
        n_probes=preset.n_probes,
        probe_kind=preset.probe_kind,
        probe_seed=master_seed,
        terminal_sigma=preset.sigma_max_eff,
        sigma_min_eff=preset.sigma_min_eff,
        rho=preset.rho,
    )
    n_nodes = int(round((preset.grid_stop - preset.grid_start) / preset.grid_step)) + 1
    grid = preset.grid_start + preset.grid_step * np.arange(n_nodes)
    return ToyBundle(preset, (expert_p, expert_q), x_true, meas, schedule, run_cfg, density_cfg, grid, grid.copy())


def collapse_setup(sigma_y: float = 0.3) -> tuple[MixtureExpert, LinearGaussianMeasurement, np.ndarray]:
    """Shipped 2-D collapse instance: 3-component mixture, A = [1, 0.5].

    These parameter values are arbitrary defaults; the observation is placed
    1.5 sigma_y off the measurement hyperplane so the ground truth sits in the
    likelihood's tail.
    """
    if sigma_y <= 0.0:
        raise DomainError("sigma_y must be positive")
    prior = MixtureExpert(
        weights=np.array([0.5, 0.3, 0.2]),
        means=np.array([[1.5, 0.0], [-1.0, 1.0], [0.0, -1.5]]),
        vars=np.array([[0.5, 0.3], [0.4, 0.6], [0.3, 0.3]]),
    )
    A = np.array([[1.0, 0.5]])
    x_true = np.array([1.0, 0.5])
    y = A @ x_true + 1.5 * sigma_y
    meas = LinearGaussianMeasurement(A, y, sigma_y)
    return prior, meas, x_true
