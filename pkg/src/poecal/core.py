"""Shared primitives: noise schedules, exponent vectors, run configuration, seeded streams."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConfigurationError",
    "DomainError",
    "ShapeError",
    "UnsupportedConfigurationError",
    "NumericalError",
    "IntegrationDivergedError",
    "ReconstructionError",
    "NoiseSchedule",
    "Exponents",
    "RunConfig",
    "build_schedule",
    "beta_schedule",
    "stream",
    "derive_seed",
]

CONSTRAINT_MODES = ("unconstrained", "box_01", "sum_to_one")
JACOBIAN_MODES = ("exact", "identity")

# Minimum total exponent mass kept by projections and grid masking.
EPS_SUM = 0.05


class ConfigurationError(ValueError):
    """Invalid configuration value, file, or key."""


class DomainError(ValueError):
    """Input outside an operation's mathematical domain."""


class ShapeError(ValueError):
    """Inconsistent array dimensions."""


class UnsupportedConfigurationError(ValueError):
    """Requested mode is not available for the given inputs."""


class NumericalError(RuntimeError):
    """A numerical routine failed or produced nonfinite values."""


class IntegrationDivergedError(NumericalError):
    """ODE state became nonfinite; records the offending step index."""

    def __init__(self, step_index: int, message: str | None = None):
        self.step_index = int(step_index)
        super().__init__(message or f"integration diverged at step {step_index}")


class ReconstructionError(NumericalError):
    """Field reconstruction is underdetermined; records disconnected components."""

    def __init__(self, components, message: str | None = None):
        self.components = list(components)
        super().__init__(message or f"unconstrained grid components: {self.components}")


_U64 = (1 << 64) - 1


def _key_word(part) -> int:
    if isinstance(part, (int, np.integer)) and not isinstance(part, bool):
        return int(part) & _U64
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"unsupported stream key component: {part!r}")


def stream(master_seed: int, *key) -> np.random.Generator:
    """Independent generator keyed by (master_seed, *key).

    Keys may be ints or short strings; the mapping is stable across runs,
    platforms, and any degree of parallelism.
    """
    words = [int(master_seed) & _U64, *(_key_word(k) for k in key)]
    return np.random.default_rng(np.random.SeedSequence(words))


def derive_seed(master_seed: int, *key) -> int:
    """64-bit sub-seed for a child job namespace (grid node, EM iteration, ...)."""
    words = [int(master_seed) & _U64, *(_key_word(k) for k in key)]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class NoiseSchedule:
    """Strictly decreasing effective-noise levels shared by sampling and integration.

    Levels live in effective-noise space; the model-noise level for a product
    with exponent total s is sigma_eff * sqrt(s).
    """

    sigma_eff: np.ndarray
    sigma_max_eff: float
    sigma_min_eff: float
    steps: int
    rho: float

    def __post_init__(self):
        arr = np.asarray(self.sigma_eff, dtype=float)
        object.__setattr__(self, "sigma_eff", arr)
        if arr.ndim != 1 or arr.size != self.steps:
            raise ConfigurationError("schedule length must equal steps")
        if self.steps < 2:
            raise ConfigurationError("schedule needs at least 2 steps")
        if not np.all(arr > 0):
            raise ConfigurationError("schedule levels must be positive")
        if not np.all(np.diff(arr) < 0):
            raise ConfigurationError("schedule must be strictly decreasing")
        if arr[0] != self.sigma_max_eff or arr[-1] != self.sigma_min_eff:
            raise ConfigurationError("schedule endpoints must equal sigma_max_eff/sigma_min_eff")

    def __len__(self) -> int:
        return self.steps


def build_schedule(sigma_max_eff: float, sigma_min_eff: float, steps: int, rho: float = 7.0) -> NoiseSchedule:
    """Power-interpolated annealing schedule from sigma_max_eff down to sigma_min_eff.

    Level i is (smax^(1/rho) + u_i (smin^(1/rho) - smax^(1/rho)))^rho with
    u_i = i/(steps-1); endpoints are pinned bit-exactly to the inputs.
    """
    if not (sigma_max_eff > sigma_min_eff > 0.0):
        raise ConfigurationError("need sigma_max_eff > sigma_min_eff > 0")
    if steps < 2:
        raise ConfigurationError("steps must be >= 2")
    if rho < 1.0:
        raise ConfigurationError("rho must be >= 1")
    u = np.linspace(0.0, 1.0, steps)
    r_max = sigma_max_eff ** (1.0 / rho)
    r_min = sigma_min_eff ** (1.0 / rho)
    sig = (r_max + u * (r_min - r_max)) ** rho
    sig[0] = sigma_max_eff
    sig[-1] = sigma_min_eff
    return NoiseSchedule(sig, float(sigma_max_eff), float(sigma_min_eff), int(steps), float(rho))


def beta_schedule(sigma_eff: float, beta_coef: float = 0.005) -> float:
    """Likelihood scaling min(1, beta_coef / sigma_eff^2); clamps to 1 for sigma_eff <= sqrt(beta_coef)."""
    s2 = float(sigma_eff) ** 2
    if s2 <= beta_coef:
        return 1.0
    return beta_coef / s2


@dataclass(frozen=True)
class Exponents:
    """Exponent vector for a product prior, with its constraint handling mode."""

    a: np.ndarray
    constraint_mode: str = "unconstrained"

    def __post_init__(self):
        arr = np.atleast_1d(np.asarray(self.a, dtype=float))
        object.__setattr__(self, "a", arr)
        if arr.ndim != 1 or arr.size == 0:
            raise ShapeError("exponents must be a nonempty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise DomainError("exponents must be finite")
        mode = self.constraint_mode
        if mode not in CONSTRAINT_MODES:
            raise ConfigurationError(f"unknown constraint mode {mode!r}")
        if mode == "sum_to_one":
            # Last component is dependent; check against the same expression
            # used by the constructor so the identity is representation-exact.
            if arr[-1] != 1.0 - float(np.sum(arr[:-1])):
                raise DomainError("sum_to_one exponents must satisfy a[-1] == 1 - sum(a[:-1])")
        else:
            if float(np.sum(arr)) <= 0.0:
                raise DomainError("exponent total must be positive")
        if mode == "box_01" and (np.any(arr < 0.0) or np.any(arr > 1.0)):
            raise DomainError("box_01 exponents must lie in [0, 1]")

    @classmethod
    def sum_to_one(cls, free) -> "Exponents":
        free = np.atleast_1d(np.asarray(free, dtype=float))
        a = np.append(free, 1.0 - float(np.sum(free)))
        return cls(a, "sum_to_one")

    @property
    def n(self) -> int:
        return self.a.size

    @property
    def total(self) -> float:
        return float(np.sum(self.a))

    @property
    def free(self) -> np.ndarray:
        """Independent components (all but the last in sum_to_one mode)."""
        if self.constraint_mode == "sum_to_one":
            return self.a[:-1]
        return self.a


@dataclass(frozen=True)
class RunConfig:
    """Sampler settings shared by unconditional and posterior runs."""

    annealing_steps: int
    mixing_steps: int
    n_chains: int
    master_seed: int
    langevin_coef: float = 0.05
    beta_coef: float = 0.005
    jacobian_mode: str = "exact"

    def __post_init__(self):
        if self.annealing_steps < 2:
            raise ConfigurationError("annealing_steps must be >= 2")
        if self.mixing_steps < 1:
            raise ConfigurationError("mixing_steps must be >= 1")
        if self.n_chains < 1:
            raise ConfigurationError("n_chains must be >= 1")
        if not (self.langevin_coef > 0.0):
            raise ConfigurationError("langevin_coef must be positive")
        if not (self.beta_coef > 0.0):
            raise ConfigurationError("beta_coef must be positive")
        if self.jacobian_mode not in JACOBIAN_MODES:
            raise ConfigurationError(f"unknown jacobian mode {self.jacobian_mode!r}")
