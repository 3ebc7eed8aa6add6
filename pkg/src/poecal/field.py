"""Grid-based evidence-field estimation for two-expert products.

Evidence gradients are evaluated on a 2-D exponent grid and integrated back to
a scalar field by weighted least squares on finite-difference residuals, with
the two single-expert evidences pinned as equality constraints at (1,0) and
(0,1). Interior stencils are central differences; edges use second-order
one-sided stencils so the operator is exact for quadratic fields.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    EPS_SUM,
    ConfigurationError,
    DomainError,
    Exponents,
    NoiseSchedule,
    ReconstructionError,
    RunConfig,
    ShapeError,
    derive_seed,
)
from .density import DensityConfig
from .evidence import analytic_evidence, evidence_gradient
from .experts import ProductPrior
from .likelihood import LinearGaussianMeasurement

__all__ = [
    "GradientGrid",
    "EvidenceField",
    "gradient_weights",
    "build_gradient_grid",
    "reconstruct_field",
    "analytic_field",
    "nrmse",
    "pearson",
    "field_argmax",
]

EPS_WEIGHT = 1e-12


def _check_uniform(coords: np.ndarray, name: str) -> float:
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 1 or coords.size < 2:
        raise ConfigurationError(f"{name} must hold at least 2 sorted coordinates")
    d = np.diff(coords)
    if not np.all(d > 0):
        raise ConfigurationError(f"{name} must be strictly increasing")
    if not np.allclose(d, d[0], rtol=1e-9, atol=1e-12):
        raise ConfigurationError(f"{name} must be uniformly spaced")
    return float(d[0])


@dataclass(frozen=True)
class GradientGrid:
    """Evidence-gradient estimates on a 2-D exponent grid, indexed [i over a1, j over a2]."""

    grid_a1: np.ndarray
    grid_a2: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    stderr1: np.ndarray
    stderr2: np.ndarray
    mask: np.ndarray  # True where the node was evaluated
    w1: np.ndarray
    w2: np.ndarray

    def __post_init__(self):
        shape = (len(self.grid_a1), len(self.grid_a2))
        for name in ("g1", "g2", "stderr1", "stderr2", "mask", "w1", "w2"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ShapeError(f"{name} must have shape {shape}")
        if np.any(self.w1[self.mask] < 0) or np.any(self.w2[self.mask] < 0):
            raise DomainError("weights must be nonnegative")


@dataclass(frozen=True)
class EvidenceField:
    """Scalar log-evidence values on the exponent grid; NaN at masked nodes."""

    grid_a1: np.ndarray
    grid_a2: np.ndarray
    phi: np.ndarray
    mask: np.ndarray
    spacing: float
    lsq_rel_residual: float | None = None

    def __post_init__(self):
        shape = (len(self.grid_a1), len(self.grid_a2))
        if self.phi.shape != shape or self.mask.shape != shape:
            raise ShapeError(f"phi and mask must have shape {shape}")
        if not np.all(np.isfinite(self.phi[self.mask])):
            raise DomainError("field must be finite on unmasked nodes")


def gradient_weights(g: np.ndarray, p: float = 2.0, eps_w: float = EPS_WEIGHT) -> np.ndarray:
    """Inverse-power weights 1 / max(|g|^p, eps_w)."""
    return 1.0 / np.maximum(np.abs(g) ** p, eps_w)


def build_gradient_grid(
    experts,
    meas: LinearGaussianMeasurement,
    grid_a1,
    grid_a2,
    schedule: NoiseSchedule,
    run_cfg: RunConfig,
    density_cfg: DensityConfig,
    mode: str = "ode",
    eps_a: float = EPS_SUM,
    threads: int = 1,
) -> GradientGrid:
    """Estimate both evidence-gradient components at every unmasked grid node.

    Nodes with exponent total below eps_a are masked rather than evaluated.
    Each node runs in its own seed namespace derived from (master_seed, i, j),
    so results are independent of the number of worker threads.
    """
    experts = list(experts)
    if len(experts) != 2:
        raise ConfigurationError("field estimation requires exactly two experts")
    grid_a1 = np.asarray(grid_a1, dtype=float)
    grid_a2 = np.asarray(grid_a2, dtype=float)
    _check_uniform(grid_a1, "grid_a1")
    _check_uniform(grid_a2, "grid_a2")
    n1, n2 = grid_a1.size, grid_a2.size
    mask = np.zeros((n1, n2), dtype=bool)
    g1 = np.full((n1, n2), np.nan)
    g2 = np.full((n1, n2), np.nan)
    s1 = np.full((n1, n2), np.nan)
    s2 = np.full((n1, n2), np.nan)

    def node(i: int, j: int):
        a = Exponents(np.array([grid_a1[i], grid_a2[j]]))
        prior = ProductPrior(tuple(experts), a)
        rc = replace(run_cfg, master_seed=derive_seed(run_cfg.master_seed, "grid-node", i, j))
        dc = replace(density_cfg, probe_seed=derive_seed(run_cfg.master_seed, "grid-probes", i, j))
        return i, j, evidence_gradient(prior, meas, schedule, rc, dc, mode)

    jobs = [(i, j) for i in range(n1) for j in range(n2) if grid_a1[i] + grid_a2[j] >= eps_a]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda ij: node(*ij), jobs))
    else:
        results = [node(i, j) for (i, j) in jobs]
    for i, j, est in results:
        mask[i, j] = True
        g1[i, j], g2[i, j] = est.g
        s1[i, j], s2[i, j] = est.stderr
    w1 = np.where(mask, gradient_weights(np.where(mask, g1, 1.0)), 0.0)
    w2 = np.where(mask, gradient_weights(np.where(mask, g2, 1.0)), 0.0)
    return GradientGrid(grid_a1, grid_a2, g1, g2, s1, s2, mask, w1, w2)


def _stencil_rows(n: int, idx: int, delta: float):
    """Finite-difference stencil along one axis at position idx: (offsets, coefs)."""
    if 0 < idx < n - 1:
        return (-1, 1), (-0.5 / delta, 0.5 / delta)
    if n == 2:
        if idx == 0:
            return (0, 1), (-1.0 / delta, 1.0 / delta)
        return (-1, 0), (-1.0 / delta, 1.0 / delta)
    if idx == 0:
        return (0, 1, 2), (-1.5 / delta, 2.0 / delta, -0.5 / delta)
    return (-2, -1, 0), (0.5 / delta, -2.0 / delta, 1.5 / delta)


def _assemble(grid: GradientGrid, p_weight: float, eps_w: float):
    """Build the weighted residual system (rows, cols, coefs, rhs, weights)."""
    n1, n2 = grid.mask.shape
    d1 = _check_uniform(grid.grid_a1, "grid_a1")
    d2 = _check_uniform(grid.grid_a2, "grid_a2")
    if p_weight == 2.0:
        w1, w2 = grid.w1, grid.w2
    else:
        w1 = np.where(grid.mask, gradient_weights(np.where(grid.mask, grid.g1, 1.0), p_weight, eps_w), 0.0)
        w2 = np.where(grid.mask, gradient_weights(np.where(grid.mask, grid.g2, 1.0), p_weight, eps_w), 0.0)
    rows = []  # each: (list[(i, j)], list[coef], rhs, weight)
    for i in range(n1):
        for j in range(n2):
            if not grid.mask[i, j]:
                continue
            offs, coefs = _stencil_rows(n1, i, d1)
            nodes = [(i + o, j) for o in offs]
            if all(grid.mask[p, q] for p, q in nodes):
                rows.append((nodes, list(coefs), grid.g1[i, j], w1[i, j]))
            offs, coefs = _stencil_rows(n2, j, d2)
            nodes = [(i, j + o) for o in offs]
            if all(grid.mask[p, q] for p, q in nodes):
                rows.append((nodes, list(coefs), grid.g2[i, j], w2[i, j]))
    return rows, d1, d2


def _find_node(grid_a1: np.ndarray, grid_a2: np.ndarray, a1: float, a2: float):
    i = np.argmin(np.abs(grid_a1 - a1))
    j = np.argmin(np.abs(grid_a2 - a2))
    if not (np.isclose(grid_a1[i], a1, atol=1e-9) and np.isclose(grid_a2[j], a2, atol=1e-9)):
        return None
    return int(i), int(j)


def _components(node_ids: dict, rows) -> list[set]:
    parent = {n: n for n in node_ids}

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    def union(u, v):
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv

    for nodes, _, _, _ in rows:
        for other in nodes[1:]:
            union(nodes[0], other)
    groups: dict = {}
    for n in node_ids:
        groups.setdefault(find(n), set()).add(n)
    return list(groups.values())


def reconstruct_field(
    grid: GradientGrid,
    log_z1: float,
    log_z2: float,
    p_weight: float = 2.0,
    eps_w: float = EPS_WEIGHT,
) -> EvidenceField:
    """Integrate gridded gradients into a field by weighted constrained least squares.

    Minimizes sum of w * (D_i phi - g_i)^2 over unmasked nodes subject to
    phi(1, 0) = log_z1 and phi(0, 1) = log_z2, eliminating the two pinned
    values from the normal system. Raises ReconstructionError when some
    connected set of unmasked nodes contains neither constraint.
    """
    rows, d1, _ = _assemble(grid, p_weight, eps_w)
    n1, n2 = grid.mask.shape
    unmasked = [(i, j) for i in range(n1) for j in range(n2) if grid.mask[i, j]]
    if not unmasked:
        raise ReconstructionError([], "no unmasked nodes to reconstruct")
    c1 = _find_node(grid.grid_a1, grid.grid_a2, 1.0, 0.0)
    c2 = _find_node(grid.grid_a1, grid.grid_a2, 0.0, 1.0)
    if c1 is None or c2 is None or not grid.mask[c1] or not grid.mask[c2]:
        raise ConfigurationError("constraint nodes (1,0) and (0,1) must be unmasked grid nodes")
    pinned = {c1: float(log_z1), c2: float(log_z2)}

    comps = _components({n: n for n in unmasked}, rows)
    bad = [sorted(c) for c in comps if not (c1 in c or c2 in c)]
    if bad:
        coords = [
            [(float(grid.grid_a1[i]), float(grid.grid_a2[j])) for i, j in comp] for comp in bad
        ]
        raise ReconstructionError(coords)

    free = [n for n in unmasked if n not in pinned]
    col = {n: k for k, n in enumerate(free)}
    m_rows = len(rows)
    A = np.zeros((m_rows, len(free)))
    b = np.zeros(m_rows)
    wts = np.zeros(m_rows)
    for r, (nodes, coefs, rhs, w) in enumerate(rows):
        b[r] = rhs
        wts[r] = w
        for nd, cf in zip(nodes, coefs):
            if nd in pinned:
                b[r] -= cf * pinned[nd]
            else:
                A[r, col[nd]] += cf
    scale = np.sqrt(wts / max(float(np.mean(wts)), eps_w))
    As = A * scale[:, None]
    bs = b * scale
    sol, *_ = np.linalg.lstsq(As, bs, rcond=None)
    normal_res = As.T @ (As @ sol - bs)
    rel = float(np.linalg.norm(normal_res) / max(np.linalg.norm(As.T @ bs), 1.0))

    phi = np.full((n1, n2), np.nan)
    for nd, val in pinned.items():
        phi[nd] = val
    for nd, k in col.items():
        phi[nd] = sol[k]
    return EvidenceField(grid.grid_a1, grid.grid_a2, phi, grid.mask.copy(), d1, rel)


def analytic_field(
    experts,
    meas: LinearGaussianMeasurement,
    grid_a1,
    grid_a2,
    eps_a: float = EPS_SUM,
) -> EvidenceField:
    """Closed-form evidence field on the grid (Gaussian experts only)."""
    grid_a1 = np.asarray(grid_a1, dtype=float)
    grid_a2 = np.asarray(grid_a2, dtype=float)
    d1 = _check_uniform(grid_a1, "grid_a1")
    n1, n2 = grid_a1.size, grid_a2.size
    phi = np.full((n1, n2), np.nan)
    mask = np.zeros((n1, n2), dtype=bool)
    for i in range(n1):
        for j in range(n2):
            if grid_a1[i] + grid_a2[j] < eps_a:
                continue
            mask[i, j] = True
            a = Exponents(np.array([grid_a1[i], grid_a2[j]]))
            phi[i, j] = analytic_evidence(experts, a, meas)
    return EvidenceField(grid_a1, grid_a2, phi, mask, d1)


def _check_same_grid(field: EvidenceField, ref: EvidenceField):
    if field.phi.shape != ref.phi.shape:
        raise ShapeError("fields live on different grids")
    if not (
        np.allclose(field.grid_a1, ref.grid_a1)
        and np.allclose(field.grid_a2, ref.grid_a2)
        and np.array_equal(field.mask, ref.mask)
    ):
        raise ShapeError("fields must share grid coordinates and mask")


def nrmse(field: EvidenceField, reference: EvidenceField) -> float:
    """RMSE over unmasked nodes normalized by the reference value range."""
    _check_same_grid(field, reference)
    diff = field.phi[field.mask] - reference.phi[reference.mask]
    ref = reference.phi[reference.mask]
    rng = float(np.max(ref) - np.min(ref))
    if rng <= 0.0:
        raise DomainError("reference field has a degenerate value range")
    return float(np.sqrt(np.mean(diff**2)) / rng)


def pearson(field: EvidenceField, reference: EvidenceField) -> float:
    """Pearson correlation between the two fields over unmasked nodes."""
    _check_same_grid(field, reference)
    x = field.phi[field.mask]
    y = reference.phi[reference.mask]
    return float(np.corrcoef(x, y)[0, 1])


def field_argmax(field: EvidenceField) -> tuple[float, float]:
    """Coordinates of the maximal unmasked node; ties break lexicographically."""
    if not np.any(field.mask):
        raise DomainError("field has no unmasked nodes")
    phi = np.where(field.mask, field.phi, -np.inf)
    best = np.max(phi)
    ties = np.argwhere(phi == best)
    i, j = min((int(i), int(j)) for i, j in ties)
    return float(field.grid_a1[i]), float(field.grid_a2[j])
