"""Deterministic file writers and loaders for grids, fields, samples, and matrices."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import ConfigurationError
from .field import EvidenceField, GradientGrid
from .sampler import SampleBatch

__all__ = [
    "write_json",
    "gradient_component_to_csv",
    "field_to_csv",
    "field_to_pgm",
    "samples_to_csv",
    "load_matrix",
    "load_vector",
]


def _fmt(v: float) -> str:
    return repr(float(v))


def _echo_lines(config: dict | None) -> list[str]:
    if not config:
        return []
    return [f"# {k}={config[k]}" for k in sorted(config)]


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def gradient_component_to_csv(path, grid: GradientGrid, axis: int, config: dict | None = None) -> None:
    """One gradient component as rows a1,a2,value,stderr; masked nodes are omitted."""
    if axis not in (1, 2):
        raise ConfigurationError("axis must be 1 or 2")
    g = grid.g1 if axis == 1 else grid.g2
    s = grid.stderr1 if axis == 1 else grid.stderr2
    lines = _echo_lines(config)
    lines.append("a1,a2,value,stderr")
    for i, a1 in enumerate(grid.grid_a1):
        for j, a2 in enumerate(grid.grid_a2):
            if not grid.mask[i, j]:
                continue
            lines.append(f"{_fmt(a1)},{_fmt(a2)},{_fmt(g[i, j])},{_fmt(s[i, j])}")
    Path(path).write_text("\n".join(lines) + "\n")


def field_to_csv(path, f: EvidenceField, config: dict | None = None) -> None:
    lines = _echo_lines(config)
    lines.append("a1,a2,value")
    for i, a1 in enumerate(f.grid_a1):
        for j, a2 in enumerate(f.grid_a2):
            if not f.mask[i, j]:
                continue
            lines.append(f"{_fmt(a1)},{_fmt(a2)},{_fmt(f.phi[i, j])}")
    Path(path).write_text("\n".join(lines) + "\n")


def field_to_pgm(path, f: EvidenceField) -> None:
    """Binary P5 heatmap: values mapped affinely from [min, max] to [0, 255].

    Rows run from the largest a2 down to the smallest (image-style origin at
    the top-left), columns over ascending a1; masked nodes render as 0.
    """
    vals = f.phi[f.mask]
    lo, hi = float(np.min(vals)), float(np.max(vals))
    span = hi - lo
    img = np.zeros(f.phi.shape, dtype=np.uint8)
    if span > 0:
        scaled = np.clip((f.phi - lo) / span * 255.0, 0.0, 255.0)
        img[f.mask] = np.rint(scaled[f.mask]).astype(np.uint8)
    raster = img.T[::-1, :]  # rows: a2 descending; cols: a1 ascending
    header = f"P5\n{raster.shape[1]} {raster.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + raster.tobytes())


def samples_to_csv(path, batch: SampleBatch, config: dict | None = None) -> None:
    """One row per chain; columns x0..x{d-1}."""
    echo = dict(batch.config)
    if config:
        echo.update(config)
    lines = _echo_lines(echo)
    d = batch.samples.shape[1]
    lines.append(",".join(f"x{k}" for k in range(d)))
    for row in batch.samples:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_matrix(path) -> np.ndarray:
    """Load a dense matrix from CSV or the column-count-prefixed binary format.

    Binary layout: little-endian uint64 column count, then float64 values in
    row-major order until end of file.
    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        arr = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
        return np.asarray(arr, dtype=float)
    raw = path.read_bytes()
    if len(raw) < 8:
        raise ConfigurationError(f"{path}: truncated binary matrix")
    ncols = int(np.frombuffer(raw[:8], dtype="<u8")[0])
    body = np.frombuffer(raw[8:], dtype="<f8")
    if ncols < 1 or body.size % ncols != 0:
        raise ConfigurationError(f"{path}: payload is not a multiple of the column count")
    return body.reshape(-1, ncols).astype(float)


def load_vector(path) -> np.ndarray:
    arr = load_matrix(path)
    if 1 not in arr.shape and arr.ndim != 1:
        raise ConfigurationError(f"{path}: expected a vector, got shape {arr.shape}")
    return arr.reshape(-1)
