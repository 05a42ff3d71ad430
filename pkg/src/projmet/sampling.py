"""Deterministic samplers shared across modules.

Everything takes an explicit seed; nothing touches global RNG state.
"""
from __future__ import annotations

import numpy as np


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def unit_vectors(n: int, dim: int, seed: int = 0) -> np.ndarray:
    """n random directions on the unit sphere, shape (n, dim)."""
    g = rng(seed)
    v = g.normal(size=(n, dim))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    # resample the (measure-zero) degenerate draws instead of dividing by ~0
    bad = norms[:, 0] < 1e-12
    while np.any(bad):
        v[bad] = g.normal(size=(int(bad.sum()), dim))
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        bad = norms[:, 0] < 1e-12
    return v / norms


def direction_grid(dim: int, count: int) -> np.ndarray:
    """Deterministic, roughly uniform directions: angles in 2D, a
    Fibonacci spiral in 3D."""
    if dim == 2:
        th = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if dim == 3:
        k = np.arange(count, dtype=float)
        z = 1.0 - (2.0 * k + 1.0) / count
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        golden = np.pi * (3.0 - np.sqrt(5.0))
        th = golden * k
        return np.stack([r * np.cos(th), r * np.sin(th), z], axis=1)
    raise ValueError(f"direction_grid supports dim 2 or 3, got {dim}")


def cell_grid(basis: np.ndarray, res: int, *, centered: bool = False) -> np.ndarray:
    """Regular grid over one periodicity cell, shape (res,)*n + (n,).

    Fractional coordinates run over [0,1)^n (or [-1/2,1/2) when centered)
    and are mapped through the basis columns.
    """
    n = basis.shape[0]
    fr = np.arange(res) / res
    if centered:
        fr = fr - 0.5
    mesh = np.meshgrid(*([fr] * n), indexing="ij")
    frac = np.stack(mesh, axis=-1)
    return frac @ basis.T


def point_triples(
    n: int, dim: int, seed: int = 0, box: float = 1.0, collinear_frac: float = 0.5
) -> np.ndarray:
    """(n, 3, dim) triples (x, y, z); a fraction has y exactly on [x, z]."""
    g = rng(seed)
    x = g.uniform(-box, box, size=(n, dim))
    z = g.uniform(-box, box, size=(n, dim))
    y = g.uniform(-box, box, size=(n, dim))
    n_col = int(round(collinear_frac * n))
    if n_col:
        s = g.uniform(0.05, 0.95, size=(n_col, 1))
        y[:n_col] = x[:n_col] + s * (z[:n_col] - x[:n_col])
    return np.stack([x, y, z], axis=1)
