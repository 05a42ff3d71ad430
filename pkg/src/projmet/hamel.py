"""Straight-line extremality tests for 1-homogeneous Lagrangians.

Straight lines are extremals of int L(gamma, gamma') dt exactly when the
mixed-partials matrix M_ij = d2L/dx_i dv_j is symmetric; the
antisymmetric part R = M - M^T is the obstruction measured here.  All
derivatives are central finite differences, so every verdict carries a
noise floor calibrated on a flat metric over the same sample set --
otherwise FD error on a quadrature-backed metric could be mistaken for
genuine non-projectivity (or hide it).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .metric_core import OneDensity, catalog_metric, partials
from .sampling import direction_grid, rng


def hamel_residual(L: OneDensity, x, v, fd_step: Optional[float] = None) -> np.ndarray:
    """Antisymmetric defect R_ij = d2L/dx_i dv_j - d2L/dx_j dv_i, batched.

    Zero (to FD noise) everywhere iff straight lines are extremal.
    """
    p = partials(L, x, v, order="xv", fd_step=fd_step)
    return p.hess_xv - np.swapaxes(p.hess_xv, -1, -2)


def euler_lagrange_residual(L: OneDensity, x, v, t_grid=None, fd_step: Optional[float] = None) -> np.ndarray:
    """Euler-Lagrange defect of the straight path x + t v, per node.

    Along a line the velocity is constant, so d/dt grad_v L = M^T v and
    the defect is M^T v - grad_x L; for 1-homogeneous L this equals -R v.
    Returns (len(t_grid), n).
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if t_grid is None:
        t_grid = np.linspace(0.0, 1.0, 9)
    t_grid = np.asarray(t_grid, dtype=float)
    pts = x[None, :] + t_grid[:, None] * v[None, :]
    p = partials(L, pts, np.broadcast_to(v, pts.shape), order="x+xv", fd_step=fd_step)
    return np.einsum("tij,ti->tj", p.hess_xv, np.broadcast_to(v, pts.shape)) - p.grad_x


@dataclass(frozen=True, eq=False)
class HilbertFormSample:
    """Pointwise data of the canonical 1-form alpha = grad_v L . dx.

    omega_xx holds the dx_i ^ dx_j coefficients (i < j) of d(alpha) --
    identical to the antisymmetric defect R, and zero iff straight lines
    are extremal.  omega_vx holds the dv_i ^ dx_j block, which is the
    fiberwise Hessian.
    """

    alpha: np.ndarray
    omega_xx: np.ndarray
    omega_vx: np.ndarray


def hilbert_forms(L: OneDensity, x, v, fd_step: Optional[float] = None) -> HilbertFormSample:
    p = partials(L, x, v, order="v+xv+vv", fd_step=fd_step)
    return HilbertFormSample(
        alpha=p.grad_v,
        omega_xx=p.hess_xv - np.swapaxes(p.hess_xv, -1, -2),
        omega_vx=p.hess_vv,
    )


@dataclass(frozen=True, eq=False)
class HamelReport:
    max_residual: float
    worst_x: np.ndarray
    worst_v: np.ndarray
    pair_max: np.ndarray  # (n, n): max |R_ij| over the sample set
    n_samples: int
    tol: float
    noise_floor: float

    @property
    def effective_tol(self) -> float:
        # never trust a verdict below 10x the measured FD noise
        return max(self.tol, 10.0 * self.noise_floor)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.effective_tol

    def __str__(self):
        verdict = "projective" if self.passed else "NOT projective"
        return (
            f"{verdict}: max |R| = {self.max_residual:.3e} over {self.n_samples} samples "
            f"(tol {self.effective_tol:.1e}, noise floor {self.noise_floor:.1e})"
        )


def _sample_set(L: OneDensity, n_x: int, n_v: int, seed: int):
    """Jittered fundamental-cell grid x generic direction set.

    Jitter keeps the samples off symmetry loci where an obstruction
    could vanish coincidentally (axis points of trig densities do).
    """
    g = rng(seed)
    n = L.dim
    basis = L.lattice.basis if L.lattice is not None else np.eye(n)
    idx = np.stack(np.meshgrid(*[np.arange(n_x)] * n, indexing="ij"), axis=-1).reshape(-1, n)
    frac = (idx + g.uniform(0.15, 0.85, size=idx.shape)) / n_x
    xs = frac @ basis.T

    vs = direction_grid(n, n_v)
    if n == 2:
        a = g.uniform(0.05, np.pi / 4)
        rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    else:
        q, r = np.linalg.qr(g.normal(size=(n, n)))
        rot = q * np.sign(np.diag(r))
    vs = vs @ rot.T

    m, k = len(xs), len(vs)
    return np.repeat(xs, k, axis=0), np.tile(vs, (m, 1))


def projectivity_report(
    L: OneDensity,
    n_x: int = 4,
    n_v: int = 8,
    tol: float = 1e-5,
    seed: int = 0,
    fd_step: Optional[float] = None,
    calibrate: bool = True,
) -> HamelReport:
    """Sampled straight-line extremality verdict over a cell of L.

    n_x is per-axis resolution of the (jittered) x-grid; directions come
    from a seeded generic rotation of a uniform set.  The noise floor is
    the same statistic computed for the flat metric on the same samples
    with the same step; passing/failing within 10x of it is withheld.
    """
    xs, vs = _sample_set(L, n_x, n_v, seed)
    R = hamel_residual(L, xs, vs, fd_step=fd_step)
    mags = np.max(np.abs(R), axis=(-1, -2))
    k = int(np.argmax(mags))

    noise = 0.0
    if calibrate:
        flat = catalog_metric("euclidean", dim=L.dim)
        step = fd_step if fd_step is not None else L.fd_step
        R0 = hamel_residual(flat, xs, vs, fd_step=step)
        noise = float(np.max(np.abs(R0)))

    return HamelReport(
        max_residual=float(mags[k]),
        worst_x=xs[k].copy(),
        worst_v=vs[k].copy(),
        pair_max=np.max(np.abs(R), axis=0),
        n_samples=len(xs),
        tol=tol,
        noise_floor=noise,
    )
