"""Measures on cooriented affine hyperplanes and the Crofton construction.

A hyperplane is the pair (u, p) with u a unit normal and u.x = p; the
double cover by coorientations is handled with a global factor 1/2.

Quadrature design: the integrands carry a |u . w| crease, so the sphere
rules are split at the crease and use Gauss-Legendre on each smooth arc,
with the node count FIXED and the nodes rotating smoothly with w.  That
keeps quadrature error both tiny and smooth in (x, v), which matters
because the projectivity tests downstream take second finite differences
of the resulting metrics.  Error estimates come from a half-resolution
re-evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .metric_core import AffineMap, FinslerMetric, Lattice
from .sampling import rng

DEFAULT_NODES_2D = 512
DEFAULT_NODES_3D = (64, 128)  # polar x azimuth
_CHUNK = 256

# fixed skew reference for the azimuth frame; any test direction grid
# stays far from it, so the frame (and the rule) moves smoothly with v
_FRAME_REF = np.array([0.29138519, 0.52757962, 0.79795614])
_FRAME_REF2 = np.array([-0.81649658, 0.40824829, 0.40824829])


class GrassmannianError(ValueError):
    pass


class QuadratureError(GrassmannianError):
    pass


@dataclass(frozen=True, eq=False)
class HyperplaneMeasure:
    """Smooth density m(u, p) on the cooriented hyperplane space."""

    dim: int
    density: Callable[[np.ndarray, np.ndarray], np.ndarray]  # (..., n), (...) -> (...)
    symmetric: bool = True
    lattice: Optional[Lattice] = None
    name: str = ""

    def __call__(self, u, p) -> np.ndarray:
        return np.asarray(self.density(np.asarray(u, float), np.asarray(p, float)), dtype=float)


@dataclass(frozen=True)
class SegmentMeasureResult:
    value: float
    error: float


@lru_cache(maxsize=32)
def _gl(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def circle_rule(theta0: np.ndarray, n_nodes: int = DEFAULT_NODES_2D):
    """Two Gauss-Legendre arcs split at theta0 +- pi/2 (the |cos| crease).

    theta0 is batched (B,); returns nodes (B, K, 2) and weights (K,).
    """
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    half = n_nodes // 2
    t, w = _gl(half)
    arc1 = theta0[:, None] + (np.pi / 2) * t[None, :]
    arc2 = arc1 + np.pi
    th = np.concatenate([arc1, arc2], axis=1)
    weights = np.concatenate([w, w]) * (np.pi / 2)
    nodes = np.stack([np.cos(th), np.sin(th)], axis=-1)
    return nodes, weights


def sphere_rule(axis: np.ndarray, n_polar: int = 64, n_azimuth: int = 128):
    """Pole-aligned product rule: GL in cos(polar) split at the equator,
    uniform azimuth.  axis is batched (B, 3); nodes (B, K, 3), weights (K,)."""
    axis = np.atleast_2d(np.asarray(axis, dtype=float))
    b = axis.shape[0]
    e1 = _FRAME_REF[None, :] - (axis @ _FRAME_REF)[:, None] * axis
    n1 = np.linalg.norm(e1, axis=1)
    bad = n1 < 1e-6
    if np.any(bad):
        alt = _FRAME_REF2[None, :] - (axis[bad] @ _FRAME_REF2)[:, None] * axis[bad]
        e1[bad] = alt
        n1 = np.linalg.norm(e1, axis=1)
    e1 /= n1[:, None]
    e2 = np.cross(axis, e1)

    half = n_polar // 2
    t, w = _gl(half)
    t_lo = 0.5 * (t - 1.0)  # [-1, 0]
    t_hi = 0.5 * (t + 1.0)  # [0, 1]
    tt = np.concatenate([t_lo, t_hi])
    wt = np.concatenate([w, w]) * 0.5
    s = np.sqrt(np.maximum(0.0, 1.0 - tt * tt))

    phi = 2 * np.pi * np.arange(n_azimuth) / n_azimuth
    ca, sa = np.cos(phi), np.sin(phi)

    # (B, n_polar, n_azimuth, 3)
    planar = ca[None, None, :, None] * e1[:, None, None, :] + sa[None, None, :, None] * e2[:, None, None, :]
    nodes = s[None, :, None, None] * planar + tt[None, :, None, None] * axis[:, None, None, :]
    weights = (wt[:, None] * (2 * np.pi / n_azimuth)).ravel()
    return nodes.reshape(b, -1, 3), weights


def _aligned_rule(w_dir: np.ndarray, dim: int, n_sphere):
    if dim == 2:
        n = n_sphere or DEFAULT_NODES_2D
        theta = np.arctan2(w_dir[..., 1], w_dir[..., 0])
        return circle_rule(theta, n)
    n_pol, n_az = n_sphere or DEFAULT_NODES_3D
    return sphere_rule(w_dir, n_pol, n_az)


@lru_cache(maxsize=8)
def _simpson_weights(n_intervals: int):
    # composite Simpson on [0, 1] with n_intervals (even) panels
    if n_intervals % 2 or n_intervals < 2:
        raise ValueError("Simpson needs an even interval count")
    w = np.ones(n_intervals + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * n_intervals)


def _slab_sweep(mu: HyperplaneMeasure, nodes, weights, lo, hi, n_p: int) -> float:
    """1/2 * sum_k w_k * int_{lo_k}^{hi_k} m(u_k, p) dp, all nodes at once."""
    s = np.linspace(0.0, 1.0, n_p + 1)
    sw = _simpson_weights(n_p)
    width = hi - lo
    p = lo[..., None] + width[..., None] * s
    m = mu(nodes[..., None, :], p)
    per_node = width * np.einsum("...s,s->...", m, sw)
    return 0.5 * float(np.sum(per_node * weights))


def segment_measure(
    mu: HyperplaneMeasure,
    x,
    y,
    n_sphere=None,
    n_p: int = 64,
    tol: Optional[float] = None,
) -> SegmentMeasureResult:
    """Measure of the hyperplanes crossing the segment [x, y].

    The error estimate is the difference against a half-resolution pass;
    if tol is given and the estimate exceeds it, a QuadratureError is
    raised rather than returning a silently bad value.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = y - x
    wn = np.linalg.norm(w)
    if wn < 1e-15:
        return SegmentMeasureResult(0.0, 0.0)
    what = w / wn

    def one_pass(n_sph, np_):
        nodes, weights = _aligned_rule(what[None, :], mu.dim, n_sph)
        a = nodes[0] @ x
        b = nodes[0] @ y
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        return _slab_sweep(mu, nodes[0], weights, lo, hi, np_)

    if mu.dim == 2:
        n_full = n_sphere or DEFAULT_NODES_2D
        n_half = max(8, n_full // 2)
    else:
        n_full = tuple(n_sphere or DEFAULT_NODES_3D)
        n_half = (max(8, n_full[0] // 2), max(8, n_full[1] // 2))
    value = one_pass(n_full, n_p)
    coarse = one_pass(n_half, max(4, n_p // 2))
    err = abs(value - coarse)
    if tol is not None and err > tol:
        raise QuadratureError(f"quadrature estimate {err:.3g} exceeds tol {tol:.3g}")
    return SegmentMeasureResult(value, err)


def crofton_finsler(
    mu: HyperplaneMeasure,
    n_sphere=None,
    check: bool = True,
    fd_step: float = 1e-4,
) -> FinslerMetric:
    """The Finsler metric F(x, v) = 1/2 * int |u.v| m(u, u.x) dsigma(u).

    The node count is fixed and the rule rotates smoothly with v, so the
    value is a smooth function of (x, v) up to spectrally small terms --
    a hard requirement for the finite-difference projectivity tests.
    """
    dim = mu.dim
    if check:
        sym_defect = _symmetry_defect(mu)
        if sym_defect > 1e-9:
            raise GrassmannianError(f"density is not symmetric (defect {sym_defect:.3g})")
        rep = quasipositivity_check(mu, n_triples=40, seed=7)
        if rep.min_measure <= 0:
            raise GrassmannianError(
                f"quasipositivity sampling failed (min measure {rep.min_measure:.3g})"
            )

    def fn(x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        batch = np.broadcast_shapes(x.shape[:-1], v.shape[:-1])
        xb = np.broadcast_to(x, batch + (dim,)).reshape(-1, dim)
        vb = np.broadcast_to(v, batch + (dim,)).reshape(-1, dim)
        out = np.empty(len(xb))
        for a in range(0, len(xb), _CHUNK):
            xs, vs = xb[a : a + _CHUNK], vb[a : a + _CHUNK]
            speed = np.linalg.norm(vs, axis=1)
            ok = speed > 0
            vhat = np.where(ok[:, None], vs, np.eye(dim)[0]) / np.where(ok, speed, 1.0)[:, None]
            nodes, weights = _aligned_rule(vhat, dim, n_sphere)
            kernel = np.abs(np.einsum("bkn,bn->bk", nodes, vs))
            dens = mu(nodes, np.einsum("bkn,bn->bk", nodes, xs))
            vals = 0.5 * (kernel * dens) @ weights
            out[a : a + _CHUNK] = np.where(ok, vals, 0.0)
        return out.reshape(batch)

    return FinslerMetric(
        dim=dim,
        fn=fn,
        lattice=mu.lattice,
        reversible=True,
        fd_step=fd_step,
        name=f"crofton({mu.name or 'measure'})",
    )


def _symmetry_defect(mu: HyperplaneMeasure, n: int = 64, seed: int = 3) -> float:
    g = rng(seed)
    u = g.normal(size=(n, mu.dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    p = g.uniform(-2.0, 2.0, size=n)
    return float(np.max(np.abs(mu(u, p) - mu(-u, -p))))


@dataclass(frozen=True, eq=False)
class QuasipositivityReport:
    min_measure: float
    worst_triple: np.ndarray
    n_triples: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.min_measure >= self.tol


def quasipositivity_check(
    mu: HyperplaneMeasure,
    triples: Optional[np.ndarray] = None,
    n_triples: int = 200,
    seed: int = 0,
    tol: float = 1e-9,
    box: float = 1.0,
) -> QuasipositivityReport:
    """Minimum sampled measure of hyperplanes separating x from segment [y, z].

    Separation at normal u happens on the p-gap between u.x and the
    segment's p-interval; the gap integral is swept like a slab.
    """
    if triples is None:
        g = rng(seed)
        pts = g.uniform(-box, box, size=(n_triples, 3, mu.dim))
    else:
        pts = np.asarray(triples, dtype=float)
        if pts.size == 0:
            raise GrassmannianError("empty triple sampler")
    worst = np.inf
    worst_triple = pts[0]
    for x, y, z in pts:
        # keep x off the segment: separation measure is 0 there by definition
        w = z - y
        t = np.clip(np.dot(x - y, w) / max(np.dot(w, w), 1e-300), 0.0, 1.0)
        if np.linalg.norm(x - (y + t * w), axis=-1) < 0.05:
            continue
        axis = w / np.linalg.norm(w) if np.linalg.norm(w) > 1e-12 else np.eye(mu.dim)[0]
        n_sph = 256 if mu.dim == 2 else (32, 64)
        nodes, weights = _aligned_rule(axis[None, :], mu.dim, n_sph)
        u = nodes[0]
        a = u @ x
        lo_seg = np.minimum(u @ y, u @ z)
        hi_seg = np.maximum(u @ y, u @ z)
        lo = np.where(a < lo_seg, a, hi_seg)
        hi = np.where(a < lo_seg, lo_seg, np.maximum(a, hi_seg))
        val = _slab_sweep(mu, u, weights, lo, hi, 32)
        if val < worst:
            worst = val
            worst_triple = np.stack([x, y, z])
    if not np.isfinite(worst):
        raise GrassmannianError("no triple had x off the segment; enlarge the sampler")
    return QuasipositivityReport(
        min_measure=float(worst), worst_triple=worst_triple, n_triples=len(pts), tol=tol
    )


def measure_pushforward(mu: HyperplaneMeasure, T: AffineMap) -> HyperplaneMeasure:
    """The measure mu' with segment_measure(mu', x, y) = segment_measure(mu, Tx, Ty).

    Hyperplanes transform by (u, p) -> (A^-T u / |A^-T u|, (p + (A^-T u).b) / |A^-T u|)
    and the density picks up the sphere-map Jacobian |det A|^-1 |A^-T u|^-(n+1).
    """
    if T.dim != mu.dim:
        raise GrassmannianError("affine map dimension mismatch")
    n = mu.dim
    a_inv_t = np.linalg.inv(T.linear).T
    det = abs(np.linalg.det(T.linear))
    b = T.offset

    def density(u, p):
        u = np.asarray(u, dtype=float)
        p = np.asarray(p, dtype=float)
        w = u @ a_inv_t.T  # A^-T u, batched
        wn = np.linalg.norm(w, axis=-1)
        uu = w / wn[..., None]
        pp = (p + w @ b) / wn
        return mu(uu, pp) / (det * wn ** (n + 1))

    lat = None
    if mu.lattice is not None:
        lat = Lattice(np.linalg.solve(T.linear, mu.lattice.basis))
    return HyperplaneMeasure(
        dim=n, density=density, symmetric=mu.symmetric, lattice=lat,
        name=f"push({mu.name or 'measure'})",
    )


@dataclass(frozen=True, eq=False)
class OrbitNetReport:
    dense: bool
    gap: float
    n_values: int
    bound: int
    eps: float


def lattice_orbit_net(u, N: int, eps: float, budget: int = 20_000_000) -> OrbitNetReport:
    """Largest gap of {u.m : m integer, |m_i| <= N} inside [0, 1].

    The endpoints 0 and 1 are always included; dense means gap <= eps.
    """
    u = np.asarray(u, dtype=float)
    un = np.linalg.norm(u)
    if un < 1e-15:
        raise GrassmannianError("zero direction")
    u = u / un
    if N < 1 or eps <= 0:
        raise GrassmannianError("need N >= 1 and eps > 0")
    n = len(u)
    count = (2 * N + 1) ** n
    if count > budget:
        raise GrassmannianError(f"enumeration of {count} lattice points exceeds the budget")
    axes = [np.arange(-N, N + 1)] * n
    mesh = np.meshgrid(*axes, indexing="ij")
    vals = sum(u[i] * mesh[i].ravel() for i in range(n))
    vals = vals[(vals >= -1e-12) & (vals <= 1.0 + 1e-12)]
    vals = np.unique(np.concatenate([[0.0, 1.0], vals]))
    gap = float(np.max(np.diff(vals)))
    return OrbitNetReport(dense=bool(gap <= eps), gap=gap, n_values=len(vals), bound=N, eps=eps)


@dataclass(frozen=True, eq=False)
class InvarianceGapReport:
    precondition_ok: bool
    precondition_defect: float
    gap: float
    n_samples: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.precondition_ok and self.gap <= self.tol


def invariance_gap(
    g_fn,
    lattice: Lattice,
    n_samples: int = 10_000,
    seed: int = 0,
    pre_tol: float = 1e-6,
    tol: float = 1e-2,
) -> InvarianceGapReport:
    """Observed |g(u, p + u.t) - g(u, p)| for real t, given lattice invariance.

    The lattice invariance itself is a checked precondition; the report
    never asserts a convergence rate, only the observed gap.
    """
    g = rng(seed)
    n = lattice.dim
    u = g.normal(size=(n_samples, n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    p = g.uniform(-2.0, 2.0, size=n_samples)
    base = np.asarray(g_fn(u, p), dtype=float)

    m = g.integers(-3, 4, size=(n_samples, n)) @ lattice.basis.T
    pre = float(np.max(np.abs(g_fn(u, p + np.einsum("ij,ij->i", u, m)) - base)))
    if pre > pre_tol:
        return InvarianceGapReport(False, pre, float("nan"), n_samples, tol)

    t = g.uniform(-3.0, 3.0, size=(n_samples, n))
    gap = float(np.max(np.abs(g_fn(u, p + np.einsum("ij,ij->i", u, t)) - base)))
    return InvarianceGapReport(True, pre, gap, n_samples, tol)


# --- density catalog ----------------------------------------------------------


def constant_density(dim: int, value: float = 0.5) -> HyperplaneMeasure:
    return HyperplaneMeasure(
        dim=dim,
        density=lambda u, p: np.full(np.broadcast_shapes(u.shape[:-1], p.shape), float(value)),
        symmetric=True,
        lattice=Lattice.standard(dim),  # p-independent: invariant under everything
        name=f"constant({value})",
    )


def cosine_density(dim: int, amp: float = 0.5, freq: float = 1.0) -> HyperplaneMeasure:
    """m(u, p) = 1/2 (1 + amp cos(2 pi freq p)); positive for |amp| < 1.

    Not invariant under integer translations: p shifts by u.m, which is
    generically irrational.  The induced metric is genuinely x-dependent.
    """

    def density(u, p):
        return 0.5 * (1.0 + amp * np.cos(2 * np.pi * freq * np.asarray(p, float))) + 0.0 * np.sum(
            u, axis=-1
        )

    return HyperplaneMeasure(dim=dim, density=density, symmetric=True, lattice=None,
                             name=f"cosine({amp})")


def direction_density(dim: int, coef: float = 0.3) -> HyperplaneMeasure:
    """p-independent anisotropic density: the induced metric is a norm."""

    def density(u, p):
        return 0.5 * (1.0 + coef * np.asarray(u, float)[..., 0] ** 2) + 0.0 * np.asarray(p, float)

    return HyperplaneMeasure(dim=dim, density=density, symmetric=True,
                             lattice=Lattice.standard(dim), name=f"direction({coef})")
