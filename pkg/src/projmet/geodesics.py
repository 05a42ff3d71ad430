"""Curve lengths, induced distances, and geodesic shooting.

Lengths integrate F along polylines with per-segment Gauss-Legendre.
The induced distance descends over interior polyline vertices with the
analytic first variation (assembled from FD partials of F), and the
shooting integrator runs RK4 on the second-order system of the energy
1/2 F^2 -- whose extremals are the F-geodesics in constant-speed
parametrization, so straight-line metrics must return straight orbits.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .metric_core import MetricError, OneDensity, partials


@lru_cache(maxsize=8)
def _gl01(n: int):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w


@dataclass(frozen=True, eq=False)
class Polyline:
    points: np.ndarray  # (m, n)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise MetricError("a polyline needs at least two points")
        if np.any(np.linalg.norm(np.diff(pts, axis=0), axis=1) < 1e-14):
            raise MetricError("consecutive polyline points must be distinct")

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def resample(self, k: int) -> "Polyline":
        """k points, uniform in Euclidean arclength."""
        if k < 2:
            raise MetricError("need at least two points")
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        t = np.linspace(0.0, s[-1], k)
        out = np.stack([np.interp(t, s, self.points[:, i]) for i in range(self.points.shape[1])], axis=1)
        return Polyline(out)


def curve_length(F: OneDensity, points, nodes_per_seg: int = 8) -> float:
    """int F(gamma, gamma') dt over the polyline, Gauss-Legendre per segment."""
    pts = points.points if isinstance(points, Polyline) else np.asarray(points, dtype=float)
    s, w = _gl01(nodes_per_seg)
    a, b = pts[:-1], pts[1:]
    xs = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    vs = np.broadcast_to((b - a)[:, None, :], xs.shape)
    return float(np.sum(F(xs, vs) @ w))


def chord_deviation(points) -> float:
    """Max Euclidean distance from the points to the chord through the ends."""
    pts = points.points if isinstance(points, Polyline) else np.asarray(points, dtype=float)
    w = pts[-1] - pts[0]
    d = pts - pts[0]
    wn = np.linalg.norm(w)
    if wn < 1e-14:
        return float(np.max(np.linalg.norm(d, axis=1)))
    what = w / wn
    perp = d - (d @ what)[:, None] * what
    return float(np.max(np.linalg.norm(perp, axis=1)))


@dataclass(frozen=True, eq=False)
class InducedDistance:
    value: float
    polyline: Polyline
    iterations: int
    grad_norm: float


def induced_distance(
    F: OneDensity,
    x,
    y,
    k_points: int = 8,
    iters: int = 200,
    nodes_per_seg: int = 8,
    gtol: float = 1e-10,
) -> InducedDistance:
    """Shortest polyline length from x to y, by monotone first-order descent.

    Initialized on the straight segment; interior vertices move against
    the analytic gradient (endpoint variation of the two adjacent
    segments) with Armijo backtracking, so the reported value never
    exceeds the straight-line length.
    """
    if F.smoothness == "C0":
        raise MetricError("induced_distance needs derivatives; C0 metrics expose distances only")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.linalg.norm(y - x) < 1e-14:
        line = Polyline(np.stack([x, x + np.full_like(x, 1e-9)]))
        return InducedDistance(0.0, line, 0, 0.0)
    if k_points < 3:
        raise MetricError("need at least one interior vertex")

    s, w = _gl01(nodes_per_seg)
    pts = x[None, :] + np.linspace(0.0, 1.0, k_points)[:, None] * (y - x)[None, :]
    n = pts.shape[1]

    def length(p):
        return curve_length(F, p, nodes_per_seg)

    def grad(p):
        a, b = p[:-1], p[1:]
        xs = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        vs = np.broadcast_to((b - a)[:, None, :], xs.shape)
        pr = partials(F, xs.reshape(-1, n), vs.reshape(-1, n), order="x+v")
        gx = pr.grad_x.reshape(len(a), -1, n)
        gv = pr.grad_v.reshape(len(a), -1, n)
        # d len / d (segment end) and d len / d (segment start)
        d_end = np.einsum("q,sqn->sn", w * s, gx) + np.einsum("q,sqn->sn", w, gv)
        d_start = np.einsum("q,sqn->sn", w * (1 - s), gx) - np.einsum("q,sqn->sn", w, gv)
        return d_end[:-1] + d_start[1:]  # interior vertices only

    cur = length(pts)
    gnorm = np.inf
    it = 0
    for it in range(1, iters + 1):
        g = grad(pts)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= gtol * (1.0 + abs(cur)):
            break
        t = min(1.0, 0.5 * cur / (gnorm * gnorm + 1e-300))
        accepted = False
        for _ in range(40):
            trial = pts.copy()
            trial[1:-1] -= t * g
            val = length(trial)
            if val <= cur - 1e-4 * t * gnorm * gnorm:
                pts, cur, accepted = trial, val, True
                break
            t *= 0.5
        if not accepted:
            break
    return InducedDistance(float(cur), Polyline(pts), it, gnorm)


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    times: np.ndarray
    points: np.ndarray      # (steps+1, n)
    velocities: np.ndarray  # (steps+1, n)

    @property
    def polyline(self) -> Polyline:
        return Polyline(self.points)


def geodesic_shoot(F: OneDensity, x0, v0, T: float = 1.0, steps: int = 1000) -> GeodesicPath:
    """RK4 orbit of the geodesic equation in energy form.

    With E = 1/2 F^2 the Euler-Lagrange system reads
    E_vv(x, v) a = E_x(x, v) - E_vx(x, v) v, and E_vv is the fundamental
    tensor (positive definite for a strongly convex metric).  All blocks
    assemble from partials of F itself:
      E_vv = F_v F_v^T + F F_vv,   E_x = F F_x,
      (E_vx v)_i = F_v[i] (F_x . v) + F (M^T v)_i  with M = F_xv.
    """
    if F.smoothness == "C0":
        raise MetricError("geodesic shooting needs derivatives; the metric is C0")
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if steps < 1 or T <= 0:
        raise MetricError("need steps >= 1 and T > 0")

    def accel(x, v):
        p = partials(F, x, v, order="all")
        A = np.outer(p.grad_v, p.grad_v) + p.value * p.hess_vv
        A = 0.5 * (A + A.T)
        mix = p.grad_v * (p.grad_x @ v) + p.value * (p.hess_xv.T @ v)
        rhs = p.value * p.grad_x - mix
        try:
            return np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError as e:
            raise MetricError("degenerate fundamental tensor along the orbit") from e

    h = T / steps
    xs = np.empty((steps + 1, len(x0)))
    vs = np.empty_like(xs)
    xs[0], vs[0] = x0, v0
    x, v = x0.copy(), v0.copy()
    for k in range(steps):
        a1 = accel(x, v)
        k1x, k1v = v, a1
        a2 = accel(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k2x, k2v = v + 0.5 * h * k1v, a2
        a3 = accel(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k3x, k3v = v + 0.5 * h * k2v, a3
        a4 = accel(x + h * k3x, v + h * k3v)
        k4x, k4v = v + h * k3v, a4
        x = x + (h / 6) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (h / 6) * (k1v + 2 * k2v + 2 * k3v + k4v)
        xs[k + 1], vs[k + 1] = x, v
    return GeodesicPath(times=np.linspace(0.0, T, steps + 1), points=xs, velocities=vs)
