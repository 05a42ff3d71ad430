"""Convex bodies as sampled support functions: duals, sections, translates.

A body is its support function h on a fixed sphere grid (uniform angles in
2D, a theta x phi product grid in 3D).  Every operation reduces to support
arithmetic or a small maximization over a spline-refined grid:

    gauge_P(d) = max_u (d . u) / h_P(u)      (= support of the polar body)

The maximization is evaluated on a fine grid with a separable parabolic
peak correction; that combination keeps the polar involution error a few
orders below the grid spacing.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .sampling import rng

FINE_MULT_2D = 8
FINE_MULT_3D = 4
_CHUNK = 256


class ConvexError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SphereGrid:
    dim: int
    thetas: np.ndarray
    phis: Optional[np.ndarray] = None  # 3D only: polar-angle midpoints in (0, pi)

    @staticmethod
    def circle(n: int = 256) -> "SphereGrid":
        return SphereGrid(2, np.linspace(0.0, 2 * np.pi, n, endpoint=False))

    @staticmethod
    def sphere(n_theta: int = 64, n_phi: int = 32) -> "SphereGrid":
        th = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
        ph = (np.arange(n_phi) + 0.5) * np.pi / n_phi
        return SphereGrid(3, th, ph)

    @property
    def shape(self):
        return (len(self.thetas),) if self.dim == 2 else (len(self.thetas), len(self.phis))

    @property
    def dirs(self) -> np.ndarray:
        """Unit directions, flattened to (K, dim)."""
        if self.dim == 2:
            return np.stack([np.cos(self.thetas), np.sin(self.thetas)], axis=1)
        th = self.thetas[:, None]
        ph = self.phis[None, :]
        d = np.stack(
            [np.sin(ph) * np.cos(th) + 0 * ph, np.sin(ph) * np.sin(th), np.cos(ph) + 0 * th],
            axis=-1,
        )
        return d.reshape(-1, 3)

    def compatible(self, other: "SphereGrid") -> bool:
        if self.dim != other.dim or self.shape != other.shape:
            return False
        if not np.allclose(self.thetas, other.thetas):
            return False
        if self.dim == 3 and not np.allclose(self.phis, other.phis):
            return False
        return True


def default_grid(dim: int) -> SphereGrid:
    if dim == 2:
        return SphereGrid.circle()
    if dim == 3:
        return SphereGrid.sphere()
    raise ConvexError(f"only dimensions 2 and 3 are supported, got {dim}")


@dataclass(frozen=True, eq=False)
class ConvexBody:
    grid: SphereGrid
    support: np.ndarray  # shape grid.shape

    def __post_init__(self):
        h = np.asarray(self.support, dtype=float)
        if h.shape != self.grid.shape:
            raise ConvexError(f"support shape {h.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "support", h)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def min_support(self) -> float:
        return float(np.min(self.support))


@dataclass(frozen=True, eq=False)
class LinearSubspace:
    ambient: int
    basis: np.ndarray  # (ambient, k), orthonormal columns

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[0] != self.ambient:
            raise ConvexError("subspace basis has wrong shape")
        gram = b.T @ b
        if np.max(np.abs(gram - np.eye(b.shape[1]))) > 1e-12:
            raise ConvexError("subspace basis is not orthonormal")
        object.__setattr__(self, "basis", b)

    @staticmethod
    def from_spanning(vectors: Sequence) -> "LinearSubspace":
        m = np.stack([np.asarray(v, dtype=float) for v in vectors], axis=1)
        q, r = np.linalg.qr(m)
        if np.min(np.abs(np.diag(r))) < 1e-10 * max(1.0, np.max(np.abs(m))):
            raise ConvexError("spanning vectors are linearly dependent")
        # fix signs so the first nonzero entry of each column is positive
        signs = np.sign(np.diag(r))
        return LinearSubspace(m.shape[0], q * signs)

    @property
    def k(self) -> int:
        return self.basis.shape[1]


# --- interpolation ----------------------------------------------------------


def _circle_spline(grid: SphereGrid, h: np.ndarray) -> CubicSpline:
    th = np.append(grid.thetas, grid.thetas[0] + 2 * np.pi)
    return CubicSpline(th, np.append(h, h[0]), bc_type="periodic")


def _sphere_spline(grid: SphereGrid, H: np.ndarray) -> RectBivariateSpline:
    """Bicubic spline with pole reflection: h(theta, -phi) = h(theta+pi, phi).

    The raw grid is reflected through both poles first and wrapped in theta
    afterwards; padding the already-wrapped array would corrupt the rows
    next to the poles.
    """
    th, ph = grid.thetas, grid.phis
    nt = len(th)
    k = 4
    Hs = np.roll(H, nt // 2, axis=0)
    lo = Hs[:, :k][:, ::-1]
    hi = Hs[:, -k:][:, ::-1]
    Hf = np.concatenate([lo, H, hi], axis=1)
    ph_p = np.concatenate([-ph[:k][::-1], ph, (np.pi - ph[-k:])[::-1] + np.pi])
    Hp = np.concatenate([Hf[-k:], Hf, Hf[:k]], axis=0)
    th_p = np.concatenate([th[-k:] - 2 * np.pi, th, th[:k] + 2 * np.pi])
    return RectBivariateSpline(th_p, ph_p, Hp, kx=3, ky=3, s=0)


def support_at(body: ConvexBody, dirs: np.ndarray) -> np.ndarray:
    """Interpolated support values at arbitrary unit directions."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    if body.dim == 2:
        spl = _circle_spline(body.grid, body.support)
        th = np.arctan2(dirs[:, 1], dirs[:, 0]) % (2 * np.pi)
        return spl(th)
    spl = _sphere_spline(body.grid, body.support)
    th = np.arctan2(dirs[:, 1], dirs[:, 0]) % (2 * np.pi)
    ph = np.arccos(np.clip(dirs[:, 2], -1.0, 1.0))
    return spl(th, ph, grid=False)


def _fine_field(body: ConvexBody):
    """(fine_dirs (M, n), fine_h (M,), fine_shape) for the max searches."""
    if body.dim == 2:
        m = FINE_MULT_2D * len(body.grid.thetas)
        th = np.linspace(0.0, 2 * np.pi, m, endpoint=False)
        hf = _circle_spline(body.grid, body.support)(th)
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        return dirs, hf, (m,)
    mt = FINE_MULT_3D * len(body.grid.thetas)
    mp = FINE_MULT_3D * len(body.grid.phis)
    th = np.linspace(0.0, 2 * np.pi, mt, endpoint=False)
    ph = (np.arange(mp) + 0.5) * np.pi / mp
    spl = _sphere_spline(body.grid, body.support)
    hf = spl(th, ph, grid=True)
    d = np.stack(
        [
            np.sin(ph)[None, :] * np.cos(th)[:, None],
            np.sin(ph)[None, :] * np.sin(th)[:, None],
            np.broadcast_to(np.cos(ph)[None, :], (mt, mp)),
        ],
        axis=-1,
    )
    return d.reshape(-1, 3), hf.reshape(-1), (mt, mp)


def _parabolic_peak(f0, fp, fm):
    """Peak value of the parabola through three equispaced samples."""
    curv = 2 * f0 - fp - fm
    corr = np.where(curv > 1e-300, (fp - fm) ** 2 / (8 * np.maximum(curv, 1e-300)), 0.0)
    return f0 + np.where(curv > 0, corr, 0.0)


def _max_with_polish(ratio: np.ndarray, fine_shape) -> np.ndarray:
    """Row-wise max over the fine grid with separable parabolic correction."""
    if len(fine_shape) == 1:
        m = fine_shape[0]
        idx = np.argmax(ratio, axis=1)
        rows = np.arange(ratio.shape[0])
        f0 = ratio[rows, idx]
        fp = ratio[rows, (idx + 1) % m]
        fm = ratio[rows, (idx - 1) % m]
        return _parabolic_peak(f0, fp, fm)
    mt, mp = fine_shape
    r = ratio.reshape(ratio.shape[0], mt, mp)
    flat = np.argmax(ratio, axis=1)
    it, ip = np.unravel_index(flat, (mt, mp))
    rows = np.arange(ratio.shape[0])
    f0 = r[rows, it, ip]
    tp = r[rows, (it + 1) % mt, ip]
    tm = r[rows, (it - 1) % mt, ip]
    out = _parabolic_peak(f0, tp, tm)
    interior = (ip > 0) & (ip < mp - 1)
    if np.any(interior):
        ri = rows[interior]
        pp = r[ri, it[interior], ip[interior] + 1]
        pm = r[ri, it[interior], ip[interior] - 1]
        # sum the two one-axis corrections on top of the raw peak
        out[interior] += _parabolic_peak(f0[interior], pp, pm) - f0[interior]
    return out


def gauge_eval(body: ConvexBody, dirs: np.ndarray) -> np.ndarray:
    """gauge_P(d) = max_u (d.u)/h_P(u); equals the polar body's support."""
    if body.min_support <= 0:
        raise ConvexError("origin is not interior (min support <= 0)")
    fine_dirs, fine_h, fine_shape = _fine_field(body)
    if np.min(fine_h) <= 0:
        raise ConvexError("interpolated support dips below zero")
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    out = np.empty(len(dirs))
    inv_h = 1.0 / fine_h
    for a in range(0, len(dirs), _CHUNK):
        block = dirs[a : a + _CHUNK]
        ratio = (block @ fine_dirs.T) * inv_h[None, :]
        out[a : a + _CHUNK] = _max_with_polish(ratio, fine_shape)
    return out


# --- operations --------------------------------------------------------------


def body_from_norm(N, x=None, grid: Optional[SphereGrid] = None) -> ConvexBody:
    """Unit ball {v : N(x, v) <= 1} of a Minkowski norm as a support body."""
    dim = N.dim
    g = grid or default_grid(dim)
    if x is None:
        x = np.zeros(dim)
    x = np.asarray(x, dtype=float)

    mult = FINE_MULT_2D if dim == 2 else FINE_MULT_3D
    if dim == 2:
        m = mult * len(g.thetas)
        th = np.linspace(0.0, 2 * np.pi, m, endpoint=False)
        fine = np.stack([np.cos(th), np.sin(th)], axis=1)
        shape = (m,)
    else:
        mt, mp = mult * len(g.thetas), mult * len(g.phis)
        th = np.linspace(0.0, 2 * np.pi, mt, endpoint=False)
        ph = (np.arange(mp) + 0.5) * np.pi / mp
        fine = np.stack(
            [
                (np.sin(ph)[None, :] * np.cos(th)[:, None]).ravel(),
                (np.sin(ph)[None, :] * np.sin(th)[:, None]).ravel(),
                np.broadcast_to(np.cos(ph)[None, :], (mt, mp)).ravel(),
            ],
            axis=1,
        )
        shape = (mt, mp)
    gauge = np.asarray(N(x, fine), dtype=float)
    if np.min(gauge) <= 0:
        raise ConvexError("norm is not positive on sphere samples")

    dirs = g.dirs
    out = np.empty(len(dirs))
    inv = 1.0 / gauge
    for a in range(0, len(dirs), _CHUNK):
        block = dirs[a : a + _CHUNK]
        ratio = (block @ fine.T) * inv[None, :]
        out[a : a + _CHUNK] = _max_with_polish(ratio, shape)
    return ConvexBody(g, out.reshape(g.shape))


def polar_dual(P: ConvexBody) -> ConvexBody:
    """Support of the polar body on the same grid."""
    h = gauge_eval(P, P.grid.dirs)
    return ConvexBody(P.grid, h.reshape(P.grid.shape))


def translate_body(P: ConvexBody, t) -> ConvexBody:
    """Exact support arithmetic: h_{P+t}(u) = h_P(u) + u.t."""
    t = np.asarray(t, dtype=float)
    shift = (P.grid.dirs @ t).reshape(P.grid.shape)
    return ConvexBody(P.grid, P.support + shift)


def scale_body(P: ConvexBody, s: float) -> ConvexBody:
    if s <= 0:
        raise ConvexError("scale must be positive")
    return ConvexBody(P.grid, P.support * s)


def section(P: ConvexBody, Y: LinearSubspace, out_grid: Optional[SphereGrid] = None) -> ConvexBody:
    """The slice P intersect Y as a body in Y's coordinates.

    Radial functions restrict to subspaces, so the slice boundary is
    dir/gauge_P(dir) for in-plane directions; the support is then one more
    polished maximization over those boundary points.
    """
    if Y.ambient != P.dim or Y.k != 2:
        raise ConvexError("section expects a 2D subspace of the body's space")
    g = out_grid or SphereGrid.circle()
    m = FINE_MULT_2D * len(g.thetas)
    th = np.linspace(0.0, 2 * np.pi, m, endpoint=False)
    circ = np.stack([np.cos(th), np.sin(th)], axis=1)
    ambient_dirs = circ @ Y.basis.T
    gauge = gauge_eval(P, ambient_dirs)
    pts = circ / gauge[:, None]  # boundary of the slice, in plane coordinates

    dirs = g.dirs
    ratio = dirs @ pts.T
    h = _max_with_polish(ratio, (m,))
    return ConvexBody(g, h)


def dual_restriction(P: ConvexBody, Y: LinearSubspace, out_grid: Optional[SphereGrid] = None) -> ConvexBody:
    """Restriction of the polar body's functionals to Y: the shadow of the
    dual body on Y, computed directly from the gauge."""
    if Y.ambient != P.dim or Y.k != 2:
        raise ConvexError("dual_restriction expects a 2D subspace")
    g = out_grid or SphereGrid.circle()
    h = gauge_eval(P, g.dirs @ Y.basis.T)
    return ConvexBody(g, h)


def are_translates(P: ConvexBody, Q: ConvexBody, tol: float = 1e-6) -> Optional[np.ndarray]:
    """Fit h_Q - h_P ~ u.t by least squares; the translation if it fits."""
    if not P.grid.compatible(Q.grid):
        raise ConvexError("bodies live on different grids")
    U = P.grid.dirs
    delta = (Q.support - P.support).reshape(-1)
    t, *_ = np.linalg.lstsq(U, delta, rcond=None)
    resid = np.max(np.abs(delta - U @ t))
    return t if resid <= tol else None


def translate_fit_residual(P: ConvexBody, Q: ConvexBody):
    U = P.grid.dirs
    delta = (Q.support - P.support).reshape(-1)
    t, *_ = np.linalg.lstsq(U, delta, rcond=None)
    return t, float(np.max(np.abs(delta - U @ t)))


def strict_convexity_margin(P: ConvexBody, n_circles: int = 8, nodes: int = 512, seed: int = 0) -> float:
    """min(h'' + h) over great circles; positive for strictly convex bodies."""
    if P.dim == 2:
        h = P.support
        dt = 2 * np.pi / len(h)
        hpp = (np.roll(h, -1) - 2 * h + np.roll(h, 1)) / dt**2
        return float(np.min(hpp + h))
    spl = _sphere_spline(P.grid, P.support)
    g = rng(seed)
    worst = np.inf
    ts = np.linspace(0.0, 2 * np.pi, nodes, endpoint=False)
    dt = ts[1] - ts[0]
    for _ in range(n_circles):
        q, _ = np.linalg.qr(g.normal(size=(3, 2)))
        circle = np.outer(np.cos(ts), q[:, 0]) + np.outer(np.sin(ts), q[:, 1])
        th = np.arctan2(circle[:, 1], circle[:, 0]) % (2 * np.pi)
        ph = np.arccos(np.clip(circle[:, 2], -1.0, 1.0))
        h = spl(th, ph, grid=False)
        hpp = (np.roll(h, -1) - 2 * h + np.roll(h, 1)) / dt**2
        worst = min(worst, float(np.min(hpp + h)))
    return worst


@dataclass(frozen=True, eq=False)
class GroemerReport:
    plane_residuals: np.ndarray
    plane_translations: list
    planes_pass: np.ndarray
    all_planes_pass: bool
    dual_translation: Optional[np.ndarray]
    dual_residual: float
    strict_margin: float

    @property
    def consistent(self) -> bool:
        """Hypotheses hold iff conclusion holds (the theorem, sampled)."""
        return self.all_planes_pass == (self.dual_translation is not None)


def groemer_experiment(
    P: ConvexBody,
    Q: ConvexBody,
    W: LinearSubspace,
    n_planes: int = 6,
    tol: float = 1e-3,
    margin: float = 1e-6,
) -> GroemerReport:
    """Per-plane translate tests of section-duals against the global dual pair.

    W is a line; the sampled hyperplanes all contain it.
    """
    if P.dim != 3 or W.ambient != 3 or W.k != 1:
        raise ConvexError("experiment runs in three dimensions around a line")
    P_dual = polar_dual(P)
    strict = strict_convexity_margin(P_dual)
    if strict <= margin:
        raise ConvexError(f"dual body fails strict-convexity sampling (margin {strict:.3g})")

    w = W.basis[:, 0]
    # orthonormal completion of the line
    q, _ = np.linalg.qr(np.stack([w, *np.eye(3)], axis=1))
    a, b = q[:, 1], q[:, 2]

    residuals, translations, passes = [], [], []
    for k in range(n_planes):
        alpha = np.pi * k / n_planes
        Y = LinearSubspace.from_spanning([w, np.cos(alpha) * a + np.sin(alpha) * b])
        sp = polar_dual(section(P, Y))
        sq = polar_dual(section(Q, Y))
        t, resid = translate_fit_residual(sp, sq)
        residuals.append(resid)
        translations.append(t)
        passes.append(resid <= tol)

    Q_dual = polar_dual(Q)
    t3, resid3 = translate_fit_residual(P_dual, Q_dual)
    ok3 = resid3 <= tol
    return GroemerReport(
        plane_residuals=np.asarray(residuals),
        plane_translations=translations,
        planes_pass=np.asarray(passes),
        all_planes_pass=bool(np.all(passes)),
        dual_translation=t3 if ok3 else None,
        dual_residual=resid3,
        strict_margin=strict,
    )


def random_smooth_body(dim: int, seed: int = 0, amp: float = 0.12) -> ConvexBody:
    """Smooth, strictly convex wobble of the unit ball (for experiments)."""
    g = rng(seed)
    grid = default_grid(dim)
    for _ in range(64):
        if dim == 2:
            th = grid.thetas
            h = np.ones_like(th)
            for k in (2, 3, 4):
                ak, bk = g.uniform(-amp, amp, size=2) / (k * k - 1)
                h = h + ak * np.cos(k * th) + bk * np.sin(k * th)
            body = ConvexBody(grid, h)
        else:
            u = grid.dirs
            c = g.uniform(-amp, amp, size=6)
            h = (
                1.0
                + c[0] * u[:, 0] * u[:, 1]
                + c[1] * u[:, 1] * u[:, 2]
                + c[2] * u[:, 0] * u[:, 2]
                + c[3] * (u[:, 0] ** 2 - u[:, 1] ** 2)
                + c[4] * (u[:, 1] ** 2 - u[:, 2] ** 2)
                + c[5] * u[:, 0] * u[:, 1] * u[:, 2]
            )
            body = ConvexBody(grid, h.reshape(grid.shape))
        if body.min_support > 0.3 and strict_convexity_margin(body, seed=seed) > 0.05:
            return body
    raise ConvexError("could not draw a strictly convex body; lower the amplitude")


def ellipsoid_body(diag: Sequence[float], grid: Optional[SphereGrid] = None) -> ConvexBody:
    """{v : sum d_i v_i^2 <= 1}; closed-form support sqrt(u' D^-1 u)."""
    d = np.asarray(diag, dtype=float)
    if np.any(d <= 0):
        raise ConvexError("ellipsoid coefficients must be positive")
    g = grid or default_grid(len(d))
    u = g.dirs
    h = np.sqrt(np.einsum("ki,i,ki->k", u, 1.0 / d, u))
    return ConvexBody(g, h.reshape(g.shape))


def ball_body(radius: float = 1.0, dim: int = 2, grid: Optional[SphereGrid] = None) -> ConvexBody:
    g = grid or default_grid(dim)
    return ConvexBody(g, np.full(g.shape, float(radius)))


def rotate_body(P: ConvexBody, R: np.ndarray) -> ConvexBody:
    """Resample the support of R(P): h_{RP}(u) = h_P(R^T u)."""
    R = np.asarray(R, dtype=float)
    h = support_at(P, P.grid.dirs @ R)  # rows are R^T u
    return ConvexBody(P.grid, h.reshape(P.grid.shape))


# --- serialization -----------------------------------------------------------


def save_body(P: ConvexBody, path) -> None:
    """Columnar text: one line per grid direction (components, support)."""
    lines = [f"# convex body dim={P.dim}"]
    if P.dim == 2:
        lines.append(f"# grid circle {len(P.grid.thetas)}")
    else:
        lines.append(f"# grid sphere {len(P.grid.thetas)} {len(P.grid.phis)}")
    h = P.support.reshape(-1)
    for u, val in zip(P.grid.dirs, h):
        comps = " ".join(f"{c:.17g}" for c in u)
        lines.append(f"{comps} {val:.17g}")
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def load_body(path) -> ConvexBody:
    if hasattr(path, "read"):
        text = path.read()
    else:
        with open(path) as fh:
            text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 3 or not lines[0].startswith("# convex body"):
        raise ConvexError("not a convex body file")
    toks = lines[1].split()
    if toks[2] == "circle":
        grid = SphereGrid.circle(int(toks[3]))
    elif toks[2] == "sphere":
        grid = SphereGrid.sphere(int(toks[3]), int(toks[4]))
    else:
        raise ConvexError(f"unknown grid kind {toks[2]!r}")
    vals = []
    for ln in lines[2:]:
        vals.append(float(ln.split()[-1]))
    h = np.asarray(vals)
    if h.size != int(np.prod(grid.shape)):
        raise ConvexError("support column does not match the declared grid")
    return ConvexBody(grid, h.reshape(grid.shape))
