"""Lagrangian abstraction for Finsler metrics and 1-densities.

A 1-density is an evaluable map L(x, v), positively 1-homogeneous in v,
possibly asymmetric and possibly signed.  A Finsler metric is the positive,
convex special case.  Everything downstream (projectivity residuals,
Crofton constructions, decompositions) consumes these two types.

Evaluation functions are vectorized: ``fn(x, v)`` takes broadcastable
arrays of shape (..., n) and returns shape (...).  That contract is what
keeps the finite-difference and quadrature layers fast.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .sampling import direction_grid, rng, unit_vectors

# Evaluation below this v-norm is refused: the objects are C^2 only away
# from the zero section and every reported quantity rescales exactly by
# homogeneity, so nothing is lost.
ZERO_SECTION_RADIUS = 1e-3

EvalFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class MetricError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Lattice:
    """Periodicity lattice; the columns of ``basis`` are the generators."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise MetricError(f"lattice basis must be square, got {b.shape}")
        if abs(np.linalg.det(b)) < 1e-12:
            raise MetricError("lattice basis is singular")
        object.__setattr__(self, "basis", b)

    @staticmethod
    def standard(dim: int) -> "Lattice":
        return Lattice(np.eye(dim))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def fractional(self, x: np.ndarray) -> np.ndarray:
        """Coordinates of x in the generator basis (batched)."""
        return np.asarray(x, dtype=float) @ np.linalg.inv(self.basis).T

    def contains(self, vec: np.ndarray, tol: float = 1e-9) -> bool:
        frac = self.fractional(np.asarray(vec, dtype=float))
        return bool(np.all(np.abs(frac - np.round(frac)) <= tol))


@dataclass(frozen=True, eq=False)
class AffineMap:
    linear: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.linear, dtype=float)
        b = np.asarray(self.offset, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape != (a.shape[0],):
            raise MetricError("affine map needs an n*n matrix and an n-vector")
        if abs(np.linalg.det(a)) < 1e-12:
            raise MetricError("affine map is not invertible")
        object.__setattr__(self, "linear", a)
        object.__setattr__(self, "offset", b)

    @staticmethod
    def identity(dim: int) -> "AffineMap":
        return AffineMap(np.eye(dim), np.zeros(dim))

    @staticmethod
    def translation(t: Sequence[float]) -> "AffineMap":
        t = np.asarray(t, dtype=float)
        return AffineMap(np.eye(len(t)), t)

    @property
    def dim(self) -> int:
        return self.linear.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.linear.T + self.offset

    def push(self, v: np.ndarray) -> np.ndarray:
        """Apply the linear part only (tangent vectors)."""
        return np.asarray(v, dtype=float) @ self.linear.T

    def inverse(self) -> "AffineMap":
        inv = np.linalg.inv(self.linear)
        return AffineMap(inv, -inv @ self.offset)

    def compose(self, other: "AffineMap") -> "AffineMap":
        """self after other: (self.compose(other))(x) = self(other(x))."""
        return AffineMap(self.linear @ other.linear, self.linear @ other.offset + self.offset)


@dataclass(frozen=True, eq=False)
class OneDensity:
    """A 1-homogeneous Lagrangian L(x, v); possibly signed or asymmetric."""

    dim: int
    fn: EvalFn
    smoothness: str = "C2"  # "C2" or "C0"
    lattice: Optional[Lattice] = None
    fd_step: float = 1e-4
    name: str = ""

    def __post_init__(self):
        if self.dim < 2:
            raise MetricError("dimension must be at least 2")
        if self.smoothness not in ("C0", "C2"):
            raise MetricError(f"unknown smoothness class {self.smoothness!r}")

    def __call__(self, x, v) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return np.asarray(self.fn(x, v), dtype=float)

    def with_lattice(self, lattice: Optional[Lattice]) -> "OneDensity":
        return replace(self, lattice=lattice)


@dataclass(frozen=True, eq=False)
class FinslerMetric(OneDensity):
    """Positive, fiberwise-convex 1-density."""

    reversible: bool = False


@dataclass(frozen=True, eq=False)
class Partials:
    """Finite-difference jet of a 1-density at (x, v), batched."""

    value: np.ndarray
    grad_x: Optional[np.ndarray] = None
    grad_v: Optional[np.ndarray] = None
    hess_xv: Optional[np.ndarray] = None  # [..., i, j] = d2L/dx_i dv_j
    hess_vv: Optional[np.ndarray] = None


def partials(
    L: OneDensity,
    x,
    v,
    order: str = "all",
    fd_step: Optional[float] = None,
) -> Partials:
    """Central-difference partials, batched over leading axes.

    v is normalized to the unit sphere before differencing (legal by
    homogeneity: the pieces rescale by their exact degrees), so the step
    is uniform and the zero section stays at arm's length.  order selects
    a subset: any of "x", "v", "xv", "vv" joined by "+", or "all".
    """
    if L.smoothness == "C0":
        raise MetricError("cannot differentiate a C0 density; distance-level access only")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = L.dim
    speed = np.linalg.norm(v, axis=-1)
    if np.any(speed < ZERO_SECTION_RADIUS):
        raise MetricError(f"|v| below the zero-section radius {ZERO_SECTION_RADIUS}")
    vn = v / speed[..., None]

    want = {"x", "v", "xv", "vv"} if order == "all" else set(order.split("+"))
    bad = want - {"x", "v", "xv", "vv"}
    if bad:
        raise MetricError(f"unknown partial selector(s) {sorted(bad)}")

    step = fd_step if fd_step is not None else L.fd_step
    h = step * np.maximum(1.0, np.linalg.norm(x, axis=-1))  # shape (...)
    hc = h[..., None]  # broadcast against coordinates

    eye = np.eye(n)
    # One stacked evaluation: assemble every displaced (x, v) pair, call
    # fn once, then slice.  Quadrature-backed metrics amortize their rule
    # construction this way.
    xs, vs = [(x, vn)], None
    pieces = [("value", None)]

    def add(tag, xx, vv):
        xs.append((xx, vv))
        pieces.append((tag, len(xs) - 1))

    if "x" in want or "xv" in want:
        for i in range(n):
            add(("x+", i), x + hc * eye[i], vn)
            add(("x-", i), x - hc * eye[i], vn)
    if "v" in want or "vv" in want:
        for j in range(n):
            add(("v+", j), x, vn + hc * eye[j])
            add(("v-", j), x, vn - hc * eye[j])
    if "xv" in want:
        for i in range(n):
            for j in range(n):
                add(("xv++", i, j), x + hc * eye[i], vn + hc * eye[j])
                add(("xv+-", i, j), x + hc * eye[i], vn - hc * eye[j])
                add(("xv-+", i, j), x - hc * eye[i], vn + hc * eye[j])
                add(("xv--", i, j), x - hc * eye[i], vn - hc * eye[j])
    if "vv" in want:
        for i in range(n):
            for j in range(i + 1, n):
                add(("vv++", i, j), x, vn + hc * (eye[i] + eye[j]))
                add(("vv+-", i, j), x, vn + hc * (eye[i] - eye[j]))
                add(("vv-+", i, j), x, vn - hc * (eye[i] - eye[j]))
                add(("vv--", i, j), x, vn - hc * (eye[i] + eye[j]))

    batch = np.broadcast_shapes(x.shape[:-1], vn.shape[:-1])
    stack_x = np.stack([np.broadcast_to(a, batch + (n,)) for a, _ in xs])
    stack_v = np.stack([np.broadcast_to(b, batch + (n,)) for _, b in xs])
    vals = L(stack_x, stack_v)

    out = {}
    for k, (tag, idx) in enumerate(pieces):
        out[tag] = vals[k]
    value = out["value"]

    grad_x = grad_v = hess_xv = hess_vv = None
    if "x" in want:
        grad_x = np.stack(
            [(out[("x+", i)] - out[("x-", i)]) / (2 * h) for i in range(n)], axis=-1
        )
    if "v" in want:
        grad_v = np.stack(
            [(out[("v+", j)] - out[("v-", j)]) / (2 * h) for j in range(n)], axis=-1
        )
    if "xv" in want:
        hess_xv = np.empty(batch + (n, n))
        for i in range(n):
            for j in range(n):
                hess_xv[..., i, j] = (
                    out[("xv++", i, j)]
                    - out[("xv+-", i, j)]
                    - out[("xv-+", i, j)]
                    + out[("xv--", i, j)]
                ) / (4 * h * h)
    if "vv" in want:
        hess_vv = np.empty(batch + (n, n))
        for i in range(n):
            hess_vv[..., i, i] = (out[("v+", i)] - 2 * value + out[("v-", i)]) / (h * h)
        for i in range(n):
            for j in range(i + 1, n):
                hij = (
                    out[("vv++", i, j)]
                    - out[("vv+-", i, j)]
                    - out[("vv-+", i, j)]
                    + out[("vv--", i, j)]
                ) / (4 * h * h)
                hess_vv[..., i, j] = hij
                hess_vv[..., j, i] = hij

    # undo the v-normalization: degrees are 1 (value, grad_x), 0 (grad_v,
    # hess_xv) and -1 (hess_vv)
    s = speed
    value = value * s
    if grad_x is not None:
        grad_x = grad_x * s[..., None]
    if hess_vv is not None:
        hess_vv = hess_vv / s[..., None, None]
    return Partials(value=value, grad_x=grad_x, grad_v=grad_v, hess_xv=hess_xv, hess_vv=hess_vv)


# ---------------------------------------------------------------------------
# catalog


def _ellipse_matrix(dim: int, params: dict) -> np.ndarray:
    if "A" in params:
        A = np.asarray(params["A"], dtype=float)
    elif "diag" in params:
        A = np.diag(np.asarray(params["diag"], dtype=float))
    else:
        A = np.diag(1.0 + np.arange(dim, dtype=float))  # diag(1, 2, ..., n)
    if A.shape != (dim, dim):
        raise MetricError(f"ellipse matrix has shape {A.shape}, expected {(dim, dim)}")
    A = 0.5 * (A + A.T)
    if np.min(np.linalg.eigvalsh(A)) <= 0:
        raise MetricError("ellipse matrix must be positive definite")
    return A


def randers_potential(dim: int = 2, amp: float = 0.05) -> Callable[[np.ndarray], np.ndarray]:
    """The catalog potential: amp * prod_i sin(2 pi x_i).  Its differential
    drives the randers_exact entry; tests recover it."""

    def f(x):
        x = np.asarray(x, dtype=float)
        return amp * np.prod(np.sin(2 * np.pi * x), axis=-1)

    return f


def randers_potential_gradient(dim: int = 2, amp: float = 0.05):
    def df(x):
        x = np.asarray(x, dtype=float)
        s = np.sin(2 * np.pi * x)
        c = np.cos(2 * np.pi * x)
        out = np.empty_like(x)
        for i in range(dim):
            others = np.prod(np.delete(s, i, axis=-1), axis=-1)
            out[..., i] = amp * 2 * np.pi * c[..., i] * others
        return out

    return df


def catalog_metric(name: str, dim: int = 2, **params) -> OneDensity:
    """Built-in metrics and densities by name.

    Names: euclidean, ellipse_norm, randers_exact, busemann_example_density,
    conformal_nonprojective (alias: conformal_noneprojective), pnorm_smooth.
    """
    if name == "euclidean":
        return FinslerMetric(
            dim=dim,
            fn=lambda x, v: np.linalg.norm(v, axis=-1) + 0.0 * np.sum(x, axis=-1),
            lattice=Lattice.standard(dim),
            reversible=True,
            name="euclidean",
        )

    if name == "ellipse_norm":
        A = _ellipse_matrix(dim, params)

        def fn(x, v):
            q = np.einsum("...i,ij,...j->...", v, A, v)
            return np.sqrt(q) + 0.0 * np.sum(x, axis=-1)

        return FinslerMetric(
            dim=dim, fn=fn, lattice=Lattice.standard(dim), reversible=True, name="ellipse_norm"
        )

    if name == "randers_exact":
        A = _ellipse_matrix(dim, params)
        amp = float(params.get("amp", 0.05))
        df = randers_potential_gradient(dim, amp)

        def fn(x, v):
            q = np.sqrt(np.einsum("...i,ij,...j->...", v, A, v))
            return q + np.sum(df(x) * v, axis=-1)

        return FinslerMetric(
            dim=dim, fn=fn, lattice=Lattice.standard(dim), reversible=False, name="randers_exact"
        )

    if name in ("conformal_nonprojective", "conformal_noneprojective"):

        def fn(x, v):
            lam = 1.0 + np.sin(2 * np.pi * x[..., 1]) ** 2
            return lam * np.linalg.norm(v, axis=-1)

        return FinslerMetric(
            dim=dim,
            fn=fn,
            lattice=Lattice.standard(dim),
            reversible=True,
            name="conformal_nonprojective",
        )

    if name == "busemann_example_density":
        if dim != 2:
            raise MetricError("busemann_example_density is a plane example")

        def fn(x, v):
            g = 7.0 + 2 * np.pi * np.cos(2 * np.pi * x[..., 1])
            return np.linalg.norm(v, axis=-1) + g * np.abs(v[..., 1])

        # C0 only: |v2| has a crease.  Exposed at the distance level via
        # catalog_distance; differentiation is refused.
        return OneDensity(
            dim=2, fn=fn, smoothness="C0", lattice=Lattice.standard(2), name="busemann_example_density"
        )

    if name == "pnorm_smooth":
        p = int(params.get("p", 4))
        t = float(params.get("t", 0.5))
        if p < 4 or p % 2:
            raise MetricError("pnorm_smooth needs an even exponent >= 4")
        if not 0.0 < t < 1.0:
            raise MetricError("blend weight t must sit in (0, 1)")

        def fn(x, v):
            sq = np.sum(v * v, axis=-1)
            pp = np.sum(v**p, axis=-1) ** (2.0 / p)
            return np.sqrt((1 - t) * sq + t * pp) + 0.0 * np.sum(x, axis=-1)

        return FinslerMetric(
            dim=dim, fn=fn, lattice=Lattice.standard(dim), reversible=True, name="pnorm_smooth"
        )

    raise MetricError(f"unknown catalog entry {name!r}")


def catalog_distance(name: str) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Closed-form distance functions for catalog entries that have one."""
    if name == "euclidean":
        return lambda x, y: np.linalg.norm(np.asarray(y, float) - np.asarray(x, float), axis=-1)
    if name == "busemann_example":
        # straight segments minimize both terms separately; the vertical
        # term integrates to a potential difference along monotone paths
        def d(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            G = lambda s: 7.0 * s + np.sin(2 * np.pi * s)
            return np.linalg.norm(y - x, axis=-1) + np.abs(G(y[..., 1]) - G(x[..., 1]))

        return d
    raise MetricError(f"no closed-form distance for {name!r}")


# ---------------------------------------------------------------------------
# whole-metric transformations


def restrict_to_plane(F: OneDensity, base, e1, e2) -> OneDensity:
    """Induced 2D metric on the affine plane base + span(e1, e2).

    G(s, w) = F(base + s1 e1 + s2 e2, w1 e1 + w2 e2).  The plane basis need
    not be orthonormal; the restriction is isometric onto its image.
    """
    base = np.asarray(base, dtype=float)
    S = np.stack([np.asarray(e1, float), np.asarray(e2, float)], axis=1)  # (n, 2)
    if base.shape != (F.dim,) or S.shape != (F.dim, 2):
        raise MetricError("plane data of wrong dimension")
    if np.linalg.matrix_rank(S, tol=1e-10) < 2:
        raise MetricError("plane basis is degenerate")

    def fn(x, v):
        return F.fn(base + x @ S.T, v @ S.T)

    lat = None
    if F.lattice is not None and F.lattice.contains(S[:, 0]) and F.lattice.contains(S[:, 1]):
        lat = Lattice.standard(2)
    kw = dict(dim=2, fn=fn, smoothness=F.smoothness, lattice=lat, fd_step=F.fd_step,
              name=f"{F.name or 'metric'}|plane")
    if isinstance(F, FinslerMetric):
        return FinslerMetric(**kw, reversible=F.reversible)
    return OneDensity(**kw)


def affine_pullback(L: OneDensity, T: AffineMap) -> OneDensity:
    """(T*L)(x, v) = L(T(x), DT v)."""
    if T.dim != L.dim:
        raise MetricError("affine map dimension mismatch")

    def fn(x, v):
        return L.fn(x @ T.linear.T + T.offset, v @ T.linear.T)

    lat = None
    if L.lattice is not None:
        lat = Lattice(np.linalg.solve(T.linear, L.lattice.basis))
    kw = dict(dim=L.dim, fn=fn, smoothness=L.smoothness, lattice=lat, fd_step=L.fd_step,
              name=f"{L.name or 'metric'}*T")
    if isinstance(L, FinslerMetric):
        return FinslerMetric(**kw, reversible=L.reversible)
    return OneDensity(**kw)


def even_odd_split(F: OneDensity):
    """F = even + odd with even reversible and odd(x, -v) = -odd(x, v)."""

    def even_fn(x, v):
        return 0.5 * (F.fn(x, v) + F.fn(x, -v))

    def odd_fn(x, v):
        return 0.5 * (F.fn(x, v) - F.fn(x, -v))

    kw = dict(dim=F.dim, smoothness=F.smoothness, lattice=F.lattice, fd_step=F.fd_step)
    name = F.name or "metric"
    if isinstance(F, FinslerMetric):
        even = FinslerMetric(fn=even_fn, reversible=True, name=f"{name}.even", **kw)
    else:
        even = OneDensity(fn=even_fn, name=f"{name}.even", **kw)
    odd = OneDensity(fn=odd_fn, name=f"{name}.odd", **kw)
    return even, odd


def perturb_to_finsler(
    F: FinslerMetric,
    L: OneDensity,
    eps_grid: Sequence[float],
    n_x: int = 64,
    n_v: int = 48,
    seed: int = 0,
    margin: float = 1e-9,
) -> float:
    """Largest grid scale eps for which F + eps*L still samples as a
    Finsler metric (positivity and fiberwise convexity); 0.0 if none."""
    eps_grid = [float(e) for e in eps_grid]
    if not eps_grid:
        raise MetricError("empty eps grid")
    n = F.dim
    g = rng(seed)
    if F.lattice is not None:
        xs = g.uniform(0.0, 1.0, size=(n_x, n)) @ F.lattice.basis.T
    else:
        xs = g.uniform(-1.0, 1.0, size=(n_x, n))
    dirs = direction_grid(n, n_v) if n <= 3 else unit_vectors(n_v, n, seed)
    pair_a = unit_vectors(n_v, n, seed + 1)
    pair_b = unit_vectors(n_v, n, seed + 2)

    def admissible(eps: float) -> bool:
        def G(x, v):
            return F(x, v) + eps * L(x, v)

        vals = G(xs[:, None, :], dirs[None, :, :])
        if np.min(vals) <= margin:
            return False
        # convexity via subadditivity: G(x, a+b) <= G(x,a) + G(x,b)
        ga = G(xs[:, None, :], pair_a[None, :, :])
        gb = G(xs[:, None, :], pair_b[None, :, :])
        gs = G(xs[:, None, :], (pair_a + pair_b)[None, :, :])
        if np.max(gs - ga - gb) > 1e-9:
            return False
        return True

    passing = [e for e in eps_grid if admissible(e)]
    return max(passing) if passing else 0.0


@dataclass(frozen=True)
class AxiomsReport:
    n_triples: int
    n_collinear: int
    nonneg_defect: float
    identity_defect: float
    triangle_defect: float
    additivity_defect: float
    tol: float

    @property
    def passed(self) -> bool:
        worst = max(
            self.nonneg_defect, self.identity_defect, self.triangle_defect, self.additivity_defect
        )
        return worst <= self.tol


def metric_axioms_check(d, triples: np.ndarray, tol: float = 1e-9) -> AxiomsReport:
    """Sampled metric axioms for a distance-function handle.

    triples has shape (m, 3, n); additivity d(x,y) + d(y,z) = d(x,z) is
    checked on the subset where y lies on the segment [x, z].
    """
    triples = np.asarray(triples, dtype=float)
    if triples.size == 0:
        raise MetricError("empty triple sampler")
    x, y, z = triples[:, 0], triples[:, 1], triples[:, 2]
    dxy = np.asarray(d(x, y), dtype=float)
    dyz = np.asarray(d(y, z), dtype=float)
    dxz = np.asarray(d(x, z), dtype=float)
    dxx = np.asarray(d(x, x), dtype=float)

    nonneg = max(0.0, float(-min(dxy.min(), dyz.min(), dxz.min())))
    identity = float(np.max(np.abs(dxx)))
    triangle = max(0.0, float(np.max(dxz - dxy - dyz)))

    w = z - x
    wn = np.einsum("ij,ij->i", w, w)
    ok = wn > 1e-20
    tproj = np.zeros(len(w))
    tproj[ok] = np.einsum("ij,ij->i", (y - x)[ok], w[ok]) / wn[ok]
    offseg = np.linalg.norm(y - (x + tproj[:, None] * w), axis=1)
    scale = 1.0 + np.linalg.norm(w, axis=1)
    on_seg = ok & (offseg <= 1e-12 * scale) & (tproj >= 0.0) & (tproj <= 1.0)
    additivity = float(np.max(np.abs(dxy[on_seg] + dyz[on_seg] - dxz[on_seg]))) if np.any(on_seg) else 0.0

    return AxiomsReport(
        n_triples=len(triples),
        n_collinear=int(on_seg.sum()),
        nonneg_defect=nonneg,
        identity_defect=identity,
        triangle_defect=triangle,
        additivity_defect=additivity,
        tol=tol,
    )
