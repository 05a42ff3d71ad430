"""Command-line front end.

Exit codes are a contract: 0 all checks passed, 1 a mathematical check
failed (the message names the failing stage), 2 the configuration or
invocation was invalid.  Every command is deterministic for a fixed
config -- reruns produce byte-identical CSV/SVG artifacts.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import ConfigError, JobConfig, build_measure, build_metric, load_job
from .convex_core import ConvexError
from .decomposition import (
    DecompositionError,
    decompose_periodic_projective,
    dense_planes_test,
    randers_test,
)
from .geodesics import geodesic_shoot
from .grassmannian import GrassmannianError, crofton_finsler, segment_measure
from .hamel import _sample_set, hamel_residual, projectivity_report
from .metric_core import MetricError, catalog_distance, metric_axioms_check
from .sampling import direction_grid, point_triples, rng
from .svg import ball_svg, curves_svg, heatmap_svg

_MATH_ERRORS = (MetricError, GrassmannianError, DecompositionError, ConvexError)


def _say(args, *msg):
    if not args.quiet:
        print(*msg)


def _write(path: str, text: str):
    with open(path, "w") as fh:
        fh.write(text)


def _csv(path: str, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{float(v):.12g}" for v in row))
    _write(path, "\n".join(lines) + "\n")


def _job(args) -> JobConfig:
    job = load_job(args.config)
    return job.override(tol=args.tol, grid=args.grid, seed=args.seed, out=args.out)


def _base_point(job: JobConfig) -> np.ndarray:
    if job.points and "x" in job.points:
        return job.points["x"]
    return np.zeros(job.dimension)


# --- commands ------------------------------------------------------------------


def cmd_verify_projective(args) -> int:
    job = _job(args)
    F = build_metric(job)
    tol = job.tol if job.tol is not None else 1e-5
    n_x = job.grid if job.grid is not None else 4
    rep = projectivity_report(F, n_x=n_x, tol=tol, seed=job.seed)
    _say(args, str(rep))
    if job.out:
        xs, vs = _sample_set(F, n_x, 8, job.seed)
        R = hamel_residual(F, xs, vs)
        mags = np.max(np.abs(R), axis=(-1, -2))
        n = F.dim
        header = [f"x{i+1}" for i in range(n)] + [f"v{i+1}" for i in range(n)] + ["residual"]
        _csv(job.out, header, np.column_stack([xs, vs, mags]))
        _say(args, f"wrote {job.out}")
    return 0 if rep.passed else 1


def cmd_crofton(args) -> int:
    job = _job(args)
    mu = build_measure(job)
    crofton_finsler(mu)  # runs the symmetry + quasipositivity gates
    if job.points and "x" in job.points and "y" in job.points:
        res = segment_measure(mu, job.points["x"], job.points["y"], tol=job.tol)
        _say(args, f"d = {res.value:.12g} (quadrature error estimate {res.error:.3g})")
    if job.out:
        n = job.dimension
        g = rng(job.seed)
        k = job.grid if job.grid is not None else 8
        pairs = g.uniform(-1.0, 1.0, size=(k, 2, n))
        rows = []
        for x, y in pairs:
            d = segment_measure(mu, x, y).value
            rd = segment_measure(mu, y, x).value
            rows.append(np.concatenate([x, y, [d, rd]]))
        header = [f"x{i+1}" for i in range(n)] + [f"y{i+1}" for i in range(n)] + ["d", "reverse_d"]
        _csv(job.out, header, rows)
        _say(args, f"wrote {job.out}")
    return 0


def cmd_decompose(args) -> int:
    job = _job(args)
    F = build_metric(job)
    result = decompose_periodic_projective(F, res=job.grid, tol=job.tol or 1e-4, seed=job.seed)
    _say(
        args,
        f"decomposed: |beta|_max = {result.beta_max:.3e}, "
        f"linearity {result.linearity_defect:.2e}, closedness {result.closedness_defect:.2e}, "
        f"paths {result.path_defect:.2e}, reconstruction {result.reconstruction_defect:.2e}",
    )
    if job.out:
        n = F.dim
        pts = result.grid_points().reshape(-1, n)
        beta = result.beta.reshape(-1, n)
        pot = result.potential.reshape(-1, 1)
        header = (
            [f"x{i+1}" for i in range(n)]
            + [f"beta{i+1}" for i in range(n)]
            + ["potential"]
        )
        _csv(job.out, header, np.hstack([pts, beta, pot]))
        _say(args, f"wrote {job.out}")
    return 0


def cmd_randers(args) -> int:
    job = _job(args)
    F = build_metric(job)
    tol = job.tol if job.tol is not None else 1e-3
    rep = randers_test(F, n_points=job.grid or 8, tol=tol, seed=job.seed)
    verdict = "translates" if rep.passed else "NOT translates"
    _say(args, f"co-discs {verdict}: max residual {rep.max_residual:.3e} (tol {tol:.1e})")
    ok = rep.passed
    if args.planes and F.dim == 3:
        prep = dense_planes_test(F, n_planes=args.planes, tol=tol, seed=job.seed)
        _say(args, f"dense planes: {prep.pass_fraction:.0%} passed -> verdict {prep.verdict}")
        ok = ok and prep.verdict
    if job.out:
        n = F.dim
        header = (
            [f"x{i+1}" for i in range(n)] + [f"t{i+1}" for i in range(n)] + ["residual"]
        )
        _csv(job.out, header, np.column_stack([rep.points, rep.translations, rep.residuals]))
        _say(args, f"wrote {job.out}")
    return 0 if ok else 1


def _straight_distance(F):
    s, w = np.polynomial.legendre.leggauss(32)
    s = 0.5 * (s + 1.0)
    w = 0.5 * w

    def d(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        diff = y - x
        xs = x[..., None, :] + s[:, None] * diff[..., None, :]
        vs = np.broadcast_to(diff[..., None, :], xs.shape)
        return F(xs, vs) @ w

    return d


def cmd_axioms(args) -> int:
    job = _job(args)
    F = build_metric(job)
    if job.metric and job.metric.get("catalog") == "busemann_example_density":
        d = catalog_distance("busemann_example")
        source = "closed form"
    else:
        d = _straight_distance(F)
        source = "straight-segment lengths"
    n_triples = job.grid if job.grid is not None else 200
    triples = point_triples(n_triples, F.dim, seed=job.seed)
    rep = metric_axioms_check(d, triples, tol=job.tol or 1e-9)
    _say(
        args,
        f"axioms over {rep.n_triples} triples ({source}): nonneg {rep.nonneg_defect:.2e}, "
        f"identity {rep.identity_defect:.2e}, triangle {rep.triangle_defect:.2e}, "
        f"additivity {rep.additivity_defect:.2e} on {rep.n_collinear} collinear",
    )
    if job.out:
        x, y = triples[:, 0], triples[:, 1]
        dv = d(x, y)
        rv = d(y, x)
        header = (
            [f"x{i+1}" for i in range(F.dim)]
            + [f"y{i+1}" for i in range(F.dim)]
            + ["d", "reverse_d"]
        )
        _csv(job.out, header, np.column_stack([x, y, dv, rv]))
        _say(args, f"wrote {job.out}")
    return 0 if rep.passed else 1


def cmd_plot_ball(args) -> int:
    job = _job(args)
    if job.dimension != 2:
        raise ConfigError("ball plots are 2D", "dimension")
    F = build_metric(job)
    x = _base_point(job)
    k = job.grid if job.grid is not None else 256
    dirs = direction_grid(2, k)
    vals = F(np.broadcast_to(x, dirs.shape), dirs)
    if np.any(vals <= 0):
        raise MetricError("metric is not positive at the base point; no unit ball")
    out = job.out or "ball.svg"
    title = f"unit ball at ({x[0]:.4g}, {x[1]:.4g})"
    _write(out, ball_svg(dirs / vals[:, None], title=title))
    _say(args, f"wrote {out}")
    return 0


def cmd_plot_geodesics(args) -> int:
    job = _job(args)
    if job.dimension != 2:
        raise ConfigError("geodesic plots are 2D", "dimension")
    F = build_metric(job)
    x0 = _base_point(job)
    k = job.grid if job.grid is not None else 8
    curves, labels = [], []
    for v in direction_grid(2, k):
        path = geodesic_shoot(F, x0, v, T=1.0, steps=400)
        curves.append(path.points)
        labels.append(f"v=({v[0]:.3g}, {v[1]:.3g})")
    out = job.out or "geodesics.svg"
    _write(out, curves_svg(curves, labels, title=f"geodesics from ({x0[0]:.4g}, {x0[1]:.4g})"))
    _say(args, f"wrote {out}")
    return 0


def cmd_plot_residuals(args) -> int:
    job = _job(args)
    if job.dimension != 2:
        raise ConfigError("residual heatmaps are 2D", "dimension")
    F = build_metric(job)
    res = job.grid if job.grid is not None else 32
    basis = F.lattice.basis if F.lattice is not None else np.eye(2)
    ax = np.arange(res) / res
    frac = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
    xs = (frac @ basis.T).reshape(-1, 2)
    vs = direction_grid(2, 4)
    X = np.repeat(xs, len(vs), axis=0)
    V = np.tile(vs, (len(xs), 1))
    R = hamel_residual(F, X, V)
    mags = np.max(np.abs(R), axis=(-1, -2)).reshape(len(xs), len(vs)).max(axis=1)
    out = job.out or "residuals.svg"
    _write(out, heatmap_svg(mags.reshape(res, res), title="straight-line defect |R|"))
    _say(args, f"wrote {out}")
    return 0


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="projmet",
        description="Construct, verify, and decompose straight-line (projective) Finsler metrics.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, extra=None):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="YAML job file")
        sp.add_argument("--out", help="output artifact path (CSV or SVG)")
        sp.add_argument("--tol", type=float, help="override the config tolerance")
        sp.add_argument("--grid", type=int, help="override the config grid resolution")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--quiet", action="store_true", help="suppress progress output")
        if extra:
            extra(sp)
        sp.set_defaults(func=fn)
        return sp

    add("verify-projective", cmd_verify_projective,
        "test whether straight lines are extremal (Hamel residuals)")
    add("crofton", cmd_crofton,
        "distances and metrics induced by a hyperplane measure")
    add("decompose", cmd_decompose,
        "split a periodic straight-line metric into norm + exact 1-form")
    add("randers", cmd_randers,
        "co-disc translate test (and optional dense-planes scan in 3D)",
        extra=lambda sp: sp.add_argument("--planes", type=int, default=0,
                                         help="3D: also scan N rational planes"))
    add("axioms", cmd_axioms,
        "sampled metric axioms for the induced distance")
    add("plot-ball", cmd_plot_ball, "SVG of the unit ball at a base point")
    add("plot-geodesics", cmd_plot_geodesics, "SVG of shot geodesics")
    add("plot-residuals", cmd_plot_residuals, "SVG heatmap of straight-line defects")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except _MATH_ERRORS as e:
        print(f"FAIL: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
