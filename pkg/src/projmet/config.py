"""Job configuration: YAML in, validated JobConfig out.

Validation is hand-rolled so every failure names the exact key path
(`metric.params.amp: must be a number`); the CLI turns any ConfigError
into exit code 2, keeping configuration mistakes distinct from
mathematical failures.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import yaml

from . import grassmannian
from .grassmannian import HyperplaneMeasure
from .metric_core import Lattice, MetricError, OneDensity, catalog_metric
from .metric_dsl import ParseError, measure_density_from_expr, metric_from_expr


class ConfigError(Exception):
    def __init__(self, message: str, path: str = ""):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


_TOP_KEYS = {"dimension", "metric", "measure", "lattice", "grid", "tol", "seed", "out", "points"}
_SPEC_KEYS = {"catalog", "expr", "params", "periodic"}
_MEASURE_CATALOG = {
    "constant": grassmannian.constant_density,
    "cosine": grassmannian.cosine_density,
    "direction": grassmannian.direction_density,
}


@dataclass(frozen=True)
class JobConfig:
    dimension: int = 2
    metric: Optional[dict] = None
    measure: Optional[dict] = None
    lattice: Optional[np.ndarray] = None  # generators as columns
    grid: Optional[int] = None
    tol: Optional[float] = None
    seed: int = 0
    out: Optional[str] = None
    points: Optional[dict] = None

    def override(self, **kw) -> "JobConfig":
        live = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **live) if live else self


def _need_map(value, path):
    if not isinstance(value, dict):
        raise ConfigError("must be a mapping", path)
    return value


def _need_int(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError("must be an integer", path)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}", path)
    return value


def _need_number(value, path, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("must be a number", path)
    if positive and value <= 0:
        raise ConfigError("must be positive", path)
    return float(value)


def _need_vector(value, path, dim):
    if not isinstance(value, (list, tuple)) or len(value) != dim:
        raise ConfigError(f"must be a list of {dim} numbers", path)
    return [_need_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _check_spec(spec, path):
    spec = _need_map(spec, path)
    for k in spec:
        if k not in _SPEC_KEYS:
            raise ConfigError("unknown key", f"{path}.{k}")
    has_cat = "catalog" in spec
    has_expr = "expr" in spec
    if has_cat == has_expr:
        raise ConfigError("give exactly one of 'catalog' or 'expr'", path)
    if has_cat and not isinstance(spec["catalog"], str):
        raise ConfigError("must be a string", f"{path}.catalog")
    if has_expr and not isinstance(spec["expr"], str):
        raise ConfigError("must be a string", f"{path}.expr")
    if "params" in spec:
        params = _need_map(spec["params"], f"{path}.params")
        if has_expr:
            raise ConfigError("'params' only applies to catalog entries", f"{path}.params")
        for k, v in params.items():
            if not isinstance(v, (int, float, list, tuple)) or isinstance(v, bool):
                raise ConfigError("must be a number or list", f"{path}.params.{k}")
    if "periodic" in spec and not isinstance(spec["periodic"], bool):
        raise ConfigError("must be a boolean", f"{path}.periodic")
    return spec


def job_from_dict(doc) -> JobConfig:
    doc = _need_map(doc if doc is not None else {}, "")
    for k in doc:
        if k not in _TOP_KEYS:
            raise ConfigError("unknown key", k)

    dim = _need_int(doc.get("dimension", 2), "dimension", minimum=2)

    metric = _check_spec(doc["metric"], "metric") if "metric" in doc else None
    measure = _check_spec(doc["measure"], "measure") if "measure" in doc else None

    lattice = None
    if "lattice" in doc:
        rows = doc["lattice"]
        if not isinstance(rows, (list, tuple)) or len(rows) != dim:
            raise ConfigError(f"must list {dim} generator vectors", "lattice")
        gens = [_need_vector(r, f"lattice[{i}]", dim) for i, r in enumerate(rows)]
        basis = np.array(gens, dtype=float).T  # generators become columns
        if abs(np.linalg.det(basis)) < 1e-12:
            raise ConfigError("generators are linearly dependent", "lattice")
        lattice = basis

    grid = _need_int(doc["grid"], "grid", minimum=2) if "grid" in doc else None
    tol = _need_number(doc["tol"], "tol", positive=True) if "tol" in doc else None
    seed = _need_int(doc.get("seed", 0), "seed")
    out = doc.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("must be a string", "out")

    points = None
    if "points" in doc:
        pts = _need_map(doc["points"], "points")
        for k in pts:
            if k not in ("x", "y"):
                raise ConfigError("unknown key", f"points.{k}")
        points = {k: np.array(_need_vector(v, f"points.{k}", dim)) for k, v in pts.items()}

    return JobConfig(
        dimension=dim, metric=metric, measure=measure, lattice=lattice,
        grid=grid, tol=tol, seed=seed, out=out, points=points,
    )


def load_job(path: str) -> JobConfig:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML: {e}") from e
    return job_from_dict(doc)


def build_metric(job: JobConfig) -> OneDensity:
    if job.metric is None:
        raise ConfigError("a 'metric' section is required for this command", "metric")
    spec = job.metric
    try:
        if "catalog" in spec:
            params = dict(spec.get("params", {}))
            m = catalog_metric(spec["catalog"], dim=job.dimension, **params)
        else:
            m = metric_from_expr(
                spec["expr"],
                job.dimension,
                periodic=spec.get("periodic", False),
            )
    except (MetricError, ParseError, TypeError) as e:
        raise ConfigError(str(e), "metric") from e
    if job.lattice is not None:
        m = m.with_lattice(Lattice(job.lattice))
    return m


def build_measure(job: JobConfig) -> HyperplaneMeasure:
    if job.measure is None:
        raise ConfigError("a 'measure' section is required for this command", "measure")
    spec = job.measure
    if "catalog" in spec:
        maker = _MEASURE_CATALOG.get(spec["catalog"])
        if maker is None:
            known = ", ".join(sorted(_MEASURE_CATALOG))
            raise ConfigError(f"unknown measure (have: {known})", "measure.catalog")
        try:
            return maker(job.dimension, **dict(spec.get("params", {})))
        except TypeError as e:
            raise ConfigError(str(e), "measure.params") from e
    try:
        fn = measure_density_from_expr(spec["expr"], job.dimension)
    except (ParseError, MetricError) as e:
        raise ConfigError(str(e), "measure.expr") from e
    # probe the (u, p) -> (-u, -p) symmetry instead of trusting the expression
    g = np.random.default_rng(0)
    u = g.normal(size=(32, job.dimension))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    p = g.uniform(-2, 2, size=32)
    sym = bool(np.max(np.abs(fn(u, p) - fn(-u, -p))) <= 1e-9)
    return HyperplaneMeasure(
        dim=job.dimension, density=fn, symmetric=sym, lattice=None, name=spec["expr"],
    )
