"""Projective Finsler metrics: construction, verification, decomposition.

The pieces fit together like this: `metric_core` holds the metric types
and catalog, `grassmannian` builds metrics out of hyperplane measures,
`hamel` tests whether straight lines are extremal, `decomposition`
splits periodic straight-line metrics into a norm plus an exact 1-form
(with `convex_core` supplying the dual-body machinery), `geodesics`
integrates and descends, and `metric_dsl`/`config`/`cli` wrap it all
for the command line.
"""

from .convex_core import (
    ConvexBody,
    ConvexError,
    LinearSubspace,
    SphereGrid,
    are_translates,
    ball_body,
    body_from_norm,
    dual_restriction,
    ellipsoid_body,
    gauge_eval,
    groemer_experiment,
    load_body,
    polar_dual,
    random_smooth_body,
    rotate_body,
    save_body,
    scale_body,
    section,
    strict_convexity_margin,
    support_at,
    translate_body,
    translate_fit_residual,
)
from .decomposition import (
    DecompositionError,
    DecompositionResult,
    DensePlanesReport,
    RandersReport,
    decompose_compact_support,
    decompose_periodic_projective,
    dense_planes_test,
    extract_one_form,
    integrate_potential,
    randers_test,
    translation_invariant_part,
)
from .geodesics import (
    GeodesicPath,
    InducedDistance,
    Polyline,
    chord_deviation,
    curve_length,
    geodesic_shoot,
    induced_distance,
)
from .grassmannian import (
    GrassmannianError,
    HyperplaneMeasure,
    QuadratureError,
    SegmentMeasureResult,
    constant_density,
    cosine_density,
    crofton_finsler,
    direction_density,
    invariance_gap,
    lattice_orbit_net,
    measure_pushforward,
    quasipositivity_check,
    segment_measure,
)
from .hamel import (
    HamelReport,
    euler_lagrange_residual,
    hamel_residual,
    hilbert_forms,
    projectivity_report,
)
from .metric_core import (
    AffineMap,
    AxiomsReport,
    FinslerMetric,
    Lattice,
    MetricError,
    OneDensity,
    Partials,
    affine_pullback,
    catalog_distance,
    catalog_metric,
    even_odd_split,
    metric_axioms_check,
    partials,
    perturb_to_finsler,
    restrict_to_plane,
)
from .metric_dsl import (
    ParseError,
    check_homogeneity,
    density_from_expr,
    measure_density_from_expr,
    metric_from_expr,
    parse,
    to_source,
)

__version__ = "0.1.0"
