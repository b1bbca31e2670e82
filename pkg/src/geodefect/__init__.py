"""Numerical detection and destruction of partially geodesic tangent planes.

Builds chart metrics with evaluable derivatives, computes curvature and
Jacobi operators, measures the partial-geodesy defect of tangent planes,
scans Grassmannian samples for low-defect planes, and applies local
bump-pair metric deformations until none remain.
"""

from .errors import (
    BudgetExhaustedError,
    ConfigError,
    DeformationError,
    DegenerateSpanError,
    FrameError,
    GeodefectError,
    NotPositiveDefiniteError,
    OutOfDomainError,
    RankDeficiencyError,
    StencilError,
)
from .manifold import (
    Chart,
    DerivativeBackend,
    FrameAtPoint,
    MetricField,
    complete_frame,
    g_orthonormal_complement,
    gram_schmidt_g,
    linear_adapted_chart,
    metric_at,
    metric_inverse_at,
    metric_partial,
    metric_second_partial,
)
from .models import ModelDescriptor, MODEL_ZOO, make_model, zoo_listing
from .curvature import (
    CurvatureData,
    christoffel_first_kind,
    jacobi_operator,
    riemann_tensor,
    sectional,
    symmetry_residual,
)
from .defect import (
    DefectReport,
    TangentPlane,
    offblock_invariant,
    offblock_oracle,
    plane_defect,
    plane_from_span,
    unit_sphere_grid,
)
from .scanner import (
    CoverBall,
    MarginCertificate,
    Region,
    ScanGrid,
    candidate_cover,
    min_defect_certificate,
    principal_angle_distance,
    product_distance,
    scan,
)
from .deformation import (
    AdaptedFrame,
    BumpPair,
    CutoffSpec,
    DeformationSpec,
    DeformedMetric,
    adapted_frame,
    build_bump_pair,
    build_cutoff,
    build_deformation,
    build_f_pair,
    cq_proxy,
    deformed_descriptor,
    global_pipeline,
    load_deformed_metric,
    local_break,
    perturb,
    predicted_curvature_delta,
)

__version__ = "0.1.0"
