"""Partial-geodesy defect of tangent planes.

The off-block invariant of a self-adjoint operator J and a subspace W is
the maximum over unit w in W of the norm of the component of J(w)
orthogonal to W.  In g-orthonormal bases B of W and Q of its g-orthogonal
complement this equals the top singular value of the off-block
``Q^T G J B``, which is how the production path computes it; the literal
grid maximization is kept as an independent oracle for tests.

The defect of a plane P is the maximum of that invariant over Jacobi
operators R_v for g-unit v in P; it vanishes exactly on partially
geodesic planes.  Maximization over v runs a deterministic grid on the
unit sphere of the plane followed by derivative-free simplex refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .curvature import CurvatureData, riemann_tensor
from .errors import ConfigError, FrameError, GeodefectError
from .manifold import (
    MetricField,
    g_orthonormal_complement,
    gram_schmidt_g,
    metric_at,
)

Array = np.ndarray

# Partially-geodesic thresholds (defect below counts as zero).
TAU_PG_ANALYTIC = 1e-7
TAU_PG_FD = 1e-3

# Default v-grid densities by plane dimension.
_DEFAULT_DENSITY = {2: 32, 3: 72}


def tau_pg_for(metric: MetricField) -> float:
    return TAU_PG_ANALYTIC if metric.backend.mode == "analytic" else TAU_PG_FD


@dataclass(frozen=True)
class TangentPlane:
    """Chart point plus g-orthonormal basis (columns) of an l-plane."""

    point: Array
    basis: Array

    def __post_init__(self):
        pt = np.array(self.point, dtype=float, copy=True)
        b = np.array(self.basis, dtype=float, copy=True)
        if b.ndim != 2:
            raise FrameError("plane basis must be an (n, l) matrix")
        n, l = b.shape
        if not 2 <= l <= n - 1:
            raise FrameError(f"plane dimension l={l} must lie in [2, n-1]")
        pt.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "point", pt)
        object.__setattr__(self, "basis", b)

    @property
    def l(self) -> int:
        return self.basis.shape[1]

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    def validate(self, gram: Array, tol: float = 1e-8) -> None:
        b = self.basis
        if np.max(np.abs(b.T @ gram @ b - np.eye(self.l))) >= tol:
            raise FrameError("plane basis is not g-orthonormal within tolerance")


def plane_from_span(metric: MetricField, point: Array, span: Array) -> TangentPlane:
    """Orthonormalize raw spanning vectors against g(point)."""
    g = metric_at(metric, point)
    basis = gram_schmidt_g(g, np.asarray(span, dtype=float))
    return TangentPlane(point=metric.chart.reduce(np.asarray(point, float)),
                        basis=basis)


@dataclass(frozen=True)
class DefectReport:
    """Outcome of the defect maximization for one plane."""

    plane: TangentPlane
    defect: float
    vstar: Array
    witness: Array
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "point": self.plane.point.tolist(),
            "basis": self.plane.basis.tolist(),
            "defect": self.defect,
            "vstar": self.vstar.tolist(),
            "witness": self.witness.tolist(),
            "meta": dict(self.meta),
        }


def unit_sphere_grid(l: int, density: int) -> Array:
    """Deterministic grid on the unit sphere of R^l, as rows.

    Exploits antipodal symmetry of every objective we maximize.  l = 2 uses
    evenly spaced angles on a half-circle (nested across densities that
    divide each other); l = 3 uses a Fibonacci hemisphere spiral; higher l
    falls back to a product grid in spherical angles.
    """
    if density < 1:
        raise ConfigError("grid density must be positive")
    if l == 1:
        return np.array([[1.0]])
    if l == 2:
        theta = np.pi * np.arange(density) / density
        return np.column_stack([np.cos(theta), np.sin(theta)])
    if l == 3:
        k = np.arange(density)
        z = (k + 0.5) / density
        phi = np.pi * (1.0 + np.sqrt(5.0)) * k
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    m = max(2, int(np.ceil(density ** (1.0 / (l - 1)))))
    polar = [np.pi * (np.arange(m) + 0.5) / m for _ in range(l - 2)]
    azimuth = [np.pi * np.arange(m) / m]
    grids = np.meshgrid(*(polar + azimuth), indexing="ij")
    angles = np.stack([g.ravel() for g in grids], axis=1)
    pts = np.ones((angles.shape[0], l))
    for i in range(l - 1):
        pts[:, i] *= np.cos(angles[:, i])
        pts[:, i + 1:] *= np.sin(angles[:, i])[:, None]
    return pts


def offblock_matrix(j_op: Array, gram: Array, basis: Array, comp: Array) -> Array:
    """Off-block Q^T G J B of an endomorphism in chart coordinates."""
    return comp.T @ gram @ j_op @ basis


def offblock_invariant(
    j_op: Array,
    gram: Array,
    plane: TangentPlane,
    comp: Optional[Array] = None,
    tol_selfadjoint: float = 1e-6,
) -> tuple[float, Array, Array]:
    """Spectral-norm route to the off-block invariant.

    Returns (value, argmax w in W, witness normal direction).  The value is
    the top singular value of Q^T G J B; the argmax is B times the top
    right-singular vector, the witness Q times the top left-singular one.
    A violently non-self-adjoint J signals a curvature bug upstream.
    """
    gram = np.asarray(gram, dtype=float)
    j_op = np.asarray(j_op, dtype=float)
    gj = gram @ j_op
    scale = max(1.0, float(np.max(np.abs(gj))))
    if float(np.max(np.abs(gj - gj.T))) > tol_selfadjoint * scale:
        raise GeodefectError("operator is not g-self-adjoint within tolerance")
    basis = plane.basis
    if comp is None:
        comp = g_orthonormal_complement(gram, basis)
    off = offblock_matrix(j_op, gram, basis, comp)
    u, s, vt = np.linalg.svd(off)
    value = float(s[0]) if s.size else 0.0
    w = basis @ vt[0]
    witness = comp @ u[:, 0]
    return value, w, witness


def offblock_oracle(
    j_op: Array,
    gram: Array,
    plane: TangentPlane,
    density: int,
    comp: Optional[Array] = None,
) -> float:
    """Literal grid maximization of |J(w)^{perp W}|_g over unit w in W.

    Test-only reference path: projects J(w) off the plane explicitly and
    never touches the SVD route.
    """
    basis = plane.basis
    gram = np.asarray(gram, dtype=float)
    grid = unit_sphere_grid(plane.l, density)
    w = grid @ basis.T                      # rows: ambient unit vectors of W
    jw = w @ np.asarray(j_op, dtype=float).T
    coeff = jw @ gram @ basis               # g-components along the plane
    perp = jw - coeff @ basis.T
    vals = np.einsum("mi,ij,mj->m", perp, gram, perp)
    return float(np.sqrt(np.max(np.maximum(vals, 0.0))))


def _offblock_tensor(riem: Array, basis_w: Array, basis_v: Array, comp: Array) -> Array:
    """Precontraction U[alpha, beta, gamma, q] with
    off(u)[q, alpha] = U[alpha, beta, gamma, q] u[beta] u[gamma];
    uses Q^T G J B = Q^T T^T B with T_bl = R(E_b, v, v, E_l)."""
    return np.einsum(
        "bjkl,bA,jB,kC,lQ->ABCQ", riem, basis_w, basis_v, basis_v, comp,
        optimize=True,
    )


def _grid_values(tensor: Array, grid: Array) -> Array:
    off = np.einsum("ABCQ,mB,mC->mQA", tensor, grid, grid, optimize=True)
    return np.linalg.svd(off, compute_uv=False)[:, 0]


def _lex_argmax(values: Array, grid: Array, tie_tol: float = 1e-12) -> int:
    best = float(np.max(values))
    ties = np.flatnonzero(values >= best - tie_tol)
    if ties.size == 1:
        return int(ties[0])
    order = np.lexsort(grid[ties].T[::-1])
    return int(ties[order[0]])


def invariant_for_v(
    curv: CurvatureData,
    plane_basis: Array,
    comp: Array,
    v: Array,
) -> float:
    """Off-block invariant of the Jacobi operator R_v against the plane.

    `v` is taken as given (not renormalized), so callers can hold v fixed
    while the ambient metric changes.
    """
    t = np.einsum("bjkl,j,k->bl", curv.riem, v, v, optimize=True)
    off = comp.T @ t.T @ plane_basis
    s = np.linalg.svd(off, compute_uv=False)
    return float(s[0]) if s.size else 0.0


def plane_defect(
    metric: MetricField,
    plane: TangentPlane,
    curvature: Optional[CurvatureData] = None,
    v_density: Optional[int] = None,
    refine: bool = True,
    refine_threshold: float = 1e-12,
    refine_maxiter: int = 120,
    tol_on: float = 1e-6,
) -> DefectReport:
    """Partial-geodesy defect: max over g-unit v in P of the off-block
    invariant of R_v against P.

    Deterministic: grid stage with lexicographic tie-breaking, then
    Nelder-Mead refinement on a tangent chart of the plane's unit sphere
    (skipped below `refine_threshold`, where the plane is flat to rounding).
    """
    curv = curvature if curvature is not None else riemann_tensor(metric, plane.point)
    gram = curv.metric
    plane.validate(gram, tol=tol_on)
    basis = plane.basis
    l = plane.l
    comp = g_orthonormal_complement(gram, basis)
    tensor = _offblock_tensor(curv.riem, basis, basis, comp)

    density = v_density or _DEFAULT_DENSITY.get(l, 128)
    grid = unit_sphere_grid(l, density)
    values = _grid_values(tensor, grid)
    idx = _lex_argmax(values, grid)
    best_u = grid[idx]
    best_val = float(values[idx])
    evals = {"grid_density": int(grid.shape[0]), "refine_evals": 0}

    if refine and best_val > refine_threshold:
        # Tangent chart around the best grid point: u(t) = normalize(u0 + E t)
        frame = np.linalg.qr(
            np.column_stack([best_u, np.eye(l)])
        )[0][:, 1:l]

        def objective(t: Array) -> float:
            u = best_u + frame @ t
            u = u / np.linalg.norm(u)
            off = np.einsum("ABCQ,B,C->QA", tensor, u, u, optimize=True)
            return -float(np.linalg.svd(off, compute_uv=False)[0])

        step = np.pi / max(density, 8)
        res = minimize(
            objective,
            np.zeros(l - 1),
            method="Nelder-Mead",
            options={
                "xatol": 1e-10,
                "fatol": 1e-13,
                "maxiter": refine_maxiter,
                "initial_simplex": np.vstack(
                    [np.zeros(l - 1), step * np.eye(l - 1)]
                ),
            },
        )
        evals["refine_evals"] = int(res.nfev)
        if -res.fun > best_val:
            best_val = float(-res.fun)
            u = best_u + frame @ res.x
            best_u = u / np.linalg.norm(u)

    vstar = basis @ best_u
    off = np.einsum("ABCQ,B,C->QA", tensor, best_u, best_u, optimize=True)
    u_svd, s_svd, _ = np.linalg.svd(off)
    witness = comp @ u_svd[:, 0]
    return DefectReport(
        plane=plane,
        defect=best_val,
        vstar=vstar,
        witness=witness,
        meta=evals,
    )
