"""Christoffel symbols, the (0,4) curvature tensor, Jacobi operators and
sectional curvatures of a metric field, all in the coordinate frame.

Conventions, fixed once: Christoffel symbols of the first kind
``Gamma[j,k,l] = g(nabla_{E_j} E_k, E_l)`` come from the Koszul formula;
the curvature tensor is

    R[i,j,k,l] = d_i Gamma[j,k,l] - d_j Gamma[i,k,l]
                 + ginv[s,t] (Gamma[i,k,s] Gamma[j,l,t]
                              - Gamma[j,k,s] Gamma[i,l,t])

normalized so that ``R[x,y,y,x]`` is the sectional-curvature numerator of
the plane spanned by x, y (round unit sphere gives +1; pinned by tests).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpanError, GeodefectError
from .manifold import (
    MetricField,
    metric_at,
    metric_inverse_at,
    metric_partials,
    metric_second_partials,
)

Array = np.ndarray


@dataclass(frozen=True)
class CurvatureData:
    """Curvature bundle at one chart point, all indices down.

    ``gamma[j,k,l]`` is symmetric in (j,k); ``gamma_partial[i,j,k,l]`` is
    d_i Gamma[j,k,l]; ``riem`` carries the full algebraic curvature
    symmetries up to the backend's rounding floor.
    """

    point: Array
    metric: Array
    metric_inv: Array
    gamma: Array
    gamma_partial: Array
    riem: Array

    def to_dict(self) -> dict:
        return {
            "point": self.point.tolist(),
            "metric": self.metric.tolist(),
            "gamma": self.gamma.tolist(),
            "riem": self.riem.tolist(),
        }


def christoffel_first_kind(metric: MetricField, x: Array) -> Array:
    """Gamma[j,k,l] = (d_k g_jl + d_j g_lk - d_l g_kj) / 2."""
    d = metric_partials(metric, x)  # d[a,b,c] = d_a g_bc
    return 0.5 * (
        d.transpose(1, 0, 2) + d.transpose(0, 2, 1) - d.transpose(2, 1, 0)
    )


def _gamma_partial(metric: MetricField, x: Array) -> Array:
    # d_i Gamma[j,k,l] straight from second metric partials (one Koszul
    # layer, no differencing of Gamma itself).
    dd = metric_second_partials(metric, x)  # dd[a,b,c,d] = d_a d_b g_cd
    return 0.5 * (
        dd.transpose(0, 2, 1, 3) + dd.transpose(0, 1, 3, 2)
        - dd.transpose(0, 3, 2, 1)
    )


def riemann_tensor(metric: MetricField, x: Array) -> CurvatureData:
    """Full curvature data at x via the Christoffel/Koszul route."""
    x = metric.chart.require_inside(x)
    g = metric_at(metric, x)
    ginv = metric_inverse_at(metric, x)
    gamma = christoffel_first_kind(metric, x)
    dgamma = _gamma_partial(metric, x)
    quad = np.einsum("st,iks,jlt->ijkl", ginv, gamma, gamma, optimize=True)
    riem = dgamma - dgamma.transpose(1, 0, 2, 3) + quad - quad.transpose(1, 0, 2, 3)
    return CurvatureData(
        point=x.copy(),
        metric=g,
        metric_inv=ginv,
        gamma=gamma,
        gamma_partial=dgamma,
        riem=riem,
    )


def jacobi_operator(curv: CurvatureData, v: Array) -> Array:
    """Matrix of R_v = R(., v)v as an endomorphism in chart coordinates.

    Self-adjoint with respect to g (G @ J symmetric) and kills v.
    """
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise GeodefectError("Jacobi operator needs a nonzero vector")
    t = np.einsum("bjkl,j,k->bl", curv.riem, v, v, optimize=True)
    return curv.metric_inv @ t.T


def sectional(curv: CurvatureData, x: Array, y: Array) -> float:
    """Sectional curvature of span{x, y}: R_xyyx over the Gram determinant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    g = curv.metric
    num = float(np.einsum("ijkl,i,j,k,l->", curv.riem, x, y, y, x))
    den = float((x @ g @ x) * (y @ g @ y) - (x @ g @ y) ** 2)
    scale = float((x @ g @ x) * (y @ g @ y))
    if den <= 1e-12 * max(scale, 1e-300):
        raise DegenerateSpanError("vectors do not span a 2-plane")
    return num / den


def symmetry_residual(curv: CurvatureData) -> float:
    """Worst violation of the curvature symmetries and the first Bianchi
    identity, plus Christoffel torsion-freeness; a regression guard."""
    r = curv.riem
    checks = [
        r + r.transpose(1, 0, 2, 3),            # antisymmetry, first pair
        r + r.transpose(0, 1, 3, 2),            # antisymmetry, last pair
        r - r.transpose(2, 3, 0, 1),            # pair symmetry
        r + np.transpose(r, (1, 2, 0, 3)) + np.transpose(r, (2, 0, 1, 3)),
        curv.gamma - curv.gamma.transpose(1, 0, 2),
    ]
    scale = max(1.0, float(np.max(np.abs(r))))
    return max(float(np.max(np.abs(c))) for c in checks) / scale


def christoffel_second_kind(curv: CurvatureData) -> Array:
    """Gamma^l_{jk}, raised on demand from the first kind."""
    return np.einsum("ls,jks->ljk", curv.metric_inv, curv.gamma, optimize=True)
