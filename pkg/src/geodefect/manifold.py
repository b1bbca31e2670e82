"""Coordinate charts and metric tensor fields with evaluable derivatives.

A metric lives on a single axis-aligned chart (optionally periodic per
axis) and exposes its value, first and second partial derivatives at any
interior point.  Derivatives come either from user-supplied closed forms
or from central-difference / Richardson-extrapolated stencils.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    ConfigError,
    FrameError,
    NotPositiveDefiniteError,
    OutOfDomainError,
    RankDeficiencyError,
    StencilError,
)

Array = np.ndarray

# Default validation tolerances.  Callers may override per operation.
TOL_ORTHONORMAL = 1e-8
TOL_RANK = 1e-10
TOL_DOMAIN = 1e-9

_BACKEND_MODES = ("analytic", "central", "richardson")


def _freeze(a: Array) -> Array:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


def symmetrize(mat: Array) -> Array:
    """Exactly symmetric part (A + A^T)/2."""
    return 0.5 * (mat + mat.T)


@dataclass(frozen=True)
class Chart:
    """Axis-aligned coordinate box in R^n, optionally periodic per axis.

    Periodic axes identify ``x`` with ``x + (hi - lo)``; their coordinates
    are reduced modulo the period before any metric evaluation, which makes
    torus models exact.
    """

    lo: Array
    hi: Array
    periodic: Array

    def __post_init__(self):
        lo = _freeze(np.atleast_1d(self.lo))
        hi = _freeze(np.atleast_1d(self.hi))
        per = np.array(self.periodic, dtype=bool, copy=True)
        per.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "periodic", per)
        if lo.shape != hi.shape or lo.shape != per.shape:
            raise ConfigError("chart lo/hi/periodic must share one shape")
        if self.n < 2:
            raise ConfigError("charts need dimension >= 2")
        if not np.all(hi > lo):
            raise ConfigError("chart box must have positive volume")

    @property
    def n(self) -> int:
        return self.lo.shape[0]

    @property
    def periods(self) -> Array:
        return self.hi - self.lo

    def reduce(self, x: Array) -> Array:
        """Wrap periodic coordinates into [lo, lo + period)."""
        x = np.asarray(x, dtype=float)
        if not np.any(self.periodic):
            return x
        out = x.copy()
        p = self.periodic
        out[p] = self.lo[p] + np.mod(x[p] - self.lo[p], self.periods[p])
        return out

    def contains(self, x: Array, tol: float = TOL_DOMAIN) -> bool:
        x = self.reduce(x)
        free = ~self.periodic
        if not np.any(free):
            return True
        pad = tol * np.maximum(1.0, np.abs(self.periods[free]))
        return bool(
            np.all(x[free] >= self.lo[free] - pad)
            and np.all(x[free] <= self.hi[free] + pad)
        )

    def require_inside(self, x: Array) -> Array:
        x = self.reduce(np.asarray(x, dtype=float))
        if x.shape != self.lo.shape:
            raise OutOfDomainError(f"point has wrong dimension {x.shape}")
        if not self.contains(x):
            raise OutOfDomainError(f"point {x} outside chart box")
        return x

    def displacement(self, x: Array, p: Array) -> Array:
        """Difference x - p with periodic axes wrapped to the nearest
        representative (in [-period/2, period/2))."""
        d = np.asarray(x, dtype=float) - np.asarray(p, dtype=float)
        if np.any(self.periodic):
            m = self.periodic
            per = self.periods[m]
            d[m] = np.mod(d[m] + 0.5 * per, per) - 0.5 * per
        return d

    def interior_by(self, x: Array, margin: float) -> bool:
        """True if x keeps `margin` distance from every non-periodic wall."""
        x = self.reduce(x)
        free = ~self.periodic
        if not np.any(free):
            return True
        return bool(
            np.all(x[free] - self.lo[free] >= margin)
            and np.all(self.hi[free] - x[free] >= margin)
        )


@dataclass(frozen=True)
class DerivativeBackend:
    """How metric partial derivatives are produced.

    ``analytic`` requires the metric to carry closed-form partials;
    ``central`` uses symmetric O(h^2) stencils; ``richardson`` combines
    steps h and h/2 for O(h^4).
    """

    mode: str = "richardson"
    h: float = 1e-4

    def __post_init__(self):
        if self.mode not in _BACKEND_MODES:
            raise ConfigError(f"unknown backend mode {self.mode!r}")
        if not self.h > 0:
            raise ConfigError("backend step h must be positive")


@dataclass(frozen=True)
class MetricField:
    """Smooth symmetric positive-definite tensor field on a chart.

    ``matrix_fn(x)`` returns the raw n x n metric matrix at a reduced chart
    point; it is symmetrized on evaluation and positive definiteness is
    checked lazily at evaluated points.  ``partial_fn(x, i)`` and
    ``second_partial_fn(x, i, j)`` are optional closed forms; when present
    the backend may be ``analytic``.
    """

    chart: Chart
    matrix_fn: Callable[[Array], Array]
    backend: DerivativeBackend = field(default_factory=DerivativeBackend)
    partial_fn: Optional[Callable[[Array, int], Array]] = None
    second_partial_fn: Optional[Callable[[Array, int, int], Array]] = None
    name: str = "metric"

    def __post_init__(self):
        if self.backend.mode == "analytic" and (
            self.partial_fn is None or self.second_partial_fn is None
        ):
            raise ConfigError("analytic backend needs closed-form partials")

    @property
    def n(self) -> int:
        return self.chart.n


def metric_at(metric: MetricField, x: Array) -> Array:
    """Evaluate the metric matrix at a chart point.

    Returns an exactly symmetric SPD matrix; raises OutOfDomainError or
    NotPositiveDefiniteError otherwise.
    """
    x = metric.chart.require_inside(x)
    g = symmetrize(np.asarray(metric.matrix_fn(x), dtype=float))
    if g.shape != (metric.n, metric.n):
        raise ConfigError(f"metric_fn returned shape {g.shape}")
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            f"metric {metric.name!r} not positive definite at {x}"
        ) from None
    return g


def metric_inverse_at(metric: MetricField, x: Array) -> Array:
    """Inverse metric matrix; symmetric, product with metric ~ identity."""
    g = metric_at(metric, x)
    return symmetrize(np.linalg.inv(g))


def _raw(metric: MetricField, x: Array) -> Array:
    return symmetrize(np.asarray(metric.matrix_fn(metric.chart.reduce(x)), dtype=float))


def _check_stencil(metric: MetricField, x: Array, reach: float) -> None:
    if not metric.chart.interior_by(x, reach):
        raise StencilError(
            f"finite-difference stencil (reach {reach:g}) exits the chart at {x}"
        )


def _fd_partial(metric: MetricField, x: Array, i: int, h: float) -> Array:
    e = np.zeros(metric.n)
    e[i] = h
    return (_raw(metric, x + e) - _raw(metric, x - e)) / (2.0 * h)


def _fd_second(metric: MetricField, x: Array, i: int, j: int, h: float) -> Array:
    ei = np.zeros(metric.n)
    ei[i] = h
    if i == j:
        return (_raw(metric, x + ei) - 2.0 * _raw(metric, x) + _raw(metric, x - ei)) / (
            h * h
        )
    ej = np.zeros(metric.n)
    ej[j] = h
    return (
        _raw(metric, x + ei + ej)
        - _raw(metric, x + ei - ej)
        - _raw(metric, x - ei + ej)
        + _raw(metric, x - ei - ej)
    ) / (4.0 * h * h)


def metric_partial(metric: MetricField, x: Array, i: int) -> Array:
    """First partial derivative d_i g at x (symmetric matrix)."""
    x = metric.chart.require_inside(x)
    b = metric.backend
    if b.mode == "analytic":
        return symmetrize(np.asarray(metric.partial_fn(x, i), dtype=float))
    _check_stencil(metric, x, 2.0 * b.h)
    if b.mode == "central":
        return _fd_partial(metric, x, i, b.h)
    coarse = _fd_partial(metric, x, i, b.h)
    fine = _fd_partial(metric, x, i, 0.5 * b.h)
    return (4.0 * fine - coarse) / 3.0


def metric_second_partial(metric: MetricField, x: Array, i: int, j: int) -> Array:
    """Second partial derivative d_i d_j g at x (symmetric matrix)."""
    x = metric.chart.require_inside(x)
    b = metric.backend
    if b.mode == "analytic":
        return symmetrize(np.asarray(metric.second_partial_fn(x, i, j), dtype=float))
    _check_stencil(metric, x, 2.0 * b.h)
    if b.mode == "central":
        return _fd_second(metric, x, i, j, b.h)
    coarse = _fd_second(metric, x, i, j, b.h)
    fine = _fd_second(metric, x, i, j, 0.5 * b.h)
    return (4.0 * fine - coarse) / 3.0


def metric_partials(metric: MetricField, x: Array) -> Array:
    """All first partials stacked as D[a] = d_a g, shape (n, n, n)."""
    n = metric.n
    return np.stack([metric_partial(metric, x, a) for a in range(n)])


def metric_second_partials(metric: MetricField, x: Array) -> Array:
    """All second partials DD[a, b] = d_a d_b g, shape (n, n, n, n)."""
    n = metric.n
    out = np.empty((n, n, n, n))
    for a in range(n):
        for b in range(a, n):
            s = metric_second_partial(metric, x, a, b)
            out[a, b] = s
            out[b, a] = s
    return out


def gram_schmidt_g(
    gram: Array,
    vectors: Sequence[Array] | Array,
    tol: float = TOL_RANK,
    drop_dependent: bool = False,
) -> Array:
    """Orthonormalize vectors with respect to the inner product <u, v> = u^T G v.

    Processes vectors in input order (deterministic) with modified
    Gram-Schmidt plus one re-orthogonalization pass.  Returns the result
    as columns of an (n, k) matrix.  Raises RankDeficiencyError when an
    input vector is dependent within `tol`, unless `drop_dependent`.
    """
    gram = np.asarray(gram, dtype=float)
    cols = np.column_stack([np.asarray(v, dtype=float) for v in vectors]) \
        if not isinstance(vectors, np.ndarray) else np.array(vectors, dtype=float)
    if cols.ndim != 2:
        raise ConfigError("vectors must form a 2-d array of columns")
    out: list[Array] = []
    for k in range(cols.shape[1]):
        v = cols[:, k].copy()
        scale = float(np.sqrt(v @ gram @ v))
        if scale == 0.0:
            if drop_dependent:
                continue
            raise RankDeficiencyError("zero input vector")
        for _ in range(2):  # two MGS passes for 1e-12-level orthogonality
            for u in out:
                v = v - (u @ gram @ v) * u
        norm = float(np.sqrt(max(v @ gram @ v, 0.0)))
        if norm <= tol * scale:
            if drop_dependent:
                continue
            raise RankDeficiencyError(
                f"vector {k} dependent within tolerance {tol:g}"
            )
        out.append(v / norm)
    return np.column_stack(out) if out else np.zeros((cols.shape[0], 0))


def g_orthonormal_complement(gram: Array, basis: Array) -> Array:
    """g-orthonormal basis of the g-orthogonal complement of span(basis).

    `basis` columns are assumed g-orthonormal already; standard basis
    vectors are swept in index order and dependent ones dropped, so the
    result is deterministic.
    """
    n = basis.shape[0]
    candidates = np.hstack([basis, np.eye(n)])
    full = gram_schmidt_g(gram, candidates, tol=1e-7, drop_dependent=True)
    return full[:, basis.shape[1]:]


@dataclass(frozen=True)
class FrameAtPoint:
    """A basis of the tangent space at a chart point, stored as columns."""

    point: Array
    basis: Array

    def __post_init__(self):
        object.__setattr__(self, "point", _freeze(self.point))
        basis = np.array(self.basis, dtype=float, copy=True)
        if basis.shape[0] != basis.shape[1]:
            raise FrameError("frame basis must be square")
        if abs(np.linalg.det(basis)) < 1e-14:
            raise FrameError("frame basis is singular")
        basis.flags.writeable = False
        object.__setattr__(self, "basis", basis)

    def is_g_orthonormal(self, gram: Array, tol: float = TOL_ORTHONORMAL) -> bool:
        b = self.basis
        return bool(
            np.max(np.abs(b.T @ gram @ b - np.eye(b.shape[1]))) < tol
        )


def complete_frame(gram: Array, quad: Array, tol: float = TOL_ORTHONORMAL) -> Array:
    """Extend g-orthonormal columns `quad` to a full g-orthonormal frame.

    The completion sweeps standard basis vectors in index order, so it is
    deterministic.  Raises FrameError when `quad` is not orthonormal.
    """
    quad = np.asarray(quad, dtype=float)
    k = quad.shape[1]
    if np.max(np.abs(quad.T @ gram @ quad - np.eye(k))) >= tol:
        raise FrameError("quadruple is not g-orthonormal within tolerance")
    rest = g_orthonormal_complement(gram, quad)
    return np.hstack([quad, rest])


def linear_adapted_chart(
    metric: MetricField,
    p: Array,
    quad: Array,
    tol: float = TOL_ORTHONORMAL,
) -> MetricField:
    """Push the metric through the affine change y = A (x - p).

    A is chosen so the coordinate frame d/dy_1..d/dy_k at p equals the
    g(p)-orthonormal columns of `quad` (extended g-orthonormally when
    k < n).  The returned metric is the same geometry in new coordinates;
    at y = 0 its matrix is the identity.
    """
    p = metric.chart.require_inside(p)
    gram = metric_at(metric, p)
    quad = np.asarray(quad, dtype=float)
    if quad.ndim != 2 or quad.shape[0] != metric.n:
        raise FrameError("quad must be an (n, k) column matrix")
    frame = quad if quad.shape[1] == metric.n else complete_frame(gram, quad, tol)
    k = frame.shape[1]
    if np.max(np.abs(frame.T @ gram @ frame - np.eye(k))) >= tol:
        raise FrameError("frame is not g-orthonormal within tolerance")

    base = metric
    B = frame.copy()

    # New box: keep p + B y inside the base box along non-periodic axes.
    free = ~base.chart.periodic
    if np.any(free):
        margins = np.minimum(p - base.chart.lo, base.chart.hi - p)[free]
        rows = np.abs(B[free, :]).sum(axis=1)
        rows[rows == 0] = 1e-300
        r = float(np.min(margins / rows))
        r = max(r, 1e-6)
    else:
        r = 1e6
    chart = Chart(lo=-r * np.ones(base.n), hi=r * np.ones(base.n),
                  periodic=np.zeros(base.n, dtype=bool))

    def to_base(y: Array) -> Array:
        return base.chart.reduce(p + B @ y)

    def mat(y: Array) -> Array:
        return B.T @ metric_at(base, to_base(y)) @ B

    def part(y: Array, i: int) -> Array:
        x = to_base(y)
        acc = np.zeros((base.n, base.n))
        for c in range(base.n):
            w = B[c, i]
            if w != 0.0:
                acc += w * metric_partial(base, x, c)
        return B.T @ acc @ B

    def second(y: Array, i: int, j: int) -> Array:
        x = to_base(y)
        acc = np.zeros((base.n, base.n))
        for c in range(base.n):
            wi = B[c, i]
            if wi == 0.0:
                continue
            for d in range(base.n):
                w = wi * B[d, j]
                if w != 0.0:
                    acc += w * metric_second_partial(base, x, c, d)
        return B.T @ acc @ B

    return MetricField(
        chart=chart,
        matrix_fn=mat,
        backend=DerivativeBackend(mode="analytic"),
        partial_fn=part,
        second_partial_fn=second,
        name=f"{base.name}|adapted",
    )


def validate_analytic_partials(
    metric: MetricField,
    points: Sequence[Array],
    tol: float = 1e-5,
    h: float = 1e-4,
) -> float:
    """Cross-check closed-form partials against central differences.

    Returns the max entrywise deviation over the sample; raises ConfigError
    when it exceeds `tol`.
    """
    if metric.partial_fn is None:
        raise ConfigError("metric carries no analytic partials to validate")
    worst = 0.0
    for x in points:
        x = metric.chart.require_inside(x)
        for i in range(metric.n):
            fd = _fd_partial(metric, x, i, h)
            fd = (4.0 * _fd_partial(metric, x, i, 0.5 * h) - fd) / 3.0
            dev = float(np.max(np.abs(fd - symmetrize(metric.partial_fn(x, i)))))
            worst = max(worst, dev)
    if worst > tol:
        raise ConfigError(
            f"analytic partials disagree with finite differences: {worst:g} > {tol:g}"
        )
    return worst
