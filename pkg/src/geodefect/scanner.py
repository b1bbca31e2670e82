"""Finite scans of the Grassmannian bundle of a chart metric.

A scan walks a deterministic spatial grid, samples seeded quasi-random
l-planes at each point, and measures every plane's partial-geodesy
defect.  Low-defect planes can be covered greedily by product-distance
balls (base distance plus largest principal angle), which is what the
deformation pipeline consumes; regions with uniformly positive sampled
defect get a margin certificate.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .defect import (
    DefectReport,
    TangentPlane,
    plane_defect,
    tau_pg_for,
)
from .curvature import riemann_tensor
from .errors import ConfigError, RankDeficiencyError
from .manifold import Chart, MetricField, gram_schmidt_g, metric_at

Array = np.ndarray


@dataclass(frozen=True)
class ScanGrid:
    """Deterministic sampling plan for one scan."""

    counts: tuple
    planes_per_point: int
    l: int
    seed: int = 0
    v_density: Optional[int] = None
    refine: bool = True

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if any(c < 1 for c in counts):
            raise ConfigError("grid counts must be positive")
        if self.planes_per_point < 1:
            raise ConfigError("planes_per_point must be positive")
        if self.l < 2:
            raise ConfigError("plane dimension l must be >= 2")


@dataclass(frozen=True)
class Region:
    """Axis-aligned sub-box of a chart."""

    lo: Array
    hi: Array

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float)
        hi = np.array(self.hi, dtype=float)
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if not np.all(hi > lo):
            raise ConfigError("region must have positive volume")

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}


def grid_points(chart: Chart, counts: Sequence[int], region: Optional[Region] = None) -> Array:
    """Deterministic spatial grid: offset lattice on periodic axes, strictly
    interior lattice on bounded ones.  Rows are chart points."""
    if len(counts) != chart.n:
        raise ConfigError(f"need {chart.n} per-axis counts, got {len(counts)}")
    lo = chart.lo if region is None else np.maximum(chart.lo, region.lo)
    hi = chart.hi if region is None else np.minimum(chart.hi, region.hi)
    if not np.all(hi > lo):
        raise ConfigError("region does not intersect the chart")
    axes = []
    for i, c in enumerate(counts):
        if chart.periodic[i] and region is None:
            axes.append(lo[i] + (hi[i] - lo[i]) * (np.arange(c) + 0.5) / c)
        else:
            axes.append(lo[i] + (hi[i] - lo[i]) * (np.arange(c) + 1.0) / (c + 1.0))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def sample_plane(
    metric: MetricField,
    gram: Array,
    point: Array,
    l: int,
    seed_path: Sequence[int],
) -> TangentPlane:
    """Seeded quasi-random plane: g-orthonormalized Gaussian l-frame.

    The seed path (scan seed, point index, plane index) makes every sample
    independent of evaluation order, so parallel and serial scans agree.
    """
    n = metric.n
    for attempt in range(8):
        rng = np.random.default_rng(list(seed_path) + [attempt])
        raw = rng.standard_normal((n, l))
        try:
            basis = gram_schmidt_g(gram, raw)
        except RankDeficiencyError:
            continue
        return TangentPlane(point=point, basis=basis)
    raise RankDeficiencyError("could not draw an independent plane sample")


def _scan_point(metric, grid, point_index, point):
    curv = riemann_tensor(metric, point)
    out = []
    for j in range(grid.planes_per_point):
        plane = sample_plane(
            metric, curv.metric, curv.point, grid.l,
            (grid.seed, point_index, j),
        )
        rep = plane_defect(
            metric, plane,
            curvature=curv,
            v_density=grid.v_density,
            refine=grid.refine,
        )
        rep.meta.update({"point_index": int(point_index), "plane_index": int(j)})
        out.append(rep)
    return out


def scan(
    metric: MetricField,
    grid: ScanGrid,
    region: Optional[Region] = None,
) -> list[DefectReport]:
    """One defect report per (grid point, sampled plane), sorted ascending
    by defect (ties broken by sample indices).  Bit-identical across reruns
    and thread counts for a fixed seed."""
    pts = grid_points(metric.chart, grid.counts, region)
    threads = int(os.environ.get("GEODEFECT_THREADS", "1") or "1")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(
                pool.map(lambda i: _scan_point(metric, grid, i, pts[i]),
                         range(pts.shape[0]))
            )
    else:
        chunks = [_scan_point(metric, grid, i, pts[i]) for i in range(pts.shape[0])]
    reports = [r for chunk in chunks for r in chunk]
    reports.sort(
        key=lambda r: (r.defect, r.meta["point_index"], r.meta["plane_index"])
    )
    return reports


def principal_angle_distance(basis_a: Array, basis_b: Array) -> float:
    """Largest principal angle between two column spans (Euclidean
    orthonormalization; coordinate identification, no parallel transport)."""
    qa = np.linalg.qr(basis_a)[0]
    qb = np.linalg.qr(basis_b)[0]
    s = np.linalg.svd(qa.T @ qb, compute_uv=False)
    return float(np.arccos(np.clip(np.min(s), -1.0, 1.0)))


def product_distance(chart: Chart, a: TangentPlane, b: TangentPlane) -> float:
    """Base Euclidean distance (periodic-aware) plus largest principal angle."""
    base = float(np.linalg.norm(chart.displacement(a.point, b.point)))
    return base + principal_angle_distance(a.basis, b.basis)


@dataclass(frozen=True)
class CoverBall:
    """One product-distance ball of the greedy cover."""

    plane: TangentPlane
    radius: float
    report: DefectReport

    def to_dict(self) -> dict:
        return {
            "point": self.plane.point.tolist(),
            "basis": self.plane.basis.tolist(),
            "radius": self.radius,
            "defect": self.report.defect,
        }


def candidate_cover(
    chart: Chart,
    reports: Sequence[DefectReport],
    rho: float,
    tau_pg: float,
) -> list[CoverBall]:
    """Greedy product-distance cover of all low-defect sampled planes.

    Walks reports in their (sorted) order; a plane farther than `rho` from
    every chosen center becomes a new center with radius `rho`.
    """
    if rho <= 0:
        raise ConfigError("cover radius must be positive")
    balls: list[CoverBall] = []
    for rep in reports:
        if rep.defect >= tau_pg:
            continue
        covered = any(
            product_distance(chart, rep.plane, ball.plane) <= ball.radius
            for ball in balls
        )
        if not covered:
            balls.append(CoverBall(plane=rep.plane, radius=float(rho), report=rep))
    return balls


@dataclass(frozen=True)
class MarginCertificate:
    """Sampled lower bound on the defect over a region; margin 0 = failure."""

    region: Region
    l: int
    margin: float
    min_report: DefectReport
    samples: int
    field_name: str = ""

    @property
    def passed(self) -> bool:
        return self.margin > 0.0

    def to_dict(self) -> dict:
        return {
            "region": self.region.to_dict(),
            "l": self.l,
            "margin": self.margin,
            "samples": self.samples,
            "min_defect_plane": self.min_report.to_dict(),
            "passed": self.passed,
        }


def min_defect_certificate(
    metric: MetricField,
    region: Optional[Region],
    l: int,
    threshold: float,
    grid: ScanGrid,
) -> MarginCertificate:
    """Certify `defect > threshold` over all sampled planes of a region.

    On success the margin is the minimum sampled defect; on failure the
    margin is 0 and the violating (minimum) plane rides along in
    `min_report` to feed the deformation pipeline.
    """
    if grid.l != l:
        grid = ScanGrid(grid.counts, grid.planes_per_point, l,
                        grid.seed, grid.v_density, grid.refine)
    reports = scan(metric, grid, region)
    if not reports:
        raise ConfigError("empty region: no samples")
    worst = reports[0]
    reg = region if region is not None else Region(metric.chart.lo, metric.chart.hi)
    ok = worst.defect > threshold
    return MarginCertificate(
        region=reg,
        l=l,
        margin=float(worst.defect) if ok else 0.0,
        min_report=worst,
        samples=len(reports),
        field_name=metric.name,
    )
