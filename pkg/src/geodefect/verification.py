"""Cross-module invariant suite behind `geodefect verify`.

Each check returns a record {name, passed, margin, tolerance, detail};
margins are "distance into the safe side" (positive = pass).  The suite
calls curvature through the module attribute so tests can inject faults.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import curvature as _curvature
from .defect import TangentPlane, offblock_invariant, offblock_oracle, plane_defect
from .deformation import (
    build_bump_pair,
    build_cutoff,
    build_deformation,
    build_f_pair,
    local_break,
    perturb,
)
from .errors import GeodefectError
from .manifold import (
    DerivativeBackend,
    MetricField,
    gram_schmidt_g,
    metric_at,
    metric_partial,
)
from .models import make_model

Array = np.ndarray


def _record(name: str, passed: bool, margin: float, tol: float, detail: str = "") -> dict:
    return {
        "name": name,
        "passed": bool(passed),
        "margin": float(margin),
        "tolerance": float(tol),
        "detail": detail,
    }


def _with_backend(metric: MetricField, backend: Optional[DerivativeBackend]) -> MetricField:
    if backend is None:
        return metric
    from dataclasses import replace

    return replace(metric, backend=backend)


def check_curvature_symmetries(backend=None) -> list[dict]:
    out = []
    rng = np.random.default_rng(11)
    tol = 1e-8 if backend is None else 1e-4
    for name, desc, box in [
        ("torus", {"type": "torus", "n": 4}, (0.0, 1.0)),
        ("sphere", {"type": "sphere", "n": 4}, (-1.2, 1.2)),
        ("random-trig", {"type": "random-trig", "n": 4, "seed": 7}, (0.0, 1.0)),
    ]:
        m = _with_backend(make_model(desc), backend)
        worst = 0.0
        for _ in range(10):
            x = rng.uniform(*box, 4)
            worst = max(worst, _curvature.symmetry_residual(
                _curvature.riemann_tensor(m, x)))
        out.append(_record(f"curvature_symmetry_{name}", worst < tol,
                           tol - worst, tol))
    return out


def check_sphere_sectional(backend=None) -> dict:
    m = _with_backend(make_model({"type": "sphere", "n": 4}), backend)
    rng = np.random.default_rng(5)
    tol = 1e-6 if backend is None else 1e-3
    worst = 0.0
    for _ in range(40):
        x = rng.uniform(-1.5, 1.5, 4)
        curv = _curvature.riemann_tensor(m, x)
        u, v = rng.standard_normal(4), rng.standard_normal(4)
        worst = max(worst, abs(_curvature.sectional(curv, u, v) - 1.0))
    return _record("sphere_sectional_unit", worst < tol, tol - worst, tol)


def check_fd_convergence(h: float = 1e-2) -> dict:
    """Central differences must behave O(h^2): halving h quarters the
    error against closed forms, and the fine error must be small."""
    m = make_model({"type": "sphere", "n": 4})
    x = np.array([0.37, -0.51, 0.83, 0.21])
    errs = []
    for step in (h, h / 2):
        fd = _with_backend(m, DerivativeBackend(mode="central", h=step))
        worst = 0.0
        for i in range(4):
            exact = metric_partial(m, x, i)
            worst = max(worst, float(np.max(np.abs(
                metric_partial(fd, x, i) - exact))))
        errs.append(worst)
    ratio = errs[0] / max(errs[1], 1e-300)
    ratio_ok = 3.5 <= ratio <= 4.5
    # The refined error must also be small enough for curvature work; a
    # clean 4.0 ratio at a uselessly large h is still a failure.
    abs_ok = errs[1] < 1e-4
    margin = min(ratio - 3.5, 4.5 - ratio) if abs_ok else 1e-4 - errs[1]
    return _record(
        "fd_convergence_order", ratio_ok and abs_ok, margin, 0.0,
        f"errors {errs[0]:.3e} -> {errs[1]:.3e}, ratio {ratio:.2f}",
    )


def check_jacobi_selfadjoint() -> dict:
    rng = np.random.default_rng(23)
    m = make_model({"type": "random-trig", "n": 4, "seed": 3})
    tol = 1e-8
    worst = 0.0
    for _ in range(25):
        x = rng.uniform(0, 1, 4)
        curv = _curvature.riemann_tensor(m, x)
        v = rng.standard_normal(4)
        j = _curvature.jacobi_operator(curv, v)
        gj = curv.metric @ j
        worst = max(worst, float(np.max(np.abs(gj - gj.T))))
        worst = max(worst, float(np.max(np.abs(j @ v))))
    return _record("jacobi_selfadjoint", worst < tol, tol - worst, tol)


def check_zero_defect(samples: int = 60) -> dict:
    rng = np.random.default_rng(41)
    tol = 1e-8
    worst = 0.0
    for desc, box in [
        ({"type": "torus", "n": 4}, (0.0, 1.0)),
        ({"type": "sphere", "n": 4}, (-1.2, 1.2)),
    ]:
        m = make_model(desc)
        for _ in range(samples):
            x = rng.uniform(*box, 4)
            l = int(rng.integers(2, 4))
            basis = gram_schmidt_g(metric_at(m, x), rng.standard_normal((4, l)))
            plane = TangentPlane(point=x, basis=basis)
            worst = max(worst, plane_defect(m, plane).defect)
    return _record("zero_defect_symmetric_spaces", worst < tol, tol - worst, tol)


def check_invariant_oracle(instances: int = 20, density: int = 2000) -> dict:
    rng = np.random.default_rng(77)
    tol = 1e-4
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(4, 7))
        a = rng.standard_normal((n, n))
        gram = a @ a.T + n * np.eye(n)
        s = rng.standard_normal((n, n))
        j = np.linalg.inv(gram) @ (s + s.T)
        basis = gram_schmidt_g(gram, rng.standard_normal((n, 2)))
        plane = TangentPlane(point=np.zeros(n), basis=basis)
        val, _, _ = offblock_invariant(j, gram, plane)
        o = offblock_oracle(j, gram, plane, density)
        if not o <= val + 1e-12:
            return _record("invariant_vs_oracle", False, o - val, tol,
                           "oracle exceeded the spectral value")
        worst = max(worst, val - o)
    return _record("invariant_vs_oracle", worst < tol, tol - worst, tol)


def check_bump_bounds() -> dict:
    t_fail = ""
    for K in (2.0, 10.0, 100.0):
        for eps in (0.1, 0.01):
            try:
                build_bump_pair(K, eps)
            except GeodefectError as exc:
                t_fail = f"K={K}, eps={eps}: {exc}"
    return _record("bump_pair_bounds", not t_fail, 0.0 if t_fail else 1.0, 0.0,
                   t_fail)


def check_fpair_properties() -> dict:
    cutoff = build_cutoff(0.25, 0.1)
    try:
        build_f_pair(10.0, 0.05, cutoff, 4)
        return _record("fpair_properties", True, 1.0, 0.0)
    except GeodefectError as exc:
        return _record("fpair_properties", False, 0.0, 0.0, str(exc))


def check_locality() -> dict:
    torus = make_model({"type": "torus", "n": 4})
    plane = TangentPlane(point=np.full(4, 0.5), basis=np.eye(4)[:, :2])
    spec = build_deformation(torus, plane, 10.0, 0.05, 0.25, 0.1)
    rng = np.random.default_rng(9)
    ainv = np.linalg.inv(spec.frame.frame)
    bad = 0
    for s in (2.0**-10, 2.0**-14, 2.0**-18):
        gs = perturb(torus, spec, s)
        for _ in range(300):
            x = rng.uniform(0, 1, 4)
            y = ainv @ torus.chart.displacement(x, plane.point)
            if np.linalg.norm(y) >= spec.cutoff.support:
                if not np.array_equal(metric_at(gs, x), metric_at(torus, x)):
                    bad += 1
    return _record("deformation_locality_bitwise", bad == 0, float(-bad), 0.0)


def check_break_parts() -> dict:
    torus = make_model({"type": "torus", "n": 4})
    plane = TangentPlane(point=np.full(4, 0.5), basis=np.eye(4)[:, :2])
    try:
        _, rep = local_break(torus, plane, K=10.0, probe_mode="full")
    except GeodefectError as exc:
        return _record("local_break_parts_2_3_4", False, 0.0, 0.0, str(exc))
    ok = rep["fitted_c"] > 1.0 and rep["part3_max_ratio"] <= 2.2 \
        and rep["part4_eps0"] <= 0.05 * 10.0
    return _record(
        "local_break_parts_2_3_4", ok,
        min(rep["fitted_c"] - 1.0, 2.2 - rep["part3_max_ratio"]), 0.0,
        f"c={rep['fitted_c']:.3f}, part3={rep['part3_max_ratio']:.3f}, "
        f"eps0={rep['part4_eps0']:.3e}",
    )


def run_verification_suite(backend: Optional[DerivativeBackend] = None,
                           fd_h: float = 1e-2) -> list[dict]:
    """Full invariant suite; `backend` overrides the metric backends
    (None keeps analytic closed forms)."""
    records = []
    records.extend(check_curvature_symmetries(backend))
    records.append(check_sphere_sectional(backend))
    records.append(check_fd_convergence(fd_h))
    records.append(check_jacobi_selfadjoint())
    records.append(check_zero_defect())
    records.append(check_invariant_oracle())
    records.append(check_bump_bounds())
    records.append(check_fpair_properties())
    records.append(check_locality())
    records.append(check_break_parts())
    return records
