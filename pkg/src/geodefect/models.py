"""Model zoo: chart metrics with closed-form first and second partials.

Descriptors are JSON objects ``{type, n, params, seed}``.  Every zoo entry
supplies analytic partials, so curvature downstream loses no accuracy to
finite differencing unless an FD backend is requested explicitly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import ConfigError
from .manifold import Chart, DerivativeBackend, MetricField

Array = np.ndarray


@dataclass(frozen=True)
class ModelDescriptor:
    """Serializable recipe for a zoo metric."""

    type: str
    n: int
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def to_dict(self) -> dict:
        return {"type": self.type, "n": self.n, "params": dict(self.params),
                "seed": self.seed}

    @staticmethod
    def from_dict(obj: dict) -> "ModelDescriptor":
        if not isinstance(obj, dict) or "type" not in obj:
            raise ConfigError("model descriptor must be an object with a 'type'")
        return ModelDescriptor(
            type=str(obj["type"]),
            n=int(obj.get("n", 4)),
            params=dict(obj.get("params", {}) or {}),
            seed=None if obj.get("seed") is None else int(obj["seed"]),
        )

    @staticmethod
    def from_json(text: str) -> "ModelDescriptor":
        return ModelDescriptor.from_dict(json.loads(text))


def _analytic(chart, mat, part, second, name) -> MetricField:
    return MetricField(
        chart=chart,
        matrix_fn=mat,
        backend=DerivativeBackend(mode="analytic"),
        partial_fn=part,
        second_partial_fn=second,
        name=name,
    )


def _flat_torus(n: int, params: dict, seed) -> MetricField:
    period = float(params.get("period", 1.0))
    if period <= 0:
        raise ConfigError("torus period must be positive")
    chart = Chart(np.zeros(n), period * np.ones(n), np.ones(n, dtype=bool))
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return _analytic(
        chart,
        lambda x: eye,
        lambda x, i: zero,
        lambda x, i, j: zero,
        f"torus{n}",
    )


def _round_sphere(n: int, params: dict, seed) -> MetricField:
    # Stereographic chart of the round sphere of radius R (curvature 1/R^2):
    # g = phi * I with phi = 4 R^4 / (R^2 + |x|^2)^2.
    radius = float(params.get("radius", 1.0))
    extent = float(params.get("extent", 2.5))
    if radius <= 0 or extent <= 0:
        raise ConfigError("sphere radius/extent must be positive")
    r2 = radius * radius
    chart = Chart(-extent * np.ones(n), extent * np.ones(n),
                  np.zeros(n, dtype=bool))
    eye = np.eye(n)

    def mat(x):
        return (4.0 * r2 * r2 / (r2 + x @ x) ** 2) * eye

    def part(x, i):
        return (-16.0 * r2 * r2 * x[i] / (r2 + x @ x) ** 3) * eye

    def second(x, i, j):
        q = r2 + x @ x
        c = -16.0 * r2 * r2 * (1.0 if i == j else 0.0) / q**3 \
            + 96.0 * r2 * r2 * x[i] * x[j] / q**4
        return c * eye

    return _analytic(chart, mat, part, second, f"sphere{n}")


def _ellipsoid(n: int, params: dict, seed) -> MetricField:
    # Graph chart of the upper half of sum x_i^2/a_i^2 + z^2/c^2 = 1:
    # z = c sqrt(1 - q), q = sum x_i^2/a_i^2, induced metric
    # g_ij = delta_ij + dz_i dz_j (first fundamental form J^T J).
    axes = params.get("semi_axes")
    if axes is None:
        axes = [1.0] * n + [2.0]
    axes = [float(a) for a in axes]
    if len(axes) != n + 1 or any(a <= 0 for a in axes):
        raise ConfigError("ellipsoid needs n + 1 positive semi-axes")
    a2 = np.array(axes[:n]) ** 2
    c = axes[n]
    fraction = float(params.get("extent", 0.35))
    half = fraction * np.array(axes[:n])
    chart = Chart(-half, half, np.zeros(n, dtype=bool))

    def dz(x):
        w = np.sqrt(1.0 - np.sum(x * x / a2))
        return -c * x / (a2 * w), w

    def d2z(x):
        g1, w = dz(x)
        u = x / a2
        return -c * (np.diag(1.0 / a2) / w + np.outer(u, u) / w**3), g1, w, u

    def mat(x):
        g1, _ = dz(x)
        return np.eye(n) + np.outer(g1, g1)

    def part(x, k):
        h, g1, w, u = d2z(x)
        return np.outer(h[k], g1) + np.outer(g1, h[k])

    def second(x, k, l):
        # d_l d_k d_m z = -c [delta_km u_l/a_m^2 + delta_lm u_k/a_m^2
        #                     + delta_kl u_m/a_k^2] / w^3
        #                 - 3 c u_k u_l u_m / w^5,  with u_m = x_m / a_m^2
        h, g1, w, u = d2z(x)
        dm = np.arange(n)
        third = -c * (
            (np.where(dm == k, 1.0, 0.0) * u[l]
             + np.where(dm == l, 1.0, 0.0) * u[k]) / (a2 * w**3)
            + (1.0 if k == l else 0.0) * u / (a2[k] * w**3)
            + 3.0 * u[k] * u[l] * u / w**5
        )
        return (
            np.outer(third, g1) + np.outer(g1, third)
            + np.outer(h[k], h[l]) + np.outer(h[l], h[k])
        )

    return _analytic(chart, mat, part, second, f"ellipsoid{n}")


def _warped(n: int, params: dict, seed) -> MetricField:
    # g = dx1^2 + w(x1)^2 (dx2^2 + ... + dxn^2), w = 1 + A sin(omega x1).
    amp = float(params.get("amplitude", 0.3))
    omega = float(params.get("frequency", 1.0))
    if not 0 <= amp < 1:
        raise ConfigError("warped amplitude must be in [0, 1)")
    extent = float(params.get("extent", 3.0))
    chart = Chart(-extent * np.ones(n), extent * np.ones(n),
                  np.zeros(n, dtype=bool))

    def w012(x1):
        s, co = np.sin(omega * x1), np.cos(omega * x1)
        w = 1.0 + amp * s
        return w, amp * omega * co, -amp * omega * omega * s

    def mat(x):
        w, _, _ = w012(x[0])
        d = np.full(n, w * w)
        d[0] = 1.0
        return np.diag(d)

    def part(x, i):
        if i != 0:
            return np.zeros((n, n))
        w, w1, _ = w012(x[0])
        d = np.full(n, 2.0 * w * w1)
        d[0] = 0.0
        return np.diag(d)

    def second(x, i, j):
        if i != 0 or j != 0:
            return np.zeros((n, n))
        w, w1, w2 = w012(x[0])
        d = np.full(n, 2.0 * (w1 * w1 + w * w2))
        d[0] = 0.0
        return np.diag(d)

    return _analytic(chart, mat, part, second, f"warped{n}")


def _random_trig(n: int, params: dict, seed) -> MetricField:
    # g = I + S(x) with S a seeded symmetric trigonometric polynomial in
    # integer modes, scaled so ||S||_2 <= amplitude everywhere (SPD for
    # amplitude < 1).  Periodic with period 1, so it lives on the torus.
    amp = float(params.get("amplitude", 0.05))
    modes = int(params.get("modes", 3))
    if not 0 < amp < 1:
        raise ConfigError("random-trig amplitude must be in (0, 1)")
    if modes < 1:
        raise ConfigError("random-trig needs at least one mode")
    rng = np.random.default_rng(0 if seed is None else seed)
    waves = []
    coeffs = []
    phases = []
    for _ in range(modes):
        k = rng.integers(-2, 3, size=n)
        while not np.any(k):
            k = rng.integers(-2, 3, size=n)
        c = rng.standard_normal((n, n))
        waves.append(2.0 * np.pi * k.astype(float))
        coeffs.append(0.5 * (c + c.T))
        phases.append(rng.uniform(0.0, 2.0 * np.pi))
    total = sum(np.linalg.norm(c, 2) for c in coeffs)
    coeffs = [c * (amp / total) for c in coeffs]
    chart = Chart(np.zeros(n), np.ones(n), np.ones(n, dtype=bool))

    def mat(x):
        g = np.eye(n)
        for k, c, p in zip(waves, coeffs, phases):
            g = g + c * np.cos(k @ x + p)
        return g

    def part(x, i):
        g = np.zeros((n, n))
        for k, c, p in zip(waves, coeffs, phases):
            g = g - c * k[i] * np.sin(k @ x + p)
        return g

    def second(x, i, j):
        g = np.zeros((n, n))
        for k, c, p in zip(waves, coeffs, phases):
            g = g - c * k[i] * k[j] * np.cos(k @ x + p)
        return g

    return _analytic(chart, mat, part, second, f"random-trig{n}(seed={seed})")


MODEL_ZOO: dict[str, dict[str, Any]] = {
    "torus": {
        "builder": _flat_torus,
        "doc": "Flat torus T^n; params: period (default 1.0).",
    },
    "sphere": {
        "builder": _round_sphere,
        "doc": "Round S^n in a stereographic chart; params: radius (1.0), "
               "extent (2.5).",
    },
    "ellipsoid": {
        "builder": _ellipsoid,
        "doc": "Ellipsoid graph chart; params: semi_axes (n+1 values, last is "
               "the graph axis), extent fraction (0.35).",
    },
    "warped": {
        "builder": _warped,
        "doc": "Warped product dx1^2 + w(x1)^2 dx_rest^2 with "
               "w = 1 + amplitude*sin(frequency*x1); params: amplitude (0.3), "
               "frequency (1.0), extent (3.0).",
    },
    "random-trig": {
        "builder": _random_trig,
        "doc": "Seeded trigonometric perturbation of the flat torus metric; "
               "params: amplitude (0.05), modes (3); seed required for "
               "reproducibility.",
    },
}


def make_model(spec: ModelDescriptor | dict) -> MetricField:
    """Build a zoo metric from a descriptor (dict or ModelDescriptor)."""
    if isinstance(spec, dict):
        spec = ModelDescriptor.from_dict(spec)
    if spec.type not in MODEL_ZOO:
        known = ", ".join(sorted(MODEL_ZOO))
        raise ConfigError(f"unknown model {spec.type!r}; known models: {known}")
    if spec.n < 2:
        raise ConfigError("models need dimension n >= 2")
    return MODEL_ZOO[spec.type]["builder"](spec.n, spec.params, spec.seed)


def zoo_listing() -> list[dict]:
    """Machine-readable zoo catalogue for the CLI."""
    return [
        {"type": name, "doc": entry["doc"]}
        for name, entry in sorted(MODEL_ZOO.items())
    ]
