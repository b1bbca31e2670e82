"""Batch front-end: model zoo, scans, deformation pipeline, verification.

Exit codes are stable API: 0 success, 2 configuration error, 3 numerical
failure, 4 budget exhausted, 5 verification failure.  All outputs are
deterministic functions of (config, seed); JSON is written with sorted
keys and CSV with full-precision floats, so reruns are bit-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import schemas
from .deformation import deformed_descriptor, global_pipeline, load_deformed_metric
from .defect import tau_pg_for
from .errors import BudgetExhaustedError, ConfigError, GeodefectError
from .manifold import DerivativeBackend, MetricField
from .models import MODEL_ZOO, ModelDescriptor, make_model, zoo_listing
from .scanner import Region, ScanGrid, min_defect_certificate, scan
from .verification import run_verification_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_BUDGET = 4
EXIT_VERIFY = 5


def _parse_schedule(text: str) -> list[float]:
    """Accepts '2^-10..2^-20' (powers of two, inclusive) or a comma list."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)

        def _pow(tok: str) -> int:
            tok = tok.strip()
            if not tok.startswith("2^"):
                raise ConfigError(f"schedule endpoint {tok!r} must look like 2^-10")
            return int(tok[2:])

        a, b = _pow(lo), _pow(hi)
        step = -1 if a > b else 1
        return [2.0**k for k in range(a, b + step, step)]
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad s-schedule {text!r}") from exc
    if not values:
        raise ConfigError("empty s-schedule")
    return values


def _parse_grid(text: str, n: int) -> tuple:
    parts = [int(tok) for tok in str(text).split(",") if tok.strip()]
    if len(parts) == 1:
        parts = parts * n
    if len(parts) != n:
        raise ConfigError(f"grid needs 1 or {n} counts, got {len(parts)}")
    return tuple(parts)


def _load_metric(args) -> tuple[MetricField, dict]:
    """Returns (metric, serializable model descriptor)."""
    if args.model_file:
        obj = json.loads(Path(args.model_file).read_text())
        if "base" in obj:
            jsonschema.validate(obj, schemas.DEFORMED_METRIC_SCHEMA)
            return load_deformed_metric(obj), obj
        jsonschema.validate(obj, schemas.MODEL_DESCRIPTOR_SCHEMA)
        return make_model(obj), obj
    if not args.model:
        raise ConfigError("need --model or --model-file")
    if args.model not in MODEL_ZOO:
        known = ", ".join(sorted(MODEL_ZOO))
        raise ConfigError(
            f"unknown model {args.model!r}; run `geodefect zoo` "
            f"(known: {known})"
        )
    params = json.loads(args.params) if args.params else {}
    desc = ModelDescriptor(type=args.model, n=args.n, params=params,
                           seed=args.seed)
    metric = make_model(desc)
    if args.backend != "analytic":
        from dataclasses import replace

        metric = replace(
            metric, backend=DerivativeBackend(mode=args.backend, h=args.h)
        )
    return metric, desc.to_dict()


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _build_config(args, command: str, model_desc: Optional[dict]) -> dict:
    cfg = {"command": command}
    if model_desc is not None:
        cfg["model"] = model_desc
    for key in ("l", "planes_per_point", "seed", "q"):
        if hasattr(args, key) and getattr(args, key) is not None:
            cfg[key] = int(getattr(args, key))
    for key in ("K", "eps", "rho", "eta", "xi"):
        if hasattr(args, key) and getattr(args, key) is not None:
            cfg[key] = float(getattr(args, key))
    if getattr(args, "grid", None) is not None and "n" in (model_desc or {}):
        cfg["grid"] = list(_parse_grid(args.grid, model_desc["n"]))
    if getattr(args, "s_schedule", None):
        cfg["s_schedule"] = _parse_schedule(args.s_schedule)
    if getattr(args, "v_density", None) is not None:
        cfg["v_density"] = int(args.v_density)
    if getattr(args, "threshold", None) is not None:
        cfg["threshold"] = float(args.threshold)
    if getattr(args, "tol_pg", None) is not None:
        cfg.setdefault("tolerances", {})["tau_pg"] = float(args.tol_pg)
    cfg["out_dir"] = getattr(args, "out_dir", None)
    cfg["json"] = bool(getattr(args, "json", False))
    jsonschema.validate(cfg, schemas.RUN_CONFIG_SCHEMA)
    return cfg


def cmd_zoo(args) -> int:
    listing = zoo_listing()
    jsonschema.validate(listing, schemas.ZOO_LISTING_SCHEMA)
    if args.json:
        print(json.dumps(listing, sort_keys=True, indent=2))
    else:
        for entry in listing:
            print(f"{entry['type']:12s} {entry['doc']}")
    return EXIT_OK


def _grid_from_args(args, metric: MetricField, l: int) -> ScanGrid:
    counts = _parse_grid(args.grid, metric.n)
    return ScanGrid(
        counts=counts,
        planes_per_point=args.planes_per_point,
        l=l,
        seed=args.seed,
        v_density=args.v_density,
        refine=not args.no_refine,
    )


def cmd_scan(args) -> int:
    metric, model_desc = _load_metric(args)
    cfg = _build_config(args, "scan", model_desc)
    grid = _grid_from_args(args, metric, args.l)
    tau = args.tol_pg if args.tol_pg is not None else tau_pg_for(metric)
    reports = scan(metric, grid)
    out = _out_dir(args)

    with open(out / "reports.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [f"x{i}" for i in range(metric.n)] + ["plane_id", "defect"]
        )
        for r in reports:
            pid = f"{r.meta['point_index']}:{r.meta['plane_index']}"
            writer.writerow(
                [repr(float(v)) for v in r.plane.point] + [pid, repr(r.defect)]
            )

    summary = {
        "min_defect": reports[0].defect,
        "samples": len(reports),
        "argmin": reports[0].to_dict(),
        "config": cfg,
        "tau_pg": tau,
    }
    if args.threshold is not None:
        cert = min_defect_certificate(metric, None, args.l, args.threshold, grid)
        summary["certificate"] = cert.to_dict()
    jsonschema.validate(summary, schemas.SCAN_SUMMARY_SCHEMA)
    _dump_json(out / "summary.json", summary)
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        print(f"scanned {len(reports)} planes; min defect {reports[0].defect:.6e}"
              f" (tau_pg {tau:g})")
    return EXIT_OK


def cmd_deform(args) -> int:
    metric, model_desc = _load_metric(args)
    cfg = _build_config(args, "deform", model_desc)
    if "s_schedule" in cfg and not cfg["s_schedule"]:
        raise ConfigError("s-schedule must not be empty")
    grid = _grid_from_args(args, metric, args.l)
    schedule = _parse_schedule(args.s_schedule) if args.s_schedule else None
    out = _out_dir(args)
    try:
        final, audit = global_pipeline(
            metric,
            l=args.l,
            K=args.K,
            xi=args.xi,
            grid=grid,
            eps=args.eps,
            rho=args.rho,
            eta=args.eta,
            s_schedule=schedule,
            tau_pg=args.tol_pg,
            q=args.q,
        )
    except BudgetExhaustedError as exc:
        _dump_json(out / "audit.json", exc.audit)
        if exc.metric is not None and hasattr(exc.metric, "deformation_layers"):
            _dump_json(out / "final_metric.json",
                       deformed_descriptor(exc.metric, model_desc))
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    jsonschema.validate(audit, schemas.AUDIT_LOG_SCHEMA)
    _dump_json(out / "audit.json", audit)
    desc = deformed_descriptor(final, model_desc) if hasattr(
        final, "deformation_layers") else {"base": model_desc, "deformations": []}
    jsonschema.validate(desc, schemas.DEFORMED_METRIC_SCHEMA)
    _dump_json(out / "final_metric.json", desc)
    if args.json:
        print(json.dumps({"steps": len(audit), "config": cfg}, sort_keys=True))
    else:
        print(f"pipeline finished in {len(audit)} deformation steps; "
              f"descriptor written to {out / 'final_metric.json'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    backend = None
    if args.backend != "analytic":
        backend = DerivativeBackend(mode=args.backend, h=args.h)
    records = run_verification_suite(backend=backend, fd_h=args.h)
    jsonschema.validate(records, schemas.VERIFY_REPORT_SCHEMA)
    out = _out_dir(args)
    _dump_json(out / "verify_report.json", records)
    ok = all(r["passed"] for r in records)
    if args.json:
        print(json.dumps(records, sort_keys=True))
    else:
        for r in records:
            flag = "PASS" if r["passed"] else "FAIL"
            print(f"[{flag}] {r['name']:32s} margin {r['margin']:+.3e} "
                  f"{r.get('detail', '')}")
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geodefect",
        description="Scan chart metrics for partially geodesic tangent "
                    "planes and deform them away.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common_model(p):
        p.add_argument("--model", help="zoo model name (see `geodefect zoo`)")
        p.add_argument("--model-file", help="JSON descriptor path (plain or "
                                            "base+deformations)")
        p.add_argument("--n", type=int, default=4, help="chart dimension")
        p.add_argument("--params", help="JSON object of model parameters")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--backend", default="analytic",
                       choices=["analytic", "central", "richardson"])
        p.add_argument("--h", type=float, default=1e-4,
                       help="finite-difference step")

    def common_scan(p):
        p.add_argument("--l", type=int, default=2, help="plane dimension")
        p.add_argument("--grid", default="2", help="per-axis counts, e.g. 2 "
                                                   "or 2,2,2,2")
        p.add_argument("--planes-per-point", dest="planes_per_point",
                       type=int, default=4)
        p.add_argument("--v-density", dest="v_density", type=int)
        p.add_argument("--no-refine", action="store_true")
        p.add_argument("--tol-pg", dest="tol_pg", type=float)
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--json", action="store_true")

    p_zoo = sub.add_parser("zoo", help="list the model zoo")
    p_zoo.add_argument("--json", action="store_true")
    p_zoo.set_defaults(func=cmd_zoo)

    p_scan = sub.add_parser("scan", help="scan for low-defect planes")
    common_model(p_scan)
    common_scan(p_scan)
    p_scan.add_argument("--threshold", type=float,
                        help="also emit a margin certificate at this level")
    p_scan.set_defaults(func=cmd_scan)

    p_def = sub.add_parser("deform", help="run the deformation pipeline")
    common_model(p_def)
    common_scan(p_def)
    p_def.add_argument("--K", type=float, default=10.0)
    p_def.add_argument("--eps", type=float, default=0.05)
    p_def.add_argument("--rho", type=float, default=0.25)
    p_def.add_argument("--eta", type=float, default=0.1)
    p_def.add_argument("--xi", type=float, default=2.0)
    p_def.add_argument("--q", type=int, default=2)
    p_def.add_argument("--s-schedule", dest="s_schedule",
                       help="'2^-10..2^-20' or comma-separated floats")
    p_def.set_defaults(func=cmd_deform)

    p_ver = sub.add_parser("verify", help="run the invariant suite")
    p_ver.add_argument("--backend", default="analytic",
                       choices=["analytic", "central", "richardson"])
    p_ver.add_argument("--h", type=float, default=1e-2)
    p_ver.add_argument("--out-dir", dest="out_dir")
    p_ver.add_argument("--json", action="store_true")
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, jsonschema.ValidationError, json.JSONDecodeError,
            FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExhaustedError as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except GeodefectError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
