"""Published JSON schemas for CLI inputs and outputs."""

MODEL_DESCRIPTOR_SCHEMA = {
    "type": "object",
    "properties": {
        "type": {"type": "string"},
        "n": {"type": "integer", "minimum": 2},
        "params": {"type": "object"},
        "seed": {"type": ["integer", "null"]},
    },
    "required": ["type"],
    "additionalProperties": False,
}

DEFORMED_METRIC_SCHEMA = {
    "type": "object",
    "properties": {
        "base": MODEL_DESCRIPTOR_SCHEMA,
        "deformations": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "point": {"type": "array"},
                    "plane_basis": {"type": "array"},
                    "frame": {"type": "array"},
                    "quad": {"type": "array"},
                    "case": {"enum": ["codim2", "hypersurface"]},
                    "rho": {"type": "number"},
                    "eta": {"type": "number"},
                    "K": {"type": "number"},
                    "eps": {"type": "number"},
                    "eps_tilde": {"type": "number"},
                    "delta": {"type": "number"},
                    "s": {"type": "number"},
                },
                "required": ["point", "plane_basis", "frame", "quad", "case",
                             "rho", "eta", "K", "eps", "eps_tilde", "delta", "s"],
            },
        },
    },
    "required": ["base", "deformations"],
}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "command": {"enum": ["zoo", "scan", "deform", "verify"]},
        "model": {"oneOf": [MODEL_DESCRIPTOR_SCHEMA, DEFORMED_METRIC_SCHEMA]},
        "l": {"type": "integer", "minimum": 2},
        "grid": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "planes_per_point": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "v_density": {"type": ["integer", "null"]},
        "K": {"type": "number", "exclusiveMinimum": 1},
        "eps": {"type": "number", "exclusiveMinimum": 0},
        "rho": {"type": "number", "exclusiveMinimum": 0},
        "eta": {"type": "number", "exclusiveMinimum": 0},
        "xi": {"type": "number", "exclusiveMinimum": 0},
        "q": {"type": "integer", "minimum": 0, "maximum": 2},
        "s_schedule": {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0},
            "minItems": 1,
        },
        "threshold": {"type": ["number", "null"]},
        "tolerances": {"type": "object"},
        "out_dir": {"type": ["string", "null"]},
        "json": {"type": "boolean"},
    },
    "required": ["command"],
}

SCAN_SUMMARY_SCHEMA = {
    "type": "object",
    "properties": {
        "min_defect": {"type": "number"},
        "samples": {"type": "integer"},
        "argmin": {
            "type": "object",
            "properties": {
                "point": {"type": "array"},
                "basis": {"type": "array"},
                "defect": {"type": "number"},
                "vstar": {"type": "array"},
                "witness": {"type": "array"},
                "meta": {"type": "object"},
            },
            "required": ["point", "basis", "defect", "vstar", "witness"],
        },
        "certificate": {"type": ["object", "null"]},
        "config": RUN_CONFIG_SCHEMA,
    },
    "required": ["min_defect", "samples", "argmin"],
}

AUDIT_LOG_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "properties": {
            "step": {"type": "integer"},
            "k": {"type": "integer"},
            "center": {"type": "object"},
            "s": {"type": "number"},
            "min_defect_before": {"type": "number"},
            "min_defect_after": {"type": "number"},
            "low_defect_samples": {"type": "integer"},
            "cover_size": {"type": "integer"},
            "cq_proxy": {"type": "number"},
        },
        "required": ["step", "k", "center", "s", "min_defect_before",
                     "min_defect_after", "cq_proxy"],
    },
}

VERIFY_REPORT_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "properties": {
            "name": {"type": "string"},
            "passed": {"type": "boolean"},
            "margin": {"type": "number"},
            "tolerance": {"type": "number"},
            "detail": {"type": "string"},
        },
        "required": ["name", "passed", "margin", "tolerance"],
    },
}

ZOO_LISTING_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "properties": {"type": {"type": "string"}, "doc": {"type": "string"}},
        "required": ["type", "doc"],
    },
}
