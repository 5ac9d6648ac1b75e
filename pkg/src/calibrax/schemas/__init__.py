"""Versioned JSON schemas for the files the command line writes."""

import json
from importlib import resources


def load_schema(name: str) -> dict:
    """``name`` is one of curve, metrics_report, benchmark_report, calibration_map, distribution_spec."""
    return json.loads(resources.files(__name__).joinpath(f"{name}.schema.json").read_text(encoding="utf-8"))
