"""Run reports: nested JSON with stable key order, or flat ``metric,value,tolerance`` CSV."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__

FORMATS = ("json", "csv")


def metric(value, tolerance=None) -> dict:
    """A validated number together with the tolerance it was validated under."""
    v = clean(value)
    out = {"value": v, "tolerance": clean(tolerance)}
    if isinstance(value, (float, np.floating)) and not math.isfinite(float(value)):
        out["bounded"] = False
    return out


def clean(obj):
    """Plain JSON-able data; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


@dataclass
class RunReport:
    command: str
    seed: int
    scenario: dict
    status: str = "passed"
    exit_code: int = 0
    growth: dict | None = None
    certificate: dict | None = None
    constants: dict | None = None
    logsob: dict | None = None
    checks: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    timings: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = {
            "command": self.command,
            "seed": self.seed,
            "version": __version__,
            "status": self.status,
            "exit_code": self.exit_code,
            "scenario": self.scenario,
            "violations": self.violations,
        }
        for k in ("growth", "certificate", "constants", "logsob", "timings"):
            v = getattr(self, k)
            if v is not None:
                doc[k] = v
        if self.checks:
            doc["checks"] = self.checks
        doc.update(self.extra)
        return clean(doc)


def _num(x: float) -> str:
    return "%.17g" % x


def _dump(obj, indent: int, level: int = 0) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _num(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_dump(obj[k], indent, level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_dump(v, indent) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _dump(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _flatten(obj, prefix: str = ""):
    if isinstance(obj, dict):
        if "value" in obj and "tolerance" in obj and not isinstance(obj["value"], (dict, list)):
            yield prefix, obj["value"], obj["tolerance"]
            return
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}.{k}" if prefix else k)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj, None


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _num(v)
    return str(v)


def emit_report(report: RunReport | dict, fmt: str = "json") -> bytes:
    doc = report.to_dict() if isinstance(report, RunReport) else clean(report)
    if fmt == "json":
        return (_dump(doc, 2) + "\n").encode()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value", "tolerance"])
        for name, v, tol in _flatten(doc):
            w.writerow([name, _cell(v), _cell(tol)])
        return buf.getvalue().encode()
    raise ValueError(f"unknown format {fmt!r}")


def parse_report(data: bytes, fmt: str = "json"):
    """Inverse of :func:`emit_report`; CSV parses to a list of ``(metric, value, tolerance)`` rows."""
    text = data.decode()
    if fmt == "json":
        return json.loads(text)
    rows = list(csv.reader(io.StringIO(text)))
    return [tuple(r) for r in rows[1:]]
