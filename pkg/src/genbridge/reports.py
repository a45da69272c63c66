"""Report objects and their deterministic JSON / CSV serialization.

Every float is written with 17 significant digits, keys keep insertion order,
and the run configuration plus the artifact version are echoed into the
output, so re-running an echoed configuration reproduces a file byte for byte.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigurationError

VERDICTS = ("bounded", "divergent", "inconclusive")


def artifact_version() -> str:
    from . import __version__
    return __version__


def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares line through ``(x, y)``; returns ``(slope, intercept, r2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        raise ConfigurationError("a trend fit needs at least two points")
    if np.ptp(y) == 0.0:
        return 0.0, float(y[0]), 1.0
    res = stats.linregress(x, y)
    return float(res.slope), float(res.intercept), float(res.rvalue ** 2)


@dataclass
class TrendReport:
    """A sequence of values along a refinement parameter, a fitted slope and a verdict."""

    abscissae: np.ndarray
    ordinates: np.ndarray
    slope: float
    r2: float
    verdict: str
    quantity: str = ""
    abscissa_name: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.abscissae = np.asarray(self.abscissae, dtype=float)
        self.ordinates = np.asarray(self.ordinates, dtype=float)
        if self.abscissae.shape != self.ordinates.shape:
            raise ConfigurationError("abscissae and ordinates differ in length")
        if not np.all(np.isfinite(self.ordinates)) or np.any(self.ordinates < 0):
            raise ConfigurationError("trend ordinates must be finite and non-negative")
        if self.verdict not in VERDICTS:
            raise ConfigurationError(f"verdict must be one of {VERDICTS}")

    def to_dict(self) -> dict:
        out = {
            "abscissae": self.abscissae.tolist(),
            "ordinates": self.ordinates.tolist(),
            "slope": self.slope,
            "r2": self.r2,
            "verdict": self.verdict,
        }
        if self.quantity:
            out["quantity"] = self.quantity
        if self.abscissa_name:
            out["abscissa"] = self.abscissa_name
        out.update(self.extra)
        return out

    def table(self):
        return ["abscissa", "ordinate"], [[a, o] for a, o in zip(self.abscissae, self.ordinates)]


@dataclass
class DiagnosticsReport:
    """Tabular experiment result: one row per evaluation point plus summary fields."""

    kind: str
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "columns": list(self.columns),
                "rows": [dict(zip(self.columns, r)) for r in self.rows],
                "summary": self.summary}

    def table(self):
        return list(self.columns), [list(r) for r in self.rows]

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [r[j] for r in self.rows]


# -- formatting ------------------------------------------------------------

def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _plain(obj: Any) -> Any:
    """numpy scalars/arrays and tuples to plain Python containers."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, float):
        # JSON has no nan/inf literal
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        if indent == 0:
            return "{" + ",".join(f"{json.dumps(k)}:{_encode(v, 0, 0)}" for k, v in obj.items()) + "}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if indent == 0:
            return "[" + ",".join(_encode(v, 0, 0) for v in obj) + "]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj: Any) -> str:
    return _encode(_plain(obj), 2, 0) + "\n"


def _csv_cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    s = str(v)
    if any(ch in s for ch in ",\n\r\""):
        raise ConfigurationError(f"csv cell {s!r} contains a delimiter")
    return s


def comment_block(header: dict) -> str:
    """``# key: value`` lines (values as compact JSON) heading a CSV file."""
    return "".join(f"# {key}: {_encode(val, 0, 0)}\n" for key, val in _plain(header).items())


def dumps_csv(columns: Sequence[str], rows: Sequence[Sequence], header: dict) -> str:
    buf = io.StringIO()
    buf.write(comment_block(header))
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(_csv_cell(v) for v in r) + "\n")
    return buf.getvalue()


def run_header(config: dict) -> dict:
    return {"artifact": "artifact", "version": artifact_version(), "config": config}


def render_report(report, fmt: str, config: dict) -> str:
    """Serialize ``report`` (anything with ``to_dict`` and ``table``) with a config echo."""
    meta = {"artifact": "artifact", "version": artifact_version()}
    if fmt == "json":
        return dumps_json({**meta, "config": config, "report": report.to_dict()})
    if fmt == "csv":
        cols, rows = report.table()
        summary = {k: v for k, v in report.to_dict().items()
                   if k not in ("abscissae", "ordinates", "rows", "columns")}
        return dumps_csv(cols, rows, {**meta, "config": config, "summary": summary})
    raise ConfigurationError(f"format must be csv or json, got {fmt!r}")


def write_report(report, path, fmt: str, config: dict) -> None:
    """Write a rendered report to ``path`` (``None`` or ``-`` means stdout)."""
    text = render_report(report, fmt, config)
    if path in (None, "-"):
        import sys
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
