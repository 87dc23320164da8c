"""Analysis reports: construction, JSON/CSV serialization and parsing.

Reports serialize with ``repr``-exact floats, so ``parse_report(to_json(r))``
reproduces ``r`` exactly.  ``SCHEMA_PATH`` points at the JSON Schema
shipped with the package.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources

import numpy as np

__all__ = [
    "SCHEMA_PATH",
    "SCAN_FIELDS",
    "InputDigest",
    "ThresholdInfo",
    "TailSummary",
    "Estimate",
    "AnalysisReport",
    "AbReport",
    "ErrorReport",
    "jsonable",
    "load_schema",
    "parse_report",
    "to_json",
    "report_to_csv",
    "scan_to_csv",
]

SCHEMA_PATH = resources.files("semitail") / "report.schema.json"

SCAN_FIELDS = ["index", "u", "n", "xi_hat", "sigma_hat", "ratio", "q_n", "boundary", "error", "selected"]


@dataclass(frozen=True)
class InputDigest:
    path: str
    count: int
    min: float
    max: float
    mean: float

    @classmethod
    def of(cls, path, values):
        z = np.asarray(values, dtype=float)
        return cls(str(path), int(z.size), float(z.min()), float(z.max()), float(z.mean()))


@dataclass(frozen=True)
class ThresholdInfo:
    u: float
    mode: str  # "given" or "rule"
    low_confidence: bool | None = None


@dataclass(frozen=True)
class TailSummary:
    m: int
    n: int
    xi_hat: float | None
    sigma_hat: float | None
    lambda_mean: float
    lambda_variance: float
    method: str
    acceptance_rate: float | None = None


@dataclass(frozen=True)
class Estimate:
    estimate: float
    sd: float


@dataclass
class AnalysisReport:
    input: InputDigest
    threshold: ThresholdInfo
    prior: dict
    tail: TailSummary
    posterior: Estimate
    naive: Estimate
    winsorized: Estimate
    diagnostics: list = field(default_factory=list)
    seed: int | None = None
    kind: str = "fit"

    def to_dict(self) -> dict:
        return jsonable(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisReport":
        return cls(
            input=InputDigest(**d["input"]),
            threshold=ThresholdInfo(**d["threshold"]),
            prior=dict(d["prior"]),
            tail=TailSummary(**d["tail"]),
            posterior=Estimate(**d["posterior"]),
            naive=Estimate(**d["naive"]),
            winsorized=Estimate(**d["winsorized"]),
            diagnostics=[dict(r) for r in d.get("diagnostics", [])],
            seed=d.get("seed"),
        )


@dataclass
class AbReport:
    treatment: AnalysisReport
    control: AnalysisReport
    effect: Estimate
    kind: str = "ab"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "treatment": self.treatment.to_dict(),
                "control": self.control.to_dict(), "effect": jsonable(asdict(self.effect))}

    @classmethod
    def from_dict(cls, d: dict) -> "AbReport":
        return cls(AnalysisReport.from_dict(d["treatment"]), AnalysisReport.from_dict(d["control"]),
                   Estimate(**d["effect"]))


@dataclass
class ErrorReport:
    type: str
    message: str
    exit_code: int
    kind: str = "error"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorReport":
        return cls(d["type"], d["message"], d["exit_code"])


_KINDS = {"fit": AnalysisReport, "ab": AbReport, "error": ErrorReport}


def jsonable(obj):
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def to_json(report) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def parse_report(text: str):
    d = json.loads(text)
    return _KINDS[d["kind"]].from_dict(d)


def load_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text())


def _flatten(d, prefix=""):
    out = []
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.extend(_flatten(v, key + "."))
        elif not isinstance(v, list):
            out.append((key, v))
    return out


def report_to_csv(report) -> str:
    """Two-column ``field,value`` table; diagnostics are left to ``scan``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["field", "value"])
    for k, v in _flatten(report.to_dict()):
        w.writerow([k, "" if v is None else (repr(v) if isinstance(v, float) else v)])
    return buf.getvalue()


def scan_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SCAN_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: "" if r.get(k) is None else (repr(r[k]) if isinstance(r[k], float) else r[k])
                    for k in SCAN_FIELDS})
    return buf.getvalue()


# every dataclass field must be present in the schema; checked in the tests
REPORT_FIELDS = {cls.__name__: [f.name for f in fields(cls)]
                 for cls in (InputDigest, ThresholdInfo, TailSummary, Estimate, AnalysisReport)}
