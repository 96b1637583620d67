"""Verification report records and their JSON/CSV rendering."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

REPORT_FIELDS = ("suite", "config", "cases", "pass", "vacuous", "seed", "runtime_ms")
CSV_COLUMNS = ("suite", "case", "digest", "error", "threshold", "pass")


@dataclass(frozen=True)
class CaseRecord:
    name: str
    digest: str
    error: float
    threshold: float
    passed: bool
    details: dict[str, Any] = field(default_factory=dict)


def check(name: str, digest: str, error: float, threshold: float, **details) -> CaseRecord:
    """Record ``error <= threshold`` as a case."""
    error, threshold = float(error), float(threshold)
    return CaseRecord(name, digest, error, threshold, bool(error <= threshold), details)


def digest(*parts) -> str:
    """Short stable hash of the inputs of a case (arrays, numbers, strings)."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            h.update(str(part.shape).encode())
            h.update(np.ascontiguousarray(part, dtype=float).tobytes())
        else:
            h.update(json.dumps(part, sort_keys=True, default=repr).encode())
        h.update(b"|")
    return h.hexdigest()[:16]


@dataclass
class VerificationReport:
    suite: str
    config: dict[str, Any]
    cases: list[CaseRecord]
    seed: int
    runtime_ms: int = 0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cases)

    @property
    def vacuous(self) -> bool:
        return not self.cases

    def to_dict(self) -> dict[str, Any]:
        return {
            "suite": self.suite,
            "config": self.config,
            "cases": [_case_dict(c) for c in self.cases],
            "pass": self.passed,
            "vacuous": self.vacuous,
            "seed": self.seed,
            "runtime_ms": self.runtime_ms,
        }

    def failures(self) -> list[CaseRecord]:
        return [c for c in self.cases if not c.passed]


def _case_dict(c: CaseRecord) -> dict[str, Any]:
    d = asdict(c)
    d["pass"] = d.pop("passed")
    d["details"] = _plain(d["details"])
    return d


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def render(report: VerificationReport, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=False) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for c in report.cases:
            writer.writerow([report.suite, c.name, c.digest, repr(c.error), repr(c.threshold),
                             str(c.passed).lower()])
        return buf.getvalue()
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(report: VerificationReport, fmt: str = "json", path=None) -> str:
    """Render the report; write it to ``path`` when given."""
    text = render(report, fmt)
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def merge(suite: str, config: dict, seed: int, parts: Sequence[VerificationReport]) -> VerificationReport:
    cases = []
    for part in parts:
        cases.extend(
            CaseRecord(f"{part.suite}/{c.name}", c.digest, c.error, c.threshold, c.passed, c.details)
            for c in part.cases
        )
    return VerificationReport(suite, config, cases, seed)
