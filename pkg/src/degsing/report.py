"""Check rows and CSV output with round-trip float formatting."""

import csv
from dataclasses import dataclass
import math

SCHEMA = "schema=1"
REPORT_FIELDS = ("scenario", "check", "predicted", "measured", "tolerance", "pass", SCHEMA)


def fmt(val):
    if val is None:
        return ""
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    if hasattr(val, "dtype"):
        return fmt(val.item())
    return str(val)


@dataclass(frozen=True)
class CheckRow:
    scenario: str
    check: str
    predicted: object
    measured: object
    tolerance: str
    passed: bool

    def as_csv(self):
        return {"scenario": self.scenario, "check": self.check, "predicted": fmt(self.predicted),
                "measured": fmt(self.measured), "tolerance": self.tolerance,
                "pass": fmt(bool(self.passed)), SCHEMA: "1"}


def rel_check(scenario, name, predicted, measured, rel_tol):
    ok = math.isfinite(measured) and abs(measured - predicted) <= rel_tol * abs(predicted)
    return CheckRow(scenario, name, float(predicted), float(measured), f"rel {rel_tol!r}", ok)


def upper_check(scenario, name, bound, measured, label="<="):
    ok = math.isfinite(measured) and measured <= bound
    return CheckRow(scenario, name, float(bound), float(measured), f"{label} {bound!r}", ok)


def lower_check(scenario, name, bound, measured, slack):
    ok = math.isfinite(measured) and measured >= bound * (1.0 - slack)
    return CheckRow(scenario, name, float(bound), float(measured), f"one-sided {slack!r}", ok)


def write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fieldnames), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: fmt(row.get(k)) for k in fieldnames})


def write_report(path, rows):
    write_csv(path, REPORT_FIELDS, [r.as_csv() for r in rows])


def read_report(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
