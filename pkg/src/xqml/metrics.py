"""Accuracy and the hardware-explainability metrics: sureness, confidence, imbalance."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

REPORT_FIELDS = (
    "backend", "accuracy", "sureness", "confidence_mean", "confidence_spread",
    "n0", "n1", "imbalance", "n_samples",
)


def _outputs(outputs):
    y = np.asarray(outputs, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("need at least one output")
    if not np.isfinite(y).all() or (y < 0).any() or (y > 1).any():
        raise ValueError("outputs must lie in [0, 1]")
    return y


def _binary(values, what):
    v = np.asarray(values).ravel()
    if v.size == 0:
        raise ValueError(f"need at least one {what}")
    if not np.isin(v, (0, 1)).all():
        raise ValueError(f"{what} must be 0 or 1")
    return v.astype(np.int64)


def _same_length(a, b):
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")


def sureness(outputs):
    """``2 * mean |y - 0.5|``: 0 on the decision boundary, 1 at the endpoints."""
    y = _outputs(outputs)
    return float(2.0 * np.mean(np.abs(y - 0.5)))


def confidence(outputs, labels):
    """Mean and sample standard deviation of ``1 - |l - y|``."""
    y = _outputs(outputs)
    lab = _binary(labels, "labels")
    _same_length(y, lab)
    c = 1.0 - np.abs(lab - y)
    spread = float(np.std(c, ddof=1)) if c.size > 1 else 0.0
    return float(np.mean(c)), spread


def imbalance(predictions, labels):
    """``(n0, n1, n0 - n1)`` over correctly predicted samples of each class."""
    p = _binary(predictions, "predictions")
    lab = _binary(labels, "labels")
    _same_length(p, lab)
    hit = p == lab
    n0 = int(np.sum(hit & (lab == 0)))
    n1 = int(np.sum(hit & (lab == 1)))
    return n0, n1, n0 - n1


def accuracy(predictions, labels):
    p = _binary(predictions, "predictions")
    lab = _binary(labels, "labels")
    _same_length(p, lab)
    return float(np.mean(p == lab))


@dataclass(frozen=True)
class EvaluationRecord:
    output: float
    prediction: int
    label: int
    backend: str

    def __post_init__(self):
        if not 0.0 <= self.output <= 1.0:
            raise ValueError(f"output {self.output} outside [0, 1]")
        if self.label not in (0, 1) or self.prediction not in (0, 1):
            raise ValueError("label and prediction must be 0 or 1")


def records_from(outputs, predictions, labels, backend):
    return [
        EvaluationRecord(float(o), int(p), int(lab), backend)
        for o, p, lab in zip(outputs, predictions, labels, strict=True)
    ]


@dataclass(frozen=True)
class MetricsReport:
    backend: str
    accuracy: float
    sureness: float
    confidence_mean: float
    confidence_spread: float
    n0: int
    n1: int
    imbalance: int
    n_samples: int

    def check(self):
        """Enforce ``accuracy == (n0 + n1) / N`` and ``imbalance == n0 - n1``."""
        if self.imbalance != self.n0 - self.n1:
            raise ValueError("imbalance != n0 - n1")
        if not math.isclose(self.accuracy, (self.n0 + self.n1) / self.n_samples, rel_tol=0, abs_tol=1e-12):
            raise ValueError("accuracy != (n0 + n1) / N")
        if abs(self.imbalance) > self.n_samples:
            raise ValueError("|imbalance| exceeds the sample count")
        return self

    def as_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, raw):
        names = {f.name for f in fields(cls)}
        if set(raw) != names:
            raise ValueError(f"report fields {sorted(raw)} do not match {sorted(names)}")
        return cls(**raw).check()


def metrics_report(records):
    records = list(records)
    if not records:
        raise ValueError("no evaluation records")
    tags = {r.backend for r in records}
    if len(tags) != 1:
        raise ValueError(f"records mix backends {sorted(tags)}")
    y = np.array([r.output for r in records])
    p = np.array([r.prediction for r in records])
    lab = np.array([r.label for r in records])
    n0, n1, imb = imbalance(p, lab)
    cmean, cspread = confidence(y, lab)
    return MetricsReport(
        backend=tags.pop(),
        accuracy=accuracy(p, lab),
        sureness=sureness(y),
        confidence_mean=cmean,
        confidence_spread=cspread,
        n0=n0,
        n1=n1,
        imbalance=imb,
        n_samples=len(records),
    ).check()


def reports_to_json(reports):
    return json.dumps([r.as_dict() for r in reports], indent=2)


def reports_from_json(text):
    return [MetricsReport.from_dict(d) for d in json.loads(text)]


def reports_to_csv(reports):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        # repr keeps floats bit-exact on the way back in
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.as_dict().items()})
    return buf.getvalue()


def reports_from_csv(text):
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        typed = {}
        for f in fields(MetricsReport):
            v = row[f.name]
            typed[f.name] = v if f.type == "str" else (int(v) if f.type == "int" else float(v))
        out.append(MetricsReport(**typed).check())
    return out
