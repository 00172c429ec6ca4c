"""QPU money cost: direct and per-sample extrapolation."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class CostParams:
    rate: float  # USD per minute
    per_sample_seconds: float
    shots_per_sample: int | None = None

    def __post_init__(self):
        _positive("rate", self.rate)
        _positive("per_sample_seconds", self.per_sample_seconds)
        if self.shots_per_sample is not None and self.shots_per_sample < 1:
            raise ValueError("shots_per_sample must be positive")


def _positive(name, value):
    if not math.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value}")


def qpu_cost(minutes, rate):
    if not math.isfinite(minutes) or minutes < 0:
        raise ValueError(f"minutes must be non-negative, got {minutes}")
    if not math.isfinite(rate) or rate < 0:
        raise ValueError(f"rate must be non-negative, got {rate}")
    return minutes * rate


def extrapolate_cost(n_samples, params, total_samples=None):
    """``{minutes, usd, fraction}`` for ``n_samples`` at ``params.per_sample_seconds`` each."""
    if int(n_samples) != n_samples or n_samples < 1:
        raise ValueError("n_samples must be a positive integer")
    minutes = n_samples * params.per_sample_seconds / 60.0
    out = {"minutes": minutes, "usd": qpu_cost(minutes, params.rate), "fraction": None}
    if total_samples is not None:
        if total_samples < n_samples:
            raise ValueError("total_samples is smaller than n_samples")
        out["fraction"] = n_samples / total_samples
    return out


def cost_report(rate, minutes=None, samples=None, per_sample_seconds=None, total_samples=None,
                quoted_usd=None):
    """Cost record from whatever inputs are supplied.

    With both a measured total time and a per-sample time, both estimates are
    reported together with the per-sample time implied by the total, and a
    note when the two disagree by more than 5%. ``quoted_usd`` is an externally
    stated figure that the per-sample estimate is checked against.
    """
    _positive("rate", rate)
    report = {"rate_usd_per_min": rate}
    if minutes is not None:
        report["minutes"] = minutes
        report["usd"] = round(qpu_cost(minutes, rate), 2)
    if per_sample_seconds is not None:
        if samples is None:
            raise ValueError("per-sample time needs a sample count")
        est = extrapolate_cost(samples, CostParams(rate, per_sample_seconds), total_samples)
        report["per_sample"] = {
            "samples": samples,
            "per_sample_seconds": per_sample_seconds,
            "minutes": est["minutes"],
            "usd": round(est["usd"], 2),
        }
    if samples is not None and total_samples is not None:
        report["fraction"] = samples / total_samples
    if minutes is not None and samples:
        implied = 60.0 * minutes / samples
        report["implied_per_sample_seconds"] = implied
        if per_sample_seconds is not None and abs(implied - per_sample_seconds) > 0.05 * per_sample_seconds:
            report["note"] = (
                f"total time implies {implied:.1f} s/sample but {per_sample_seconds:g} s/sample was given; "
                "estimates disagree"
            )
    if quoted_usd is not None and "per_sample" in report:
        est = report["per_sample"]["usd"]
        report["quoted_usd"] = quoted_usd
        if abs(est - quoted_usd) > 0.01 * quoted_usd:
            notes = [report["note"]] if "note" in report else []
            notes.append(f"per-sample estimate {est:,.0f} USD differs from quoted {quoted_usd:,.0f} USD")
            report["note"] = "; ".join(notes)
    report.setdefault("note", None)
    if "usd" not in report and "per_sample" not in report:
        raise ValueError("need --minutes, or --samples with --per-sample-s")
    return report
