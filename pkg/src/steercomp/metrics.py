"""Evaluation quantities for steering runs and error predictors.

Every function takes plain sequences or arrays; the sampling period only
matters for :func:`identify_delay`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import LengthMismatch, SeriesTooShort, ZeroVariance


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"series lengths differ: {a.shape} vs {b.shape}")
    return a, b


def rmse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def shift_right(series, samples: float) -> np.ndarray:
    """Delay ``series`` by a possibly fractional number of samples.

    Fractional shifts interpolate linearly between neighbours. The first
    ``ceil(samples)`` entries have no support and are returned as NaN.
    """
    x = np.asarray(series, dtype=float)
    if abs(samples - round(samples)) < 1e-9:
        samples = round(samples)  # dt / T carries rounding noise, e.g. 0.3 / 0.05
    whole = int(math.floor(samples))
    frac = samples - whole
    out = np.full_like(x, np.nan)
    if whole < len(x):
        out[whole:] = x[: len(x) - whole]
    if frac > 1e-12:
        prev = np.full_like(x, np.nan)
        if whole + 1 < len(x):
            prev[whole + 1:] = x[: len(x) - whole - 1]
        out = (1.0 - frac) * out + frac * prev
    return out


def identify_delay(command, measured, T: float, grid_max: float = 0.40, grid_step: float = 0.02):
    """Grid search for the lag that best aligns ``command`` with ``measured``.

    Returns ``(delay_s, curve)`` where ``curve`` lists ``(dt, rmse)`` pairs.
    Ties go to the smaller lag.
    """
    command, measured = _pair(command, measured)
    if len(command) <= grid_max / T + 10:
        raise SeriesTooShort(f"need more than {grid_max / T + 10:.0f} samples, got {len(command)}")
    n_grid = int(round(grid_max / grid_step))
    curve = []
    for i in range(n_grid + 1):
        dt = round(i * grid_step, 12)
        shifted = shift_right(command, dt / T)
        ok = ~np.isnan(shifted)
        curve.append((dt, rmse(shifted[ok], measured[ok])))
    best = min(range(len(curve)), key=lambda i: (curve[i][1], i))
    return curve[best][0], curve


def correlation_coefficient(h_get, h_pre) -> float:
    h_get, h_pre = _pair(h_get, h_pre)
    dg = h_get - h_get.mean()
    dp = h_pre - h_pre.mean()
    sg = math.sqrt(float(np.sum(dg * dg)))
    sp = math.sqrt(float(np.sum(dp * dp)))
    if sg == 0 or sp == 0:
        raise ZeroVariance("correlation is undefined for a constant series")
    return float(np.clip(np.sum(dg * dp) / (sp * sg), -1.0, 1.0))


def coefficient_of_efficiency(h_get, h_pre) -> float:
    """Nash-Sutcliffe efficiency of ``h_pre`` against ``h_get``."""
    h_get, h_pre = _pair(h_get, h_pre)
    denom = float(np.sum((h_get - h_get.mean()) ** 2))
    if denom == 0:
        raise ZeroVariance("efficiency is undefined for a constant measured series")
    return 1.0 - float(np.sum((h_pre - h_get) ** 2)) / denom


@dataclass
class LateralError:
    series: np.ndarray
    max: float
    extrapolated: np.ndarray


def lateral_error(xs, ys, path) -> LateralError:
    """Signed distance from each position to ``path`` (left positive)."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    if xs.size == 0:
        raise SeriesTooShort("empty trajectory")
    d = np.empty(len(xs))
    ext = np.zeros(len(xs), dtype=bool)
    for k, (px, py) in enumerate(zip(xs, ys)):
        proj = path.project(px, py)
        d[k] = proj.distance
        ext[k] = proj.extrapolated
    return LateralError(series=d, max=float(np.max(np.abs(d))), extrapolated=ext)


def oscillation_index(steer) -> float:
    """Mean absolute step-to-step change of a steering-wheel angle series (deg/step)."""
    x = np.asarray(steer, dtype=float)
    if len(x) < 2:
        raise SeriesTooShort("need at least two samples")
    return float(np.mean(np.abs(np.diff(x))))


def improvement_pct(before: float, after: float) -> float:
    """Percentage reduction from ``before`` to ``after``."""
    return 100.0 * (before - after) / before


@dataclass
class MetricsReport:
    rmse: float = math.nan  # deg, command vs measured
    delay_estimate: float = math.nan  # s
    cc: float = math.nan
    ce: float = math.nan
    max_lateral_error: float = math.nan  # m
    oscillation: float = math.nan  # deg/step
    extras: dict = field(default_factory=dict)

    UNITS = {
        "rmse": "deg",
        "delay_estimate": "s",
        "cc": "-",
        "ce": "-",
        "max_lateral_error": "m",
        "oscillation": "deg/step",
    }

    def flat(self) -> dict:
        d = asdict(self)
        extras = d.pop("extras")
        d.update(extras)
        return d

    def to_json(self) -> str:
        # undefined metrics become null so the output stays strict JSON
        flat = {k: (v if not isinstance(v, float) or math.isfinite(v) else None)
                for k, v in self.flat().items()}
        return json.dumps({"units": dict(self.UNITS), **flat}, indent=2, sort_keys=True)

    def to_csv_row(self, header: bool = True) -> str:
        flat = self.flat()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(list(flat))
        w.writerow([repr(float(v)) if isinstance(v, (int, float)) else v for v in flat.values()])
        return buf.getvalue()


def compare_runs(baseline: MetricsReport, compensated: MetricsReport) -> dict:
    return {
        "max_lateral_error_improvement_pct": improvement_pct(
            baseline.max_lateral_error, compensated.max_lateral_error
        ),
        "oscillation_reduction_pct": improvement_pct(baseline.oscillation, compensated.oscillation),
    }
