"""Reference paths and the baseline pure-pursuit steering command."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, OffPath, SpeedTooLow
from .plant import MAX_FRONT_WHEEL_ANGLE, PlantConfig

LANE_OFFSET = 3.5
DLC_BREAKPOINTS = (50.0, 80.0, 110.0, 140.0)
DLC_LENGTH = 200.0


@dataclass(frozen=True)
class Projection:
    s: float  # arc length of the foot point; may exceed the path ends
    distance: float  # signed, positive to the left of the path direction
    segment: int
    extrapolated: bool


class ReferencePath:
    """Polyline path parameterized by arc length.

    ``s`` is the arc length at each waypoint. Queries between waypoints
    interpolate linearly.
    """

    def __init__(self, s, x, y):
        self.s = np.asarray(s, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if not (len(self.s) == len(self.x) == len(self.y)) or len(self.s) < 2:
            raise ConfigError("path needs at least two waypoints with matching s, x, y")
        ds = np.diff(self.s)
        if self.s[0] != 0 or np.any(ds <= 0):
            raise ConfigError("arc length must start at 0 and increase strictly")
        if np.any(ds > 1.0 + 1e-9):
            raise ConfigError("waypoint spacing must not exceed 1 m")
        self._dx = np.diff(self.x)
        self._dy = np.diff(self.y)
        self._seg_len2 = self._dx**2 + self._dy**2

    @property
    def total_length(self) -> float:
        return float(self.s[-1])

    @property
    def waypoints(self):
        return list(zip(self.s.tolist(), self.x.tolist(), self.y.tolist()))

    def point_at(self, s: float) -> tuple[float, float]:
        """Position at arc length ``s``; beyond the ends the end segments are extended."""
        if s <= self.s[0]:
            i = 0
        elif s >= self.s[-1]:
            i = len(self.s) - 2
        else:
            i = int(np.searchsorted(self.s, s, side="right")) - 1
        f = (s - self.s[i]) / (self.s[i + 1] - self.s[i])
        return (
            float(self.x[i] + f * (self.x[i + 1] - self.x[i])),
            float(self.y[i] + f * (self.y[i + 1] - self.y[i])),
        )

    def heading_at(self, s: float) -> float:
        i = int(np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.s) - 2))
        return math.atan2(self._dy[i], self._dx[i])

    def project(self, px: float, py: float) -> Projection:
        """Closest point on the polyline; the first and last segments extend to infinity."""
        rx = px - self.x[:-1]
        ry = py - self.y[:-1]
        t = (rx * self._dx + ry * self._dy) / self._seg_len2
        raw_t = t.copy()
        np.clip(t, 0.0, 1.0, out=t)
        t[0] = min(raw_t[0], 1.0)
        t[-1] = max(raw_t[-1], 0.0)
        fx = self.x[:-1] + t * self._dx - px
        fy = self.y[:-1] + t * self._dy - py
        d2 = fx * fx + fy * fy
        i = int(np.argmin(d2))
        seg_len = math.sqrt(self._seg_len2[i])
        s = float(self.s[i] + t[i] * (self.s[i + 1] - self.s[i]))
        cross = self._dx[i] * (py - self.y[i]) - self._dy[i] * (px - self.x[i])
        signed = cross / seg_len
        extrapolated = bool(t[i] < 0.0 or t[i] > 1.0)
        return Projection(s=s, distance=float(signed), segment=i, extrapolated=extrapolated)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s_m", "x_m", "y_m"])
            for row in self.waypoints:
                w.writerow([repr(v) for v in row])

    @classmethod
    def from_csv(cls, path) -> "ReferencePath":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or [c.split("_")[0] for c in rows[0]] != ["s", "x", "y"]:
            raise ConfigError(f"{path}: expected header s_m,x_m,y_m")
        data = np.array([[float(v) for v in r] for r in rows[1:]])
        return cls(data[:, 0], data[:, 1], data[:, 2])


def _cosine_blend(s, start, end, y0, y1):
    u = np.clip((s - start) / (end - start), 0.0, 1.0)
    return y0 + (y1 - y0) * 0.5 * (1.0 - np.cos(math.pi * u))


def offset_path(transitions, total_length, spacing=0.25) -> ReferencePath:
    """Straight course with lateral offsets that change along cosine ramps.

    ``transitions`` is a sequence of ``(s_start, s_end, y_target)``; between
    ramps the offset is held. The offset is a function of arc length, so
    ``x`` is recovered by integrating ``sqrt(1 - y'(s)^2)``.
    """
    n_fine = int(round(total_length / spacing)) * 16
    s_fine = np.linspace(0.0, total_length, n_fine + 1)
    y_fine = np.zeros_like(s_fine)
    dy_fine = np.zeros_like(s_fine)
    current = 0.0
    for start, end, target in transitions:
        inside = (s_fine >= start) & (s_fine <= end)
        y_fine = np.where(s_fine >= start, _cosine_blend(s_fine, start, end, current, target), y_fine)
        u = (s_fine[inside] - start) / (end - start)
        dy_fine[inside] = (target - current) * 0.5 * math.pi / (end - start) * np.sin(math.pi * u)
        current = target
    if np.any(np.abs(dy_fine) >= 1.0):
        raise ConfigError("lateral ramp too steep for an arc-length parameterization")
    dx = np.sqrt(1.0 - dy_fine**2)
    x_fine = np.concatenate([[0.0], np.cumsum(0.5 * (dx[1:] + dx[:-1]) * np.diff(s_fine))])
    return ReferencePath(s_fine[::16], x_fine[::16], y_fine[::16])


def double_lane_change_path(offset: float = LANE_OFFSET, spacing: float = 0.25) -> ReferencePath:
    """200 m double lane change: out to ``offset`` over s=50..80, back over s=110..140."""
    a, b, c, d = DLC_BREAKPOINTS
    return offset_path([(a, b, offset), (c, d, 0.0)], DLC_LENGTH, spacing)


def slalom_path(length: float = 400.0, amplitude: float = LANE_OFFSET, seed: int = 0,
                spacing: float = 0.25) -> ReferencePath:
    """Seeded sequence of lane changes of varying length and direction.

    Used to enrich training data with left and right curves of several
    severities.
    """
    rng = np.random.default_rng(seed)
    transitions = []
    s = 30.0
    current = 0.0
    while True:
        ramp = float(rng.uniform(25.0, 45.0))
        hold = float(rng.uniform(10.0, 30.0))
        if s + ramp + 30.0 > length:
            break
        choices = [y for y in (-amplitude, 0.0, amplitude) if y != current]
        target = float(rng.choice(choices))
        transitions.append((s, s + ramp, target))
        current = target
        s += ramp + hold
    if current != 0.0 and transitions:
        # end on the centerline
        last_end = transitions[-1][1]
        end = min(last_end + 10.0 + 30.0, length - 5.0)
        transitions.append((last_end + 10.0, end, 0.0))
    return offset_path(transitions, length, spacing)


@dataclass
class TrackerConfig:
    path: ReferencePath
    lookahead: float = 8.0
    max_offset: float = 20.0

    def __post_init__(self):
        if not self.lookahead > 0:
            raise ConfigError("lookahead must be positive")


def desired_yaw_rate(state, cfg: TrackerConfig, speed: float) -> tuple[float, float]:
    """Pure pursuit toward the point ``lookahead`` metres ahead along the path.

    Returns the pair ``(v_d, w_d)`` in m/s and rad/s.
    """
    proj = cfg.path.project(state.x, state.y)
    if abs(proj.distance) > cfg.max_offset:
        raise OffPath(abs(proj.distance), cfg.max_offset)
    tx, ty = cfg.path.point_at(proj.s + cfg.lookahead)
    alpha = math.atan2(ty - state.y, tx - state.x) - state.psi
    alpha = math.atan2(math.sin(alpha), math.cos(alpha))
    w_d = 2.0 * state.v * math.sin(alpha) / cfg.lookahead
    return speed, w_d


def nominal_steering(v_d: float, w_d: float, cfg: PlantConfig) -> float:
    """Steering-wheel angle (deg) that the kinematic bicycle needs for ``w_d`` at ``v_d``."""
    if v_d <= 0.1:
        raise SpeedTooLow(f"v_d = {v_d} m/s is below 0.1 m/s")
    delta_f = math.atan(cfg.wheelbase * w_d / v_d)
    delta_f = min(max(delta_f, -MAX_FRONT_WHEEL_ANGLE), MAX_FRONT_WHEEL_ANGLE)
    return math.degrees(delta_f * cfg.steering_ratio)
