"""Closed-loop driver and the per-step sample log."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .compensator import CompensatorConfig, CompensatorState, compensate, compose_command
from .errors import ConfigError, OffPath
from .plant import KMH, ActuatorState, PlantConfig, VehicleState, actuator_step, vehicle_step
from .tdnn import ensemble_predict
from .tracking import ReferencePath, TrackerConfig, desired_yaw_rate, nominal_steering

# name -> unit, in log column order
CHANNELS = {
    "t": "s",
    "x": "m",
    "y": "m",
    "psi": "rad",
    "v": "m/s",
    "gamma_desired": "deg/s",
    "gamma_measured": "deg/s",
    "lat_accel": "m/s^2",
    "u_track": "deg",
    "u1": "deg",
    "u": "deg",
    "theta_measured": "deg",
    "e_instant": "deg",
    "e_hat": "deg",
    "lateral_error": "m",
}


@dataclass
class SampleLog:
    """Column store of one run, uniformly sampled at ``T``."""

    T: float
    columns: dict = field(default_factory=dict)
    diverged: bool = False

    def __len__(self):
        return len(self.columns["t"]) if self.columns else 0

    @property
    def duration(self) -> float:
        return len(self) * self.T

    def to_csv(self, path) -> None:
        names = list(self.columns)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"{n}[{CHANNELS.get(n, '-')}]" for n in names])
            for row in zip(*(self.columns[n] for n in names)):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, T=None) -> "SampleLog":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ConfigError(f"{path}: empty log")
        names = [h.split("[")[0] for h in rows[0]]
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
        data = data.reshape(len(rows) - 1, len(names))
        columns = {n: data[:, i] for i, n in enumerate(names)}
        if T is None:
            t = columns.get("t")
            if t is None or len(t) < 2:
                raise ConfigError(f"{path}: cannot infer sampling period")
            T = round(float(t[1] - t[0]), 12)
        return cls(T=T, columns=columns)

    def matrix(self, names):
        return np.column_stack([np.asarray(self.columns[n], dtype=float) for n in names])


@dataclass
class LoopSetup:
    """Everything one closed-loop run needs, already resolved to objects."""

    path: ReferencePath
    plant: PlantConfig
    speed_kmh: float = 30.0
    lookahead: float = 8.0
    compensator: CompensatorConfig | None = None
    models: list | None = None
    max_time: float | None = None


def run_loop(setup: LoopSetup) -> tuple[SampleLog, metrics.MetricsReport]:
    """Drive the vehicle along ``setup.path`` until it passes the end.

    Per step: pure pursuit gives ``(v_d, w_d)``, the bicycle inversion
    gives ``u_track``; when a predictor is attached, the last ``taps`` log
    rows form the network input, the ensemble forecasts the error and the
    compensator adds ``u1``. The actuator then yields the measured angle
    and the vehicle advances one period.
    """
    plant = setup.plant
    T = plant.T
    speed = setup.speed_kmh * KMH
    tracker = TrackerConfig(path=setup.path, lookahead=setup.lookahead)
    state = VehicleState(v=speed)
    act = ActuatorState.initial(plant)
    use_comp = setup.compensator is not None and setup.models
    comp_state = CompensatorState()
    limit = plant.max_steering_wheel_deg

    if use_comp:
        ref = setup.models[0]
        feats = ref.feature_names
        taps = ref.taps
    max_steps = int(math.ceil((setup.max_time if setup.max_time else
                               3.0 * setup.path.total_length / speed + 10.0) / T))

    cols = {name: [] for name in CHANNELS}
    diverged = False
    for k in range(max_steps):
        proj = setup.path.project(state.x, state.y)
        if proj.s >= setup.path.total_length:
            break
        try:
            v_d, w_d = desired_yaw_rate(state, tracker, speed)
        except OffPath:
            diverged = True
            break
        u_track = nominal_steering(v_d, w_d, plant)
        gamma_d = math.degrees(w_d)

        e_hat = 0.0
        u1 = 0.0
        if use_comp and k >= taps:
            # taps from the last complete rows, newest first within each feature
            row = np.array([cols[f][k - 1 - j] for f in feats for j in range(taps)])
            e_hat = float(ensemble_predict(setup.models, ref.normalize(row)))
            u1 = compensate(comp_state, e_hat, gamma_d, setup.compensator)
        u = compose_command(u_track, u1, limit)

        theta = actuator_step(act, u, plant)

        cols["t"].append(k * T)
        cols["x"].append(state.x)
        cols["y"].append(state.y)
        cols["psi"].append(state.psi)
        cols["v"].append(state.v)
        cols["gamma_desired"].append(gamma_d)
        nxt = vehicle_step(state, theta, plant)
        cols["gamma_measured"].append(math.degrees(nxt.gamma))
        cols["lat_accel"].append(nxt.v * nxt.gamma)
        cols["u_track"].append(u_track)
        cols["u1"].append(u1)
        cols["u"].append(u)
        cols["theta_measured"].append(theta)
        cols["e_instant"].append(u - theta)
        cols["e_hat"].append(e_hat)
        cols["lateral_error"].append(proj.distance)
        state = nxt

    log = SampleLog(T=T, columns={k: np.asarray(v, dtype=float) for k, v in cols.items()},
                    diverged=diverged)
    return log, summarize(log, setup.path)


def summarize(log: SampleLog, path: ReferencePath) -> metrics.MetricsReport:
    c = log.columns
    if len(log) < 2:
        return metrics.MetricsReport(extras={"oscillation_measured": math.nan,
                                             "duration_s": log.duration,
                                             "diverged": float(log.diverged)})
    lat = metrics.lateral_error(c["x"], c["y"], path)
    return metrics.MetricsReport(
        rmse=metrics.rmse(c["u"], c["theta_measured"]),
        max_lateral_error=lat.max,
        # commanded angle: the measured one carries i.i.d. disturbance no controller can remove
        oscillation=metrics.oscillation_index(c["u"]),
        extras={
            "oscillation_measured": metrics.oscillation_index(c["theta_measured"]),
            "duration_s": log.duration,
            "diverged": float(log.diverged),
        },
    )
