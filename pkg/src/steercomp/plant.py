"""Kinematic bicycle vehicle with a delayed, noisy steering actuator.

The actuator turns a commanded steering-wheel angle into a measured one by
replaying the command issued ``actuator_delay`` seconds earlier and adding
zero-mean Gaussian noise. The split between the two error sources is set by
the weights ``w1`` (delay) and ``w2`` (disturbance); ``calibrate_sigma``
picks the noise level that realizes that split on a given run.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError

MAX_FRONT_WHEEL_ANGLE = 0.4  # rad
KMH = 1.0 / 3.6


@dataclass
class PlantConfig:
    wheelbase: float = 2.85
    steering_ratio: float = 16.0
    actuator_delay: float = 0.2
    disturbance_sigma: float = 0.0  # deg, steering-wheel angle
    w1: float = 0.713
    w2: float = 0.287
    T: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError(f"sampling period must be positive, got {self.T}")
        if self.wheelbase <= 0 or self.steering_ratio <= 0:
            raise ConfigError("wheelbase and steering_ratio must be positive")
        if self.disturbance_sigma < 0:
            raise ConfigError("disturbance_sigma must be non-negative")
        ratio = self.actuator_delay / self.T
        if self.actuator_delay < 0 or abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError(
                f"actuator_delay {self.actuator_delay} is not a non-negative multiple of T={self.T}"
            )
        if not (0 <= self.w1 <= 1 and 0 <= self.w2 <= 1) or abs(self.w1 + self.w2 - 1) > 1e-9:
            raise ConfigError(f"w1 + w2 must equal 1 with both in [0, 1], got {self.w1}, {self.w2}")

    @property
    def delay_steps(self) -> int:
        return int(round(self.actuator_delay / self.T))

    @property
    def max_steering_wheel_deg(self) -> float:
        """Steering-wheel angle that maps to the front-wheel limit."""
        return math.degrees(MAX_FRONT_WHEEL_ANGLE) * self.steering_ratio


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    v: float = 30.0 * KMH
    gamma: float = 0.0
    delta_f: float = 0.0


@dataclass
class ActuatorState:
    """FIFO of past commands plus the noise generator.

    ``last_delayed`` and ``last_noise`` hold the two components of the most
    recent output so callers can split the error into its sources.
    """

    delay_buffer: deque = field(default_factory=deque)
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    last_delayed: float = 0.0
    last_noise: float = 0.0

    @classmethod
    def initial(cls, cfg: PlantConfig) -> "ActuatorState":
        # theta(0) = 0: the line is primed with a centered wheel
        return cls(
            delay_buffer=deque([0.0] * cfg.delay_steps),
            rng=np.random.default_rng(cfg.seed),
        )


def clamp_steering_wheel(angle_deg: float, cfg: PlantConfig) -> float:
    limit = cfg.max_steering_wheel_deg
    return min(max(angle_deg, -limit), limit)


def actuator_step(state: ActuatorState, command: float, cfg: PlantConfig) -> float:
    """Advance the actuator one period and return the measured angle (deg)."""
    if state.delay_buffer:
        delayed = state.delay_buffer.popleft()
        state.delay_buffer.append(float(command))
    else:
        delayed = float(command)
    noise = float(state.rng.normal(0.0, cfg.disturbance_sigma)) if cfg.disturbance_sigma > 0 else 0.0
    state.last_delayed = delayed
    state.last_noise = noise
    return clamp_steering_wheel(delayed + noise, cfg)


def vehicle_step(state: VehicleState, measured_steer: float, cfg: PlantConfig) -> VehicleState:
    """One explicit-Euler step of the rear-axle kinematic bicycle."""
    delta_f = math.radians(measured_steer) / cfg.steering_ratio
    delta_f = min(max(delta_f, -MAX_FRONT_WHEEL_ANGLE), MAX_FRONT_WHEEL_ANGLE)
    v = max(state.v, 0.0)
    gamma = v * math.tan(delta_f) / cfg.wheelbase
    return replace(
        state,
        x=state.x + v * math.cos(state.psi) * cfg.T,
        y=state.y + v * math.sin(state.psi) * cfg.T,
        psi=state.psi + gamma * cfg.T,
        v=v,
        gamma=gamma,
        delta_f=delta_f,
    )


def calibrate_sigma(command, cfg: PlantConfig) -> float:
    """Noise std that makes RMS(noise) / RMS(delay error) equal w2 / w1.

    ``command`` is the steering-wheel command of a noise-free calibration
    run; the delay error is the gap between it and its delayed copy.
    """
    c = np.asarray(command, dtype=float)
    d = cfg.delay_steps
    delayed = np.concatenate([np.zeros(d), c[: len(c) - d]]) if d else c
    delay_rms = float(np.sqrt(np.mean((c - delayed) ** 2)))
    if cfg.w1 == 0:
        raise ConfigError("w1 = 0 leaves no delay error to calibrate against")
    return delay_rms * cfg.w2 / cfg.w1
