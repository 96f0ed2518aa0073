"""Switching PI/PD feedforward compensator.

On straights (desired yaw rate below ``w0``) the predicted error runs
through a PI law whose integrator is cleared whenever the prediction
changes sign; on curves it runs through a PD law. The discrete operators
are a backward-Euler integrator for ``Tz/(z-1)`` and a backward difference
for ``(z-1)/(Tz)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, NonFiniteInput

PI = "PI"
PD = "PD"


@dataclass
class CompensatorConfig:
    k_p: float = 0.4  # from scripts/tune_gains.py, see scripts/gain_search/
    k_i: float = 0.0
    k_d: float = 0.0
    w0: float = 2.0  # deg/s
    T: float = 0.05
    u1_limit: float = 90.0  # deg

    def __post_init__(self):
        if not self.T > 0 or not self.w0 > 0 or not self.u1_limit > 0:
            raise ConfigError("T, w0 and u1_limit must be positive")
        if min(self.k_p, self.k_i, self.k_d) < 0:
            raise ConfigError("gains must be non-negative")


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


@dataclass
class CompensatorState:
    integrator: float = 0.0
    prev_error: float = 0.0
    prev_error_sign: int = 0
    mode: str = PI

    def reset(self):
        self.integrator = 0.0
        self.prev_error = 0.0
        self.prev_error_sign = 0
        self.mode = PI


def select_mode(gamma: float, cfg: CompensatorConfig) -> str:
    # |gamma| == w0 falls to PI
    return PD if abs(gamma) > cfg.w0 else PI


def compensate(state: CompensatorState, e_hat: float, gamma: float, cfg: CompensatorConfig) -> float:
    """Return the corrective command u1 (deg) and advance ``state``.

    ``gamma`` is the desired yaw rate in deg/s.
    """
    if not (math.isfinite(e_hat) and math.isfinite(gamma)):
        raise NonFiniteInput(f"e_hat={e_hat}, gamma={gamma}")
    sign = _sign(e_hat)
    mode = select_mode(gamma, cfg)
    integrator = state.integrator
    if mode == PI:
        if sign != 0 and state.prev_error_sign != 0 and sign != state.prev_error_sign:
            integrator = 0.0
        reset_value = integrator
        integrator += cfg.T * e_hat
        u1 = cfg.k_p * e_hat + cfg.k_i * integrator
        if abs(u1) > cfg.u1_limit:
            # conditional integration: hold the integrator while saturated
            integrator = reset_value
    else:
        u1 = cfg.k_p * e_hat + cfg.k_d * (e_hat - state.prev_error) / cfg.T
    u1 = min(max(u1, -cfg.u1_limit), cfg.u1_limit)

    state.integrator = integrator
    state.prev_error = e_hat
    state.prev_error_sign = sign
    state.mode = mode
    return u1


def compose_command(u_track: float, u1: float, limit: float) -> float:
    """Tracker command plus correction, clamped to +/- ``limit`` deg."""
    return min(max(u_track + u1, -limit), limit)
