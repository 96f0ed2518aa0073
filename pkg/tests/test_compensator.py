import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from steercomp.compensator import (
    PD,
    PI,
    CompensatorConfig,
    CompensatorState,
    compensate,
    compose_command,
    select_mode,
)
from steercomp.errors import ConfigError, NonFiniteInput

finite = st.floats(-200, 200, allow_nan=False)


def run(errors, gammas, cfg):
    state = CompensatorState()
    return [compensate(state, e, g, cfg) for e, g in zip(errors, gammas)], state


def test_zero_error_zero_output():
    out, _ = run([0.0] * 10, [0.0, 5.0] * 5, CompensatorConfig(k_p=1, k_i=1, k_d=1))
    assert out == [0.0] * 10


def test_pi_hand_values():
    cfg = CompensatorConfig(k_p=0.5, k_i=0.1, T=0.05)
    out, _ = run([1.0, 1.0], [0.0, 0.0], cfg)
    assert out == pytest.approx([0.505, 0.510], abs=1e-12)


def test_pi_zero_crossing_reset():
    cfg = CompensatorConfig(k_p=0.5, k_i=0.1, T=0.05)
    out, state = run([0.5, -0.2], [0.0, 0.0], cfg)
    assert out[1] == pytest.approx(0.5 * -0.2 + 0.1 * 0.05 * -0.2, abs=1e-12)
    assert state.integrator == pytest.approx(0.05 * -0.2)


def test_pd_hand_value():
    cfg = CompensatorConfig(k_p=0.5, k_d=0.02, T=0.05)
    out, state = run([0.0, 1.0], [5.0, 5.0], cfg)
    assert out[1] == pytest.approx(0.9, abs=1e-12)
    assert state.mode == PD


def test_pd_freezes_integrator():
    cfg = CompensatorConfig(k_p=0.5, k_i=0.1)
    out, state = run([1.0, 1.0, 1.0], [0.0, 5.0, 5.0], cfg)
    assert state.integrator == pytest.approx(0.05)


def test_boundary_goes_to_pi():
    cfg = CompensatorConfig(w0=2.0)
    assert select_mode(2.0, cfg) == PI
    assert select_mode(-2.0, cfg) == PI
    assert select_mode(2.0 + 1e-12, cfg) == PD


def test_anti_windup_holds_integrator():
    cfg = CompensatorConfig(k_p=1.0, k_i=10.0, u1_limit=5.0)
    state = CompensatorState()
    for _ in range(50):
        u = compensate(state, 4.0, 0.0, cfg)
        assert abs(u) <= 5.0
    # integrator stopped growing once the output saturated
    assert cfg.k_p * 4.0 + cfg.k_i * state.integrator <= 5.0 + cfg.k_i * cfg.T * 4.0


def test_non_finite_rejected():
    with pytest.raises(NonFiniteInput):
        compensate(CompensatorState(), math.nan, 0.0, CompensatorConfig())
    with pytest.raises(NonFiniteInput):
        compensate(CompensatorState(), 1.0, math.inf, CompensatorConfig())


@pytest.mark.parametrize("kwargs", [{"T": 0}, {"w0": 0}, {"u1_limit": -1}, {"k_p": -0.1}])
def test_invalid_config(kwargs):
    with pytest.raises(ConfigError):
        CompensatorConfig(**kwargs)


def test_compose_command():
    assert compose_command(42.0, 0.0, 366.7) == 42.0
    assert compose_command(366.7, 3.0, 366.7) == 366.7
    assert compose_command(100.0, -12.5, 366.7) == 87.5


@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=60))
def test_mode_tracks_threshold(seq):
    cfg = CompensatorConfig(k_p=0.3, k_i=0.2, k_d=0.05)
    state = CompensatorState()
    for e, g in seq:
        compensate(state, e, g, cfg)
        assert (state.mode == PI) == (abs(g) <= cfg.w0)


@given(st.lists(finite, min_size=1, max_size=40), st.lists(finite, min_size=40, max_size=40))
def test_memoryless_without_i_and_d(errors, gammas):
    cfg = CompensatorConfig(k_p=0.7, k_i=0.0, k_d=0.0, u1_limit=1e6)
    out, _ = run(errors, gammas, cfg)
    assert out == [0.7 * e for e in errors]


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=40))
def test_reset_contribution_after_sign_change(errors):
    cfg = CompensatorConfig(k_p=0.4, k_i=0.3, u1_limit=1e6)
    state = CompensatorState()
    for e in errors:
        prev = state.prev_error_sign
        u = compensate(state, e, 0.0, cfg)
        sign = (e > 0) - (e < 0)
        if sign and prev and sign != prev:
            assert u - cfg.k_p * e == pytest.approx(cfg.k_i * cfg.T * e, abs=1e-12)


@given(st.lists(st.tuples(st.floats(-1e6, 1e6), finite), min_size=1, max_size=60),
       st.floats(0.1, 100))
def test_output_bounded(seq, limit):
    cfg = CompensatorConfig(k_p=1.0, k_i=5.0, k_d=0.1, u1_limit=limit)
    state = CompensatorState()
    for e, g in seq:
        assert abs(compensate(state, e, g, cfg)) <= limit
        assert math.isfinite(state.integrator)
