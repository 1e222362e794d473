import numpy as np
import pytest

from gpff import (
    ScheduleParams,
    build_schedule,
    clamp_terminal,
    next_sigma,
    observed_step_size,
)


def closed_form_level(i, params):
    inv = 1.0 / params.rho
    hi = params.sigma_max ** inv
    lo = params.sigma_min ** inv
    return (hi + (i / (params.steps - 1)) * (lo - hi)) ** params.rho


def test_params_validation():
    with pytest.raises(ValueError):
        ScheduleParams(rho=0.0)
    with pytest.raises(ValueError):
        ScheduleParams(sigma_min=2.0, sigma_max=1.0)
    with pytest.raises(ValueError):
        ScheduleParams(sigma_min=0.0)
    with pytest.raises(ValueError):
        ScheduleParams(steps=1)


def test_schedule_endpoints_and_terminal_zero():
    params = ScheduleParams()
    schedule = build_schedule(params)
    assert len(schedule.levels) == params.steps + 1
    assert schedule.levels[0] == params.sigma_max
    assert schedule.levels[-2] == params.sigma_min
    assert schedule.levels[-1] == 0.0
    assert schedule.n_steps == params.steps


def test_levels_strictly_decreasing():
    params = ScheduleParams(rho=3.0, sigma_min=0.05, sigma_max=10.0, steps=17)
    levels = build_schedule(params).levels
    assert all(a > b for a, b in zip(levels, levels[1:]))


def test_levels_match_closed_form():
    params = ScheduleParams(rho=7.0, sigma_min=0.002, sigma_max=80.0, steps=33)
    levels = build_schedule(params).levels
    for i in range(params.steps):
        assert levels[i] == pytest.approx(closed_form_level(i, params), rel=1e-12)


def test_rho_one_is_linear():
    params = ScheduleParams(rho=1.0, sigma_min=1.0, sigma_max=11.0, steps=11)
    levels = build_schedule(params).levels[:-1]
    np.testing.assert_allclose(levels, np.linspace(11.0, 1.0, 11), atol=1e-9)


def test_next_sigma_zero_step_is_identity():
    params = ScheduleParams()
    assert next_sigma(5.0, 0.0, params) == pytest.approx(5.0, rel=1e-12)


def test_next_sigma_full_sweep_hits_sigma_min():
    params = ScheduleParams()
    result = next_sigma(params.sigma_max, 1.0, params)
    assert result == pytest.approx(params.sigma_min, rel=1e-9)
    # The guard keeps a value mathematically equal to sigma_min from
    # being clamped to zero by rounding.
    assert result > 0.0


def test_next_sigma_overshoot_clamps_to_zero():
    params = ScheduleParams()
    assert next_sigma(params.sigma_max, 1.5, params) == 0.0
    assert next_sigma(params.sigma_min, 0.01, params) == 0.0


def test_next_sigma_unclamped_can_pass_below_sigma_min():
    params = ScheduleParams()
    raw = next_sigma(params.sigma_min, 1e-4, params, clamp=False)
    assert 0.0 < raw < params.sigma_min


def test_next_sigma_rejects_nonpositive_sigma():
    params = ScheduleParams()
    with pytest.raises(ValueError):
        next_sigma(0.0, 0.1, params)


def test_chaining_reproduces_schedule_levels():
    params = ScheduleParams(steps=64)
    levels = build_schedule(params).levels
    step = 1.0 / (params.steps - 1)
    sigma = levels[0]
    for i in range(1, params.steps):
        sigma = next_sigma(sigma, step, params)
        assert sigma == pytest.approx(levels[i], rel=1e-9)
    assert next_sigma(sigma, step, params) == 0.0


def test_observed_step_size_inverts_next_sigma():
    params = ScheduleParams(rho=4.0, sigma_min=0.02, sigma_max=20.0, steps=32)
    rng = np.random.default_rng(13)
    for _ in range(200):
        sigma = float(rng.uniform(0.05, 20.0))
        step = float(rng.uniform(0.0, 0.5))
        nxt = next_sigma(sigma, step, params, clamp=False)
        if nxt <= 0:
            continue
        assert observed_step_size(sigma, nxt, params) == pytest.approx(step, abs=1e-12)


def test_observed_step_size_sign_convention():
    params = ScheduleParams()
    assert observed_step_size(5.0, 5.0, params) == 0.0
    assert observed_step_size(5.0, 6.0, params) < 0.0
    assert observed_step_size(6.0, 5.0, params) > 0.0
    with pytest.raises(ValueError):
        observed_step_size(0.0, 1.0, params)


def test_clamp_terminal():
    params = ScheduleParams()
    assert clamp_terminal(params.sigma_min, params) == 0.0
    assert clamp_terminal(params.sigma_min / 2, params) == 0.0
    assert clamp_terminal(0.5, params) == 0.5


def test_params_dict_roundtrip():
    params = ScheduleParams(rho=2.5, sigma_min=0.1, sigma_max=5.0, steps=12)
    assert ScheduleParams.from_dict(params.to_dict()) == params
