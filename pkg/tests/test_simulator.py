from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nfc.analysis import power_bound_q, power_bound_x
from nfc.backward import quant_error
from nfc.numerics import BoundedKind, BoundedNoiseSpec, ForwardNoiseSpec, RngStream
from nfc.scheme import SchemeParams, message_to_point
from nfc.simulator import (
    DelayPlacement,
    InvalidConfig,
    Scheme,
    SchemeConfig,
    check_config,
    check_estimation_identity,
    run_trial,
    run_trials,
    side_info_twin,
    validate_config,
    wilson_interval,
)


def test_reference_config_is_valid(quantized_cfg, scaled_cfg, side_cfg):
    for cfg in (quantized_cfg, scaled_cfg, side_cfg):
        assert validate_config(cfg) is cfg


def test_rate_above_achievable_is_rejected(quantized_cfg):
    cfg = replace(quantized_cfg, params=SchemeParams(30, 0.5, 0.8))
    with pytest.raises(InvalidConfig, match="r̄ ≥ ϱ"):
        validate_config(cfg)


def test_feedback_noise_too_large(quantized_cfg):
    reasons = check_config(replace(quantized_cfg, sigma_v_bar=1.5))
    assert any("requires 4σ̄_V² < P_X²" in r for r in reasons)


def test_scaled_backward_pins_sensitivity(scaled_cfg):
    assert scaled_cfg.effective_sigma_v == pytest.approx(0.3 / 1.9, rel=1e-15)
    bad = replace(scaled_cfg, sigma_v_bar=0.2)
    assert any("Γ" in r for r in check_config(bad))
    assert check_config(replace(bad, allow_sigma_v_override=True)) == []


def test_scaled_backward_power_guard(scaled_cfg):
    reasons = check_config(replace(scaled_cfg, p_q2=0.005))
    assert reasons and "P_Q > σ̄_S" in reasons[0]


def _noiseless(cfg, m):
    n = cfg.params.n
    return run_trial(cfg, m, RngStream(0), w=np.zeros(n + 1), v=np.zeros(n + 1))


@pytest.mark.parametrize("m", [1, 7, 32])
def test_noiseless_trial(side_cfg, m):
    cfg = replace(side_cfg, params=SchemeParams(10, 0.5, 1.0), feedback_noise=BoundedNoiseSpec(BoundedKind.ZERO, 0.0),
                  sigma_v_bar=0.0)
    tr = _noiseless(cfg, m)
    z = message_to_point(m, cfg.params)
    assert tr.m_hat == m
    assert tr.z_hat[-1] == pytest.approx(z * (1 - 2.0**-20), rel=1e-14)
    assert check_estimation_identity(tr, cfg.params) < 1e-10


def test_identity_on_noisy_trajectory(side_cfg):
    cfg = replace(side_cfg, params=SchemeParams(20, 0.5, 0.6))
    for seed in range(20):
        tr = run_trial(cfg, 5, RngStream(seed))
        assert check_estimation_identity(tr, cfg.params) < 1e-8


def test_identity_single_step(side_cfg):
    tr = run_trial(replace(side_cfg, params=SchemeParams(20, 0.5, 0.6)), 3, RngStream(2))
    a = 2**0.6
    assert tr.x[1] == pytest.approx(a * (a - 1 / a) * (tr.z_hat[1] - tr.z), rel=1e-12)


def test_quantized_equals_side_info_with_injected_error(quantized_cfg):
    twin = side_info_twin(quantized_cfg)
    for seed in range(20):
        q = run_trial(quantized_cfg, 11, RngStream(seed))
        assert np.array_equal(q.v, quant_error(q.y, 0.25))
        s = run_trial(twin, 11, RngStream(seed), w=q.y - q.x, v=q.v)
        assert s.identical(q)


def test_scaled_backward_without_noise_equals_quantized(quantized_cfg, scaled_cfg):
    silent = replace(scaled_cfg, feedback_noise=BoundedNoiseSpec(BoundedKind.ZERO, 0.0))
    quant = replace(quantized_cfg, sigma_v_bar=silent.effective_sigma_v)
    for seed in range(20):
        a = run_trial(silent, 9, RngStream(seed))
        b = run_trial(quant, 9, RngStream(seed))
        assert np.array_equal(a.x, b.x) and np.array_equal(a.z_hat, b.z_hat) and a.m_hat == b.m_hat


def test_delay_placement_is_invisible(scaled_cfg):
    before = replace(scaled_cfg, delay=DelayPlacement.BEFORE)
    for seed in range(20):
        assert run_trial(scaled_cfg, 4, RngStream(seed)).identical(run_trial(before, 4, RngStream(seed)))


def test_trial_replay(scaled_cfg):
    assert run_trial(scaled_cfg, 4, RngStream(8, 3)).identical(run_trial(scaled_cfg, 4, RngStream(8, 3)))


def test_zero_noise_run_has_no_errors(side_cfg):
    cfg = replace(side_cfg, forward=ForwardNoiseSpec("gaussian", 1e-30),
                  feedback_noise=BoundedNoiseSpec(BoundedKind.ZERO, 0.0), sigma_v_bar=0.0)
    assert run_trials(cfg, 3000, 5).errors == 0


def test_report_is_thread_independent(scaled_cfg):
    a = run_trials(scaled_cfg, 5000, 17, workers=1).to_dict()
    b = run_trials(scaled_cfg, 5000, 17, workers=4).to_dict()
    assert a == b


def test_report_powers_within_bounds(scaled_cfg):
    rep = run_trials(scaled_cfg, 4000, 3)
    p = scaled_cfg.params
    for t in range(p.n + 1):
        assert rep.empirical_power_x[t] <= 1.05 * power_bound_x(t, p.r_bar, 1.0, scaled_cfg.effective_sigma_v)
        assert rep.empirical_power_q[t] <= 1.05 * power_bound_q(t, p.r_bar, 2.0, 0.1, 2.0, 1.0)


def test_fixed_message_run(quantized_cfg):
    rep = run_trials(quantized_cfg, 100, 1, message=1)
    assert rep.trials == 100


def test_tail_counts_monotone(side_cfg):
    rep = run_trials(side_cfg, 2000, 1, tail_levels=[0.5, 1.0, 2.0])
    assert rep.tail_exceedances == sorted(rep.tail_exceedances, reverse=True)


def test_run_trials_validates(quantized_cfg):
    with pytest.raises(InvalidConfig):
        run_trials(replace(quantized_cfg, sigma_v_bar=1.5), 10, 1)
    with pytest.raises(ValueError):
        run_trials(quantized_cfg, 0, 1)


def test_wilson_interval():
    lo, hi = wilson_interval(0, 100_000)
    assert lo == 0.0 and 0 < hi < 5e-5
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**63 - 1), st.integers(1, 2**15))
def test_backward_equivalence_along_trajectories(seed, m):
    params = SchemeParams(30, 0.5, 0.6)
    cfg = SchemeConfig(Scheme.SCALED_BACKWARD, params, ForwardNoiseSpec(), 4.0,
                       BoundedNoiseSpec(BoundedKind.RADEMACHER, 0.1), sigma_s_bar=0.1, p_q2=4.0)
    quant = SchemeConfig(Scheme.QUANTIZED, params, ForwardNoiseSpec(), 4.0, sigma_v_bar=cfg.effective_sigma_v)
    a = run_trial(cfg, m, RngStream(seed))
    b = run_trial(quant, m, RngStream(seed))
    # bounded backward noise below the cell half-width never changes the reconstruction
    assert np.array_equal(a.x, b.x)
