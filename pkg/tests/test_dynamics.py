import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nadc import array as qarray
from nadc.core import ActivationSpec, CodeWord, NetworkSpec, energy, ideal_code, synth_normalized
from nadc.dynamics import (NeuronState, SettleOptions, default_options, derivative, read_code, settle,
                           settle_batch, simulate_waveform, step_rk4)
from nadc.energy_lab import enumerate_local_minima
from nadc.errors import NumericOverflowError, ParameterError


def rc_neuron(t_in=1.0, t_ref=1.0, v_ref=0.0, c=1.0):
    # no couplings: the ODE is linear whatever the activation
    return NetworkSpec([[0.0]], [t_in], [t_ref], v_ref, c, ActivationSpec())


def table_transitions(spec, opts, v):
    codes = settle_batch(spec, v, opts).bits @ (1 << np.arange(spec.n_bits))
    idx = np.flatnonzero(np.diff(codes))
    return 0.5 * (v[idx] + v[idx + 1])


def test_derivative_single_neuron():
    spec = rc_neuron()
    assert derivative(spec, np.zeros(1), 0.5)[0] == pytest.approx(0.5)


def test_derivative_batch_shape(classic2):
    u = np.zeros((5, 2))
    assert derivative(classic2, u, 1.0).shape == (5, 2)


def test_fixed_point_residual(ref_block, ref_opts):
    opts = default_options(ref_block, tol=1e-3)  # 1e-3 V/s on a ~36 ns time scale
    res = settle(ref_block, 0.6, opts)
    assert res.converged
    u = np.asarray(res.final.u)
    v = np.asarray(res.final.v)
    balance = (ref_block.t_matrix @ v + ref_block.t_in * 0.6 + ref_block.t_ref * ref_block.v_ref) / ref_block.effective_conductance
    assert np.max(np.abs(u - balance)) < 1e-9


def test_step_rk4_fixed_point_unchanged():
    spec = rc_neuron()
    state = NeuronState.from_u([0.25], spec)  # (0.5 - 2u) = 0 at v_in = 0.5
    after = step_rk4(spec, state, 0.5, 0.1)
    assert after.u[0] == 0.25


def test_step_rk4_fourth_order_on_linear_rc():
    spec = rc_neuron(t_in=1.0, t_ref=0.5, v_ref=0.2, c=2.0)
    g, drive = 1.5, 1.0 * 0.8 + 0.5 * 0.2

    def exact(t):
        return drive / g * (1.0 - math.exp(-g * t / 2.0))

    errors = []
    for dt in (0.2, 0.1, 0.05):
        state = NeuronState.from_u([0.0], spec)
        for _ in range(round(2.0 / dt)):
            state = step_rk4(spec, state, 0.8, dt)
        errors.append(abs(state.u[0] - exact(2.0)))
    ratios = [errors[0] / errors[1], errors[1] / errors[2]]
    assert all(14 < r < 18 for r in ratios), ratios


def test_step_rk4_rejects_bad_dt(classic2):
    with pytest.raises(ParameterError):
        step_rk4(classic2, NeuronState.reset(classic2), 1.0, 0.0)


def test_classic_settles_to_top_code(classic2):
    opts = default_options(classic2)
    assert settle(classic2, 3.0, opts).code.bits == (1, 1)


def test_classic_repeated_runs_at_1p3(classic2):
    opts = default_options(classic2)
    res = settle_batch(classic2, np.full(200, 1.3), opts)
    assert np.all(res.bits == [1, 0])
    assert settle(classic2, 1.3, opts).code == CodeWord((1, 0))


def test_ref_block_low_input_reads_zero(ref_block, ref_opts):
    assert settle(ref_block, 0.1, ref_opts).code.bits == (0, 0)


def test_ref_block_sweep_converges(ref_block, ref_opts):
    opts = default_options(ref_block, tol=1e-6)
    v = np.linspace(0, 2, 256)
    res = settle_batch(ref_block, v, SettleOptions(opts.dt, 1_000_000, opts.tol))
    assert res.converged.all()
    assert res.steps.max() < 1_000_000


def test_default_tolerance_sweep_converges(ref_block, ref_opts):
    res = settle_batch(ref_block, np.linspace(0, 2, 256), ref_opts)
    assert res.converged.all()
    # residual below tol for every converged row
    assert np.abs(derivative(ref_block, res.u, np.linspace(0, 2, 256))).max() < ref_opts.tol


def test_halving_dt_moves_settled_state_little(ref_block, ref_opts):
    v = np.linspace(0, 2, 64)
    half = SettleOptions(ref_opts.dt / 2, ref_opts.max_steps, ref_opts.tol)
    a = settle_batch(ref_block, v, ref_opts)
    b = settle_batch(ref_block, v, half)
    assert np.max(np.abs(a.u - b.u)) < 1e-6
    assert np.array_equal(a.bits, b.bits)


def test_step_size_robust_codes_full_sweep(ref_block, ref_opts):
    v = np.linspace(0, 2, 256)
    half = SettleOptions(ref_opts.dt / 2, ref_opts.max_steps, ref_opts.tol)
    assert np.array_equal(settle_batch(ref_block, v, ref_opts).bits, settle_batch(ref_block, v, half).bits)


def test_read_code_rails_and_midpoint(ref_block):
    act = ref_block.activation
    state = NeuronState(np.zeros(2), np.array([act.out_high, act.out_low]))
    assert read_code(state, ref_block).bits == (1, 0)
    mid = NeuronState(np.zeros(2), np.full(2, act.midpoint))
    assert read_code(mid, ref_block).bits == (0, 0)


def test_settled_outputs_saturate(ref_block, ref_opts):
    v = np.linspace(0, 2, 256)
    trans = table_transitions(ref_block, ref_opts, np.linspace(0, 2, 2001))
    far = v[np.min(np.abs(v[:, None] - trans[None, :]), axis=1) >= 0.05]
    res = settle_batch(ref_block, far, ref_opts)
    out = ref_block.activation.output(res.u)
    swing = abs(ref_block.activation.swing)
    dist = np.minimum(np.abs(out - ref_block.activation.out_low), np.abs(out - ref_block.activation.out_high))
    assert np.all(dist < 0.01 * swing)


def test_batch_matches_single(ref_block, ref_opts):
    v = np.linspace(0, 2, 17)
    batch = settle_batch(ref_block, v, ref_opts)
    for i, x in enumerate(v):
        one = settle(ref_block, x, ref_opts)
        np.testing.assert_array_equal(batch.u[i], one.final.u)
        assert batch.steps[i] == one.steps


def test_overflow_is_reported(classic2):
    opts = SettleOptions(dt=50.0, max_steps=10_000, tol=1e-12)
    with pytest.raises(NumericOverflowError) as info:
        settle(classic2, 1.0, opts)
    assert info.value.step >= 1


def test_settle_options_validation():
    with pytest.raises(ParameterError):
        SettleOptions(dt=0.0)
    with pytest.raises(ParameterError):
        SettleOptions(dt=1e-3, max_steps=0)
    with pytest.raises(ParameterError):
        SettleOptions(dt=1e-3, reset_policy="sometimes")


def test_max_steps_exhaustion_not_converged(classic2):
    res = settle(classic2, 1.3, SettleOptions(dt=1e-3, max_steps=3))
    assert not res.converged and res.steps == 3


@pytest.mark.parametrize("formulation", ["classic_signed", "positive_conductance"])
def test_lyapunov_descent_random_trajectories(formulation):
    spec = synth_normalized(2, formulation)
    opts = default_options(spec, reset_policy="hold_previous", record_energy=True, max_steps=4000)
    rng = np.random.default_rng(7)
    for _ in range(100):
        u0 = rng.uniform(-0.05, 0.05, 2)
        x = rng.uniform(-0.5, 3.5)
        trace = np.array([e for _, e in settle(spec, x, opts, NeuronState.from_u(u0, spec)).energy_trace])
        rise = np.diff(trace)
        assert np.all(rise <= 1e-9 * np.maximum(np.abs(trace[:-1]), 1e-12)), (x, u0, rise.max())


def test_reset_policy_independent_where_minimum_unique(ref_block, ref_opts):
    v = np.linspace(0, 2, 256)
    lsb = 0.5
    trans = table_transitions(ref_block, ref_opts, np.linspace(0, 2, 2001))
    away = np.min(np.abs(v[:, None] - trans[None, :]), axis=1) >= 0.1 * lsb
    # finite gain widens the bistable band slightly, so ask for a unique
    # minimum over the whole +-0.1 LSB neighbourhood
    fine = np.linspace(-0.1, 2.1, 2201)
    fine_unique = np.array([enumerate_local_minima(ref_block, x).is_unique for x in fine])
    near = np.abs(v[:, None] - fine[None, :]) <= 0.1 * lsb
    unique = np.all(fine_unique[None, :] | ~near, axis=1)
    hold = SettleOptions(ref_opts.dt, ref_opts.max_steps, ref_opts.tol, "hold_previous")
    for series in (v, v[::-1]):
        zero = simulate_waveform(ref_block, series, 1e-6, ref_opts)
        held = simulate_waveform(ref_block, series, 1e-6, hold)
        keep = (away & unique) if series is v else (away & unique)[::-1]
        assert keep.sum() > 100
        for z, h, k in zip(zero, held, keep):
            if k:
                assert z.code == h.code, z.v_in


def test_hold_previous_shows_hysteresis(ref_block, ref_opts):
    # bistable middle band: the held state keeps its code past the zero-state transition
    hold = SettleOptions(ref_opts.dt, ref_opts.max_steps, ref_opts.tol, "hold_previous")
    up = simulate_waveform(ref_block, np.linspace(0.8, 1.1, 31), 1e-6, hold)
    zero = simulate_waveform(ref_block, np.linspace(0.8, 1.1, 31), 1e-6, ref_opts)
    assert sum(a.code != b.code for a, b in zip(up, zero)) > 0


def test_waveform_constant_and_ramp(ref_block, ref_opts):
    const = simulate_waveform(ref_block, lambda t: 1.0, 1e-6, ref_opts, n_samples=20)
    assert len({s.code for s in const}) == 1
    ramp = simulate_waveform(ref_block, np.linspace(0, 2, 256), 1e-6, ref_opts)
    values = [s.code.value for s in ramp]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert values[0] == 0 and values[-1] == 3
    assert ramp[1].time == pytest.approx(1e-6)


def test_waveform_sine_tracks_ideal_code(ref_block, ref_opts):
    block = qarray.QuantizerArraySpec(1, 0.0, ref_block, (ref_block.v_ref,))
    cal = qarray.calibrate_refs(block, [0.25, 0.75, 1.25], (-1.6, 0.0, 0.02), ref_opts)
    tuned = ref_block.with_v_ref(cal.v_refs[0])
    samples = simulate_waveform(tuned, lambda t: 1.0 + math.sin(2 * math.pi * t * 1e3), 1e-3 / 256,
                                ref_opts, n_samples=256)
    match = np.mean([s.code == ideal_code(s.v_in, 2, 0.5) for s in samples])
    assert match >= 0.9


def test_waveform_needs_length_for_function(ref_block, ref_opts):
    with pytest.raises(ParameterError):
        simulate_waveform(ref_block, lambda t: 0.0, 1e-6, ref_opts)
    with pytest.raises(ParameterError):
        simulate_waveform(ref_block, [0.0], 0.0, ref_opts)


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.4, 3.4))
def test_settled_code_is_a_local_minimum(x):
    spec = synth_normalized(2)
    code = settle(spec, x, default_options(spec)).code
    assert code in enumerate_local_minima(spec, x).local_minima
