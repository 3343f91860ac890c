"""Settling of one quantizer block by fixed-step RK4 integration of the neuron ODEs.

Each neuron obeys

    C du_i/dt = sum_j T_ij V_j - T_i u_i + T_In,i v_in + T_R,i V_ref,
    V_j = g(u_j),  T_i = T_In,i + T_R,i + sum_j |T_ij|.

Integration stops once ``max|du/dt| < tol``. Batched entry points integrate
many independent inputs at once; rows that have converged are dropped from
the working set so their final state is exactly what a single-row run gives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .core import CodeWord, NetworkSpec, energy
from .errors import NumericOverflowError, ParameterError

RESET_POLICIES = ("zero_state", "hold_previous")


@dataclass(frozen=True, eq=False)
class NeuronState:
    """Internal voltages ``u`` and the outputs ``v = g(u)`` they imply."""

    u: np.ndarray
    v: np.ndarray

    @classmethod
    def from_u(cls, u, spec: NetworkSpec) -> "NeuronState":
        u = np.array(u, dtype=float)
        if not np.all(np.isfinite(u)):
            raise NumericOverflowError("neuron state is not finite")
        v = spec.activation.output(u)
        u.setflags(write=False)
        v.setflags(write=False)
        return cls(u, v)

    @classmethod
    def reset(cls, spec: NetworkSpec) -> "NeuronState":
        return cls.from_u(np.zeros(spec.n_bits), spec)


@dataclass(frozen=True)
class SettleOptions:
    dt: float
    max_steps: int = 1_000_000
    tol: float = 1e-6
    reset_policy: str = "zero_state"
    record_energy: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ParameterError(f"max_steps must be an integer >= 1, got {self.max_steps}")
        if not (self.tol > 0):
            raise ParameterError(f"tol must be > 0, got {self.tol}")
        if self.reset_policy not in RESET_POLICIES:
            raise ParameterError(f"reset_policy must be one of {RESET_POLICIES}")


@dataclass(frozen=True)
class SettleResult:
    final: NeuronState
    code: CodeWord
    steps: int
    converged: bool
    energy_trace: list | None = field(default=None, repr=False)


def fastest_time_constant(spec: NetworkSpec) -> float:
    return spec.capacitance / float(spec.effective_conductance.max())


def default_options(spec: NetworkSpec, **overrides) -> SettleOptions:
    """Options scaled to the network: dt = tau_min/50, tol = 1 uV / tau_min.

    The tolerance keeps the residual equilibrium error near a microvolt in
    physical units (1e-6 in normalized units) regardless of the time scale.
    """
    tau = fastest_time_constant(spec)
    params = {"dt": tau / 50.0, "tol": 1e-6 / tau}
    params.update(overrides)
    return SettleOptions(**params)


class _Kernel(NamedTuple):
    t: np.ndarray
    t_in: np.ndarray
    t_ref: np.ndarray
    g_total: np.ndarray
    inv_c: float
    out_low: float
    swing: float
    slope: float


def _kernel(spec: NetworkSpec) -> _Kernel:
    act = spec.activation
    return _Kernel(spec.t_matrix, spec.t_in, spec.t_ref, spec.effective_conductance,
                   1.0 / spec.capacitance, act.out_low, act.swing, act.slope)


def _rate(k: _Kernel, u, v_in, v_ref):
    v = k.out_low + k.swing * expit(k.slope * u)
    return (v @ k.t + k.t_in * v_in[:, None] + k.t_ref * v_ref[:, None] - k.g_total * u) * k.inv_c


def _rk4(k: _Kernel, u, v_in, v_ref, dt, k1=None):
    if k1 is None:
        k1 = _rate(k, u, v_in, v_ref)
    k2 = _rate(k, u + 0.5 * dt * k1, v_in, v_ref)
    k3 = _rate(k, u + 0.5 * dt * k2, v_in, v_ref)
    k4 = _rate(k, u + dt * k3, v_in, v_ref)
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def derivative(spec: NetworkSpec, u, v_in: float):
    """du/dt in volts per second for state ``u`` (shape (N,) or (B, N))."""
    u = np.asarray(u, dtype=float)
    squeeze = u.ndim == 1
    u2 = np.atleast_2d(u)
    v_in = np.broadcast_to(np.asarray(v_in, dtype=float), u2.shape[:1])
    v_ref = np.full(u2.shape[0], spec.v_ref)
    out = _rate(_kernel(spec), u2, v_in, v_ref)
    return out[0] if squeeze else out


def step_rk4(spec: NetworkSpec, state: NeuronState, v_in: float, dt: float) -> NeuronState:
    """One classical Runge-Kutta step of size ``dt``."""
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    u = np.atleast_2d(np.asarray(state.u, dtype=float))
    new = _rk4(_kernel(spec), u, np.array([float(v_in)]), np.array([spec.v_ref]), dt)[0]
    if not np.all(np.isfinite(new)):
        raise NumericOverflowError("RK4 step produced a non-finite state", step=1)
    return NeuronState.from_u(new, spec)


def _integrate(k: _Kernel, u0, v_in, v_ref, opts: SettleOptions, on_step=None):
    """Integrate every row of ``u0`` until converged or out of steps."""
    u_out = np.array(u0, dtype=float, copy=True)
    n = u_out.shape[0]
    steps = np.full(n, opts.max_steps, dtype=np.int64)
    converged = np.zeros(n, dtype=bool)

    active = np.arange(n)
    u, vi, vr = u_out.copy(), np.asarray(v_in, float).copy(), np.asarray(v_ref, float).copy()
    step = 0
    while True:
        with np.errstate(over="ignore", invalid="ignore"):
            rate = _rate(k, u, vi, vr)
        done = np.abs(rate).max(axis=1) < opts.tol
        if done.any():
            idx = active[done]
            u_out[idx] = u[done]
            steps[idx] = step
            converged[idx] = True
            keep = ~done
            active, u, vi, vr, rate = active[keep], u[keep], vi[keep], vr[keep], rate[keep]
        if active.size == 0 or step >= opts.max_steps:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            u = _rk4(k, u, vi, vr, opts.dt, rate)
        step += 1
        if not np.all(np.isfinite(u)):
            raise NumericOverflowError(f"non-finite neuron state at step {step}", step=step)
        if on_step is not None:
            on_step(step, u)
    u_out[active] = u
    return u_out, steps, converged


def code_bits(spec: NetworkSpec, u) -> np.ndarray:
    """Logic readout of internal states, shape (..., N) of 0/1 ints."""
    act = spec.activation
    v = act.output(u)
    return (np.abs(v - act.out_low) > abs(act.swing) / 2).astype(np.int8)


def read_code(state: NeuronState, spec: NetworkSpec) -> CodeWord:
    """Bit i is 1 when output i is strictly closer to the logic-high rail."""
    act = spec.activation
    v = np.asarray(state.v, dtype=float)
    return CodeWord(tuple(int(x) for x in np.abs(v - act.out_low) > abs(act.swing) / 2))


@dataclass(frozen=True, eq=False)
class BatchSettle:
    u: np.ndarray
    bits: np.ndarray
    steps: np.ndarray
    converged: np.ndarray


def settle_batch(spec: NetworkSpec, v_in, opts: SettleOptions, v_ref=None,
                 initial=None) -> BatchSettle:
    """Settle many independent inputs, each from its own reset state.

    ``v_ref`` optionally overrides the reference per row; ``initial`` gives
    per-row starting states (defaults to u = 0).
    """
    v_in = np.atleast_1d(np.asarray(v_in, dtype=float))
    n = v_in.shape[0]
    v_ref = np.full(n, spec.v_ref) if v_ref is None else np.broadcast_to(
        np.asarray(v_ref, dtype=float), (n,))
    u0 = np.zeros((n, spec.n_bits)) if initial is None else np.array(initial, dtype=float)
    u, steps, conv = _integrate(_kernel(spec), u0, v_in, v_ref, opts)
    return BatchSettle(u, code_bits(spec, u), steps, conv)


def settle(spec: NetworkSpec, v_in: float, opts: SettleOptions,
           initial: NeuronState | None = None) -> SettleResult:
    """Settle from the reset state (or ``initial`` under hold_previous) at fixed v_in."""
    if opts.reset_policy == "hold_previous" and initial is not None:
        u0 = np.asarray(initial.u, dtype=float)[None, :]
    else:
        u0 = np.zeros((1, spec.n_bits))
    trace = None
    on_step = None
    if opts.record_energy:
        trace = [(0.0, energy(spec, NeuronState.from_u(u0[0], spec), v_in, include_integral=True))]

        def on_step(step, u):
            state = NeuronState.from_u(u[0], spec)
            trace.append((step * opts.dt, energy(spec, state, v_in, include_integral=True)))

    u, steps, conv = _integrate(_kernel(spec), u0, np.array([float(v_in)]),
                                np.array([spec.v_ref]), opts, on_step)
    final = NeuronState.from_u(u[0], spec)
    return SettleResult(final, read_code(final, spec), int(steps[0]), bool(conv[0]), trace)


@dataclass(frozen=True)
class WaveformSample:
    time: float
    v_in: float
    code: CodeWord


def simulate_waveform(spec: NetworkSpec, waveform: Callable[[float], float] | Sequence[float],
                      sample_period: float, opts: SettleOptions,
                      n_samples: int | None = None) -> list[WaveformSample]:
    """Sample a waveform and settle the block at every sample instant.

    ``waveform`` is either a function of time or an already sampled series.
    Under ``zero_state`` every sample starts from u = 0; under
    ``hold_previous`` each sample starts where the previous one settled.
    """
    if not sample_period > 0:
        raise ParameterError(f"sample_period must be > 0, got {sample_period}")
    if callable(waveform):
        if n_samples is None:
            raise ParameterError("n_samples is required for a waveform function")
        times = np.arange(n_samples) * sample_period
        values = np.array([float(waveform(t)) for t in times])
    else:
        values = np.asarray(waveform, dtype=float)
        times = np.arange(values.size) * sample_period

    if opts.reset_policy == "zero_state":
        res = settle_batch(spec, values, opts)
        codes = [CodeWord(tuple(row)) for row in res.bits]
    else:
        codes = []
        state = None
        for v in values:
            r = settle(spec, v, opts, initial=state)
            state = r.final
            codes.append(r.code)
    return [WaveformSample(float(t), float(v), c) for t, v, c in zip(times, values, codes)]
