"""Network synthesis, neuron activation, ideal codes and the Hopfield energy.

Two conductance conventions are supported:

``classic_signed``
    The textbook network: inhibitory couplings are negative conductances,
    neurons are non-inverting with logic rails (0, 1) and the reference
    source sits at -1.

``positive_conductance``
    The circuit-friendly variant: every conductance is positive and the
    required inhibition comes from inverting neurons whose logic-high rail
    is a negative voltage (e.g. -0.67 V).

Both describe the same dynamics once the outputs are expressed in logic
units ``b = (V - out_low) / swing``; :func:`energy` is written so that it is
a Lyapunov function for either convention.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import math

import numpy as np
from scipy.special import expit, logit, xlogy

from .errors import DomainError, ParameterError

POLARITIES = ("inverting", "noninverting")
FORMULATIONS = ("classic_signed", "positive_conductance")
MAX_SYNTH_BITS = 16


@dataclass(frozen=True)
class ActivationSpec:
    """Sigmoid neuron transfer ``u -> V``.

    ``out_low`` is the logic-low rail and ``out_high`` the logic-high rail;
    ``out_high`` may sit below ``out_low`` (negative-swing neurons). The
    polarity fixes the direction of the physical transfer: a non-inverting
    neuron's output rises with ``u``, an inverting neuron's output falls.
    """

    polarity: str = "noninverting"
    gain_lambda: float = 100.0
    out_low: float = 0.0
    out_high: float = 1.0

    def __post_init__(self):
        if self.polarity not in POLARITIES:
            raise ParameterError(f"polarity must be one of {POLARITIES}, got {self.polarity!r}")
        if not (math.isfinite(self.gain_lambda) and self.gain_lambda > 0):
            raise ParameterError(f"gain_lambda must be finite and > 0, got {self.gain_lambda}")
        if not (math.isfinite(self.out_low) and math.isfinite(self.out_high)):
            raise ParameterError("activation rails must be finite")
        if self.out_high == self.out_low:
            raise ParameterError("activation swing must be non-zero")

    @property
    def swing(self) -> float:
        return self.out_high - self.out_low

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.out_low + self.out_high)

    @property
    def direction(self) -> int:
        """+1 when the output rises with u, -1 when it falls."""
        return 1 if self.polarity == "noninverting" else -1

    @property
    def slope(self) -> float:
        """Signed logistic slope mapping u to the logic fraction ``b``."""
        return self.gain_lambda * self.direction * math.copysign(1.0, self.swing)

    def logic(self, u):
        """Logic fraction b in (0, 1): 0 at the low rail, 1 at the high rail."""
        return expit(self.slope * np.asarray(u, dtype=float))

    def output(self, u):
        return self.out_low + self.swing * self.logic(u)


def _maybe_scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def activation(u, spec: ActivationSpec):
    """Neuron output voltage for internal voltage ``u`` (scalar or array)."""
    return _maybe_scalar(spec.output(u))


def activation_inverse(v, spec: ActivationSpec):
    """Internal voltage producing output ``v``; rails and beyond raise DomainError."""
    b = (np.asarray(v, dtype=float) - spec.out_low) / spec.swing
    if not np.all((b > 0.0) & (b < 1.0)):
        raise DomainError(
            f"output must lie strictly between the rails {spec.out_low} and {spec.out_high}"
        )
    return _maybe_scalar(logit(b) / spec.slope)


@dataclass(frozen=True)
class CodeWord:
    """Binary output code; ``bits[i]`` carries weight ``2**i``."""

    bits: tuple

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ParameterError(f"code bits must be 0 or 1, got {self.bits}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_value(cls, value: int, n_bits: int) -> "CodeWord":
        if not 0 <= value < 2**n_bits:
            raise ParameterError(f"value {value} does not fit in {n_bits} bits")
        return cls(tuple((value >> i) & 1 for i in range(n_bits)))

    @property
    def n_bits(self) -> int:
        return len(self.bits)

    @property
    def value(self) -> int:
        return sum(b << i for i, b in enumerate(self.bits))

    def __str__(self):
        # MSB first, the way codes are usually written
        return "".join(str(b) for b in reversed(self.bits))


def _readonly(a, shape=None):
    a = np.array(a, dtype=float)
    if shape is not None and a.shape != shape:
        raise ParameterError(f"expected shape {shape}, got {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """Electrical description of one N-neuron Hopfield quantizer block.

    Conductances are in siemens (or dimensionless for normalized networks),
    voltages in volts, capacitance in farads per neuron.
    """

    t_matrix: np.ndarray
    t_in: np.ndarray
    t_ref: np.ndarray
    v_ref: float
    capacitance: float
    activation: ActivationSpec
    formulation: str = "classic_signed"

    def __post_init__(self):
        t = np.array(self.t_matrix, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] < 1:
            raise ParameterError(f"t_matrix must be square and non-empty, got shape {t.shape}")
        n = t.shape[0]
        object.__setattr__(self, "t_matrix", _readonly(t))
        object.__setattr__(self, "t_in", _readonly(self.t_in, (n,)))
        object.__setattr__(self, "t_ref", _readonly(self.t_ref, (n,)))
        object.__setattr__(self, "v_ref", float(self.v_ref))
        object.__setattr__(self, "capacitance", float(self.capacitance))
        if self.formulation not in FORMULATIONS:
            raise ParameterError(f"formulation must be one of {FORMULATIONS}")
        for name in ("t_matrix", "t_in", "t_ref"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ParameterError(f"{name} must be finite")
        if not np.array_equal(t, t.T):
            raise ParameterError("t_matrix must be symmetric")
        if np.any(np.diag(t) != 0):
            raise ParameterError("t_matrix diagonal must be zero")
        if self.formulation == "positive_conductance":
            if np.any(t < 0) or np.any(self.t_in < 0) or np.any(self.t_ref < 0):
                raise ParameterError("positive_conductance networks need non-negative conductances")
        elif np.any(t > 0):
            raise ParameterError("classic_signed networks need non-positive couplings")
        if not (math.isfinite(self.capacitance) and self.capacitance > 0):
            raise ParameterError("capacitance must be finite and > 0")
        if not math.isfinite(self.v_ref):
            raise ParameterError("v_ref must be finite")

    @property
    def n_bits(self) -> int:
        return self.t_matrix.shape[0]

    @property
    def effective_conductance(self) -> np.ndarray:
        """Total conductance seen at each neuron input, T_In + T_R + sum_j |T_ij|."""
        return self.t_in + self.t_ref + np.abs(self.t_matrix).sum(axis=1)

    def with_v_ref(self, v_ref: float) -> "NetworkSpec":
        return replace(self, v_ref=v_ref)

    def input_current(self, v_in):
        """Source current I_i = T_In,i * v_in + T_R,i * V_ref, shape (..., N)."""
        v_in = np.asarray(v_in, dtype=float)[..., None]
        return self.t_in * v_in + self.t_ref * self.v_ref


def _check_bits(n_bits):
    if not isinstance(n_bits, (int, np.integer)) or not 1 <= n_bits <= MAX_SYNTH_BITS:
        raise ParameterError(f"n_bits must be an integer in [1, {MAX_SYNTH_BITS}], got {n_bits!r}")


def synth_normalized(n_bits: int, formulation: str = "classic_signed",
                     gain_lambda: float = 100.0) -> NetworkSpec:
    """Dimensionless network with |T_ij| = 2^(i+j), T_In = 2^i, T_R = 2^(2i-1).

    The reference source is -1 in both conventions so that the reference
    current is -2^(2i-1) in logic units.
    """
    _check_bits(n_bits)
    if formulation not in FORMULATIONS:
        raise ParameterError(f"formulation must be one of {FORMULATIONS}")
    idx = np.arange(n_bits)
    mag = np.exp2(idx[:, None] + idx[None, :])
    np.fill_diagonal(mag, 0.0)
    if formulation == "classic_signed":
        t = -mag
        act = ActivationSpec("noninverting", gain_lambda, 0.0, 1.0)
    else:
        t = mag
        act = ActivationSpec("inverting", gain_lambda, 0.0, -1.0)
    t = t + 0.0  # drop negative zeros on the diagonal
    return NetworkSpec(t, np.exp2(idx), np.exp2(2 * idx - 1), -1.0, 1.0, act, formulation)


def synth_scaled(n_bits: int = 2, v_in_max: float = 2.0, v_swing: float = -0.67,
                 v_ref: float = -0.67, unit_scale: float = 10e-6,
                 capacitance: float = 10e-12, gain_lambda: float = 1000.0) -> NetworkSpec:
    """Positive-conductance network scaled to physical voltages.

    T_ij = s 2^(i+j)/|v_swing|, T_In,i = s 2^(N+i)/v_in_max and
    T_R,i = s (2^(i-1) + 2^(2i-1)/|v_ref|) with ``s = unit_scale``. Magnitudes
    keep every conductance positive; the signs live in the neuron rails and
    in ``v_ref``.
    """
    _check_bits(n_bits)
    for name, val in (("v_in_max", v_in_max), ("unit_scale", unit_scale)):
        if not (math.isfinite(val) and val > 0):
            raise ParameterError(f"{name} must be finite and > 0, got {val}")
    for name, val in (("v_swing", v_swing), ("v_ref", v_ref)):
        if not math.isfinite(val) or val == 0:
            raise ParameterError(f"{name} must be finite and non-zero, got {val}")
    idx = np.arange(n_bits)
    t = unit_scale * np.exp2(idx[:, None] + idx[None, :]) / abs(v_swing)
    np.fill_diagonal(t, 0.0)
    t_in = unit_scale * np.exp2(n_bits + idx) / v_in_max
    t_ref = unit_scale * (np.exp2(idx - 1) + np.exp2(2 * idx - 1) / abs(v_ref))
    act = ActivationSpec("inverting", gain_lambda, 0.0, v_swing)
    return NetworkSpec(t, t_in, t_ref, v_ref, capacitance, act, "positive_conductance")


def ideal_code(v_in: float, n_bits: int, lsb: float, tie: str = "half_up") -> CodeWord:
    """Nearest code to ``v_in / lsb`` with ties rounded up, clamped to the code range."""
    if not lsb > 0:
        raise ParameterError(f"lsb must be > 0, got {lsb}")
    if tie != "half_up":
        raise ParameterError(f"unsupported tie rule {tie!r}")
    value = math.floor(v_in / lsb + 0.5)
    value = min(max(value, 0), 2**n_bits - 1)
    return CodeWord.from_value(value, n_bits)


def _binary_entropy_from_u(z):
    # H(sigmoid(z)) in nats, written with softplus so the rails do not underflow
    b = expit(z)
    return b * np.logaddexp(0.0, -z) + (1.0 - b) * np.logaddexp(0.0, z)


def energy(spec: NetworkSpec, state, v_in: float, include_integral: bool = False) -> float:
    """Hopfield energy of a state (a NeuronState, an output-voltage vector or a CodeWord).

    Computes ``-1/2 V.T.V - I.V + sum_i T_i * integral(g^-1)`` with
    ``I = T_In v_in + T_R V_ref``. For inverting neurons the expression is
    evaluated on the equivalent non-inverting network (u -> -u), which flips
    its sign; this keeps the value a Lyapunov function of the dynamics in
    both conventions. The integral runs from the logic-low rail.

    CodeWords are taken at the rails; include_integral is then rejected since
    the integral term vanishes there in the high-gain limit.
    """
    act = spec.activation
    n = spec.n_bits
    z = None
    if isinstance(state, CodeWord):
        if include_integral:
            raise ParameterError("include_integral is undefined for a CodeWord (rail) state")
        b = np.asarray(state.bits, dtype=float)
    elif hasattr(state, "u"):
        z = act.slope * np.asarray(state.u, dtype=float)
        b = expit(z)
    else:
        v = np.asarray(state, dtype=float)
        b = (v - act.out_low) / act.swing
        if include_integral and np.any((b < 0) | (b > 1)):
            raise DomainError("state lies outside the activation rails")
    if b.shape != (n,):
        raise ParameterError(f"state has shape {b.shape}, network has {n} neurons")

    v = act.out_low + act.swing * b
    current = spec.t_in * v_in + spec.t_ref * spec.v_ref
    e = act.direction * (-0.5 * v @ spec.t_matrix @ v - current @ v)
    if include_integral:
        if z is not None:
            h = _binary_entropy_from_u(z)
        else:
            h = -xlogy(b, b) - xlogy(1.0 - b, 1.0 - b)
        e -= abs(act.swing) / act.gain_lambda * float(spec.effective_conductance @ h)
    return float(e)
