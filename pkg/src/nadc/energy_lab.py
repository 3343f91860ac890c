"""Exhaustive energy landscapes over binary codes.

Serves as the oracle for the dynamics: every code is scored at the rails
and local minimality is judged against the single-bit-flip neighbourhood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CodeWord, NetworkSpec
from .errors import ParameterError

MAX_ENUM_BITS = 20


@dataclass(frozen=True, eq=False)
class LandscapeReport:
    v_in: float
    energies: np.ndarray
    global_min: CodeWord
    local_minima: list

    @property
    def is_unique(self) -> bool:
        return len(self.local_minima) == 1


def _all_codes(n: int) -> np.ndarray:
    values = np.arange(2**n)
    return ((values[:, None] >> np.arange(n)) & 1).astype(float)


def code_energies(spec: NetworkSpec, v_in: float) -> np.ndarray:
    """Energy of every code, indexed by the code's weighted value.

    Same expression as :func:`nadc.core.energy` on a CodeWord, vectorized.
    """
    n = spec.n_bits
    if n > MAX_ENUM_BITS:
        raise ParameterError(f"enumeration limited to {MAX_ENUM_BITS} bits, network has {n}")
    act = spec.activation
    v = act.out_low + act.swing * _all_codes(n)
    current = spec.t_in * v_in + spec.t_ref * spec.v_ref
    quad = np.einsum("ci,ij,cj->c", v, spec.t_matrix, v)
    return act.direction * (-0.5 * quad - v @ current)


def global_min_code(spec: NetworkSpec, v_in: float) -> CodeWord:
    """Lowest-energy code; ties go to the smaller weighted value."""
    e = code_energies(spec, v_in)
    return CodeWord.from_value(int(np.argmin(e)), spec.n_bits)


def local_minimum_mask(energies: np.ndarray, n: int) -> np.ndarray:
    values = np.arange(energies.size)
    mask = np.ones(energies.size, dtype=bool)
    for i in range(n):
        mask &= energies[values ^ (1 << i)] >= energies
    return mask


def enumerate_local_minima(spec: NetworkSpec, v_in: float) -> LandscapeReport:
    """Codes no single bit flip can strictly improve, plus the global minimum."""
    e = code_energies(spec, v_in)
    n = spec.n_bits
    minima = [CodeWord.from_value(int(c), n) for c in np.flatnonzero(local_minimum_mask(e, n))]
    return LandscapeReport(float(v_in), e, CodeWord.from_value(int(np.argmin(e)), n), minima)


@dataclass(frozen=True)
class LandscapeRow:
    v_in: float
    global_min: CodeWord
    n_local_minima: int


def landscape_table(spec: NetworkSpec, v_lo: float, v_hi: float, n_points: int) -> list[LandscapeRow]:
    """Per-grid-point summary of the landscape (a single point sits at v_lo)."""
    if n_points < 1 or v_hi < v_lo:
        raise ParameterError("landscape grid needs n_points >= 1 and v_lo <= v_hi")
    rows = []
    for v in np.linspace(v_lo, v_hi, int(n_points)):
        rep = enumerate_local_minima(spec, float(v))
        rows.append(LandscapeRow(float(v), rep.global_min, len(rep.local_minima)))
    return rows


def count_multi_minima(spec: NetworkSpec, v_grid) -> int:
    """Number of grid inputs at which more than one local minimum exists."""
    n = spec.n_bits
    return sum(int(local_minimum_mask(code_energies(spec, float(v)), n).sum() > 1) for v in v_grid)
