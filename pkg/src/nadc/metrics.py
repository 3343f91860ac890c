"""Static ADC metrics from a swept transfer table."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricsError


@dataclass(frozen=True, eq=False)
class AdcMetrics:
    """Transition voltages plus endpoint-fit linearity, all errors in LSB."""

    transitions: np.ndarray
    inl: np.ndarray
    dnl: np.ndarray
    max_abs_inl: float
    max_abs_dnl: float
    gain_error: float
    monotone: bool
    lsb_fit: float

    @property
    def n_levels(self) -> int:
        return len(self.transitions) + 1


def _table_columns(table):
    v = np.asarray(table.v_in, dtype=float)
    level = np.asarray(table.level)
    return v, level


def transitions(table) -> np.ndarray:
    """Midpoints of the input pairs bracketing each level change, in sweep order."""
    v, level = _table_columns(table)
    if v.size == 0:
        raise MetricsError("transfer table is empty")
    idx = np.flatnonzero(np.diff(level) != 0)
    if idx.size == 0:
        raise MetricsError("transfer table has fewer than 2 distinct levels")
    return 0.5 * (v[idx] + v[idx + 1])


def inl_dnl(trans, ideal_lsb: float, fit: str = "endpoint") -> AdcMetrics:
    """Endpoint-fit INL/DNL of a list of transition voltages.

    The reference line passes through the first and last transitions, so INL
    is zero at both ends. ``gain_error`` is the excess of the fitted
    full-scale span over the ideal one, expressed in ideal LSBs.
    """
    if fit != "endpoint":
        raise MetricsError(f"unsupported fit {fit!r}")
    t = np.asarray(trans, dtype=float)
    if t.size < 2:
        raise MetricsError("need at least 2 transitions")
    if not ideal_lsb > 0:
        raise MetricsError("ideal_lsb must be > 0")
    span = t[-1] - t[0]
    if span == 0:
        raise MetricsError("degenerate endpoint fit: first and last transitions coincide")
    k = np.arange(t.size)
    lsb_fit = span / (t.size - 1)
    inl = (t - (t[0] + k * lsb_fit)) / lsb_fit
    dnl = np.diff(t) / lsb_fit - 1.0
    gain_error = (span - (t.size - 1) * ideal_lsb) / ideal_lsb
    return AdcMetrics(
        transitions=t,
        inl=inl,
        dnl=dnl,
        max_abs_inl=float(np.abs(inl).max()),
        max_abs_dnl=float(np.abs(dnl).max()) if dnl.size else 0.0,
        gain_error=float(gain_error),
        monotone=bool(np.all(np.diff(t) > 0)),
        lsb_fit=float(lsb_fit),
    )


def level_monotone(level) -> bool:
    return bool(np.all(np.diff(np.asarray(level)) >= 0))


def analyze(table, ideal_lsb: float) -> AdcMetrics:
    """transitions + inl_dnl, with monotonicity taken from the level column."""
    m = inl_dnl(transitions(table), ideal_lsb)
    if m.monotone and not level_monotone(table.level):
        m = AdcMetrics(**{**m.__dict__, "monotone": False})
    return m
