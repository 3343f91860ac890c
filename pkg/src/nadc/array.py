"""Level-shifted array of small Hopfield quantizer blocks.

Block ``k`` sees the analog input shifted by ``k * delta_v`` and settles with
its own reference voltage. The concatenated block codes form the raw code
that the encoder later maps onto a weighted binary output.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math
import warnings

import numpy as np

from .core import NetworkSpec, synth_scaled
from .dynamics import SettleOptions, settle_batch
from .errors import CalibrationError, ParameterError
from .metrics import analyze

log = logging.getLogger(__name__)

SHIFT_SIGNS = ("add", "subtract")


@dataclass(frozen=True, eq=False)
class QuantizerArraySpec:
    n_blocks: int
    delta_v: float
    block_template: NetworkSpec
    v_refs: tuple
    shift_sign: str = "add"
    v_in_range: tuple = (0.0, 2.0)

    def __post_init__(self):
        if int(self.n_blocks) != self.n_blocks or self.n_blocks < 1:
            raise ParameterError(f"n_blocks must be an integer >= 1, got {self.n_blocks}")
        if not (math.isfinite(self.delta_v) and self.delta_v >= 0):
            raise ParameterError(f"delta_v must be >= 0, got {self.delta_v}")
        if self.shift_sign not in SHIFT_SIGNS:
            raise ParameterError(f"shift_sign must be one of {SHIFT_SIGNS}")
        refs = tuple(float(v) for v in self.v_refs)
        if len(refs) != self.n_blocks or not all(math.isfinite(v) for v in refs):
            raise ParameterError(f"v_refs must hold {self.n_blocks} finite values")
        object.__setattr__(self, "v_refs", refs)
        lo, hi = (float(x) for x in self.v_in_range)
        if not lo < hi:
            raise ParameterError("v_in_range must satisfy low < high")
        object.__setattr__(self, "v_in_range", (lo, hi))

    @property
    def bits_per_block(self) -> int:
        return self.block_template.n_bits

    @property
    def width(self) -> int:
        return self.n_blocks * self.bits_per_block

    def block_spec(self, k: int) -> NetworkSpec:
        return self.block_template.with_v_ref(self.v_refs[k])

    def with_v_refs(self, v_refs) -> "QuantizerArraySpec":
        return replace(self, v_refs=tuple(v_refs))

    def offsets(self) -> np.ndarray:
        sign = 1.0 if self.shift_sign == "add" else -1.0
        return sign * self.delta_v * np.arange(self.n_blocks)


def default_array(v_refs=None, n_blocks: int = 6, delta_v: float = 0.1,
                  template: NetworkSpec | None = None) -> QuantizerArraySpec:
    """Six shifted copies of the default 2-bit block over [0, 2] V."""
    template = template or synth_scaled()
    if v_refs is None:
        v_refs = [template.v_ref] * n_blocks
    return QuantizerArraySpec(n_blocks, delta_v, template, tuple(v_refs))


@dataclass(frozen=True)
class RawCode:
    """Concatenated block codes, block 0 first, each block LSB first."""

    bits: tuple
    clamped: bool = False

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ParameterError("raw code bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    def __str__(self):
        return "".join(str(b) for b in self.bits)


@dataclass(frozen=True, eq=False)
class TransferTable:
    v_in: np.ndarray
    raw: np.ndarray
    level: np.ndarray

    def __post_init__(self):
        if self.v_in.size > 1 and not np.all(np.diff(self.v_in) > 0):
            raise ParameterError("transfer table inputs must be strictly increasing")

    def __len__(self):
        return self.v_in.size

    @property
    def n_levels(self) -> int:
        return int(self.level.max()) + 1 if self.level.size else 0

    def rows(self):
        for v, r, lv in zip(self.v_in, self.raw, self.level):
            yield float(v), RawCode(tuple(r)), int(lv)


def shifted_input(v_in: float, block_index: int, spec: QuantizerArraySpec) -> float:
    if not 0 <= block_index < spec.n_blocks:
        raise ParameterError(f"block_index {block_index} outside [0, {spec.n_blocks})")
    return v_in + float(spec.offsets()[block_index])


def quantize_batch(spec: QuantizerArraySpec, v_in, opts: SettleOptions):
    """Raw bits for every input, shape (B, width), plus the per-input clamp flags.

    Every block starts from the zero state; inputs outside ``v_in_range`` are
    clamped first.
    """
    v = np.atleast_1d(np.asarray(v_in, dtype=float))
    lo, hi = spec.v_in_range
    clipped = np.clip(v, lo, hi)
    clamped = clipped != v
    # one batch: block-major concatenation of the shifted inputs
    x = (clipped[None, :] + spec.offsets()[:, None]).ravel()
    refs = np.repeat(np.asarray(spec.v_refs), v.size)
    res = settle_batch(spec.block_template, x, opts, v_ref=refs)
    n = spec.bits_per_block
    bits = res.bits.reshape(spec.n_blocks, v.size, n).transpose(1, 0, 2).reshape(v.size, -1)
    return bits, clamped


def quantize(spec: QuantizerArraySpec, v_in: float, opts: SettleOptions) -> RawCode:
    bits, clamped = quantize_batch(spec, [v_in], opts)
    if clamped[0]:
        warnings.warn(f"input {v_in} V clamped to {spec.v_in_range}", stacklevel=2)
    return RawCode(tuple(bits[0]), bool(clamped[0]))


def levels_from_keys(keys) -> np.ndarray:
    """Rank of each key by first appearance; a key seen again keeps its old rank."""
    keys = np.asarray(keys)
    if keys.ndim > 1:
        _, inv = np.unique(keys, axis=0, return_inverse=True)
        keys = inv.reshape(-1)
    _, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inv.reshape(-1)]


def sweep(spec: QuantizerArraySpec, v_lo: float, v_hi: float, n_points: int,
          opts: SettleOptions) -> TransferTable:
    """Uniform sweep (endpoints included) with per-point zero-state settling."""
    if n_points < 2 or not v_lo < v_hi:
        raise ParameterError("sweep needs n_points >= 2 and v_lo < v_hi")
    v = np.linspace(v_lo, v_hi, int(n_points))
    bits, _ = quantize_batch(spec, v, opts)
    return TransferTable(v, bits, levels_from_keys(bits))


# --- calibration ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BlockTransfer:
    """Piecewise-constant block code versus block input for one reference."""

    v_ref: float
    edges: np.ndarray
    codes: np.ndarray

    def code_at(self, x):
        return self.codes[np.searchsorted(self.edges, x, side="right")]


def _block_values(template: NetworkSpec, x, refs, opts):
    bits = settle_batch(template, x, opts, v_ref=refs).bits
    return bits @ (1 << np.arange(template.n_bits))


def block_transfers(template: NetworkSpec, v_refs, x_lo: float, x_hi: float,
                    opts: SettleOptions, scan_step: float = 0.01,
                    tol: float = 1e-8) -> list[BlockTransfer]:
    """Locate every code change of the block on [x_lo, x_hi] for each reference.

    A uniform scan brackets the changes, then batched bisection narrows
    each bracket to ``tol``; a bracket whose midpoint shows a third code is
    split in two, so short intermediate codes are not lost.
    """
    refs = np.asarray(v_refs, dtype=float)
    n_scan = max(2, int(math.ceil((x_hi - x_lo) / scan_step)) + 1)
    xs = np.linspace(x_lo, x_hi, n_scan)
    grid_codes = _block_values(template, np.tile(xs, refs.size), np.repeat(refs, n_scan),
                               opts).reshape(refs.size, n_scan)

    ci, si = np.nonzero(np.diff(grid_codes, axis=1))
    cand = ci.astype(np.int64)
    lo = xs[si]
    hi = xs[si + 1]
    c_lo = grid_codes[ci, si]
    c_hi = grid_codes[ci, si + 1]
    while True:
        open_ = (hi - lo) > tol
        if not open_.any():
            break
        o = np.flatnonzero(open_)
        mid = 0.5 * (lo[o] + hi[o])
        c_mid = _block_values(template, mid, refs[cand[o]], opts)
        left = c_mid == c_lo[o]
        right = ~left & (c_mid == c_hi[o])
        split = ~left & ~right
        lo[o[left]] = mid[left]
        hi[o[right]] = mid[right]
        if split.any():
            s = o[split]
            # keep [lo, mid] in place, append [mid, hi]
            cand = np.concatenate([cand, cand[s]])
            lo = np.concatenate([lo, mid[split]])
            hi = np.concatenate([hi, hi[s]])
            c_lo = np.concatenate([c_lo, c_mid[split]])
            c_hi = np.concatenate([c_hi, c_hi[s]])
            hi[s] = mid[split]
            c_hi[s] = c_mid[split]

    out = []
    for c, ref in enumerate(refs):
        sel = np.flatnonzero(cand == c)
        order = sel[np.argsort(lo[sel], kind="stable")]
        edges = 0.5 * (lo[order] + hi[order])
        codes = np.concatenate([[grid_codes[c, 0]], c_hi[order]]) if order.size else grid_codes[c, :1]
        out.append(BlockTransfer(float(ref), edges, codes.astype(np.int64)))
    return out


@dataclass
class CalibrationResult:
    v_refs: tuple
    max_abs_inl: float
    n_levels: int
    nonmonotone: int
    spec: QuantizerArraySpec = field(repr=False)
    table: TransferTable = field(repr=False)
    endpoint_inl: float = float("nan")


def _staircase_score(keys, v, targets, lsb):
    level = levels_from_keys(keys)
    nonmono = int(np.count_nonzero(np.diff(level) < 0))
    idx = np.flatnonzero(np.diff(keys) != 0)
    trans = 0.5 * (v[idx] + v[idx + 1])
    if trans.size == targets.size:
        inl = float(np.abs(trans - targets).max() / lsb)
    else:
        inl = math.inf
    return nonmono, abs(trans.size - targets.size), inl


def target_inl(table: TransferTable, targets) -> float:
    """Max |T_k - target_k| in target LSBs; inf when the transition count differs."""
    targets = np.asarray(targets, dtype=float)
    lsb = float(np.mean(np.diff(targets))) if targets.size > 1 else 1.0
    keys = levels_from_keys(table.raw)
    return _staircase_score(keys, table.v_in, targets, lsb)[2]


def _grid_values(vref_grid):
    lo, hi, step = (float(x) for x in vref_grid)
    if not step > 0:
        raise ParameterError("vref grid step must be > 0")
    if lo > hi:
        raise ParameterError(f"empty vref grid: low {lo} > high {hi}")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    vals = np.round(lo + step * np.arange(n), 12)
    # scanning order realizes the tie-break toward smaller |v_ref|
    order = np.lexsort((vals, np.abs(vals)))
    return vals[order]


def calibrate_refs(spec: QuantizerArraySpec, target_transitions, vref_grid,
                   opts: SettleOptions, n_points: int = 256, restarts: int = 16,
                   seed: int = 0, threads: int = 1,
                   scan_step: float = 0.01) -> CalibrationResult:
    """Grid-search per-block references so the swept staircase hits the targets.

    Blocks are tuned one at a time (coordinate descent over the reference
    grid, repeated until nothing changes), from one start at the template
    reference plus ``restarts`` seeded random starts. Candidates are ranked
    lexicographically by (non-monotone steps, transition-count mismatch,
    max |INL| against the targets, sum |v_ref|).
    """
    targets = np.asarray(target_transitions, dtype=float)
    if targets.size < 1 or (targets.size > 1 and not np.all(np.diff(targets) > 0)):
        raise ParameterError("target transitions must be non-empty and strictly increasing")
    grid = _grid_values(vref_grid)
    lsb = float(np.mean(np.diff(targets))) if targets.size > 1 else 1.0
    lo, hi = spec.v_in_range
    v = np.linspace(lo, hi, int(n_points))
    offs = spec.offsets()
    template = spec.block_template

    x_lo, x_hi = lo + offs.min(), hi + offs.max()
    chunks = np.array_split(np.arange(grid.size), max(1, min(threads, grid.size)))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(
                lambda ch: block_transfers(template, grid[ch], x_lo, x_hi, opts, scan_step),
                chunks))
    else:
        parts = [block_transfers(template, grid[ch], x_lo, x_hi, opts, scan_step) for ch in chunks]
    transfers = [bt for part in parts for bt in part]

    # codes[g, k, j]: code of block k at sweep point j when using grid value g
    codes = np.stack([np.stack([bt.code_at(v + o) for o in offs]) for bt in transfers])
    radix = 2 ** template.n_bits
    weights = radix ** np.arange(spec.n_blocks, dtype=np.int64)

    def score(assign):
        keys = (codes[assign, np.arange(spec.n_blocks)] * weights[:, None]).sum(axis=0)
        return _staircase_score(keys, v, targets, lsb) + (float(np.abs(grid[assign]).sum()),)

    rng = np.random.default_rng(seed)
    start0 = np.full(spec.n_blocks, int(np.argmin(np.abs(grid - template.v_ref))))
    starts = [start0] + [rng.integers(0, grid.size, spec.n_blocks) for _ in range(restarts)]
    best_assign, best_score = None, None
    for assign in starts:
        assign = assign.copy()
        cur = score(assign)
        changed = True
        while changed:
            changed = False
            for k in range(spec.n_blocks):
                trials = np.repeat(assign[None, :], grid.size, axis=0)
                trials[:, k] = np.arange(grid.size)
                scores = [score(t) for t in trials]
                g = min(range(grid.size), key=scores.__getitem__)
                if scores[g] < cur:
                    assign, cur, changed = trials[g], scores[g], True
        if best_score is None or cur < best_score:
            best_assign, best_score = assign, cur
        log.debug("calibration start done: %s", cur)

    refs = tuple(float(grid[g]) for g in best_assign)
    calibrated = spec.with_v_refs(refs)
    table = sweep(calibrated, lo, hi, n_points, opts)
    nonmono = int(np.count_nonzero(np.diff(table.level) < 0))
    inl = target_inl(table, targets)
    try:
        endpoint = analyze(table, lsb).max_abs_inl
    except Exception:
        endpoint = math.inf
    result = CalibrationResult(refs, inl, table.n_levels, nonmono, calibrated, table, endpoint)
    if nonmono or table.n_levels < targets.size + 1:
        raise CalibrationError(
            f"best candidate reaches {table.n_levels} levels "
            f"({nonmono} non-monotone steps), need {targets.size + 1} monotone levels",
            best=result,
        )
    return result
