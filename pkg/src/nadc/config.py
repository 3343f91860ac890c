"""Run configuration: flat JSON object, defaults matching the 6-block, 0.1 V design."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
import json
import math
import os
from pathlib import Path

from .errors import ConfigError


@dataclass
class RunConfig:
    # block network (scaled synthesis)
    n_bits: int = 2
    v_in_max: float = 2.0
    v_swing: float = -0.67
    v_ref: float = -0.67
    unit_scale: float = 10e-6
    capacitance: float = 10e-12
    gain_lambda: float = 1000.0
    # level-shifted array
    n_blocks: int = 6
    delta_v: float = 0.1
    shift_sign: str = "add"
    v_refs: list | None = None
    v_in_lo: float = 0.0
    v_in_hi: float = 2.0
    levels: int = 16
    # settling; null dt/tol pick network-scaled defaults
    dt: float | None = None
    tol: float | None = None
    max_steps: int = 1_000_000
    reset_policy: str = "zero_state"
    # sweeps and single-point commands
    points: int = 256
    v_in: float = 1.0
    quantize_inputs: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 1.5, 2.0])
    # reference calibration grid
    vref_lo: float = -1.6
    vref_hi: float = 0.0
    vref_step: float = 0.02
    calibration_restarts: int = 16
    scan_step: float = 0.01
    # encoder training
    learning_rate: float = 0.3
    momentum: float = 0.9
    max_epochs: int = 20_000
    init_range: float = 0.5
    hidden_sizes: list = field(default_factory=lambda: [11])
    target_exact_match: float = 1.0
    weights_path: str | None = None
    # energy landscape scan (normalized network)
    energy_bits: int = 4
    energy_points: int = 512
    energy_formulation: str = "classic_signed"
    # run control
    seed: int = 0
    out_dir: str = "out"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @property
    def out_bits(self) -> int:
        return max(1, math.ceil(math.log2(self.levels)))

    @property
    def layer_sizes(self) -> tuple:
        return (self.n_blocks * self.n_bits, *self.hidden_sizes, self.out_bits)

    @property
    def lsb(self) -> float:
        return (self.v_in_hi - self.v_in_lo) / self.levels

    def target_transitions(self) -> list:
        """Code boundaries of the ideal round-half-up quantizer, (k - 1/2) LSB."""
        return [self.v_in_lo + (k - 0.5) * self.lsb for k in range(1, self.levels)]


_NUMBER = (int, float)


def _fail(name, msg):
    raise ConfigError(f"invalid value for {name}: {msg}", field=name)


def _check_type(name, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, _NUMBER) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = True
    if not ok:
        _fail(name, f"expected {type(default).__name__}, got {type(value).__name__}")


def validate(cfg: RunConfig) -> RunConfig:
    positive = ("v_in_max", "unit_scale", "capacitance", "gain_lambda", "vref_step",
                "scan_step", "init_range")
    for name in positive:
        v = getattr(cfg, name)
        if not (math.isfinite(v) and v > 0):
            _fail(name, "must be finite and > 0")
    for name in ("v_swing", "v_ref"):
        if getattr(cfg, name) == 0:
            _fail(name, "must be non-zero")
    for name in ("n_bits", "n_blocks", "max_steps", "max_epochs", "energy_bits"):
        if getattr(cfg, name) < 1:
            _fail(name, "must be >= 1")
    if cfg.n_bits > 16:
        _fail("n_bits", "must be <= 16")
    if cfg.energy_bits > 20:
        _fail("energy_bits", "must be <= 20")
    if not (math.isfinite(cfg.delta_v) and cfg.delta_v >= 0):
        _fail("delta_v", "must be >= 0")
    if cfg.shift_sign not in ("add", "subtract"):
        _fail("shift_sign", "must be 'add' or 'subtract'")
    if cfg.reset_policy not in ("zero_state", "hold_previous"):
        _fail("reset_policy", "must be 'zero_state' or 'hold_previous'")
    if cfg.energy_formulation not in ("classic_signed", "positive_conductance"):
        _fail("energy_formulation", "must be 'classic_signed' or 'positive_conductance'")
    if not cfg.v_in_lo < cfg.v_in_hi:
        _fail("v_in_hi", "must exceed v_in_lo")
    if cfg.levels < 2:
        _fail("levels", "must be >= 2")
    if cfg.points < 2:
        _fail("points", "must be >= 2")
    if cfg.energy_points < 1:
        _fail("energy_points", "must be >= 1")
    if cfg.vref_lo > cfg.vref_hi:
        _fail("vref_hi", "must be >= vref_lo")
    if cfg.calibration_restarts < 0:
        _fail("calibration_restarts", "must be >= 0")
    for name in ("dt", "tol"):
        v = getattr(cfg, name)
        if v is not None and not (isinstance(v, _NUMBER) and not isinstance(v, bool) and v > 0):
            _fail(name, "must be null or > 0")
    if cfg.v_refs is not None:
        if not isinstance(cfg.v_refs, list) or len(cfg.v_refs) != cfg.n_blocks:
            _fail("v_refs", f"must be null or a list of {cfg.n_blocks} numbers")
        if not all(isinstance(v, _NUMBER) and not isinstance(v, bool) for v in cfg.v_refs):
            _fail("v_refs", "entries must be numbers")
    if cfg.weights_path is not None and not isinstance(cfg.weights_path, str):
        _fail("weights_path", "must be null or a path string")
    if not all(isinstance(v, _NUMBER) and not isinstance(v, bool) for v in cfg.quantize_inputs):
        _fail("quantize_inputs", "entries must be numbers")
    if not cfg.hidden_sizes or not all(isinstance(n, int) and n >= 1 for n in cfg.hidden_sizes):
        _fail("hidden_sizes", "must be a non-empty list of positive integers")
    if not 0 <= cfg.momentum < 1:
        _fail("momentum", "must lie in [0, 1)")
    if not cfg.learning_rate >= 0:
        _fail("learning_rate", "must be >= 0")
    if not 0 < cfg.target_exact_match <= 1:
        _fail("target_exact_match", "must lie in (0, 1]")
    return cfg


def from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    defaults = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    for key in doc:
        if key not in known:
            raise ConfigError(f"unknown configuration key {key!r}", field=key)
    for key, value in doc.items():
        default = getattr(defaults, key)
        if value is None and default is None:
            continue
        if default is None:
            continue
        _check_type(key, value, default)
    values = {k: (float(v) if isinstance(getattr(defaults, k), float) else v) for k, v in doc.items()}
    return validate(RunConfig(**{**defaults.to_dict(), **values}))


def load_config(source: str | os.PathLike | None) -> RunConfig:
    """Parse a config from a file path or inline JSON text; None gives the defaults."""
    if source is None:
        return validate(RunConfig())
    text = str(source)
    if not text.lstrip().startswith("{"):
        path = Path(text)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return from_dict(doc)
