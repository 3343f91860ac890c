"""Command line driver.

    nadc <command> [--config PATH|JSON] [--out DIR] [--seed INT] [--points INT]

Commands: synth, settle, sweep, calibrate, quantize, train, eval, energy,
pipeline. Each run echoes its resolved configuration to ``config.json`` in
the output directory. Exit codes: 0 ok, 2 configuration error, 3 numeric
error, 4 calibration failure.
"""

from __future__ import annotations

import argparse
import csv
from dataclasses import replace
import json
import logging
import os
from pathlib import Path
import sys

import numpy as np

from . import array as qarray
from .config import RunConfig, load_config, validate
from .core import ideal_code, synth_normalized, synth_scaled
from .dynamics import default_options, settle
from .encoder import EncoderDataset, MlpEncoder, TrainConfig, encode, init_mlp, train, train_config_dict
from .energy_lab import landscape_table
from .errors import (CalibrationError, ConfigError, DataError, MetricsError, NadcError,
                     NumericOverflowError, ParameterError)
from .metrics import analyze

log = logging.getLogger("nadc")

COMMANDS = ("synth", "settle", "sweep", "calibrate", "quantize", "train", "eval", "energy", "pipeline")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CALIBRATION = 0, 2, 3, 4


def fmt(x) -> str:
    return format(float(x), ".9g")


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def bits_str(bits) -> str:
    return "".join(str(int(b)) for b in bits)


class Run:
    """Objects derived from one RunConfig, built lazily."""

    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.template = synth_scaled(cfg.n_bits, cfg.v_in_max, cfg.v_swing, cfg.v_ref,
                                     cfg.unit_scale, cfg.capacitance, cfg.gain_lambda)
        overrides = {"max_steps": cfg.max_steps, "reset_policy": cfg.reset_policy}
        if cfg.dt is not None:
            overrides["dt"] = cfg.dt
        if cfg.tol is not None:
            overrides["tol"] = cfg.tol
        self.opts = default_options(self.template, **overrides)
        self.sweep_opts = replace(self.opts, reset_policy="zero_state")
        self._array = None
        self.calibration = None

    @property
    def threads(self) -> int:
        try:
            return max(1, int(os.environ.get("NADC_THREADS", "1")))
        except ValueError:
            return 1

    def base_array(self):
        c = self.cfg
        refs = c.v_refs if c.v_refs is not None else [c.v_ref] * c.n_blocks
        return qarray.QuantizerArraySpec(c.n_blocks, c.delta_v, self.template, tuple(refs),
                                         c.shift_sign, (c.v_in_lo, c.v_in_hi))

    def calibrate(self):
        c = self.cfg
        self.calibration = qarray.calibrate_refs(
            self.base_array(), c.target_transitions(), (c.vref_lo, c.vref_hi, c.vref_step),
            self.sweep_opts, n_points=c.points, restarts=c.calibration_restarts, seed=c.seed,
            threads=self.threads, scan_step=c.scan_step)
        self._array = self.calibration.spec
        return self.calibration

    def array(self):
        if self._array is None:
            if self.cfg.v_refs is None:
                self.calibrate()
            else:
                self._array = self.base_array()
        return self._array

    def sweep(self):
        c = self.cfg
        if self.calibration is not None and self.calibration.table.v_in.size == c.points:
            return self.calibration.table
        return qarray.sweep(self.array(), c.v_in_lo, c.v_in_hi, c.points, self.sweep_opts)

    @property
    def ideal_lsb(self) -> float:
        return self.cfg.lsb

    def train_config(self) -> TrainConfig:
        c = self.cfg
        return TrainConfig(c.learning_rate, c.momentum, c.max_epochs, c.target_exact_match,
                           c.seed, c.init_range, c.layer_sizes)


def _calibration_doc(cal) -> dict:
    return {
        "v_refs": list(cal.v_refs),
        "n_levels": cal.n_levels,
        "nonmonotone_steps": cal.nonmonotone,
        "max_abs_inl_vs_targets_lsb": cal.max_abs_inl,
        "max_abs_inl_endpoint_lsb": cal.endpoint_inl,
    }


def cmd_synth(run: Run) -> dict:
    spec = run.template
    n = spec.n_bits
    rows = [(f"T{i}{j}", spec.t_matrix[i, j]) for i in range(n) for j in range(n) if i != j]
    rows += [(f"TR{i}", spec.t_ref[i]) for i in range(n)]
    rows += [(f"TIn{i}", spec.t_in[i]) for i in range(n)]
    print(f"{'Conductance':<12}{'Value (uS)':>12}")
    for name, val in rows:
        print(f"{name:<12}{val * 1e6:>12.1f}")
    write_csv(run.out / "synth.csv", ["conductance", "value_uS"],
              [(name, fmt(val * 1e6)) for name, val in rows])
    return {"conductances_uS": {name: float(val * 1e6) for name, val in rows}}


def cmd_settle(run: Run) -> dict:
    opts = replace(run.opts, record_energy=True)
    res = settle(run.template, run.cfg.v_in, opts)
    n = run.template.n_bits
    write_csv(run.out / "settle.csv",
              ["v_in", "code", "steps", "converged"] + [f"u{i}" for i in range(n)] + [f"v{i}" for i in range(n)],
              [[fmt(run.cfg.v_in), str(res.code), res.steps, int(res.converged)]
               + [fmt(x) for x in res.final.u] + [fmt(x) for x in res.final.v]])
    write_csv(run.out / "settle_energy.csv", ["time_s", "energy"],
              [(fmt(t), fmt(e)) for t, e in res.energy_trace])
    return {"code": str(res.code), "steps": res.steps, "converged": res.converged}


def _write_sweep(run: Run, table):
    write_csv(run.out / "sweep.csv", ["v_in", "raw_bits", "level"],
              [(fmt(v), bits_str(r), int(lv)) for v, r, lv in zip(table.v_in, table.raw, table.level)])


def cmd_sweep(run: Run) -> dict:
    table = run.sweep()
    _write_sweep(run, table)
    return {"n_levels": table.n_levels, "v_refs": list(run.array().v_refs)}


def cmd_calibrate(run: Run) -> dict:
    cal = run.calibrate()
    doc = _calibration_doc(cal)
    write_json(run.out / "calibration.json", doc)
    return doc


def cmd_quantize(run: Run) -> dict:
    spec = run.array()
    bits, clamped = qarray.quantize_batch(spec, run.cfg.quantize_inputs, run.sweep_opts)
    write_csv(run.out / "quantize.csv", ["v_in", "raw_bits", "clamped"],
              [(fmt(v), bits_str(b), int(c)) for v, b, c in zip(run.cfg.quantize_inputs, bits, clamped)])
    return {"n_inputs": len(run.cfg.quantize_inputs), "n_clamped": int(clamped.sum())}


def _train(run: Run, table):
    cfg = run.train_config()
    dataset = EncoderDataset.from_table(table, run.cfg.out_bits).unique()
    result = train(init_mlp(cfg.seed, cfg.init_range, cfg.layer_sizes), dataset, cfg)
    (run.out / "weights.json").write_text(
        result.mlp.to_json(train_config=train_config_dict(cfg), epochs=result.epochs,
                           exact_match=result.exact_match) + "\n")
    write_csv(run.out / "loss.csv", ["epoch", "loss"],
              [(i + 1, fmt(x)) for i, x in enumerate(result.loss_history)])
    return result


def cmd_train(run: Run) -> dict:
    table = run.sweep()
    result = _train(run, table)
    return {"epochs": result.epochs, "exact_match": result.exact_match}


def _chain_match(mlp: MlpEncoder, table, out_bits: int):
    """Fraction of sweep points whose encoded raw code equals the level's label."""
    targets = EncoderDataset.from_table(table, out_bits).targets.astype(int)
    hits = [encode(mlp, raw).bits == tuple(t) for raw, t in zip(table.raw, targets)]
    return float(np.mean(hits))


def _pointwise_match(mlp: MlpEncoder, table, cfg: RunConfig):
    """Fraction of sweep points whose encoded output equals ideal_code(v_in)."""
    hits = [encode(mlp, raw) == ideal_code(v - cfg.v_in_lo, cfg.out_bits, cfg.lsb)
            for v, raw in zip(table.v_in, table.raw)]
    return float(np.mean(hits))


def _write_metrics(run: Run, table):
    m = analyze(table, run.ideal_lsb)
    rows = []
    for k, (t, inl) in enumerate(zip(m.transitions, m.inl)):
        dnl = fmt(m.dnl[k]) if k < m.dnl.size else ""
        rows.append((k, fmt(t), fmt(inl), dnl))
    write_csv(run.out / "metrics.csv", ["k", "transition_v", "inl_lsb", "dnl_lsb"], rows)
    return m


def cmd_eval(run: Run) -> dict:
    table = run.sweep()
    m = _write_metrics(run, table)
    doc = {"n_levels": m.n_levels, "max_abs_inl_lsb": m.max_abs_inl, "max_abs_dnl_lsb": m.max_abs_dnl,
           "gain_error_lsb": m.gain_error, "monotone": m.monotone}
    if run.cfg.weights_path:
        mlp = MlpEncoder.from_json(Path(run.cfg.weights_path).read_text())
        doc["encoder_chain_match"] = _chain_match(mlp, table, run.cfg.out_bits)
    write_json(run.out / "metrics_summary.json", doc)
    return doc


def cmd_energy(run: Run) -> dict:
    n = run.cfg.energy_bits
    spec = synth_normalized(n, run.cfg.energy_formulation)
    rows = landscape_table(spec, -0.5, 2**n - 0.5, run.cfg.energy_points)
    write_csv(run.out / "energy.csv", ["v_in", "global_min", "n_local_minima"],
              [(fmt(r.v_in), r.global_min.value, r.n_local_minima) for r in rows])
    return {"multi_minima_points": sum(r.n_local_minima > 1 for r in rows)}


def cmd_pipeline(run: Run) -> dict:
    if run.cfg.v_refs is None:
        cal = run.calibrate()
        write_json(run.out / "calibration.json", _calibration_doc(cal))
    table = run.sweep()
    _write_sweep(run, table)
    result = _train(run, table)
    m = _write_metrics(run, table)
    summary = {
        "v_refs": list(run.array().v_refs),
        "n_levels": m.n_levels,
        "monotone": m.monotone,
        "max_abs_inl_lsb": m.max_abs_inl,
        "max_abs_dnl_lsb": m.max_abs_dnl,
        "gain_error_lsb": m.gain_error,
        "encoder_epochs": result.epochs,
        "encoder_exact_match": result.exact_match,
        "encoder_chain_match": _chain_match(result.mlp, table, run.cfg.out_bits),
        "pointwise_ideal_match": _pointwise_match(result.mlp, table, run.cfg),
    }
    write_json(run.out / "summary.json", summary)
    return summary


HANDLERS = {
    "synth": cmd_synth, "settle": cmd_settle, "sweep": cmd_sweep, "calibrate": cmd_calibrate,
    "quantize": cmd_quantize, "train": cmd_train, "eval": cmd_eval, "energy": cmd_energy,
    "pipeline": cmd_pipeline,
}


def run_subcommand(name: str, cfg: RunConfig) -> dict:
    """Run one command with a validated config; raises NadcError subclasses on failure."""
    if name not in HANDLERS:
        raise ConfigError(f"unknown subcommand {name!r}", field="command")
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc.strerror}", field="out_dir") from exc
    (out / "config.json").write_text(cfg.to_json() + "\n")
    return HANDLERS[name](Run(cfg, out))


def exit_code_for(exc: Exception) -> int:
    if isinstance(exc, CalibrationError):
        return EXIT_CALIBRATION
    if isinstance(exc, (NumericOverflowError, DataError, MetricsError)):
        return EXIT_NUMERIC
    return EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file or inline JSON object")
    common.add_argument("--out", help="output directory (overrides out_dir)")
    common.add_argument("--seed", type=int, help="seed (overrides config)")
    common.add_argument("--points", type=int, help="sweep points (overrides config)")
    common.add_argument("--format", choices=["csv"], default="csv", help="tabular output format")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="nadc", description="Level-shifted Hopfield ADC simulator")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=(HANDLERS[name].__doc__ or name).strip())
    return parser


def _error_line(exc: Exception, code: int) -> str:
    doc = {"status": "error", "exit_code": code, "kind": type(exc).__name__, "message": str(exc)}
    if getattr(exc, "field", None):
        doc["field"] = exc.field
    return json.dumps(doc, sort_keys=True)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.out is not None:
            cfg.out_dir = args.out
        if args.seed is not None:
            cfg.seed = args.seed
        if args.points is not None:
            cfg.points = args.points
        validate(cfg)
        doc = run_subcommand(args.command, cfg)
    except (NadcError, ParameterError) as exc:
        code = exit_code_for(exc)
        print(_error_line(exc, code), file=sys.stderr)
        return code
    print(json.dumps({"status": "ok", "command": args.command, **doc}, sort_keys=True, default=float))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
