"""Corrective MLP encoder: raw quantizer patterns -> weighted binary codes.

A plain sigmoid multilayer perceptron trained online with momentum on a
squared-error loss. The encoder only has to memorize the finite code table
of the calibrated quantizer, so there is no validation split.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
import json
import warnings

import numpy as np
from scipy.special import expit

from .core import CodeWord, ideal_code
from .errors import DataError, ParameterError

DEFAULT_LAYERS = (12, 11, 4)


@dataclass(eq=False)
class MlpEncoder:
    layer_sizes: tuple
    weights: list
    biases: list

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        if len(self.layer_sizes) < 2:
            raise ParameterError("an MLP needs at least an input and an output layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[i + 1], self.layer_sizes[i])
            if w.shape != shape or b.shape != shape[:1]:
                raise ParameterError(f"layer {i} parameters do not match sizes {self.layer_sizes}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ParameterError(f"layer {i} parameters are not finite")
        if len(self.weights) != len(self.layer_sizes) - 1:
            raise ParameterError("wrong number of weight matrices")

    def copy(self) -> "MlpEncoder":
        return MlpEncoder(self.layer_sizes, [w.copy() for w in self.weights],
                          [b.copy() for b in self.biases])

    def params(self) -> list:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def to_json(self, **meta) -> str:
        doc = {
            "layer_sizes": list(self.layer_sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }
        doc.update(meta)
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MlpEncoder":
        doc = json.loads(text)
        return cls(tuple(doc["layer_sizes"]),
                   [np.array(w, dtype=float) for w in doc["weights"]],
                   [np.array(b, dtype=float) for b in doc["biases"]])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.3
    momentum: float = 0.9
    max_epochs: int = 20_000
    target_exact_match: float = 1.0
    seed: int = 0
    init_range: float = 0.5
    layer_sizes: tuple = DEFAULT_LAYERS

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ParameterError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ParameterError("momentum must lie in [0, 1)")
        if self.max_epochs < 1:
            raise ParameterError("max_epochs must be >= 1")
        if not 0 < self.target_exact_match <= 1:
            raise ParameterError("target_exact_match must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class EncoderDataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        t = np.asarray(self.targets, dtype=float)
        if x.ndim != 2 or t.ndim != 2 or x.shape[0] != t.shape[0]:
            raise DataError("inputs and targets must be 2-D with matching row counts")
        seen = {}
        for xi, ti in zip(map(tuple, x), map(tuple, t)):
            if seen.setdefault(xi, ti) != ti:
                raise DataError(f"input pattern {xi} appears with conflicting targets")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", t)

    def __len__(self):
        return self.inputs.shape[0]

    def unique(self) -> "EncoderDataset":
        """Distinct rows, in order of first appearance."""
        _, first = np.unique(self.inputs, axis=0, return_index=True)
        keep = np.sort(first)
        return EncoderDataset(self.inputs[keep], self.targets[keep])

    @classmethod
    def from_table(cls, table, n_out_bits: int = 4) -> "EncoderDataset":
        """One row per sweep point, labelled with the weighted binary code of its level.

        Levels are ranked in sweep order, so the calibrated 16-level staircase
        maps onto codes 0..15.
        """
        targets = [ideal_code(float(lv), n_out_bits, 1.0).bits for lv in table.level]
        return cls(np.asarray(table.raw, dtype=float), np.asarray(targets, dtype=float))


def init_mlp(seed: int, init_range: float = 0.5, layer_sizes=DEFAULT_LAYERS) -> MlpEncoder:
    """Uniform(-r, r) weights and biases from a seeded generator."""
    if not init_range > 0:
        raise ParameterError("init_range must be > 0")
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        ws.append(rng.uniform(-init_range, init_range, (n_out, n_in)))
        bs.append(rng.uniform(-init_range, init_range, n_out))
    return MlpEncoder(tuple(layer_sizes), ws, bs)


def _activations(mlp: MlpEncoder, x):
    acts = [x]
    for w, b in zip(mlp.weights, mlp.biases):
        acts.append(expit(acts[-1] @ w.T + b))
    return acts


def forward(mlp: MlpEncoder, x):
    """Output activations in (0, 1) for one input vector or a batch of rows."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != mlp.layer_sizes[0]:
        raise ParameterError(f"input width {x.shape[-1]} != {mlp.layer_sizes[0]}")
    return _activations(mlp, x)[-1]


def loss_and_gradient(mlp: MlpEncoder, inputs, targets):
    """Summed loss 0.5*||y - t||^2 over rows and its gradient per parameter.

    Gradients come back in ``mlp.params()`` order (W0, b0, W1, b1, ...).
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    acts = _activations(mlp, x)
    err = acts[-1] - t
    loss = 0.5 * float(np.sum(err * err))
    delta = err * acts[-1] * (1.0 - acts[-1])
    grads = []
    for layer in range(len(mlp.weights) - 1, -1, -1):
        grads.append(delta.sum(axis=0))          # bias
        grads.append(delta.T @ acts[layer])      # weight
        if layer:
            a = acts[layer]
            delta = (delta @ mlp.weights[layer]) * a * (1.0 - a)
    grads.reverse()
    return loss, grads


def exact_match(mlp: MlpEncoder, dataset: EncoderDataset) -> float:
    pred = forward(mlp, dataset.inputs) >= 0.5
    return float(np.mean(np.all(pred == (dataset.targets >= 0.5), axis=1)))


@dataclass
class TrainResult:
    mlp: MlpEncoder
    loss_history: list = field(repr=False)
    exact_match: float = 0.0
    epochs: int = 0

    @property
    def converged(self) -> bool:
        return self.exact_match >= 1.0


def train(mlp: MlpEncoder, dataset: EncoderDataset, config: TrainConfig) -> TrainResult:
    """Online backpropagation with momentum in fixed row order.

    Each row updates ``vel = momentum * vel - lr * grad; param += vel``.
    After every epoch the mean row loss is recorded and training stops once
    the thresholded outputs reach ``target_exact_match``.
    """
    if dataset.inputs.shape[1] != mlp.layer_sizes[0] or dataset.targets.shape[1] != mlp.layer_sizes[-1]:
        raise DataError("dataset widths do not match the encoder layer sizes")
    net = mlp.copy()
    params = net.params()
    vel = [np.zeros_like(p) for p in params]
    lr, mom = config.learning_rate, config.momentum
    history = []
    rate = 0.0
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        for x, t in zip(dataset.inputs, dataset.targets):
            _, grads = loss_and_gradient(net, x, t)
            for p, v, g in zip(params, vel, grads):
                v *= mom
                v -= lr * g
                p += v
        loss, _ = loss_and_gradient(net, dataset.inputs, dataset.targets)
        history.append(loss / len(dataset))
        rate = exact_match(net, dataset)
        if rate >= config.target_exact_match:
            break
    if not np.all([np.all(np.isfinite(p)) for p in params]):
        raise DataError("training diverged to non-finite parameters")
    return TrainResult(net, history, rate, epoch)


def encode(mlp: MlpEncoder, raw) -> CodeWord:
    """Forward pass thresholded at 0.5 (>= 0.5 reads as 1)."""
    bits = np.asarray(getattr(raw, "bits", raw), dtype=float)
    width = mlp.layer_sizes[0]
    if bits.size != width:
        warnings.warn(f"raw code of width {bits.size} padded/truncated to {width}", stacklevel=2)
        bits = np.pad(bits, (0, max(0, width - bits.size)))[:width]
    return CodeWord(tuple(int(y >= 0.5) for y in forward(mlp, bits)))


def gradient_check(mlp: MlpEncoder, dataset: EncoderDataset, epsilon: float = 1e-5,
                   max_rows: int = 8, grad_fn=None) -> float:
    """Max relative gap between analytic and central-difference gradients.

    Uses at most ``max_rows`` rows. ``grad_fn`` swaps in another analytic
    gradient with the signature of :func:`loss_and_gradient`.
    """
    if not epsilon > 0:
        raise ParameterError("epsilon must be > 0")
    x, t = dataset.inputs[:max_rows], dataset.targets[:max_rows]
    _, analytic = (grad_fn or loss_and_gradient)(mlp, x, t)
    probe = mlp.copy()
    worst = 0.0
    for p, g in zip(probe.params(), analytic):
        flat = p.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + epsilon
            up, _ = loss_and_gradient(probe, x, t)
            flat[i] = keep - epsilon
            down, _ = loss_and_gradient(probe, x, t)
            flat[i] = keep
            numeric = (up - down) / (2 * epsilon)
            a = g.reshape(-1)[i]
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    return worst


def train_config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["layer_sizes"] = list(config.layer_sizes)
    return d
