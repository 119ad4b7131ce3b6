"""Trainable architecture: input normalization, bottleneck stack, classifier.

Forward/backward are plain numpy at float64. The input normalization is a
trainable per-dimension affine (gain, bias) applied on top of batch
standardization; running statistics (exponential average, decay 0.9) stand in
for batch statistics at evaluation time. Bottleneck layers are affine + ReLU;
the classifier is affine with no activation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, ContractError, FormatError

EPS = 1e-5
RUNNING_DECAY = 0.9

BOTTLENECK_PRESETS = {
    "S": (256,),
    "B": (2048, 1024, 512, 256),
    "L": (4096, 2048, 1024, 512, 256),
    "H": (8192, 4096, 2048, 1024, 512, 256),
}

CHECKPOINT_MAGIC = b"EUDM"
CHECKPOINT_VERSION = 1
_CKPT_HEAD = struct.Struct("<4sHQQH")
_CKPT_LAYER = struct.Struct("<QQ")


@dataclass(frozen=True)
class BottleneckConfig:
    """Ordered output widths of the bottleneck stack; last one feeds the
    classifier and the alignment loss."""

    hidden_sizes: tuple[int, ...]

    def validate(self) -> None:
        if not self.hidden_sizes:
            raise ContractError("bottleneck needs at least one layer")
        if any(int(h) != h or h < 1 for h in self.hidden_sizes):
            raise ContractError("hidden sizes must be positive integers")

    @property
    def embedding_width(self) -> int:
        return int(self.hidden_sizes[-1])

    @classmethod
    def from_preset(cls, name: str) -> "BottleneckConfig":
        if name not in BOTTLENECK_PRESETS:
            raise ContractError(f"unknown bottleneck preset '{name}'")
        return cls(BOTTLENECK_PRESETS[name])

    @classmethod
    def parse(cls, text: str) -> "BottleneckConfig":
        """Accepts a preset letter or 'custom:a,b,c'."""
        if text in BOTTLENECK_PRESETS:
            return cls.from_preset(text)
        if text.startswith("custom:"):
            body = text[len("custom:"):]
            try:
                sizes = tuple(int(part) for part in body.split(","))
            except ValueError:
                raise ContractError(f"bad bottleneck spec '{text}'") from None
            cfg = cls(sizes)
            cfg.validate()
            return cfg
        raise ContractError(f"bad bottleneck spec '{text}'")


@dataclass
class ModelParams:
    gain: np.ndarray
    bias: np.ndarray
    layers: list[tuple[np.ndarray, np.ndarray]]
    classifier: tuple[np.ndarray, np.ndarray]
    running_mean: np.ndarray
    running_std: np.ndarray

    @property
    def input_dim(self) -> int:
        return int(self.gain.shape[0])

    @property
    def num_classes(self) -> int:
        return int(self.classifier[0].shape[0])

    @property
    def embedding_width(self) -> int:
        return int(self.classifier[0].shape[1])

    def validate(self) -> None:
        d = self.input_dim
        if self.bias.shape != (d,) or self.running_mean.shape != (d,) or (
            self.running_std.shape != (d,)
        ):
            raise ContractError("input-norm vectors disagree on d")
        prev = d
        for W, b in self.layers:
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ContractError("layer weight/bias shapes inconsistent")
            if W.shape[1] != prev:
                raise ContractError(
                    f"layer expects input width {W.shape[1]}, chain gives {prev}"
                )
            prev = W.shape[0]
        Wc, bc = self.classifier
        if Wc.shape[1] != prev or bc.shape != (Wc.shape[0],):
            raise ContractError("classifier shape breaks the chain")
        for arr in self._tensors():
            if not np.all(np.isfinite(arr)):
                raise ContractError("non-finite parameter entry")

    def _tensors(self) -> list[np.ndarray]:
        out = [self.gain, self.bias]
        for W, b in self.layers:
            out.extend((W, b))
        out.extend(self.classifier)
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            gain=self.gain.copy(),
            bias=self.bias.copy(),
            layers=[(W.copy(), b.copy()) for W, b in self.layers],
            classifier=(self.classifier[0].copy(), self.classifier[1].copy()),
            running_mean=self.running_mean.copy(),
            running_std=self.running_std.copy(),
        )


@dataclass
class ParamGrads:
    gain: np.ndarray
    bias: np.ndarray
    layers: list[tuple[np.ndarray, np.ndarray]]
    classifier: tuple[np.ndarray, np.ndarray]


@dataclass
class ForwardTrace:
    """Backpropagation cache for one batch."""

    X: np.ndarray
    batch_mean: np.ndarray
    batch_std: np.ndarray
    standardized: np.ndarray
    normalized: np.ndarray
    pre_acts: list[np.ndarray] = field(default_factory=list)
    acts: list[np.ndarray] = field(default_factory=list)
    Z: np.ndarray | None = None
    logits: np.ndarray | None = None


def build_model(
    input_dim: int, config: BottleneckConfig, num_classes: int, seed: int
) -> ModelParams:
    """He-style uniform init, biases zero, deterministic in seed.

    Weight matrices are drawn bottleneck-first then classifier, so the draw
    order is part of the determinism contract.
    """
    if input_dim < 1:
        raise ContractError("input_dim must be >= 1")
    if num_classes < 2:
        raise ContractError("num_classes must be >= 2")
    config.validate()
    rng = np.random.default_rng(seed)
    layers = []
    fan_in = input_dim
    for width in config.hidden_sizes:
        lim = np.sqrt(6.0 / fan_in)
        W = rng.uniform(-lim, lim, size=(width, fan_in))
        layers.append((W, np.zeros(width)))
        fan_in = width
    lim = np.sqrt(6.0 / fan_in)
    Wc = rng.uniform(-lim, lim, size=(num_classes, fan_in))
    params = ModelParams(
        gain=np.ones(input_dim),
        bias=np.zeros(input_dim),
        layers=layers,
        classifier=(Wc, np.zeros(num_classes)),
        running_mean=np.zeros(input_dim),
        running_std=np.ones(input_dim),
    )
    params.validate()
    return params


def _run_stack(params: ModelParams, normalized: np.ndarray, trace: ForwardTrace | None):
    h = normalized
    for W, b in params.layers:
        pre = h @ W.T + b
        h = np.maximum(pre, 0.0)
        if trace is not None:
            trace.pre_acts.append(pre)
            trace.acts.append(h)
    Wc, bc = params.classifier
    logits = h @ Wc.T + bc
    return h, logits


def _check_input(params: ModelParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise ContractError(
            f"input must be b x {params.input_dim}, got {X.shape}"
        )
    if X.shape[0] < 1:
        raise ContractError("empty batch")
    if not np.all(np.isfinite(X)):
        raise ContractError("non-finite input")
    return X


def forward(params: ModelParams, X: np.ndarray, stats=None):
    """Training-mode forward with batch standardization; returns
    (trace, Z, logits).

    By default the standardization statistics come from X itself. A caller
    forwarding the two halves of a joint batch (shared-parameter Siamese
    pass) supplies the pooled statistics via stats=(mean, std) so both
    halves see the same affine map.
    """
    X = _check_input(params, X)
    if stats is None:
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
    else:
        mu, sd = stats
        mu = np.asarray(mu, dtype=np.float64)
        sd = np.asarray(sd, dtype=np.float64)
        if mu.shape != (params.input_dim,) or sd.shape != (params.input_dim,):
            raise ContractError("stats vectors must match the input dim")
    standardized = (X - mu) / (sd + EPS)
    normalized = params.gain * standardized + params.bias
    trace = ForwardTrace(
        X=X, batch_mean=mu, batch_std=sd,
        standardized=standardized, normalized=normalized,
    )
    Z, logits = _run_stack(params, normalized, trace)
    trace.Z = Z
    trace.logits = logits
    return trace, Z, logits


def forward_eval(params: ModelParams, X: np.ndarray):
    """Evaluation-mode forward using running statistics; returns (Z, logits)."""
    X = _check_input(params, X)
    standardized = (X - params.running_mean) / (params.running_std + EPS)
    normalized = params.gain * standardized + params.bias
    return _run_stack(params, normalized, None)


def update_running_stats(params: ModelParams, batch_mean: np.ndarray,
                         batch_std: np.ndarray) -> None:
    """Fold one training step's statistics into the running average."""
    params.running_mean = (
        RUNNING_DECAY * params.running_mean + (1.0 - RUNNING_DECAY) * batch_mean
    )
    params.running_std = (
        RUNNING_DECAY * params.running_std + (1.0 - RUNNING_DECAY) * batch_std
    )


def backward(
    params: ModelParams,
    trace: ForwardTrace,
    grad_logits: np.ndarray,
    grad_Z: np.ndarray,
) -> ParamGrads:
    """Reverse-mode gradients of (sum logits*grad_logits + sum Z*grad_Z).

    Both seeds flow through Z: the classifier consumes Z, and the alignment
    loss taps it directly. Batch statistics depend on the data only, so no
    parameter gradient flows through them.
    """
    b = trace.X.shape[0]
    Wc, _ = params.classifier
    grad_logits = np.asarray(grad_logits, dtype=np.float64)
    grad_Z = np.asarray(grad_Z, dtype=np.float64)
    if grad_logits.shape != (b, Wc.shape[0]):
        raise ContractError("grad_logits shape mismatch")
    if grad_Z.shape != (b, Wc.shape[1]):
        raise ContractError("grad_Z shape mismatch")
    if len(trace.pre_acts) != len(params.layers) or (
        trace.normalized.shape[1] != params.input_dim
    ):
        raise ContractError("trace does not match params")

    dWc = grad_logits.T @ trace.Z
    dbc = grad_logits.sum(axis=0)
    g = grad_logits @ Wc + grad_Z

    layer_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.layers)
    for k in range(len(params.layers) - 1, -1, -1):
        W, _ = params.layers[k]
        ga = g * (trace.pre_acts[k] > 0.0)
        inp = trace.acts[k - 1] if k > 0 else trace.normalized
        layer_grads[k] = (ga.T @ inp, ga.sum(axis=0))
        g = ga @ W

    dgain = (g * trace.standardized).sum(axis=0)
    dbias = g.sum(axis=0)
    return ParamGrads(gain=dgain, bias=dbias, layers=layer_grads,
                      classifier=(dWc, dbc))


def count_trainable(params: ModelParams) -> int:
    """Scalar parameter count; running statistics are not trainable."""
    total = params.gain.size + params.bias.size
    for W, b in params.layers:
        total += W.size + b.size
    total += params.classifier[0].size + params.classifier[1].size
    return int(total)


def count_for_shape(input_dim: int, config: BottleneckConfig, num_classes: int) -> int:
    """Closed-form count without materializing arrays (for the CLI)."""
    config.validate()
    total = 2 * input_dim
    fan_in = input_dim
    for width in config.hidden_sizes:
        total += width * fan_in + width
        fan_in = width
    total += num_classes * fan_in + num_classes
    return total


def save_checkpoint(params: ModelParams, path) -> None:
    params.validate()
    head = _CKPT_HEAD.pack(
        CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
        params.input_dim, params.num_classes, len(params.layers),
    )
    parts = [head]
    for W, _ in params.layers:
        parts.append(_CKPT_LAYER.pack(W.shape[0], W.shape[1]))
    parts.append(np.ascontiguousarray(params.running_mean, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(params.running_std, dtype="<f8").tobytes())
    for arr in params._tensors():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path, expect_input_dim: int | None = None,
                    expect_classes: int | None = None) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _CKPT_HEAD.size:
        raise FormatError("checkpoint too short for header")
    magic, version, d, C, n_layers = _CKPT_HEAD.unpack_from(blob, 0)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    off = _CKPT_HEAD.size
    shapes = []
    for _ in range(n_layers):
        if off + _CKPT_LAYER.size > len(blob):
            raise FormatError("checkpoint truncated in layer table")
        out_w, in_w = _CKPT_LAYER.unpack_from(blob, off)
        shapes.append((out_w, in_w))
        off += _CKPT_LAYER.size

    def take(count: int, shape) -> np.ndarray:
        nonlocal off
        nbytes = count * 8
        if off + nbytes > len(blob):
            raise FormatError("checkpoint truncated in tensor data")
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
        off += nbytes
        return arr.reshape(shape).astype(np.float64)

    running_mean = take(d, (d,))
    running_std = take(d, (d,))
    gain = take(d, (d,))
    bias = take(d, (d,))
    layers = []
    for out_w, in_w in shapes:
        W = take(out_w * in_w, (out_w, in_w))
        b = take(out_w, (out_w,))
        layers.append((W, b))
    z = shapes[-1][0] if shapes else d
    Wc = take(C * z, (C, z))
    bc = take(C, (C,))
    if off != len(blob):
        raise FormatError("trailing bytes after checkpoint payload")
    params = ModelParams(gain=gain, bias=bias, layers=layers,
                         classifier=(Wc, bc),
                         running_mean=running_mean, running_std=running_std)
    params.validate()
    if expect_input_dim is not None and params.input_dim != expect_input_dim:
        raise ConsistencyError(
            f"checkpoint d={params.input_dim}, pipeline expects {expect_input_dim}"
        )
    if expect_classes is not None and params.num_classes != expect_classes:
        raise ConsistencyError(
            f"checkpoint C={params.num_classes}, pipeline expects {expect_classes}"
        )
    return params
