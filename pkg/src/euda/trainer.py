"""Training loop: blended objective, SGD with momentum, inverse-decay LR.

One step consumes one BatchPair: both domains forward through the shared
parameters, cross-entropy on the source logits, the alignment loss on the
two bottleneck outputs, gradients blended by lambda and applied with
classical momentum. Target labels are never read here; per-epoch target
accuracy goes through the evaluation-only accessor.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, ContractError, DivergenceError
from .feature_store import BatchPair, DomainDataset, paired_batches
from .kernels_mmd import KernelSpec, mmd2_biased, mmd2_grad, mmd2_unbiased, resolve_kernel
from .loss import sdal_combine, softmax_cross_entropy
from .network import (
    BottleneckConfig,
    ModelParams,
    ParamGrads,
    backward,
    build_model,
    forward,
    forward_eval,
    save_checkpoint,
    update_running_stats,
)


@dataclass(frozen=True)
class InvDecaySchedule:
    """lr0 * (1 + gamma * p)^(-alpha) over training progress p in [0, 1]."""

    gamma: float = 10.0
    alpha: float = 0.75

    def validate(self) -> None:
        if self.gamma < 0 or self.alpha < 0:
            raise ConfigError("schedule gamma/alpha must be non-negative")

    def to_dict(self) -> dict:
        return {"kind": "inv_decay", "gamma": self.gamma, "alpha": self.alpha}

    @classmethod
    def from_dict(cls, d: dict) -> "InvDecaySchedule":
        if d.get("kind", "inv_decay") != "inv_decay":
            raise ConfigError(f"unknown schedule kind '{d.get('kind')}'")
        extra = set(d) - {"kind", "gamma", "alpha"}
        if extra:
            raise ConfigError(f"unknown schedule keys {sorted(extra)}")
        return cls(gamma=float(d.get("gamma", 10.0)), alpha=float(d.get("alpha", 0.75)))


@dataclass
class TrainConfig:
    # lam is serialized as "lambda"; the Python keyword forces the rename
    lam: float = 0.7
    lr0: float = 3e-2
    schedule: InvDecaySchedule = field(default_factory=InvDecaySchedule)
    momentum: float = 0.9
    weight_decay: float = 0.0
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    kernel: KernelSpec = field(default_factory=KernelSpec.default_rbf)
    bottleneck: BottleneckConfig = field(
        default_factory=lambda: BottleneckConfig.from_preset("B")
    )
    estimator: str = "biased"

    def validate(self) -> None:
        if not (0.0 <= self.lam <= 1.0):
            raise ConfigError("lambda must lie in [0, 1]")
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if self.epochs < 1:
            raise ConfigError("epochs must be a positive integer")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.estimator not in ("biased", "unbiased"):
            raise ConfigError(f"unknown estimator '{self.estimator}'")
        self.schedule.validate()
        try:
            self.kernel.validate()
            self.bottleneck.validate()
        except ContractError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "lr0": self.lr0,
            "schedule": self.schedule.to_dict(),
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "kernel": {
                "family": self.kernel.family,
                "bandwidths": list(self.kernel.bandwidths),
                "bandwidth_mode": self.kernel.bandwidth_mode,
                "median_multipliers": list(self.kernel.median_multipliers),
            },
            "bottleneck": list(self.bottleneck.hidden_sizes),
            "estimator": self.estimator,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {
            "lambda", "lr0", "schedule", "momentum", "weight_decay", "epochs",
            "batch_size", "seed", "kernel", "bottleneck", "estimator",
        }
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        cfg = cls()
        if "lambda" in d:
            cfg.lam = float(d["lambda"])
        if "lr0" in d:
            cfg.lr0 = float(d["lr0"])
        if "schedule" in d:
            cfg.schedule = InvDecaySchedule.from_dict(d["schedule"])
        if "momentum" in d:
            cfg.momentum = float(d["momentum"])
        if "weight_decay" in d:
            cfg.weight_decay = float(d["weight_decay"])
        if "epochs" in d:
            cfg.epochs = int(d["epochs"])
        if "batch_size" in d:
            cfg.batch_size = int(d["batch_size"])
        if "seed" in d:
            cfg.seed = int(d["seed"])
        if "kernel" in d:
            k = dict(d["kernel"])
            extra = set(k) - {"family", "bandwidths", "bandwidth_mode",
                              "median_multipliers"}
            if extra:
                raise ConfigError(f"unknown kernel keys {sorted(extra)}")
            cfg.kernel = KernelSpec(
                family=k.get("family", "rbf_multi"),
                bandwidths=tuple(k.get("bandwidths", ())),
                bandwidth_mode=k.get("bandwidth_mode", "median_times"),
                median_multipliers=tuple(
                    k.get("median_multipliers", (0.25, 0.5, 1.0, 2.0, 4.0))
                ),
            )
        if "bottleneck" in d:
            b = d["bottleneck"]
            if isinstance(b, str):
                try:
                    cfg.bottleneck = BottleneckConfig.parse(b)
                except ContractError as exc:
                    raise ConfigError(str(exc)) from exc
            else:
                cfg.bottleneck = BottleneckConfig(tuple(int(v) for v in b))
        if "estimator" in d:
            cfg.estimator = str(d["estimator"])
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config JSON must be an object")
        return cls.from_dict(d)


@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    step: int
    lr: float
    loss_total: float
    loss_ce: float
    loss_mmd: float
    source_batch_accuracy: float
    target_accuracy: Optional[float] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    if total_steps < 1:
        raise ContractError("total_steps must be >= 1")
    if not (0 <= step <= total_steps):
        raise ContractError("step outside [0, total_steps]")
    p = step / total_steps
    return cfg.lr0 * (1.0 + cfg.schedule.gamma * p) ** (-cfg.schedule.alpha)


def _param_arrays(params: ModelParams) -> list[np.ndarray]:
    out = [params.gain, params.bias]
    for W, b in params.layers:
        out.extend((W, b))
    out.extend(params.classifier)
    return out


def _grad_arrays(g: ParamGrads) -> list[np.ndarray]:
    out = [g.gain, g.bias]
    for W, b in g.layers:
        out.extend((W, b))
    out.extend(g.classifier)
    return out


def _add_grads(a: ParamGrads, b: ParamGrads) -> ParamGrads:
    return ParamGrads(
        gain=a.gain + b.gain,
        bias=a.bias + b.bias,
        layers=[(Wa + Wb, ba + bb) for (Wa, ba), (Wb, bb) in zip(a.layers, b.layers)],
        classifier=(a.classifier[0] + b.classifier[0],
                    a.classifier[1] + b.classifier[1]),
    )


def _sgd_step(params: ModelParams, grads: ParamGrads,
              velocity: list[np.ndarray], lr: float, cfg: TrainConfig) -> None:
    # classical momentum: v <- mu v + (g + wd * theta); theta <- theta - lr v
    for theta, g, v in zip(_param_arrays(params), _grad_arrays(grads), velocity):
        if cfg.weight_decay:
            g = g + cfg.weight_decay * theta
        v *= cfg.momentum
        v += g
        theta -= lr * v


def _steps_per_epoch(n_s: int, n_t: int, batch_size: int) -> int:
    stream = max(n_s, n_t)
    full, rem = divmod(stream, batch_size)
    return full + (1 if rem >= 2 else 0)


def _pair_stats(pair: BatchPair) -> tuple[np.ndarray, np.ndarray]:
    # the step's batch is the source+target pair; both halves share the
    # pooled standardization statistics (one affine map per step)
    pooled = np.vstack([pair.source_features, pair.target_features])
    return pooled.mean(axis=0), pooled.std(axis=0)


def _step_losses(pair: BatchPair, params: ModelParams, cfg: TrainConfig,
                 where: str = "standalone"):
    stats = _pair_stats(pair)
    trace_s, Z_s, logits_s = forward(params, pair.source_features, stats=stats)
    trace_t, Z_t, _ = forward(params, pair.target_features, stats=stats)
    # a blown-up run shows first in the activations; report it as
    # divergence, not as a submodule precondition failure
    if not (np.all(np.isfinite(logits_s)) and np.all(np.isfinite(Z_s))
            and np.all(np.isfinite(Z_t))):
        raise DivergenceError(f"non-finite activations at {where}")
    ce, grad_logits = softmax_cross_entropy(logits_s, pair.source_labels)
    dZ_s, dZ_t, mmd = mmd2_grad(Z_s, Z_t, cfg.kernel, estimator=cfg.estimator)
    return trace_s, trace_t, logits_s, ce, grad_logits, mmd, dZ_s, dZ_t


def train(
    source: DomainDataset,
    target: DomainDataset,
    cfg: TrainConfig,
    metrics_path=None,
    checkpoint_dir=None,
    checkpoint_every: int = 0,
) -> tuple[ModelParams, list[MetricsRecord]]:
    """Run the full optimization; returns final parameters and all metrics.

    Deterministic in cfg.seed. Target labels, when present, are consulted
    only by the per-epoch evaluation pass. Aborts with a diagnostic if the
    total loss turns non-finite.
    """
    cfg.validate()
    if not source.has_labels:
        raise ContractError("source dataset must be labeled")
    if source.d != target.d:
        raise ContractError("source and target feature dims differ")
    steps_per_epoch = _steps_per_epoch(source.n, target.n, cfg.batch_size)
    if steps_per_epoch == 0:
        raise ConfigError("datasets too small to form a single batch pair")
    total_steps = steps_per_epoch * cfg.epochs

    params = build_model(source.d, cfg.bottleneck, source.num_classes, cfg.seed)
    velocity = [np.zeros_like(arr) for arr in _param_arrays(params)]
    records: list[MetricsRecord] = []
    sink = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    step = 0
    try:
        for epoch in range(cfg.epochs):
            epoch_records: list[MetricsRecord] = []
            ce_sum = mmd_sum = acc_sum = 0.0
            lr = cfg.lr0
            for pair in paired_batches(source, target, cfg.batch_size,
                                       cfg.seed, epoch):
                lr = lr_at(step, total_steps, cfg)
                (trace_s, trace_t, logits_s, ce, grad_logits,
                 mmd, dZ_s, dZ_t) = _step_losses(
                    pair, params, cfg, where=f"epoch {epoch} step {step}"
                )
                update_running_stats(params, trace_s.batch_mean,
                                     trace_s.batch_std)
                breakdown, sg_logits, sg_Zs, sg_Zt = sdal_combine(
                    ce, grad_logits, mmd, dZ_s, dZ_t, cfg.lam
                )
                if not np.isfinite(breakdown.total):
                    raise DivergenceError(
                        f"non-finite loss at epoch {epoch} step {step}"
                    )
                grads = _add_grads(
                    backward(params, trace_s, sg_logits, sg_Zs),
                    backward(params, trace_t,
                             np.zeros((pair.target_features.shape[0],
                                       params.num_classes)), sg_Zt),
                )
                _sgd_step(params, grads, velocity, lr, cfg)
                acc = float(np.mean(
                    np.argmax(logits_s, axis=1) == pair.source_labels
                ))
                epoch_records.append(MetricsRecord(
                    epoch=epoch, step=step, lr=lr,
                    loss_total=breakdown.total, loss_ce=breakdown.ce,
                    loss_mmd=breakdown.mmd, source_batch_accuracy=acc,
                ))
                ce_sum += breakdown.ce
                mmd_sum += breakdown.mmd
                acc_sum += acc
                step += 1
            mean_ce = ce_sum / steps_per_epoch
            mean_mmd = mmd_sum / steps_per_epoch
            target_acc = evaluate(params, target) if target.has_labels else None
            epoch_records.append(MetricsRecord(
                epoch=epoch, step=step, lr=lr,
                loss_total=cfg.lam * mean_ce + (1.0 - cfg.lam) * mean_mmd,
                loss_ce=mean_ce, loss_mmd=mean_mmd,
                source_batch_accuracy=acc_sum / steps_per_epoch,
                target_accuracy=target_acc,
            ))
            records.extend(epoch_records)
            if sink is not None:
                for rec in epoch_records:
                    sink.write(rec.to_json() + "\n")
                sink.flush()
            if checkpoint_dir and checkpoint_every > 0 and (
                (epoch + 1) % checkpoint_every == 0
            ):
                save_checkpoint(params, f"{checkpoint_dir}/epoch{epoch + 1:04d}.eudm")
    finally:
        if sink is not None:
            sink.close()
    return params, records


def evaluate(params: ModelParams, ds: DomainDataset) -> float:
    """Accuracy under running-statistics normalization; argmax ties go to
    the lowest class index."""
    if not ds.has_labels:
        raise ContractError("evaluation needs a labeled dataset")
    _, logits = forward_eval(params, ds.features)
    pred = np.argmax(logits, axis=1)
    return float(np.mean(pred == ds.eval_labels()))


def grad_check(cfg: TrainConfig, batch: BatchPair,
               epsilon: float = 1e-5, kink_tol: float = 1e-6) -> float:
    """Max relative error of the full blended gradient vs central FD.

    Bandwidths are resolved once at the base point and pinned, so the FD
    probe and the analytic path differentiate the same function. Parameter
    groups at or upstream of a layer whose pre-activation sits within
    kink_tol of a ReLU kink are excluded (FD is meaningless across the kink).
    """
    cfg.validate()
    d = batch.source_features.shape[1]
    C = int(np.max(batch.source_labels)) + 1
    C = max(C, 2)
    params = build_model(d, cfg.bottleneck, C, cfg.seed)

    stats = _pair_stats(batch)
    _, Z_s0, _ = forward(params, batch.source_features, stats=stats)
    _, Z_t0, _ = forward(params, batch.target_features, stats=stats)
    frozen = resolve_kernel(cfg.kernel, Z_s0, Z_t0)
    pinned = replace(cfg, kernel=frozen)
    value_fn = mmd2_biased if cfg.estimator == "biased" else mmd2_unbiased

    def objective(p: ModelParams) -> float:
        _, Z_s, logits_s = forward(p, batch.source_features, stats=stats)
        _, Z_t, _ = forward(p, batch.target_features, stats=stats)
        ce, _ = softmax_cross_entropy(logits_s, batch.source_labels)
        mmd = value_fn(Z_s, Z_t, frozen)
        return cfg.lam * ce + (1.0 - cfg.lam) * mmd

    (trace_s, trace_t, logits_s, ce, grad_logits,
     mmd, dZ_s, dZ_t) = _step_losses(batch, params, pinned)
    _, sg_logits, sg_Zs, sg_Zt = sdal_combine(ce, grad_logits, mmd,
                                              dZ_s, dZ_t, cfg.lam)
    grads = _add_grads(
        backward(params, trace_s, sg_logits, sg_Zs),
        backward(params, trace_t,
                 np.zeros((batch.target_features.shape[0], C)), sg_Zt),
    )

    # layers k..0 plus the input norm (depth -1) are tainted if layer k
    # sits near a kink in either trace
    cutoff = -2
    for k in range(len(params.layers)):
        closest = min(
            float(np.min(np.abs(trace_s.pre_acts[k]))),
            float(np.min(np.abs(trace_t.pre_acts[k]))),
        )
        if closest < kink_tol:
            cutoff = max(cutoff, k)

    groups = [("norm", -1, params.gain, grads.gain),
              ("norm", -1, params.bias, grads.bias)]
    for k, ((W, b), (dW, db)) in enumerate(zip(params.layers, grads.layers)):
        groups.append(("layer", k, W, dW))
        groups.append(("layer", k, b, db))
    groups.append(("head", len(params.layers), params.classifier[0],
                   grads.classifier[0]))
    groups.append(("head", len(params.layers), params.classifier[1],
                   grads.classifier[1]))

    worst = 0.0
    for _, depth, arr, garr in groups:
        if depth <= cutoff:
            continue
        for idx in np.ndindex(arr.shape):
            keep = arr[idx]
            arr[idx] = keep + epsilon
            up = objective(params)
            arr[idx] = keep - epsilon
            dn = objective(params)
            arr[idx] = keep
            fd = (up - dn) / (2.0 * epsilon)
            a = float(garr[idx])
            err = abs(a - fd) / max(1.0, abs(a), abs(fd))
            worst = max(worst, err)
    return worst
