"""Command-line surface binding the modules into reproducible runs.

Subcommands: train, synth, eval, gradcheck, params, convert. Every command
is deterministic given its flags, input files, and seed. Exit codes: 1 for
configuration or API misuse, 2 for data/format problems, 3 for divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from typing import Optional

from .errors import (
    ConfigError,
    ConsistencyError,
    ContractError,
    DataError,
    DivergenceError,
    FormatError,
)
from .feature_store import (
    SynthSpec,
    format_for_path,
    load_dataset,
    paired_batches,
    save_dataset,
    synth_shifted_gaussians,
)
from .kernels_mmd import KernelSpec
from .network import (
    BottleneckConfig,
    build_model,
    count_trainable,
    load_checkpoint,
    save_checkpoint,
)
from .trainer import TrainConfig, evaluate, grad_check, train

TOOL_VERSION = "1.0.0"

log = logging.getLogger("euda")

# exception class -> process exit code; argparse usage errors are forced to
# 1 as well so that 2 stays reserved for data problems
_EXIT_CONFIG = 1
_EXIT_DATA = 2
_EXIT_DIVERGENCE = 3


def _configure_logging() -> None:
    level_name = os.environ.get("EUDA_LOG", "info").strip().lower()
    levels = {"quiet": logging.ERROR, "info": logging.INFO,
              "debug": logging.DEBUG}
    if level_name not in levels:
        raise ConfigError(
            f"EUDA_LOG must be one of quiet|info|debug, got '{level_name}'"
        )
    logging.basicConfig(
        level=levels[level_name],
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; that code is reserved for data
    problems here, so usage errors are remapped to 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(_EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(path, cfg: TrainConfig, dataset_paths: dict,
                   artifact_paths: dict) -> None:
    """Record the resolved config, input digests, and artifact paths."""
    manifest = {
        "tool_version": TOOL_VERSION,
        "config": cfg.to_dict(),
        "datasets": {
            name: {"path": str(p), "sha256": sha256_file(p)}
            for name, p in dataset_paths.items()
        },
        "artifacts": {name: str(p) for name, p in artifact_paths.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def load_manifest(path, verify: bool = True) -> dict:
    """Read a run manifest; with ``verify`` the recorded dataset digests are
    recomputed and must match (tamper check)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict) or "datasets" not in manifest:
        raise FormatError("manifest missing 'datasets' section")
    if verify:
        for name, entry in manifest["datasets"].items():
            actual = sha256_file(entry["path"])
            if actual != entry["sha256"]:
                raise ConsistencyError(
                    f"digest mismatch for dataset '{name}': manifest "
                    f"{entry['sha256'][:12]}.., file {actual[:12]}.."
                )
    return manifest


def _resolve_train_config(args) -> TrainConfig:
    """Config file first, then explicit flags override individual fields."""
    if args.config is not None:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = TrainConfig.from_json(fh.read())
    else:
        cfg = TrainConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.lam is not None:
        cfg.lam = args.lam
    if args.epochs is not None:
        cfg.epochs = args.epochs
    if args.batch_size is not None:
        cfg.batch_size = args.batch_size
    if args.bottleneck is not None:
        try:
            cfg.bottleneck = BottleneckConfig.parse(args.bottleneck)
        except ContractError as exc:
            raise ConfigError(str(exc)) from exc
    if args.kernel is not None:
        cfg.kernel = (KernelSpec.linear() if args.kernel == "linear"
                      else KernelSpec.default_rbf())
    if args.estimator is not None:
        cfg.estimator = args.estimator
    cfg.validate()
    return cfg


def _load_for_training(path, role: str):
    fmt = format_for_path(path)
    ds = load_dataset(path, format=fmt)
    log.info("loaded %s dataset '%s': n=%d d=%d labels=%s",
             role, ds.domain_tag, ds.n, ds.d, ds.has_labels)
    return ds


def cmd_train(args) -> int:
    cfg = _resolve_train_config(args)
    source = _load_for_training(args.source, "source")
    target = _load_for_training(args.target, "target")

    os.makedirs(args.out_dir, exist_ok=True)
    metrics_path = os.path.join(args.out_dir, "metrics.jsonl")
    checkpoint_path = os.path.join(args.out_dir, "model.eudm")
    manifest_path = os.path.join(args.out_dir, "manifest.json")

    checkpoint_dir = args.out_dir if args.checkpoint_every > 0 else None
    params, _ = train(
        source, target, cfg,
        metrics_path=metrics_path,
        checkpoint_dir=checkpoint_dir,
        checkpoint_every=args.checkpoint_every,
    )
    save_checkpoint(params, checkpoint_path)
    write_manifest(
        manifest_path, cfg,
        {"source": args.source, "target": args.target},
        {"checkpoint": checkpoint_path, "metrics": metrics_path,
         "manifest": manifest_path},
    )

    if target.has_labels:
        print(f"final target accuracy: {evaluate(params, target):.6f}")
    else:
        print("final target accuracy: n/a (unlabeled target)")
    return 0


def cmd_synth(args) -> int:
    spec = SynthSpec(
        num_classes=args.classes,
        feature_dim=args.dim,
        per_class=args.per_class,
        class_radius=args.radius,
        shift_magnitude=args.shift,
        noise_std=args.noise,
    )
    try:
        spec.validate()
    except ContractError as exc:
        raise ConfigError(str(exc)) from exc
    source, target = synth_shifted_gaussians(spec, seed=args.seed)
    save_dataset(source, args.out_source, format=format_for_path(args.out_source))
    save_dataset(target, args.out_target, format=format_for_path(args.out_target))
    print(f"wrote {args.out_source} and {args.out_target} "
          f"(n={source.n} each, d={source.d}, C={spec.num_classes})")
    return 0


def cmd_eval(args) -> int:
    params = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data, format=format_for_path(args.data))
    if not ds.has_labels:
        raise DataError(f"dataset '{ds.domain_tag}' has no labels to score")
    acc = evaluate(params, ds)
    print(f"accuracy: {acc:.6f}")
    return 0


def cmd_gradcheck(args) -> int:
    if args.preset != "tiny":
        raise ConfigError(f"unknown gradcheck preset '{args.preset}'")
    spec = SynthSpec(num_classes=3, feature_dim=6, per_class=8,
                     class_radius=3.0, shift_magnitude=1.0, noise_std=1.0)
    source, target = synth_shifted_gaussians(spec, seed=args.seed)
    cfg = TrainConfig(
        lam=args.lam if args.lam is not None else 0.7,
        seed=args.seed,
        bottleneck=BottleneckConfig((5, 4)),
        estimator=args.estimator or "biased",
    )
    if args.kernel == "linear":
        cfg.kernel = KernelSpec.linear()
    cfg.validate()
    batch = next(iter(paired_batches(source, target, batch_size=12,
                                     seed=args.seed, epoch=0)))
    err = grad_check(cfg, batch)
    print(f"max relative error: {err:.3e}")
    if not err < 1e-4:
        raise ContractError(
            f"gradient check failed: max relative error {err:.3e} >= 1e-04"
        )
    return 0


def cmd_params(args) -> int:
    try:
        bottleneck = BottleneckConfig.parse(args.config)
    except ContractError as exc:
        raise ConfigError(str(exc)) from exc
    if args.input_dim < 1:
        raise ConfigError(f"--input-dim must be >= 1, got {args.input_dim}")
    if args.classes < 2:
        raise ConfigError(f"--classes must be >= 2, got {args.classes}")
    params = build_model(args.input_dim, bottleneck, args.classes, seed=0)
    total = count_trainable(params)
    print(total)
    print(f"input_norm: 2 x {args.input_dim} = {2 * args.input_dim}")
    in_dim = args.input_dim
    for k, width in enumerate(bottleneck.hidden_sizes):
        n = width * in_dim + width
        print(f"layer{k}: {width} x {in_dim} + {width} = {n}")
        in_dim = width
    n = args.classes * in_dim + args.classes
    print(f"classifier: {args.classes} x {in_dim} + {args.classes} = {n}")
    return 0


def cmd_convert(args) -> int:
    ds = load_dataset(args.in_path, format=format_for_path(args.in_path))
    save_dataset(ds, args.out_path, format=format_for_path(args.out_path))
    print(f"wrote {args.out_path} (n={ds.n}, d={ds.d})")
    return 0


def _add_override_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="blend weight in [0, 1]")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--bottleneck", default=None,
                   help="S|B|L|H or custom:a,b,c")
    p.add_argument("--kernel", choices=("rbf", "linear"), default=None)
    p.add_argument("--estimator", choices=("biased", "unbiased"),
                   default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="euda", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p_train = sub.add_parser("train", help="fit on a source/target pair")
    p_train.add_argument("--source", required=True)
    p_train.add_argument("--target", required=True)
    p_train.add_argument("--config", default=None, help="JSON config file")
    p_train.add_argument("--out-dir", default="euda_run")
    p_train.add_argument("--checkpoint-every", type=int, default=0,
                         help="also snapshot every k epochs (0 = final only)")
    _add_override_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_synth = sub.add_parser("synth", help="generate a shifted-Gaussian pair")
    p_synth.add_argument("--classes", type=int, default=3)
    p_synth.add_argument("--dim", type=int, default=16)
    p_synth.add_argument("--per-class", type=int, default=100)
    p_synth.add_argument("--radius", type=float, default=4.0)
    p_synth.add_argument("--shift", type=float, default=2.5)
    p_synth.add_argument("--noise", type=float, default=1.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out-source", default="source.eudf")
    p_synth.add_argument("--out-target", default="target.eudf")
    p_synth.set_defaults(func=cmd_synth)

    p_eval = sub.add_parser("eval", help="score a checkpoint on labeled data")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_grad = sub.add_parser("gradcheck",
                            help="finite-difference gradient audit")
    p_grad.add_argument("--preset", default="tiny")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--lambda", dest="lam", type=float, default=None)
    p_grad.add_argument("--kernel", choices=("rbf", "linear"), default=None)
    p_grad.add_argument("--estimator", choices=("biased", "unbiased"),
                        default=None)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_params = sub.add_parser("params", help="count trainable parameters")
    p_params.add_argument("--input-dim", type=int, required=True)
    p_params.add_argument("--config", required=True,
                          help="S|B|L|H or custom:a,b,c")
    p_params.add_argument("--classes", type=int, required=True)
    p_params.set_defaults(func=cmd_params)

    p_conv = sub.add_parser("convert", help="re-encode between csv and binary")
    p_conv.add_argument("--in", dest="in_path", required=True)
    p_conv.add_argument("--out", dest="out_path", required=True)
    p_conv.set_defaults(func=cmd_convert)

    return parser


def main(argv: Optional[list] = None) -> int:
    try:
        _configure_logging()
        parser = build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, ContractError) as exc:
        log.error("%s", exc)
        return _EXIT_CONFIG
    except (FormatError, DataError, ConsistencyError) as exc:
        log.error("%s", exc)
        return _EXIT_DATA
    except DivergenceError as exc:
        log.error("%s", exc)
        return _EXIT_DIVERGENCE
    except FileNotFoundError as exc:
        log.error("file not found: %s", exc.filename)
        return _EXIT_DATA
    except OSError as exc:
        log.error("%s", exc)
        return _EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
