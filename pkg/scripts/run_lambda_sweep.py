"""Sweep the blend weight and chart mean target accuracy per value.

Each lambda trains over the same seed set on freshly drawn synthetic pairs;
the sweep reports a small text table, flags the best weight, and can dump
the raw numbers as JSON for plotting.
"""

import argparse
import json

import numpy as np

from euda.feature_store import SynthSpec, synth_shifted_gaussians
from euda.network import BottleneckConfig
from euda.trainer import TrainConfig, evaluate, train


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", default="0.1,0.3,0.5,0.7,0.9,1.0")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--batch-size", type=int, default=32)
    ap.add_argument("--bottleneck", default="custom:32,16")
    ap.add_argument("--classes", type=int, default=3)
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--per-class", type=int, default=100)
    ap.add_argument("--radius", type=float, default=4.0)
    ap.add_argument("--shift", type=float, default=2.5)
    ap.add_argument("--noise", type=float, default=1.0)
    ap.add_argument("--out", default=None, help="write JSON results here")
    args = ap.parse_args()

    spec = SynthSpec(num_classes=args.classes, feature_dim=args.dim,
                     per_class=args.per_class, class_radius=args.radius,
                     shift_magnitude=args.shift, noise_std=args.noise)
    grid = [float(s) for s in args.grid.split(",")]
    rows = []
    for lam in grid:
        accs = []
        for seed in range(args.seeds):
            source, target = synth_shifted_gaussians(spec, seed=seed)
            cfg = TrainConfig(
                lam=lam,
                epochs=args.epochs,
                batch_size=args.batch_size,
                seed=seed,
                bottleneck=BottleneckConfig.parse(args.bottleneck),
            )
            params, _ = train(source, target, cfg)
            accs.append(evaluate(params, target))
        rows.append({"lambda": lam,
                     "mean": float(np.mean(accs)),
                     "std": float(np.std(accs)),
                     "per_seed": accs})

    print(f"{'lambda':>8} {'mean':>8} {'std':>8}")
    for row in rows:
        print(f"{row['lambda']:>8.2f} {row['mean']:>8.4f} {row['std']:>8.4f}")
    best = max(rows, key=lambda r: r["mean"])
    print(f"best lambda: {best['lambda']:.2f} "
          f"(mean target acc {best['mean']:.4f})")

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"spec": vars(args), "rows": rows}, fh, indent=2)
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
