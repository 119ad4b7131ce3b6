"""euda-extract: image folders in, EUDF feature files out."""

import argparse
import logging
import sys

from .errors import ExtractError
from .pipeline import ExtractSpec, extract


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    ap = argparse.ArgumentParser(prog="euda-extract", description=__doc__)
    ap.add_argument("--image-root", required=True,
                    help="directory with one subdirectory per class")
    ap.add_argument("--out", required=True, help="EUDF output path")
    ap.add_argument("--backbone", choices=("base", "large"), default="base")
    ap.add_argument("--batch-size", type=int, default=8)
    ap.add_argument("--device", default="cpu")
    ap.add_argument("--weights", default="pretrained",
                    help="pretrained | seeded-init | local:<dir>")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    spec = ExtractSpec(
        image_root=args.image_root,
        output_path=args.out,
        backbone_size=args.backbone,
        batch_size=args.batch_size,
        device=args.device,
        weights=args.weights,
        seed=args.seed,
    )
    try:
        manifest = extract(spec)
    except ExtractError as exc:
        logging.getLogger("extractor").error("%s", exc)
        return 1
    except OSError as exc:
        logging.getLogger("extractor").error("%s", exc)
        return 2
    print(f"wrote {manifest['output']}: {len(manifest['rows'])} rows, "
          f"{len(manifest['classes'])} classes, "
          f"d={manifest['embed_dim']}, "
          f"{len(manifest['skipped'])} skipped")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
