"""Command-line entry point for dumping VGG-19 activations to .fmap files."""

import argparse
import json
import sys
from pathlib import Path

from .extract import extract_batch, find_image
from .model import LAYERS, load_model
from .preprocess import RGB_MEANS, ResizePolicy


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vggextract",
        description="Dump per-layer VGG-19 activations as .fmap files")
    parser.add_argument("--images", required=True, help="directory of image files")
    parser.add_argument("--manifest", required=True,
                        help="dataset manifest JSON (ids and query bboxes)")
    parser.add_argument("--layers", required=True,
                        help=f"comma-separated subset of: {', '.join(LAYERS)}")
    parser.add_argument("--resize", default="free", help="free, one:SIZE or two:SIZE")
    parser.add_argument("--crop-queries", action="store_true",
                        help="also dump bbox crops of the query images")
    parser.add_argument("--weights", default=None, help="VGG-19 state-dict file")
    parser.add_argument("--random-weights", action="store_true",
                        help="use random initialization (testing only)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    layers = [layer.strip() for layer in args.layers.split(",") if layer.strip()]
    unknown = set(layers) - set(LAYERS)
    if unknown:
        print(f"error: unknown layers {sorted(unknown)}", file=sys.stderr)
        return 2
    try:
        policy = ResizePolicy.parse(args.resize)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.weights is None and not args.random_weights:
        print("error: give --weights FILE or --random-weights", file=sys.stderr)
        return 2

    with open(args.manifest, "r", encoding="utf-8") as fh:
        doc = json.load(fh)

    model = load_model(weights_path=args.weights, seed=args.seed)
    print(f"resize={args.resize} layers={','.join(layers)} rgb_means={RGB_MEANS}")

    jobs = []
    missing = []
    for entry in doc.get("images", []):
        try:
            jobs.append((entry["id"], find_image(args.images, entry["id"]), None))
        except FileNotFoundError:
            missing.append(entry["id"])
    if args.crop_queries:
        for q in doc.get("queries", []):
            if q.get("bbox") is None:
                continue
            try:
                jobs.append((q["id"], find_image(args.images, q["image"]), tuple(q["bbox"])))
            except FileNotFoundError:
                missing.append(q["image"])
    for image_id in missing:
        print(f"error: no image file for {image_id!r}", file=sys.stderr)

    failures = extract_batch(model, jobs, layers, policy, Path(args.out), log=print)
    print(f"dumped {len(jobs) - len(failures)}/{len(jobs)} items to {args.out}")
    return 1 if failures or missing else 0


if __name__ == "__main__":
    sys.exit(main())
