"""Command-line front end: aggregate, whiten, evaluate, and factor-grid sweeps."""

import argparse
import itertools
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation, pyramid, retrieval, tensorio, whiten
from .aggregate import normalize_rootsift
from .errors import ConvdescError

NORMS = ("l1", "l2")

GRID_AXES = ("pooling", "norm", "layer", "scales", "version", "overlap",
             "weighted", "whiten_source", "keep_dims")

BASE_CELL = {
    "pooling": "max",
    "norm": "l2",
    "layer": "conv5_4",
    "scales": 4,
    "version": "v3",
    "overlap": "s2,s3",
    "weighted": False,
    "whiten_source": "none",
    "keep_dims": "full",
}


def fingerprint(**settings):
    """A stable one-line encoding of every pipeline setting."""
    return "|".join(f"{k}={v}" for k, v in sorted(settings.items()))


def _parse_overlap(text):
    if text in (None, "", "none"):
        return ()
    return tuple(part.strip() for part in str(text).split(",") if part.strip())


def _build_config(scales, version, overlap, weighted, pooling, region_norm="none"):
    version = version if int(scales) == 4 else None
    return pyramid.PyramidConfig.from_factors(
        int(scales), version=version, overlap=_parse_overlap(overlap),
        weighted=bool(weighted), pooling=pooling, region_norm=region_norm)


def _aggregate_set(manifest, layer, cfg, norm, threads):
    ds = pyramid.batch_descriptors(manifest, layer, cfg, threads=threads)
    if norm == "l1":
        ds.vectors = np.stack([normalize_rootsift(v) for v in ds.vectors])
    return ds


def cmd_aggregate(args):
    manifest = tensorio.read_manifest(args.manifest)
    cfg = _build_config(args.scales, args.grid_version, args.overlap,
                        args.weighted, args.pooling, args.region_norm)
    ds = _aggregate_set(manifest, args.layer, cfg, args.norm, args.threads)
    tensorio.write_descriptor_set(ds, args.out)
    fp = fingerprint(layer=args.layer, pooling=args.pooling, norm=args.norm,
                     scales=args.scales, version=args.grid_version or "-",
                     overlap=args.overlap or "none", weighted=args.weighted,
                     region_norm=args.region_norm)
    print(f"wrote {len(ds)} descriptors of dim {ds.dim} to {args.out}")
    print(f"config: {fp}")
    return 0


def cmd_fit_whiten(args):
    ds = tensorio.read_descriptor_set(args.desc)
    model = whiten.fit_whitening(ds, epsilon=args.epsilon)
    whiten.write_whitening_model(model, args.out)
    print(f"fitted whitening on {len(ds)} descriptors of dim {ds.dim}; wrote {args.out}")
    return 0


def cmd_apply_whiten(args):
    model = whiten.read_whitening_model(args.model)
    ds = tensorio.read_descriptor_set(args.desc)
    keep = args.keep if args.keep is not None else model.input_dim
    out = whiten.whiten_set(model, ds, keep)
    tensorio.write_descriptor_set(out, args.out)
    print(f"whitened {len(out)} descriptors to dim {keep}; wrote {args.out}")
    return 0


def _parse_layer_paths(items):
    out = {}
    for item in items:
        layer, sep, path = item.partition(":")
        if not sep:
            raise ConvdescError(f"expected LAYER:PATH, got {item!r}")
        out[layer] = path
    return out


def _parse_ensemble(text):
    members = []
    for part in text.split(","):
        layer, sep, weight = part.partition(":")
        if not sep:
            raise ConvdescError(f"expected LAYER:WEIGHT, got {part!r}")
        members.append((layer.strip(), float(weight)))
    return retrieval.EnsembleSpec(members=tuple(members))


def _rank_all(manifest, indexes, query_sets, spec):
    """Ranked id lists per query, single-layer or fused."""
    results = {}
    for gt in manifest.queries:
        queries = {}
        for layer, index in indexes.items():
            qset = query_sets.get(layer)
            if qset is not None:
                queries[layer] = qset.vector_for(gt.image_id)
            else:
                queries[layer] = index.vector_for(gt.image_id)
        if spec is not None:
            ranked = retrieval.ensemble_query(indexes, queries, spec)
        else:
            (layer,) = indexes.keys()
            ranked = retrieval.query(indexes[layer], queries[layer])
        results[gt.query_id] = [image_id for image_id, _ in ranked]
    return results


def _evaluate(manifest, results, fp):
    if manifest.protocol == "ukb_top4":
        return evaluation.ukb_score(results, manifest, config_fingerprint=fp)
    return evaluation.mean_average_precision(results, manifest, config_fingerprint=fp)


def cmd_evaluate(args):
    manifest = tensorio.read_manifest(args.manifest)
    desc_paths = _parse_layer_paths(args.desc)
    spec = _parse_ensemble(args.ensemble) if args.ensemble else None
    if spec is not None:
        missing = [layer for layer, _ in spec.members if layer not in desc_paths]
        if missing:
            raise ConvdescError(f"no descriptor file given for ensemble layers: {missing}")
    if spec is None and len(desc_paths) != 1:
        raise ConvdescError("give exactly one --desc unless --ensemble is used")

    indexes = {
        layer: retrieval.build_index(tensorio.read_descriptor_set(path, layer=layer))
        for layer, path in desc_paths.items()
    }
    query_sets = {}
    for item in args.query_desc or []:
        layer, sep, path = item.partition(":")
        if not sep:
            raise ConvdescError(f"expected LAYER:PATH, got {item!r}")
        query_sets[layer] = tensorio.read_descriptor_set(path, layer=layer)

    fp = fingerprint(protocol=manifest.protocol,
                     layers=",".join(sorted(desc_paths)),
                     ensemble=args.ensemble or "none")
    results = _rank_all(manifest, indexes, query_sets, spec)
    report = _evaluate(manifest, results, fp)
    print(evaluation.format_report(report))
    if args.out:
        evaluation.write_report(report, args.out)
    return 0


def _run_grid_cell(manifest, cell, threads, desc_cache):
    cache_key = (cell["layer"], cell["pooling"], cell["norm"], cell["scales"],
                 cell["version"], cell["overlap"], cell["weighted"])
    if cache_key in desc_cache:
        ds = desc_cache[cache_key]
    else:
        cfg = _build_config(cell["scales"], cell["version"], cell["overlap"],
                            cell["weighted"], cell["pooling"])
        ds = _aggregate_set(manifest, cell["layer"], cfg, cell["norm"], threads)
        desc_cache[cache_key] = ds

    source = cell["whiten_source"]
    if source != "none":
        train = ds if source == "self" else tensorio.read_descriptor_set(source)
        model = whiten.fit_whitening(train)
        keep = ds.dim if cell["keep_dims"] == "full" else int(cell["keep_dims"])
        ds = whiten.whiten_set(model, ds, keep)

    index = retrieval.build_index(ds)
    fp = fingerprint(**cell)
    results = _rank_all(manifest, {ds.layer or cell["layer"]: index}, {}, None)
    return _evaluate(manifest, results, fp)


def cmd_grid(args):
    with open(args.spec, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    axes = spec.get("axes", {})
    unknown = set(axes) - set(GRID_AXES)
    if unknown:
        raise ConvdescError(f"unknown grid axes: {sorted(unknown)}")
    manifest_path = args.manifest or spec.get("dataset")
    if not manifest_path:
        raise ConvdescError("grid needs a dataset manifest (spec 'dataset' or --manifest)")
    out_dir = Path(args.out or spec.get("output", "grid-report"))
    manifest = tensorio.read_manifest(manifest_path)

    axis_names = [name for name in GRID_AXES if name in axes]
    axis_values = [axes[name] for name in axis_names]
    cells = list(itertools.product(*axis_values)) if axis_names else [()]
    print(f"grid: {len(cells)} cell(s) over axes {axis_names or '(base config only)'}")

    out_dir.mkdir(parents=True, exist_ok=True)
    desc_cache = {}
    rows = []
    failures = 0
    for values in cells:
        cell = dict(BASE_CELL)
        cell.update(dict(zip(axis_names, values)))
        # defaults taken from the base config must degrade with the cell's scale count
        scales = int(cell["scales"])
        if "overlap" not in axis_names:
            cell["overlap"] = {3: "s2", 4: "s2,s3"}.get(scales, "none")
        if "version" not in axis_names and scales != 4:
            cell["version"] = None
        try:
            report = _run_grid_cell(manifest, cell, args.threads, desc_cache)
            rows.append({"cell": dict(zip(axis_names, values)),
                         "fingerprint": fingerprint(**cell),
                         "aggregate": report.aggregate, "error": None})
        except (ConvdescError, ValueError, OSError, KeyError) as exc:
            failures += 1
            rows.append({"cell": dict(zip(axis_names, values)),
                         "fingerprint": fingerprint(**cell),
                         "aggregate": None, "error": str(exc)})

    metric = "top-4" if manifest.protocol == "ukb_top4" else "mAP"
    widths = [max(len(n), max((len(str(r["cell"].get(n, ""))) for r in rows), default=0))
              for n in axis_names]
    header = "  ".join(n.ljust(w) for n, w in zip(axis_names, widths))
    print(f"{header}  {metric}" if header else metric)
    for row in rows:
        cols = "  ".join(str(row["cell"].get(n, "")).ljust(w)
                         for n, w in zip(axis_names, widths))
        value = f"{row['aggregate']:.4f}" if row["error"] is None else f"ERROR: {row['error']}"
        print(f"{cols}  {value}" if cols else value)

    with open(out_dir / "grid_report.json", "w", encoding="utf-8") as fh:
        json.dump({"protocol": manifest.protocol, "axes": axes, "cells": rows}, fh, indent=2)
        fh.write("\n")
    return 1 if failures else 0


def cmd_import_oxford_gt(args):
    queries = tensorio.import_oxford_ground_truth(args.gt_dir)
    doc = {
        "queries": [
            {"id": q.query_id, "image": q.image_id, "bbox": list(q.bbox),
             "good": q.good, "ok": q.ok, "junk": q.junk}
            for q in queries
        ]
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(f"imported {len(queries)} queries to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="convdesc",
        description="Multi-scale CNN descriptors and instance-retrieval experiments")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="turn feature dumps into a descriptor file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--layer", required=True)
    p.add_argument("--scales", type=int, default=4)
    p.add_argument("--grid-version", choices=pyramid.GRID_VERSIONS, default=None)
    p.add_argument("--overlap", default="none", help="e.g. s2,s3 or none")
    p.add_argument("--pooling", choices=("sum", "max"), default="max")
    p.add_argument("--norm", choices=NORMS, default="l2")
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--region-norm", choices=("none", "l2"), default="none")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("fit-whiten", help="fit a PCA+whitening model on a descriptor file")
    p.add_argument("--desc", required=True)
    p.add_argument("--epsilon", type=float, default=whiten.DEFAULT_EPSILON)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_whiten)

    p = sub.add_parser("apply-whiten", help="apply a whitening model to a descriptor file")
    p.add_argument("--model", required=True)
    p.add_argument("--desc", required=True)
    p.add_argument("--keep", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_apply_whiten)

    p = sub.add_parser("evaluate", help="run all manifest queries and score them")
    p.add_argument("--manifest", required=True)
    p.add_argument("--desc", action="append", required=True,
                   help="LAYER:PATH descriptor file (repeatable)")
    p.add_argument("--query-desc", action="append",
                   help="LAYER:PATH descriptors for the query images (e.g. cropped)")
    p.add_argument("--ensemble", default=None, help="e.g. conv5_4:0.5,fc6-conv:0.5")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid", help="sweep factor combinations and tabulate results")
    p.add_argument("--spec", required=True, help="JSON grid spec: axes/dataset/output")
    p.add_argument("--manifest", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("import-oxford-gt", help="convert classic ground-truth text files")
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_import_oxford_gt)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConvdescError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
