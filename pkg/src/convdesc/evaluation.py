"""Retrieval metrics: Oxford-style trapezoidal mAP and the UKB top-4 score."""

import json
import warnings
from dataclasses import dataclass

from .errors import ConvdescError
from .tensorio import DatasetManifest, QueryGroundTruth


class UndefinedMetricError(ConvdescError):
    """The metric has no defined value (e.g. a query with no positives)."""


@dataclass
class EvalReport:
    protocol: str
    per_query: list  # of (query_id, value), sorted by query_id
    aggregate: float
    config_fingerprint: str = ""


def average_precision(ranked, gt: QueryGroundTruth):
    """Trapezoidal average precision with junk entries skipped.

    Junk ids are transparent: they consume no rank. Positives are good + ok;
    the recall denominator counts every ground-truth positive whether or not
    it appears in the ranked list.
    """
    positives = set(gt.good) | set(gt.ok)
    junk = set(gt.junk)
    if not positives:
        raise UndefinedMetricError(f"query {gt.query_id!r} has no positive images")
    npos = len(positives)

    ap = 0.0
    hits = 0
    rank = 0
    old_recall = 0.0
    old_precision = 1.0
    for image_id in ranked:
        if image_id in junk:
            continue
        if image_id in positives:
            hits += 1
        rank += 1
        recall = hits / npos
        precision = hits / rank
        ap += (recall - old_recall) * (precision + old_precision) / 2.0
        old_recall = recall
        old_precision = precision
    return ap


def mean_average_precision(results, manifest: DatasetManifest, config_fingerprint=""):
    """Mean AP over every manifest query; results maps query_id -> ranked id list."""
    per_query = []
    for gt in manifest.queries:
        if gt.query_id not in results:
            raise KeyError(f"no ranked list for query {gt.query_id!r}")
        per_query.append((gt.query_id, average_precision(results[gt.query_id], gt)))
    per_query.sort(key=lambda item: item[0])
    aggregate = sum(v for _, v in per_query) / len(per_query) if per_query else 0.0
    return EvalReport(protocol="oxford_map", per_query=per_query, aggregate=aggregate,
                      config_fingerprint=config_fingerprint)


def ukb_score(results, manifest: DatasetManifest, config_fingerprint=""):
    """Mean count of same-object images in each query's top 4 (self counts)."""
    per_query = []
    for gt in manifest.queries:
        if gt.query_id not in results:
            raise KeyError(f"no ranked list for query {gt.query_id!r}")
        group = set(gt.good) | set(gt.ok) | {gt.image_id}
        if len(group) != 4:
            warnings.warn(
                f"query {gt.query_id!r}: object group has {len(group)} images, not 4",
                stacklevel=2)
        top4 = results[gt.query_id][:4]
        per_query.append((gt.query_id, float(sum(1 for i in top4 if i in group))))
    per_query.sort(key=lambda item: item[0])
    aggregate = sum(v for _, v in per_query) / len(per_query) if per_query else 0.0
    return EvalReport(protocol="ukb_top4", per_query=per_query, aggregate=aggregate,
                      config_fingerprint=config_fingerprint)


def write_report(report: EvalReport, path):
    """Serialize a report as JSON."""
    doc = {
        "protocol": report.protocol,
        "config_fingerprint": report.config_fingerprint,
        "aggregate": report.aggregate,
        "per_query": [{"query": q, "value": v} for q, v in report.per_query],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def format_report(report: EvalReport):
    """Render a report as an aligned plain-text table."""
    label = "AP" if report.protocol == "oxford_map" else "top-4"
    width = max([len("query")] + [len(q) for q, _ in report.per_query])
    lines = [f"protocol: {report.protocol}"]
    if report.config_fingerprint:
        lines.append(f"config:   {report.config_fingerprint}")
    lines.append(f"{'query'.ljust(width)}  {label}")
    for q, v in report.per_query:
        lines.append(f"{q.ljust(width)}  {v:.4f}")
    name = "mAP" if report.protocol == "oxford_map" else "mean top-4"
    lines.append(f"{name}: {report.aggregate:.4f}")
    return "\n".join(lines)
