import numpy as np
import pytest

from convdesc.evaluation import (
    UndefinedMetricError,
    average_precision,
    format_report,
    mean_average_precision,
    ukb_score,
    write_report,
)
from convdesc.tensorio import DatasetManifest, ManifestImage, QueryGroundTruth


def _gt(good, ok=(), junk=(), query_id="q", image_id="q"):
    return QueryGroundTruth(query_id=query_id, image_id=image_id, bbox=None,
                            good=list(good), ok=list(ok), junk=list(junk))


def ap_oracle(ranked, gt):
    """Independent vectorized reimplementation of the trapezoidal rule."""
    positives = set(gt.good) | set(gt.ok)
    junk = set(gt.junk)
    kept = [i for i in ranked if i not in junk]
    if not kept:
        return 0.0
    rel = np.array([i in positives for i in kept], dtype=float)
    hits = np.cumsum(rel)
    recall = hits / len(positives)
    precision = hits / np.arange(1, len(kept) + 1)
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    prev_precision = np.concatenate([[1.0], precision[:-1]])
    return float(np.sum((recall - prev_recall) * (precision + prev_precision) / 2.0))


def test_perfect_ranking():
    assert average_precision(["r1", "r2"], _gt(["r1", "r2"])) == pytest.approx(1.0)


def test_junk_is_transparent():
    assert average_precision(["j", "r"], _gt(["r"], junk=["j"])) == pytest.approx(1.0)


def test_hand_traced_trapezoid():
    ap = average_precision(["r1", "n", "r2"], _gt(["r1", "r2"]))
    assert ap == pytest.approx(0.79167, abs=1e-5)


def test_empty_positive_set():
    with pytest.raises(UndefinedMetricError):
        average_precision(["a"], _gt([]))


def _random_instance(rng):
    n = int(rng.integers(2, 31))
    ids = [f"i{j:02d}" for j in range(n)]
    npos = int(rng.integers(1, min(9, n + 1)))
    njunk = int(rng.integers(0, min(5, n - npos + 1)))
    picks = rng.permutation(n)
    positives = [ids[i] for i in picks[:npos]]
    junk = [ids[i] for i in picks[npos:npos + njunk]]
    split = rng.integers(0, npos + 1)
    gt = _gt(positives[:split], ok=positives[split:], junk=junk)
    ranked = list(rng.permutation(ids))
    return ranked, gt


def test_ap_matches_independent_oracle():
    rng = np.random.default_rng(21)
    for _ in range(200):
        ranked, gt = _random_instance(rng)
        assert average_precision(ranked, gt) == pytest.approx(ap_oracle(ranked, gt), abs=1e-9)


def test_junk_position_invariance():
    rng = np.random.default_rng(22)
    for _ in range(100):
        ranked, gt = _random_instance(rng)
        base = average_precision([i for i in ranked if i not in set(gt.junk)], gt)
        # re-insert junk at random positions
        shuffled = [i for i in ranked if i not in set(gt.junk)]
        for j in gt.junk:
            pos = int(rng.integers(0, len(shuffled) + 1))
            shuffled.insert(pos, j)
        assert average_precision(shuffled, gt) == pytest.approx(base, abs=1e-12)


def test_ap_one_iff_positives_first():
    gt = _gt(["a", "b"], junk=["j"])
    assert average_precision(["a", "b", "n"], gt) == pytest.approx(1.0)
    assert average_precision(["a", "j", "b", "n"], gt) == pytest.approx(1.0)
    assert average_precision(["a", "n", "b"], gt) < 1.0


def test_negative_below_last_positive_is_free():
    gt = _gt(["a", "b"])
    assert average_precision(["a", "b"], gt) == average_precision(["a", "b", "n1", "n2"], gt)
    assert average_precision(["n1", "a", "b"], gt) < average_precision(["a", "b"], gt)


def _manifest(queries, protocol="oxford_map"):
    ids = set()
    for q in queries:
        ids |= {q.image_id} | set(q.good) | set(q.ok) | set(q.junk)
    images = [ManifestImage(i, {}) for i in sorted(ids)]
    return DatasetManifest(protocol=protocol, images=images, queries=queries)


def test_map_arithmetic():
    q1 = _gt(["a"], query_id="q1", image_id="a")
    q2 = _gt(["b", "c"], query_id="q2", image_id="b")
    manifest = _manifest([q1, q2])
    results = {"q1": ["a"], "q2": ["b", "n", "c"]}
    report = mean_average_precision(results, manifest)
    assert report.aggregate == pytest.approx((1.0 + 0.79167) / 2, abs=1e-5)
    assert [q for q, _ in report.per_query] == ["q1", "q2"]


def test_map_all_perfect():
    q1 = _gt(["a"], query_id="q1", image_id="a")
    report = mean_average_precision({"q1": ["a"]}, _manifest([q1]))
    assert report.aggregate == 1.0


def test_map_missing_query_named():
    q1 = _gt(["a"], query_id="q1", image_id="a")
    with pytest.raises(KeyError, match="q1"):
        mean_average_precision({}, _manifest([q1]))


def test_map_order_invariant():
    rng = np.random.default_rng(23)
    queries = []
    results = {}
    for k in range(6):
        ranked, gt = _random_instance(rng)
        gt = QueryGroundTruth(query_id=f"q{k}", image_id=gt.image_id, bbox=None,
                              good=gt.good, ok=gt.ok, junk=gt.junk)
        queries.append(gt)
        results[f"q{k}"] = ranked
    a = mean_average_precision(results, _manifest(queries))
    b = mean_average_precision(results, _manifest(queries[::-1]))
    assert a.per_query == b.per_query
    assert a.aggregate == b.aggregate


def _ukb_manifest():
    queries = []
    for g in range(3):
        members = [f"o{g}_{i}" for i in range(4)]
        for m in members:
            queries.append(QueryGroundTruth(
                query_id=m, image_id=m, bbox=None,
                good=[x for x in members if x != m], ok=[], junk=[]))
    return _manifest(queries, protocol="ukb_top4")


def test_ukb_perfect_score():
    manifest = _ukb_manifest()
    results = {}
    for q in manifest.queries:
        group = [q.image_id] + q.good
        rest = [i for i in manifest.image_ids() if i not in group]
        results[q.query_id] = group + rest
    report = ukb_score(results, manifest)
    assert report.aggregate == 4.0


def test_ukb_partial_count():
    manifest = _ukb_manifest()
    results = {}
    for q in manifest.queries:
        others = [i for i in manifest.image_ids() if i not in {q.image_id} | set(q.good)]
        # self + one partner in the top 4 only
        results[q.query_id] = [q.image_id, q.good[0]] + others + q.good[1:]
    report = ukb_score(results, manifest)
    assert report.aggregate == pytest.approx(2.0)
    assert all(v == 2.0 for _, v in report.per_query)


def test_ukb_group_size_warning():
    q = QueryGroundTruth(query_id="q", image_id="a", bbox=None, good=["b"], ok=[], junk=[])
    manifest = _manifest([q], protocol="ukb_top4")
    with pytest.warns(UserWarning, match="not 4"):
        ukb_score({"q": ["a", "b"]}, manifest)


def test_report_serialization(tmp_path):
    q1 = _gt(["a"], query_id="q1", image_id="a")
    report = mean_average_precision({"q1": ["a"]}, _manifest([q1]),
                                    config_fingerprint="pooling=max")
    text = format_report(report)
    assert "mAP: 1.0000" in text and "pooling=max" in text
    out = tmp_path / "report.json"
    write_report(report, out)
    import json
    doc = json.loads(out.read_text())
    assert doc["aggregate"] == 1.0
    assert doc["config_fingerprint"] == "pooling=max"
