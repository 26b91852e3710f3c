import numpy as np
import pytest

from instance_gen import random_instance
from momentkit.data import (DatasetSample, MomentSpan, PredictionRecord,
                            SaliencyAnnotation)
from momentkit.errors import MomentKitError
from momentkit.metrics import (MetricConfig, MetricReport,
                               average_precision_single_query, compute_report,
                               hd_map, hd_map_per_query, hit_at_1, map_suite,
                               recall1_at, temporal_iou, tvsum_domain_report)
from reference_impl import (avg_map_ref, hd_map_ref, hit_at_1_ref, map_ref,
                            r1_ref)

CFG = MetricConfig()


def _mr_sample(qid, gts, duration=40.0):
    return DatasetSample(query_id=qid, query_text="q", video_id=f"v{qid}",
                         duration_s=duration,
                         gt_moments=tuple(MomentSpan(a, b) for a, b in gts))


def _record(qid, windows, saliency=(0.0,)):
    return PredictionRecord(
        query_id=qid,
        moments=tuple((MomentSpan(a, b), c) for a, b, c in windows),
        saliency_scores=tuple(saliency))


# ---------------------------------------------------------------------------
# IoU


def test_iou_identical():
    assert temporal_iou(MomentSpan(0, 10), MomentSpan(0, 10)) == 1.0


def test_iou_one_third():
    assert temporal_iou(MomentSpan(0, 10), MomentSpan(5, 15)) == pytest.approx(1 / 3)


def test_iou_touching():
    assert temporal_iou(MomentSpan(0, 5), MomentSpan(5, 10)) == 0.0


# ---------------------------------------------------------------------------
# R1


def test_r1_perfect_hit():
    samples = [_mr_sample(0, [(10, 20)])]
    records = [_record(0, [(10, 20, 0.9)])]
    assert recall1_at(records, samples, 0.7) == 100.0


def test_r1_threshold_straddle():
    # IoU([10,20],[12,22]) = 8/12 = 0.667: hit at 0.5, miss at 0.7
    samples = [_mr_sample(0, [(10, 20)]), _mr_sample(1, [(10, 20)])]
    records = [_record(0, [(12, 22, 0.9)]), _record(1, [(12, 22, 0.8)])]
    assert recall1_at(records, samples, 0.5) == 100.0
    assert recall1_at(records, samples, 0.7) == 0.0


def test_r1_half():
    samples = [_mr_sample(0, [(10, 20)]), _mr_sample(1, [(30, 40)])]
    records = [_record(0, [(10, 20, 0.9)]), _record(1, [(0, 5, 0.9)])]
    assert recall1_at(records, samples, 0.5) == 50.0


def test_r1_missing_prediction():
    samples = [_mr_sample(0, [(10, 20)]), _mr_sample(1, [(10, 20)])]
    records = [_record(0, [(10, 20, 0.9)])]
    with pytest.raises(MomentKitError, match=r"\[1\]"):
        recall1_at(records, samples, 0.5)


# ---------------------------------------------------------------------------
# AP


def test_ap_perfect():
    gts = [MomentSpan(0, 5), MomentSpan(10, 15)]
    assert average_precision_single_query(gts, gts, 0.5) == 1.0


def test_ap_hand_case():
    # ranked [TP, FP, TP] over 2 gts -> (1/1 + 2/3) / 2
    gts = [MomentSpan(0, 10), MomentSpan(20, 30)]
    ranked = [MomentSpan(0, 10), MomentSpan(40, 50), MomentSpan(20, 30)]
    assert average_precision_single_query(ranked, gts, 0.5) == pytest.approx(
        (1.0 + 2.0 / 3.0) / 2.0)


def test_ap_duplicate_is_fp():
    gts = [MomentSpan(0, 10)]
    ranked = [MomentSpan(0, 10), MomentSpan(0, 10)]
    assert average_precision_single_query(ranked, gts, 0.5) == 1.0
    # duplicate first is consumed; original still 1.0 since TP at rank 1
    ranked_low_first = [MomentSpan(0.5, 10), MomentSpan(0, 10)]
    ap = average_precision_single_query(ranked_low_first, gts, 0.5)
    assert ap == 1.0  # rank-1 overlap 9.5/10 > 0.5 consumes the gt


def test_map_suite_grid_length_and_perfect():
    samples = [_mr_sample(i, [(5 * i, 5 * i + 4)], duration=60.0)
               for i in range(4)]
    records = [_record(i, [(5 * i, 5 * i + 4, 0.9)]) for i in range(4)]
    out = map_suite(records, samples, CFG)
    assert len(CFG.avg_map_grid) == 10
    assert out["map@0.5"] == 100.0
    assert out["map@0.75"] == 100.0
    assert out["map@avg"] == 100.0


# ---------------------------------------------------------------------------
# HD metrics


def _hd_sample(qid, label_rows, domain=None):
    return DatasetSample(
        query_id=qid, query_text="q", video_id=f"v{qid}",
        duration_s=2.0 * len(label_rows),
        saliency=SaliencyAnnotation(clip_ids=tuple(range(len(label_rows))),
                                    scores=tuple(tuple(r) for r in label_rows)),
        domain_tag=domain)


def test_hit_at_1_all_agree():
    samples = [_hd_sample(0, [[5, 5, 5], [1, 1, 1]])]
    records = [_record(0, [], saliency=(2.0, 1.0))]
    assert hit_at_1(records, samples, CFG) == 100.0


def test_hit_at_1_two_thirds():
    samples = [_hd_sample(0, [[5, 4, 5], [1, 1, 1]])]
    records = [_record(0, [], saliency=(2.0, 1.0))]
    assert hit_at_1(records, samples, CFG) == pytest.approx(100 * 2 / 3)


def test_hit_at_1_tie_breaks_to_lowest_clip():
    samples = [_hd_sample(0, [[1, 1, 1], [5, 5, 5]])]
    records = [_record(0, [], saliency=(1.0, 1.0))]  # tie -> clip 0 (label 1)
    assert hit_at_1(records, samples, CFG) == 0.0


def test_hd_map_hand_case():
    # labels [5,1,5,1], predicted order clip0 > clip1 > clip2 > clip3
    samples = [_hd_sample(0, [[5] * 3, [1] * 3, [5] * 3, [1] * 3])]
    records = [_record(0, [], saliency=(4.0, 3.0, 2.0, 1.0))]
    assert hd_map(records, samples, CFG) == pytest.approx(
        100 * (1.0 + 2.0 / 3.0) / 2.0)


def test_hd_map_rank_all_positives_first():
    samples = [_hd_sample(0, [[5] * 3, [5] * 3, [1] * 3, [1] * 3])]
    records = [_record(0, [], saliency=(9.0, 8.0, 1.0, 0.5))]
    assert hd_map(records, samples, CFG) == 100.0


def test_hd_map_zero_positive_annotator_contributes_zero():
    samples = [_hd_sample(0, [[4, 5, 4], [3, 1, 2]])]
    records = [_record(0, [], saliency=(2.0, 1.0))]
    # only annotator 1 has a positive (clip 0 at rank 1): AP = (0 + 1 + 0) / 3
    assert hd_map(records, samples, CFG) == pytest.approx(100 / 3)


def test_top_half_mode():
    cfg = MetricConfig(hd_positive_mode="top_half")
    samples = [_hd_sample(0, [[4, 4, 4], [3, 3, 3], [2, 2, 2], [1, 1, 1]])]
    records = [_record(0, [], saliency=(4.0, 3.0, 2.0, 1.0))]
    # top half = clips 0, 1 for every annotator, ranked first -> AP 1.0
    assert hd_map(records, samples, cfg) == 100.0


# ---------------------------------------------------------------------------
# Domain report


def test_domain_single():
    samples = [_hd_sample(0, [[5, 5, 5]], domain="VT")]
    report = tvsum_domain_report({0: 80.0}, samples)
    assert report == {"VT": 80.0, "avg": 80.0}


def test_domain_unweighted_average():
    samples = [_hd_sample(0, [[5, 5, 5]], domain="VT"),
               _hd_sample(1, [[5, 5, 5]], domain="VT"),
               _hd_sample(2, [[5, 5, 5]], domain="GA")]
    report = tvsum_domain_report({0: 70.0, 1: 90.0, 2: 90.0}, samples)
    assert report["VT"] == 80.0
    assert report["GA"] == 90.0
    assert report["avg"] == 85.0  # regardless of per-domain counts


def test_domain_ten_columns():
    domains = ["VT", "VU", "GA", "MS", "PK", "PR", "FM", "BK", "BT", "DS"]
    samples = [_hd_sample(i, [[5, 5, 5]], domain=d)
               for i, d in enumerate(domains)]
    report = tvsum_domain_report({i: 50.0 for i in range(10)}, samples)
    assert len(report) == 11  # ten domains plus avg
    assert set(domains) <= set(report)


def test_untagged_sample_rejected():
    samples = [_hd_sample(0, [[5, 5, 5]])]
    with pytest.raises(MomentKitError):
        tvsum_domain_report({0: 50.0}, samples)


# ---------------------------------------------------------------------------
# Oracle equivalence and properties


def test_oracle_equivalence_small():
    rng = np.random.default_rng(202)
    for _ in range(40):
        samples, records, plain = random_instance(rng)
        for theta in (0.5, 0.7):
            assert recall1_at(records, samples, theta) == pytest.approx(
                r1_ref(plain["preds"], plain["gts"], theta), abs=1e-9)
        for theta in (0.5, 0.75):
            got = map_suite(records, samples, CFG)[f"map@{theta:g}"]
            assert got == pytest.approx(
                map_ref(plain["preds"], plain["gts"], theta), abs=1e-9)
        assert map_suite(records, samples, CFG)["map@avg"] == pytest.approx(
            avg_map_ref(plain["preds"], plain["gts"], list(CFG.avg_map_grid)),
            abs=1e-9)
        assert hit_at_1(records, samples, CFG) == pytest.approx(
            hit_at_1_ref(plain["scores"], plain["labels"]), abs=1e-9)
        assert hd_map(records, samples, CFG) == pytest.approx(
            hd_map_ref(plain["scores"], plain["labels"]), abs=1e-9)


def test_monotonicity_in_theta():
    rng = np.random.default_rng(77)
    thetas = [0.3, 0.5, 0.7, 0.9]
    for _ in range(30):
        samples, records, _ = random_instance(rng)
        r1 = [recall1_at(records, samples, t) for t in thetas]
        maps = [map_suite(records, samples,
                          MetricConfig(map_thresholds=(t,)))[f"map@{t:g}"]
                for t in thetas]
        assert all(a >= b - 1e-12 for a, b in zip(r1, r1[1:]))
        assert all(a >= b - 1e-12 for a, b in zip(maps, maps[1:]))


def test_iteration_order_independence():
    rng = np.random.default_rng(31)
    samples, records, _ = random_instance(rng)
    shuffled_s = list(reversed(samples))
    shuffled_r = list(reversed(records))
    assert recall1_at(records, samples, 0.5) == recall1_at(
        shuffled_r, shuffled_s, 0.5)
    assert hd_map(records, samples, CFG) == hd_map(shuffled_r, shuffled_s, CFG)


# ---------------------------------------------------------------------------
# Report


def test_report_serialization(tmp_path):
    samples = [_mr_sample(0, [(10, 20)])]
    records = [_record(0, [(10, 20, 0.9)], saliency=(1.0,))]
    report = compute_report(records, samples, CFG, kind="mr", split="val")
    assert report.values["r1@0.5"] == 100.0
    txt, js = report.write(tmp_path / "report")
    text = txt.read_text()
    assert "r1@0.5 100.0" in text
    import json
    blob = json.loads(js.read_text())
    assert blob["values"]["map@avg"] == 100.0
    assert blob["num_samples"] == 1


def test_report_bounds_validated():
    with pytest.raises(Exception):
        MetricReport(split="val", num_samples=1, values={"r1@0.5": 101.0})
