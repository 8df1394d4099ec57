import math

import numpy as np
import pandas as pd
import pytest

from fbs_workbench.base.exceptions import DomainError
from fbs_workbench.service.dataset_features.types import FeatureScheme
from fbs_workbench.service.detectors.types import DetectorKind
from fbs_workbench.service.eval.api import Reporter
from fbs_workbench.service.eval.types import (
    RecordLabel,
    ScoreTimeline,
    ServingResult,
    TimelineEntry,
    VisibilityBucket,
)
from fbs_workbench.service.eval.utils import (
    aggregate_false_cell,
    aggregated_reports_to_frame,
    calibrate_threshold,
    corroboration,
    export_timeline,
    holdout_report,
    holdout_reports_to_frame,
    label_records,
    recall_report,
    recall_reports_to_frame,
    roc_auc,
    score_gaps,
    score_gaps_to_frame,
    serving_fprs,
)
from tests.conftest import make_catalog, make_records


def test_calibrate_threshold():
    scores = np.arange(1, 1001)
    threshold = calibrate_threshold(scores, 0.005)
    assert threshold == 995
    assert (scores > threshold).sum() == 5


def test_calibrate_threshold_with_ties():
    scores = [0.0] * 990 + [1.0] * 10
    threshold = calibrate_threshold(scores, 0.005)
    # Five exceedances are allowed, ten tied scores would be too many
    assert threshold == 1.0
    assert sum(s > threshold for s in scores) == 0


def test_calibrate_threshold_small_sets():
    assert calibrate_threshold([3.0, 1.0, 2.0], 0.1) == 3.0
    assert calibrate_threshold([3.0, 1.0, 2.0], 0.5) == 2.0


@pytest.mark.parametrize("seed", range(20))
def test_calibrate_threshold_bounds_exceedances(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 400))
    # Rounding makes ties common
    scores = np.round(rng.exponential(size=n), int(rng.integers(0, 3)))
    fpr = float(rng.uniform(0.001, 0.2))
    threshold = calibrate_threshold(scores, fpr)
    allowed = math.floor(n * fpr)
    assert (scores > threshold).sum() <= allowed
    for step in (1e-9, 0.1, 10.0):
        assert (scores > threshold + step).sum() <= (scores > threshold).sum()
    # The next lower observed score would allow too many
    lower = scores[scores < threshold]
    if lower.size:
        assert (scores > lower.max()).sum() > allowed


@pytest.mark.parametrize("scores, fpr", [([], 0.01), ([1.0], 0.0), ([1.0], 1.0)])
def test_calibrate_threshold_rejects(scores, fpr):
    with pytest.raises(DomainError):
        calibrate_threshold(scores, fpr)


def test_label_records(grid_topology):
    catalog = make_catalog(grid_topology, 1, [2, 4, 5])
    records = make_records(
        [
            (0, [(2, -90.0), (4, -95.0)]),
            (0, [(5, -91.0)]),
            (1, [(2, -90.0), (12, -97.0)]),
        ]
    )
    labels = label_records(records, 5, catalog)
    assert [(label.is_tp, label.is_static) for label in labels] == [
        (False, False),
        (True, False),
        (False, True),
    ]
    # Static novelty of the false cell itself
    assert label_records(records, 12, catalog)[2] == RecordLabel(
        record_id=2, is_tp=True, is_static=True
    )
    assert not any(label.is_tp for label in label_records(records, None, catalog))


def _labels(pairs):
    return [RecordLabel(record_id=i, is_tp=tp, is_static=st) for i, (tp, st) in enumerate(pairs)]


def test_recall_report_counts():
    labels = _labels(
        [
            (True, False),
            (True, False),
            (True, True),
            (False, False),
            (False, False),
            (False, False),
            (False, True),
            (True, False),
        ]
    )
    scores = [0.9, 0.2, 0.1, 0.6, 0.1, 0.1, 0.1, 0.7]
    report = recall_report(scores, 0.5, labels, 1, FeatureScheme.col, DetectorKind.adf, 5)
    assert report.tp == 4
    assert report.static == 1
    assert report.fn == 1
    assert report.recall_with_static == pytest.approx(3 / 4)
    assert report.recall_without_static == pytest.approx(2 / 3)
    assert report.fp == 1
    assert report.n_benign == 4
    assert report.benign_fpr_achieved == pytest.approx(1 / 4)
    assert report.benign_fpr_with_static == pytest.approx(2 / 4)


def test_recall_report_without_false_records():
    labels = _labels([(False, False), (False, False)])
    report = recall_report([0.1, 0.9], 0.5, labels, 1, FeatureScheme.col, DetectorKind.ae)
    assert report.tp == 0
    assert report.recall_with_static is None
    assert report.recall_without_static is None
    assert report.benign_fpr_achieved == pytest.approx(0.5)


def test_static_novelty_counts_whatever_the_score():
    labels = _labels([(True, True), (True, True)])
    report = recall_report([0.0, 0.0], math.inf, labels, 1, FeatureScheme.xy, DetectorKind.rc)
    assert report.recall_with_static == 1.0
    assert report.recall_without_static is None


def test_timeline_is_ordered():
    labels = _labels([(False, False), (True, False), (True, True)])
    timeline = export_timeline(
        [0.2, 0.8, 0.1], labels, [3.0, 1.0, 1.0], serving_pci=2, threshold=0.5, ue_ids=[4, 5, 6]
    )
    assert [e.record_id for e in timeline.entries] == [1, 2, 0]
    assert [e.flagged for e in timeline.entries] == [True, False, False]
    assert [e.ue_id for e in timeline.entries] == [5, 6, 4]
    assert [e.record_id for e in timeline.tp_entries()] == [1, 2]


def _result(serving_pci, threshold, entries):
    return ServingResult(
        serving_pci=serving_pci,
        threshold=threshold,
        timeline=ScoreTimeline(
            entries=[
                TimelineEntry(
                    record_id=i,
                    time_s=t,
                    serving_pci=serving_pci,
                    ue_id=ue,
                    score=score,
                    flagged=score > threshold,
                    is_static=static,
                    contains_false_pci=tp,
                )
                for i, (t, ue, score, static, tp) in enumerate(entries)
            ]
        ),
    )


def test_aggregate_false_cell():
    results = [
        # Heard at t=0, 1 and 2; flags t=0
        _result(1, 0.5, [(0.0, 1, 0.9, False, True), (1.0, 1, 0.1, False, True), (2.0, 1, 0.1, False, True)]),
        # Heard at t=1 and 2; a static novelty at t=2
        _result(2, 0.5, [(1.2, 2, 0.2, False, True), (2.5, 3, 0.1, True, True)]),
        # Heard at t=2 only, and a benign flag at t=3 that must not count
        _result(3, 0.5, [(2.1, 4, 0.1, False, True), (3.0, 4, 0.9, False, False)]),
    ]
    report = aggregate_false_cell(results, [0.0, 1.0, 2.0, 3.0, 4.0], 1.0, false_pci=7)
    buckets = {b.bucket: b for b in report.buckets}
    assert buckets[VisibilityBucket.one].positions == 1
    assert buckets[VisibilityBucket.one].detected == 1
    assert buckets[VisibilityBucket.two].positions == 1
    assert buckets[VisibilityBucket.two].detected == 0
    assert buckets[VisibilityBucket.two].D == 0.0
    assert buckets[VisibilityBucket.more].positions == 1
    assert buckets[VisibilityBucket.more].D == 1.0
    assert buckets[VisibilityBucket.more].D_no_static == 0.0
    # Positions 3 and 4 nobody heard
    assert report.visible_positions == 3


def test_aggregate_ignores_reports_off_the_trajectory():
    results = [_result(1, 0.5, [(9.0, 1, 0.9, False, True)])]
    report = aggregate_false_cell(results, [0.0, 1.0], 1.0)
    assert report.visible_positions == 0
    assert all(b.D is None for b in report.buckets)


def test_aggregated_frame():
    report = aggregate_false_cell(
        [_result(1, 0.5, [(0.0, 1, 0.9, False, True)])],
        [0.0],
        false_pci=3,
        scheme=FeatureScheme.col,
        detector=DetectorKind.adf,
    )
    frame = aggregated_reports_to_frame([report])
    assert list(frame["visibility"]) == ["1", "2", ">2"]
    assert list(frame["positions"]) == [1, 0, 0]
    assert frame["D"][0] == 1.0
    assert frame["scheme"][0] == "col"


def test_recall_frame():
    labels = _labels([(True, False), (False, False)])
    report = recall_report([0.9, 0.1], 0.5, labels, 1, FeatureScheme.col, DetectorKind.adf, 5)
    frame = recall_reports_to_frame([report])
    assert frame["detector"][0] == "adf"
    assert frame["recall_with_static"][0] == 1.0


def test_corroboration():
    results = [
        _result(1, 0.5, [(0.1, 1, 0.9, False, True), (0.7, 2, 0.8, False, True), (5.0, 1, 0.1, False, False)]),
        _result(2, 0.5, [(0.5, 3, 0.1, True, True), (3.2, 4, 0.9, False, False)]),
    ]
    rows = corroboration(results, bin_s=1.0)
    assert [(r.time_bin, r.n_flagged, r.n_serving_cells, r.n_ues) for r in rows] == [
        (0, 3, 2, 3),
        (3, 1, 1, 1),
    ]
    assert corroboration([]) == []


def test_roc_auc():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [False, False, True, True]) == 1.0
    assert roc_auc([0.9, 0.8, 0.2, 0.1], [False, False, True, True]) == 0.0
    assert roc_auc([0.5, 0.5], [False, True]) == 0.5
    assert roc_auc([0.1, 0.2], [False, False]) is None


def test_holdout_report():
    labels = _labels([(False, False), (False, False), (False, True), (False, False)])
    report = holdout_report([0.1, 0.9, 0.2, 0.5], 0.5, labels, 3, FeatureScheme.col, DetectorKind.adf)
    # Ties at the threshold are not false positives
    assert report.fp == 1
    assert report.n_records == 4
    assert report.fpr == pytest.approx(0.25)
    assert report.fpr_with_static == pytest.approx(0.5)
    empty = holdout_report([], 0.5, [], 3, FeatureScheme.col, DetectorKind.adf)
    assert empty.fpr is None


def test_holdout_report_refuses_false_records():
    with pytest.raises(AssertionError):
        holdout_report([0.1], 0.5, _labels([(True, False)]), 3, FeatureScheme.col, DetectorKind.adf)


def _scores(rows):
    return pd.DataFrame(rows, columns=["scenario", "scheme", "detector", "score", "is_tp"])


def test_score_gaps():
    scores = _scores(
        [
            ("attack_05", "col", "adf", 0.9, True),
            ("attack_05", "col", "adf", 0.1, False),
            ("attack_05", "col", "adf", 0.3, False),
            ("attack_05", "col", "adf", math.inf, False),
            ("attack_06", "col", "adf", 0.1, True),
            ("attack_06", "col", "adf", 0.5, False),
            ("attack_07", "col", "adf", 0.5, False),
        ]
    )
    gaps = {gap.scenario: gap for gap in score_gaps(scores)}
    assert gaps["attack_05"].mean_tp_score == pytest.approx(0.9)
    # The infinite score is left out
    assert gaps["attack_05"].mean_benign_score == pytest.approx(0.2)
    assert gaps["attack_05"].gap == pytest.approx(0.7)
    assert gaps["attack_06"].gap == pytest.approx(-0.4)
    assert gaps["attack_07"].mean_tp_score is None
    assert gaps["attack_07"].gap is None
    assert gaps["attack_05"].scheme == FeatureScheme.col
    assert score_gaps(_scores([])) == []


def _summary_inputs():
    recall = recall_reports_to_frame(
        [
            recall_report(
                [0.9, 0.1, 0.6, 0.1],
                0.5,
                _labels([(True, False), (False, False), (False, False), (False, False)]),
                1,
                FeatureScheme.col,
                DetectorKind.adf,
                5,
            ),
            recall_report(
                [0.1, 0.1], 0.5, _labels([(False, False)] * 2), 2, FeatureScheme.col, DetectorKind.adf, 5
            ),
            recall_report(
                [0.1, 0.7], 0.5, _labels([(False, False)] * 2), 1, FeatureScheme.col, DetectorKind.adf, 6
            ),
        ]
    )
    holdout = holdout_reports_to_frame(
        [
            holdout_report(
                [0.1, 0.9, 0.2, 0.3], 0.5, _labels([(False, False)] * 4), 1, FeatureScheme.col, DetectorKind.adf
            ),
            holdout_report([0.1] * 4, 0.5, _labels([(False, False)] * 4), 2, FeatureScheme.col, DetectorKind.adf),
        ]
    )
    return recall, holdout


def test_serving_fprs_pool_over_scenarios():
    recall, holdout = _summary_inputs()
    cells = serving_fprs(recall, holdout).set_index("serving_pci")
    assert cells.loc[1, "fp"] == 2
    assert cells.loc[1, "n_benign"] == 5
    assert cells.loc[1, "benign_fpr"] == pytest.approx(2 / 5)
    assert cells.loc[2, "benign_fpr"] == 0.0
    assert cells.loc[1, "holdout_fpr"] == pytest.approx(0.25)
    assert cells.loc[2, "holdout_fpr"] == 0.0
    assert serving_fprs(recall.iloc[0:0]).empty


def test_summarize():
    recall, holdout = _summary_inputs()
    aggregated = aggregated_reports_to_frame(
        [
            aggregate_false_cell(
                [_result(1, 0.5, [(0.0, 1, 0.9, False, True), (1.0, 1, 0.1, False, True)])],
                [0.0, 1.0],
                false_pci=5,
                scheme=FeatureScheme.col,
                detector=DetectorKind.adf,
            )
        ]
    )
    gaps = score_gaps_to_frame(
        score_gaps(
            _scores(
                [
                    ("attack_05", "col", "adf", 0.9, True),
                    ("attack_05", "col", "adf", 0.1, False),
                    ("attack_06", "col", "adf", 0.4, True),
                    ("attack_06", "col", "adf", 0.3, False),
                ]
            )
        )
    )
    summary = Reporter.summarize(recall, aggregated, holdout, gaps)
    assert len(summary) == 1
    row = summary.iloc[0]
    assert (row["scheme"], row["detector"]) == ("col", "adf")
    assert row["mean_detection"] == pytest.approx(0.5)
    assert row["min_cell_fpr"] == 0.0
    assert row["max_cell_fpr"] == pytest.approx(2 / 5)
    assert row["mean_holdout_fpr"] == pytest.approx(0.125)
    assert row["min_holdout_fpr"] == 0.0
    assert row["max_holdout_fpr"] == pytest.approx(0.25)
    assert row["min_score_gap"] == pytest.approx(0.1)

    # Without holdout or gaps the columns are there but empty
    bare = Reporter.summarize(recall, aggregated)
    assert list(bare.columns) == list(summary.columns)
    assert bare["min_score_gap"].isna().all()


def test_visibility_counts_only_cells_with_models():
    heard_by_1 = _result(1, 0.5, [(0.0, 1, 0.1, False, True)])
    heard_by_2 = _result(2, 0.5, [(0.2, 2, 0.9, False, True)])
    both = aggregate_false_cell([heard_by_1, heard_by_2], [0.0])
    assert {b.bucket: b.positions for b in both.buckets}[VisibilityBucket.two] == 1
    # Without a model for cell 2 the position is seen once and goes undetected
    alone = aggregate_false_cell([heard_by_1], [0.0])
    one = {b.bucket: b for b in alone.buckets}[VisibilityBucket.one]
    assert (one.positions, one.detected) == (1, 0)
