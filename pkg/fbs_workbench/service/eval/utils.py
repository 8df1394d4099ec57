import math

import numpy as np
import pandas as pd

from fbs_workbench.base.exceptions import DomainError
from fbs_workbench.base.utils import optional_float
from fbs_workbench.service.dataset_features.types import (
    FeatureScheme,
    NeighborCatalog,
    ReportRecord,
)
from fbs_workbench.service.dataset_features.utils import flag_static
from fbs_workbench.service.detectors.types import DetectorKind
from fbs_workbench.service.eval.types import (
    AggregatedReport,
    BucketResult,
    CorroborationRow,
    HoldoutReport,
    RecallReport,
    RecordLabel,
    ScoreGap,
    ScoreTimeline,
    ServingResult,
    TimelineEntry,
    VisibilityBucket,
)


def calibrate_threshold(benign_scores, target_fpr: float) -> float:
    """
    Smallest observed score t with at most floor(n * target_fpr) scores strictly above it. Ties at t never count as
    exceedances, so the bound holds exactly on the calibration set.
    """
    scores = np.sort(np.asarray(benign_scores, dtype=np.float64))
    if scores.size == 0:
        raise DomainError("Cannot calibrate a threshold without benign scores")
    if not 0 < target_fpr < 1:
        raise DomainError(f"Target FPR must be in (0, 1), got {target_fpr}")
    allowed = math.floor(scores.size * target_fpr)
    return float(scores[scores.size - 1 - allowed])


def label_records(
    test_records: list[ReportRecord], false_pci: int | None, catalog: NeighborCatalog
) -> list[RecordLabel]:
    return [
        RecordLabel(
            record_id=record.record_id,
            is_tp=false_pci is not None and false_pci in record.neighbor_pcis,
            is_static=flag_static(record, catalog),
        )
        for record in test_records
    ]


def _ratio(numerator: int, denominator: int) -> float | None:
    return numerator / denominator if denominator else None


def recall_report(
    scores,
    threshold: float,
    labels: list[RecordLabel],
    serving_pci: int,
    scheme: FeatureScheme,
    detector: DetectorKind,
    false_pci: int | None = None,
) -> RecallReport:
    """
    Recall of the false cell's records at `threshold`. With static, a static novelty is detected whatever its score;
    without static, only the records the rule layer would not catch are counted and only the score decides.
    """
    scores = np.asarray(scores, dtype=np.float64)
    assert len(scores) == len(labels), "Scores and labels must be aligned"
    is_tp = np.array([label.is_tp for label in labels], dtype=bool)
    is_static = np.array([label.is_static for label in labels], dtype=bool)
    above = scores > threshold
    detected = above | is_static

    tp = int(is_tp.sum())
    hits = int((detected & is_tp).sum())
    plain = is_tp & ~is_static
    benign = ~is_tp
    return RecallReport(
        serving_pci=serving_pci,
        scheme=scheme,
        detector=detector,
        false_pci=false_pci,
        threshold=threshold,
        benign_fpr_achieved=_ratio(int((above & benign).sum()), int(benign.sum())),
        benign_fpr_with_static=_ratio(int((detected & benign).sum()), int(benign.sum())),
        recall_with_static=_ratio(hits, tp),
        recall_without_static=_ratio(int((above & plain).sum()), int(plain.sum())),
        tp=tp,
        fp=int((above & benign).sum()),
        fn=tp - hits,
        static=int((is_static & is_tp).sum()),
        n_benign=int(benign.sum()),
    )


def holdout_report(
    scores,
    threshold: float,
    labels: list[RecordLabel],
    serving_pci: int,
    scheme: FeatureScheme,
    detector: DetectorKind,
) -> HoldoutReport:
    scores = np.asarray(scores, dtype=np.float64)
    assert len(scores) == len(labels), "Scores and labels must be aligned"
    assert not any(label.is_tp for label in labels), "The holdout run has no false cell"
    above = scores > threshold
    is_static = np.array([label.is_static for label in labels], dtype=bool)
    return HoldoutReport(
        serving_pci=serving_pci,
        scheme=scheme,
        detector=detector,
        threshold=threshold,
        n_records=len(labels),
        fp=int(above.sum()),
        fpr=_ratio(int(above.sum()), len(labels)),
        fpr_with_static=_ratio(int((above | is_static).sum()), len(labels)),
    )


def score_gaps(scores: pd.DataFrame) -> list[ScoreGap]:
    """
    Per (scenario, scheme, detector) of a scores table: mean score of the records naming the false PCI and of the
    rest. Infinite scores are left out of the means.
    """
    if scores.empty:
        return []
    finite = scores.assign(score=scores["score"].replace([np.inf, -np.inf], np.nan))
    gaps = []
    for (scenario, scheme, detector), group in finite.groupby(
        ["scenario", "scheme", "detector"], sort=True
    ):
        is_tp = group["is_tp"].astype(bool)
        gaps.append(
            ScoreGap(
                scenario=scenario,
                scheme=scheme,
                detector=detector,
                mean_tp_score=optional_float(group.loc[is_tp, "score"].mean()),
                mean_benign_score=optional_float(group.loc[~is_tp, "score"].mean()),
            )
        )
    return gaps


def export_timeline(
    scores,
    labels: list[RecordLabel],
    times,
    serving_pci: int,
    threshold: float = math.inf,
    ue_ids=None,
) -> ScoreTimeline:
    scores = np.asarray(scores, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    assert len(scores) == len(labels) == len(times), "Timeline inputs must be aligned"
    entries = [
        TimelineEntry(
            record_id=label.record_id,
            time_s=float(time_s),
            serving_pci=serving_pci,
            ue_id=None if ue_ids is None else int(ue_ids[i]),
            score=float(score),
            flagged=bool(score > threshold),
            is_static=label.is_static,
            contains_false_pci=label.is_tp,
        )
        for i, (score, label, time_s) in enumerate(zip(scores, labels, times))
    ]
    entries.sort(key=lambda entry: (entry.time_s, entry.record_id))
    return ScoreTimeline(entries=entries)


def _time_bin(time_s: float, bin_s: float) -> int:
    # Guard against report times like 2.9999999 landing in the previous bin
    return int(math.floor(time_s / bin_s + 1e-9))


def aggregate_false_cell(
    per_serving_results: list[ServingResult],
    false_trajectory,
    position_bin_s: float = 1.0,
    false_pci: int = 0,
    scheme: FeatureScheme | None = None,
    detector: DetectorKind | None = None,
) -> AggregatedReport:
    """
    Bucket the false cell's positions, one per time bin of its trajectory, by how many serving cells heard it there.

    Visibility only counts the serving cells in `per_serving_results`, i.e. those with a trained model. A cell that
    heard the false PCI but has no model (too few training reports) neither adds to the visibility of a position nor
    detects it.

    `false_trajectory` holds the times (or (time, position) pairs) at which the false cell was on air.
    """
    assert position_bin_s > 0, "Position bins must have a positive width"
    times = [p[0] if isinstance(p, tuple) else p for p in false_trajectory]
    on_air = {_time_bin(float(t), position_bin_s) for t in times}
    visible: dict[int, set[int]] = {}
    detected: set[int] = set()
    detected_no_static: set[int] = set()
    for result in per_serving_results:
        for entry in result.timeline.entries:
            if not entry.contains_false_pci:
                continue
            position = _time_bin(entry.time_s, position_bin_s)
            if position not in on_air:
                continue
            visible.setdefault(position, set()).add(result.serving_pci)
            above = entry.score > result.threshold
            if above:
                detected_no_static.add(position)
            if above or entry.is_static:
                detected.add(position)

    buckets = {bucket: BucketResult(bucket=bucket) for bucket in VisibilityBucket}
    counts = {bucket: [0, 0, 0] for bucket in VisibilityBucket}
    for position, cells in visible.items():
        bucket = VisibilityBucket.of(len(cells))
        counts[bucket][0] += 1
        counts[bucket][1] += position in detected
        counts[bucket][2] += position in detected_no_static
    return AggregatedReport(
        false_pci=false_pci,
        scheme=scheme,
        detector=detector,
        buckets=[
            buckets[bucket].copy(
                update={
                    "positions": n,
                    "detected": hit,
                    "detected_no_static": hit_no_static,
                }
            )
            for bucket, (n, hit, hit_no_static) in counts.items()
        ],
    )


def timelines_to_frame(results: list[ServingResult]) -> pd.DataFrame:
    columns = list(TimelineEntry.__fields__)
    rows = [
        [getattr(entry, column) for column in columns]
        for result in results
        for entry in result.timeline.entries
    ]
    return pd.DataFrame(rows, columns=columns)


def corroboration(
    results: list[ServingResult], bin_s: float = 1.0
) -> list[CorroborationRow]:
    """
    Per time bin with flagged reports: how many serving cells and UEs those come from. A false base station tends to
    get flagged by several phones at once, while benign false positives stay isolated.
    """
    frame = timelines_to_frame(results)
    if frame.empty:
        return []
    frame = frame[frame["flagged"] | frame["is_static"]]
    if frame.empty:
        return []
    frame = frame.assign(
        time_bin=[_time_bin(t, bin_s) for t in frame["time_s"]],
        ue_id=frame["ue_id"].fillna(-1),
    )
    grouped = frame.groupby("time_bin").agg(
        n_flagged=("record_id", "size"),
        n_serving_cells=("serving_pci", "nunique"),
        n_ues=("ue_id", "nunique"),
    )
    return [
        CorroborationRow(time_bin=int(time_bin), **{k: int(v) for k, v in row.items()})
        for time_bin, row in grouped.iterrows()
    ]


def roc_auc(scores, labels) -> float | None:
    """
    Probability that a random positive outscores a random negative, ties counting half. None without both classes.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = pd.Series(scores).rank(method="average").to_numpy()
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def recall_reports_to_frame(reports: list[RecallReport]) -> pd.DataFrame:
    return pd.DataFrame(
        [json_row(report) for report in reports],
        columns=list(RecallReport.__fields__),
    )


def aggregated_reports_to_frame(reports: list[AggregatedReport]) -> pd.DataFrame:
    columns = [
        "false_pci",
        "scheme",
        "detector",
        "visibility",
        "positions",
        "D",
        "D_no_static",
    ]
    rows = [
        [
            report.false_pci,
            report.scheme.value if report.scheme else None,
            report.detector.value if report.detector else None,
            bucket.bucket.value,
            bucket.positions,
            bucket.D,
            bucket.D_no_static,
        ]
        for report in reports
        for bucket in report.buckets
    ]
    return pd.DataFrame(rows, columns=columns)


def json_row(model) -> dict:
    """
    Model fields with enums as their values, ready for a DataFrame row
    """
    return {
        key: value.value if hasattr(value, "value") else value
        for key, value in model.dict().items()
    }


def holdout_reports_to_frame(reports: list[HoldoutReport]) -> pd.DataFrame:
    return pd.DataFrame(
        [json_row(report) for report in reports],
        columns=list(HoldoutReport.__fields__),
    )


def score_gaps_to_frame(gaps: list[ScoreGap]) -> pd.DataFrame:
    return pd.DataFrame(
        [json_row(gap) | {"gap": gap.gap} for gap in gaps],
        columns=list(ScoreGap.__fields__) + ["gap"],
    )


def serving_fprs(recall: pd.DataFrame, holdout: pd.DataFrame | None = None) -> pd.DataFrame:
    """
    Per (scheme, detector, serving cell): false positives over the benign records of all attack runs pooled, and the
    cell's FPR on the holdout run
    """
    columns = ["scheme", "detector", "serving_pci", "fp", "n_benign", "benign_fpr", "holdout_fpr"]
    if recall.empty:
        return pd.DataFrame(columns=columns)
    pooled = recall.groupby(["scheme", "detector", "serving_pci"])[["fp", "n_benign"]].sum()
    pooled = pooled.assign(
        benign_fpr=(pooled["fp"] / pooled["n_benign"]).where(pooled["n_benign"] > 0)
    )
    if holdout is not None and not holdout.empty:
        pooled = pooled.join(
            holdout.set_index(["scheme", "detector", "serving_pci"])["fpr"].rename(
                "holdout_fpr"
            ),
            how="left",
        )
    return pooled.reindex(columns=columns[3:]).reset_index()[columns]
