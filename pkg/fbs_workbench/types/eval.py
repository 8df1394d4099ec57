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

__all__ = [
    "AggregatedReport",
    "BucketResult",
    "CorroborationRow",
    "HoldoutReport",
    "RecallReport",
    "RecordLabel",
    "ScoreGap",
    "ScoreTimeline",
    "ServingResult",
    "TimelineEntry",
    "VisibilityBucket",
]
