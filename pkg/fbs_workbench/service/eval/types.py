from enum import Enum

from pydantic import Field

from fbs_workbench.base.types import WorkbenchBaseModel
from fbs_workbench.service.dataset_features.types import FeatureScheme
from fbs_workbench.service.detectors.types import DetectorKind

# All public imports should be done through fbs_workbench.types.eval
__all__: list = []


class RecordLabel(WorkbenchBaseModel):
    """
    Ground truth of one test record. `is_tp` when the false PCI is among its neighbors, `is_static` when it names a
    neighbor its serving cell never saw during training.
    """

    record_id: int
    is_tp: bool
    is_static: bool


class RecallReport(WorkbenchBaseModel):
    """
    Detection of one serving cell's model on one attack scenario.

    Recalls and FPRs are None where their denominator is empty, so "nothing to detect" never reads as "detected
    nothing".
    """

    serving_pci: int
    scheme: FeatureScheme
    detector: DetectorKind
    false_pci: int | None = None
    threshold: float
    # Score-only false positives over the records without the false PCI
    benign_fpr_achieved: float | None
    # Same, with the static novelty rule firing as well
    benign_fpr_with_static: float | None
    recall_with_static: float | None
    recall_without_static: float | None
    tp: int = Field(ge=0)
    fp: int = Field(ge=0)
    fn: int = Field(ge=0)
    static: int = Field(ge=0)
    n_benign: int = Field(ge=0)
    # Threshold-free separation of the false cell's records from the rest
    roc_auc: float | None = None


class TimelineEntry(WorkbenchBaseModel):
    record_id: int
    time_s: float
    serving_pci: int
    ue_id: int | None = None
    score: float
    # Score above the serving cell's threshold
    flagged: bool = False
    is_static: bool = False
    contains_false_pci: bool


class ScoreTimeline(WorkbenchBaseModel):
    """
    Scored test records ordered by time, one entry per record
    """

    entries: list[TimelineEntry] = []

    def tp_entries(self) -> list[TimelineEntry]:
        return [entry for entry in self.entries if entry.contains_false_pci]


class ServingResult(WorkbenchBaseModel):
    """
    What one serving cell's model made of an attack scenario
    """

    serving_pci: int
    threshold: float
    timeline: ScoreTimeline


class VisibilityBucket(str, Enum):
    one = "1"
    two = "2"
    more = ">2"

    @classmethod
    def of(cls, visibility: int) -> "VisibilityBucket":
        assert visibility >= 1, "Invisible positions have no bucket"
        if visibility == 1:
            return cls.one
        if visibility == 2:
            return cls.two
        return cls.more


class BucketResult(WorkbenchBaseModel):
    bucket: VisibilityBucket
    positions: int = Field(0, ge=0)
    detected: int = Field(0, ge=0)
    detected_no_static: int = Field(0, ge=0)

    @property
    def D(self) -> float | None:
        return self.detected / self.positions if self.positions else None

    @property
    def D_no_static(self) -> float | None:
        return self.detected_no_static / self.positions if self.positions else None


class AggregatedReport(WorkbenchBaseModel):
    """
    Detection of one false cell by the whole network: a position counts as detected when at least one serving cell
    that heard the false PCI there flagged a report
    """

    false_pci: int
    scheme: FeatureScheme | None = None
    detector: DetectorKind | None = None
    buckets: list[BucketResult] = [BucketResult(bucket=b) for b in VisibilityBucket]

    @property
    def visible_positions(self) -> int:
        return sum(b.positions for b in self.buckets)


class CorroborationRow(WorkbenchBaseModel):
    time_bin: int
    n_flagged: int
    n_serving_cells: int
    n_ues: int


class HoldoutReport(WorkbenchBaseModel):
    """
    False positives of one calibrated model on the benign holdout run, a network without a false cell that took no
    part in training or calibration
    """

    serving_pci: int
    scheme: FeatureScheme
    detector: DetectorKind
    threshold: float
    n_records: int = Field(ge=0)
    fp: int = Field(ge=0)
    fpr: float | None
    # Same, with the static novelty rule firing as well
    fpr_with_static: float | None


class ScoreGap(WorkbenchBaseModel):
    """
    Mean score of the records naming the false PCI against the mean score of the others, over all serving cells of one
    attack scenario
    """

    scenario: str
    scheme: FeatureScheme
    detector: DetectorKind
    mean_tp_score: float | None
    mean_benign_score: float | None

    @property
    def gap(self) -> float | None:
        if self.mean_tp_score is None or self.mean_benign_score is None:
            return None
        return self.mean_tp_score - self.mean_benign_score
