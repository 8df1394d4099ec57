from enum import Enum

import numpy as np
from pydantic import Field, validator

from fbs_workbench.base.types import FloatArray, IntArray, Position, WorkbenchBaseModel

# All public imports should be done through fbs_workbench.types.dataset_features
__all__: list = []

# The two leading columns shared by every scheme
PREFIX_COLUMNS = ["serving_rsrp", "n_neighbors"]


class ReportRecord(WorkbenchBaseModel):
    """
    A measurement report reduced to what the detectors use: RSRQ is dropped, and neighbors are (pci, rsrp_dbm) pairs
    """

    record_id: int
    time_s: float
    ue_id: int
    serving_pci: int
    serving_rsrp_dbm: float
    neighbor_list: list[tuple[int, float]]

    @property
    def neighbor_pcis(self) -> set[int]:
        return {pci for pci, _ in self.neighbor_list}


class NeighborCatalog(WorkbenchBaseModel):
    """
    What a serving cell learned about its neighborhood during training: which PCIs it has seen as neighbors and the
    most neighbors seen in one report. Positions are kept for the whole legitimate topology, since test reports may
    name PCIs that were never seen here.
    """

    serving_pci: int
    serving_position: Position
    known_neighbors: list[int] = []
    neighbor_positions: dict[int, Position] = {}
    max_concurrent_neighbors: int = Field(0, ge=0)
    training_size: int = Field(0, ge=0)

    @validator("known_neighbors")
    def _sorted_unique(cls, value: list[int]) -> list[int]:
        return sorted(set(value))


class FeatureScheme(str, Enum):
    col = "col"
    dst = "dst"
    xy = "xy"


class FeatureMatrix(WorkbenchBaseModel):
    """
    Per serving cell feature rows. Missing entries are NaN in `values`, so `missing_mask` is exact.
    """

    scheme: FeatureScheme
    serving_pci: int
    column_names: list[str]
    values: FloatArray
    record_ids: IntArray
    times: FloatArray

    @validator("values")
    def _two_dimensional(cls, value: np.ndarray, values) -> np.ndarray:
        if value.ndim == 1 and value.size == 0:
            value = value.reshape(0, len(values.get("column_names", [])))
        assert value.ndim == 2, "Feature values must be a matrix"
        return value

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


class ImputePolicy(WorkbenchBaseModel):
    """
    How missing entries are filled before the detectors see them.

    `fill_value` puts `value` everywhere. `per_column_min_minus` puts each column's observed minimum minus `value`;
    `column_fill` holds those resolved fills once fitted on training data, so test data is filled the same way.
    """

    class Kind(str, Enum):
        fill_value = "fill_value"
        per_column_min_minus = "per_column_min_minus"

    kind: Kind = Kind.fill_value
    value: float = 0.0
    column_fill: list[float] | None = None


class ImputedMatrix(WorkbenchBaseModel):
    scheme: FeatureScheme
    serving_pci: int
    column_names: list[str]
    values: FloatArray
    missing_mask: np.ndarray
    record_ids: IntArray
    policy: ImputePolicy


class FeatureMeta(WorkbenchBaseModel):
    """
    Sidecar of a features CSV
    """

    scheme: FeatureScheme
    serving_pci: int
    catalog_pcis: list[int]
    max_concurrent_neighbors: int
    impute_policy: ImputePolicy
    rsrp_unit: str = "dBm"
    n_rows: int


class DatasetSummaryRow(WorkbenchBaseModel):
    """
    Per serving cell dataset statistics
    """

    serving_pci: int
    training_size: int
    neighbors_in_training: str
    validation_size: int
    test_size: int
    anomalies: int
    static_anomalies: int
