from enum import Enum
from typing import Literal

from pydantic import Field

from fbs_workbench.base.types import FloatArray, IntArray, WorkbenchBaseModel
from fbs_workbench.service.dataset_features.types import FeatureScheme, ImputePolicy
from fbs_workbench.service.mlcore.types import (
    AdamTrainConfig,
    DenseNet,
    ForestParams,
    KMeansModel,
    RandomForestRegressor,
)

# All public imports should be done through fbs_workbench.types.detectors
__all__: list = []


class DetectorKind(str, Enum):
    rc = "rc"
    adf = "adf"
    ae = "ae"


class DetectorModel(WorkbenchBaseModel):
    """
    Shared contract of the novelty detectors: fitted on benign training features of one serving cell, each detector
    gives every feature row a real valued score, higher meaning more anomalous.

    `column_names` and `impute_policy` pin down the feature layout the model was trained on, and `catalog_pcis` the
    neighbors its serving cell saw during training.
    """

    kind: DetectorKind
    scheme: FeatureScheme
    serving_pci: int
    seed: int
    column_names: list[str]
    impute_policy: ImputePolicy
    catalog_pcis: list[int] = []
    threshold: float | None = None


class RcParams(WorkbenchBaseModel):
    k: int = Field(4, ge=1)
    # Cells observed in fewer training rows get no models
    min_records: int = Field(50, ge=1)
    forest: ForestParams = ForestParams()


class RcPairModel(WorkbenchBaseModel):
    """
    Models predicting the RSRP of `target_pci` from the other cells except `removed_pci`, one forest per cluster of
    the target RSRP
    """

    target_pci: int
    removed_pci: int
    target_column: int
    input_columns: list[int]
    kmeans: KMeansModel
    forests: list[RandomForestRegressor]


class RegressionClusteringModel(DetectorModel):
    kind: Literal[DetectorKind.rc] = DetectorKind.rc
    params: RcParams = RcParams()
    pairs: list[RcPairModel] = []
    # Catalog cells skipped for having fewer than min_records observations
    omitted_cells: list[int] = []


class RcVerdict(WorkbenchBaseModel):
    flagged: bool
    culprit: int | None = None


class AdfParams(WorkbenchBaseModel):
    n_trees: int = Field(150, ge=1)
    subsample: int = Field(512, ge=2)
    # Borders sit margin * (leaf range) outside the leaf's training points
    margin: float = Field(1.0, ge=0)
    # A node with at most isolation_level * subsample points becomes a leaf
    isolation_level: float = Field(0.05, gt=0, lt=1)
    max_depth: int = Field(14, ge=1)


class AdfTree(WorkbenchBaseModel):
    """
    Random split tree in flat array form. Rows with x[feature] < threshold go left. `leaf` maps a node to its row in
    `lower`/`upper`/`width` (-1 for internal nodes).
    """

    feature: IntArray
    threshold: FloatArray
    left: IntArray
    right: IntArray
    leaf: IntArray
    lower: FloatArray
    upper: FloatArray
    width: FloatArray


class AdfModel(DetectorModel):
    kind: Literal[DetectorKind.adf] = DetectorKind.adf
    params: AdfParams = AdfParams()
    n_features: int
    trees: list[AdfTree]


class AutoencoderModel(DetectorModel):
    kind: Literal[DetectorKind.ae] = DetectorKind.ae
    train_config: AdamTrainConfig = AdamTrainConfig()
    mean: FloatArray
    std: FloatArray
    net: DenseNet
