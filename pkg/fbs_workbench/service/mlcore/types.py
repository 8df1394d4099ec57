from typing import Literal

from pydantic import Field, validator

from fbs_workbench.base.types import FloatArray, IntArray, WorkbenchBaseModel

# All public imports should be done through fbs_workbench.types.mlcore
__all__: list = []


class KMeansModel(WorkbenchBaseModel):
    k: int = Field(ge=1)
    # One row per centroid
    centroids: FloatArray
    seed: int
    n_iter: int = 0
    # Within-cluster sum of squares after each Lloyd iteration
    inertia_history: list[float] = []


class RegressionTree(WorkbenchBaseModel):
    """
    Flat array form of a binary regression tree. Node 0 is the root; `feature` is -1 for leaves. Rows with
    x[feature] <= threshold go left.
    """

    feature: IntArray
    threshold: FloatArray
    left: IntArray
    right: IntArray
    value: FloatArray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


class ForestParams(WorkbenchBaseModel):
    n_trees: int = Field(100, ge=1)
    # None grows until leaves are pure or too small to split
    max_depth: int | None = Field(16, ge=1)
    min_leaf: int = Field(2, ge=1)
    max_features: Literal["sqrt", "all"] = "sqrt"
    bootstrap: bool = True


class RandomForestRegressor(WorkbenchBaseModel):
    params: ForestParams
    seed: int
    n_features: int
    trees: list[RegressionTree]


class DenseNet(WorkbenchBaseModel):
    """
    Fully connected network, `weights[i]` has shape (layer_sizes[i], layer_sizes[i + 1]). Hidden layers use
    `activation`; the output layer is linear.
    """

    layer_sizes: list[int]
    activation: Literal["tanh", "linear"] = "tanh"
    weights: list[FloatArray]
    biases: list[FloatArray]
    # Training MSE at the end of each epoch
    loss_history: list[float] = []

    @validator("layer_sizes")
    def _self_mapping(cls, value: list[int]) -> list[int]:
        assert len(value) >= 2 and all(size >= 1 for size in value)
        return value


class AdamTrainConfig(WorkbenchBaseModel):
    epochs: int = Field(150, ge=1)
    batch_size: int = Field(50, ge=1)
    lr0: float = Field(0.002, gt=0)
    # The learning rate is multiplied by lr_decay every lr_step_epochs epochs
    lr_decay: float = Field(0.8, gt=0, le=1)
    lr_step_epochs: int = Field(50, ge=1)
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
