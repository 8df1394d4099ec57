from fbs_workbench.service.mlcore.types import (
    AdamTrainConfig,
    DenseNet,
    ForestParams,
    KMeansModel,
    RandomForestRegressor,
    RegressionTree,
)

__all__ = [
    "AdamTrainConfig",
    "DenseNet",
    "ForestParams",
    "KMeansModel",
    "RandomForestRegressor",
    "RegressionTree",
]
