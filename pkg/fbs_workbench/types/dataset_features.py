from fbs_workbench.service.dataset_features.types import (
    DatasetSummaryRow,
    FeatureMatrix,
    FeatureMeta,
    FeatureScheme,
    ImputedMatrix,
    ImputePolicy,
    NeighborCatalog,
    ReportRecord,
)

__all__ = [
    "DatasetSummaryRow",
    "FeatureMatrix",
    "FeatureMeta",
    "FeatureScheme",
    "ImputedMatrix",
    "ImputePolicy",
    "NeighborCatalog",
    "ReportRecord",
]
