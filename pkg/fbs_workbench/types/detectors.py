from fbs_workbench.service.detectors.types import (
    AdfModel,
    AdfParams,
    AutoencoderModel,
    DetectorKind,
    DetectorModel,
    RcParams,
    RcVerdict,
    RegressionClusteringModel,
)

__all__ = [
    "AdfModel",
    "AdfParams",
    "AutoencoderModel",
    "DetectorKind",
    "DetectorModel",
    "RcParams",
    "RcVerdict",
    "RegressionClusteringModel",
]
