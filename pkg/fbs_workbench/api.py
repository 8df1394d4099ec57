from fbs_workbench.service.dataset_features.api import FeatureExtractor
from fbs_workbench.service.detectors.api import DetectorTrainer
from fbs_workbench.service.eval.api import Evaluator, Reporter
from fbs_workbench.service.pipeline.api import Pipeline
from fbs_workbench.service.pipeline.utils import load_config
from fbs_workbench.service.radio_sim.api import RadioSimulator

__all__ = [
    "DetectorTrainer",
    "Evaluator",
    "FeatureExtractor",
    "Pipeline",
    "RadioSimulator",
    "Reporter",
    "load_config",
]
