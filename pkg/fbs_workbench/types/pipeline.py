from fbs_workbench.service.pipeline.types import (
    PipelineConfig,
    ScenarioPlan,
    ScenarioRun,
    Split,
)

__all__ = ["PipelineConfig", "ScenarioPlan", "ScenarioRun", "Split"]
