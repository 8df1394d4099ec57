from fbs_workbench.service.radio_sim.types import (
    AttackScenario,
    BenignScenario,
    CellSite,
    FalseCellScript,
    GridConfig,
    MeasurementReport,
    MobilityConfig,
    NeighborMeasurement,
    PropagationParams,
    Scenario,
    SimConfig,
    UeState,
)

__all__ = [
    "AttackScenario",
    "BenignScenario",
    "CellSite",
    "FalseCellScript",
    "GridConfig",
    "MeasurementReport",
    "MobilityConfig",
    "NeighborMeasurement",
    "PropagationParams",
    "Scenario",
    "SimConfig",
    "UeState",
]
