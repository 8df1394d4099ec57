from enum import Enum

from pydantic import Field, root_validator, validator

from fbs_workbench.base.types import Position, WorkbenchBaseModel
from fbs_workbench.service.dataset_features.types import FeatureScheme, ImputePolicy
from fbs_workbench.service.detectors.types import AdfParams, DetectorKind, RcParams
from fbs_workbench.service.mlcore.types import AdamTrainConfig
from fbs_workbench.service.radio_sim.types import (
    AttackScenario,
    BenignScenario,
    FalseCellScript,
    SimConfig,
)

# All public imports should be done through fbs_workbench.types.pipeline
__all__: list = []


class ScenarioPlan(WorkbenchBaseModel):
    """
    Which cells take turns as the false cell, and how the attack and validation runs differ from training.

    Every attack decommissions one cell and lets a false cell with the same PCI dwell at the decommissioned site before
    travelling along `waypoints`. The matching validation run stops when the dwell ends. The holdout run is a benign
    network with the attack seed, kept apart to measure the false positive rate the calibrated thresholds achieve.
    """

    false_cells: list[int] = list(range(1, 13))
    attack_seed: int = Field(9, ge=0)
    attack_n_ues: int = Field(100, ge=0)
    validation_seed: int = Field(5, ge=0)
    # Defaults to attack_n_ues
    validation_n_ues: int | None = Field(None, ge=0)
    dwell_s: float = Field(200.0, gt=0)
    travel_s: float = Field(120.0, ge=0)
    false_height_m: float = Field(2.0, gt=0)
    # 2 m high at 45.5 dBm is heard as far as the 25 m, 30 dBm cell it replaces at the default -98 dBm threshold
    false_tx_power_dbm: float = 45.5
    holdout_s: float = Field(600.0, gt=0)
    waypoints: list[Position] = FalseCellScript.__fields__["waypoints"].default

    @validator("false_cells")
    def _distinct(cls, value: list[int]) -> list[int]:
        assert len(set(value)) == len(value), "A cell can only be the false cell once"
        return value


class PipelineConfig(WorkbenchBaseModel):
    """
    Everything a pipeline run depends on. Read from YAML, where keys mirror the field names.
    """

    sim: SimConfig = SimConfig()
    scenarios: ScenarioPlan = ScenarioPlan()
    schemes: list[FeatureScheme] = [FeatureScheme.col]
    detectors: list[DetectorKind] = [DetectorKind.adf]
    impute: ImputePolicy = ImputePolicy()
    rc: RcParams = RcParams()
    adf: AdfParams = AdfParams()
    ae: AdamTrainConfig = AdamTrainConfig()
    model_seed: int = Field(0, ge=0)
    target_fpr: float = Field(0.005, gt=0, lt=1)
    # Width of the time bins that make up the false cell's positions
    position_bin_s: float = Field(1.0, gt=0)
    output_dir: str = "artifacts"
    workers: int = Field(1, ge=1)

    @root_validator(skip_on_failure=True)
    def _false_cells_in_topology(cls, values):
        n_cells = values["sim"].grid.n_cells
        unknown = [
            pci for pci in values["scenarios"].false_cells if not 1 <= pci <= n_cells
        ]
        assert not unknown, f"False cells {unknown} are not in the {n_cells}-cell grid"
        return values

    @property
    def combinations(self) -> list[tuple[FeatureScheme, DetectorKind]]:
        """
        (scheme, detector) pairs to train. Regression Clustering only runs on COL features.
        """
        return [
            (scheme, detector)
            for scheme in self.schemes
            for detector in self.detectors
            if detector != DetectorKind.rc or scheme == FeatureScheme.col
        ]


class Split(str, Enum):
    train = "train"
    validation = "validation"
    test = "test"
    holdout = "holdout"


class ScenarioRun(WorkbenchBaseModel):
    """
    One simulation of the plan: its directory name, the split its reports feed and what to simulate
    """

    label: str
    split: Split
    sim: SimConfig
    scenario: BenignScenario | AttackScenario = Field(discriminator="kind")

    @property
    def false_pci(self) -> int | None:
        if isinstance(self.scenario, AttackScenario):
            return self.scenario.decommissioned_pci
        return None
