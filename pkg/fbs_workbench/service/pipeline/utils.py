import os

import yaml
from pydantic import ValidationError

from fbs_workbench.base.exceptions import ConfigError
from fbs_workbench.base.utils import scenario_label
from fbs_workbench.service.dataset_features.types import FeatureScheme
from fbs_workbench.service.detectors.types import DetectorKind
from fbs_workbench.service.pipeline.types import PipelineConfig, ScenarioRun, Split
from fbs_workbench.service.radio_sim.types import (
    AttackScenario,
    BenignScenario,
    FalseCellScript,
)
from fbs_workbench.service.radio_sim.utils import build_grid_topology

PRESET_DIR = os.path.join(os.path.dirname(__file__), "..", "..", "presets")

PRESETS = ("full", "desk")


def preset_path(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset {name!r}, choose one of {', '.join(PRESETS)}")
    return os.path.normpath(os.path.join(PRESET_DIR, f"{name}.yaml"))


def load_config(path: str | None = None) -> PipelineConfig:
    """
    Read a pipeline config from YAML. `path` may also name a bundled preset ("full" or "desk"); without a path the
    full preset is used.
    """
    if path is None or path in PRESETS:
        path = preset_path(path or "full")
    if not os.path.exists(path):
        raise ConfigError(f"Config file {path} does not exist")
    with open(path, encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Config file {path} is not valid YAML: {e}")
    try:
        return PipelineConfig.parse_obj(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}: {e}")


def _parse_scenario(value: str) -> list[int]:
    if value == "benign":
        return []
    try:
        return [int(value.removeprefix("attack_"))]
    except ValueError:
        raise ConfigError(f"Scenario must be 'benign' or a PCI, got {value!r}")


def apply_overrides(
    config: PipelineConfig,
    seed: int | None = None,
    scenario: str | None = None,
    features: str | None = None,
    model: str | None = None,
    fpr: float | None = None,
    output_dir: str | None = None,
    workers: int | None = None,
) -> PipelineConfig:
    """
    Command line flags on top of a loaded config, re-validated as a whole
    """
    data = config.dict()
    if seed is not None:
        data["sim"]["seed"] = seed
    if scenario is not None:
        data["scenarios"]["false_cells"] = _parse_scenario(scenario)
    if features is not None:
        data["schemes"] = [features]
    if model is not None:
        data["detectors"] = [model]
    if fpr is not None:
        data["target_fpr"] = fpr
    if output_dir is not None:
        data["output_dir"] = output_dir
    if workers is not None:
        data["workers"] = workers
    try:
        return PipelineConfig.parse_obj(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid override: {e}")


def plan_scenarios(config: PipelineConfig) -> list[ScenarioRun]:
    """
    The benign training run, then per false cell its attack (test) run and its validation run, and last the benign
    holdout run.

    The false cell starts out at the site of the cell it replaces.
    """
    plan = config.scenarios
    sites = {cell.pci: cell.position for cell in build_grid_topology(config.sim.grid)}
    runs = [
        ScenarioRun(
            label=scenario_label("benign"),
            split=Split.train,
            sim=config.sim,
            scenario=BenignScenario(),
        )
    ]
    for pci in plan.false_cells:
        attack = AttackScenario(
            decommissioned_pci=pci,
            script=FalseCellScript(
                pci=pci,
                start_position=sites[pci],
                dwell_s=plan.dwell_s,
                height_m=plan.false_height_m,
                tx_power_dbm=plan.false_tx_power_dbm,
                waypoints=plan.waypoints,
                travel_s=plan.travel_s,
            ),
        )
        runs.append(
            ScenarioRun(
                label=scenario_label("attack", pci),
                split=Split.test,
                sim=config.sim.copy(
                    update={
                        "seed": plan.attack_seed,
                        "n_ues": plan.attack_n_ues,
                        "duration_s": plan.dwell_s + plan.travel_s,
                    }
                ),
                scenario=attack,
            )
        )
        runs.append(
            ScenarioRun(
                label=scenario_label("validation", pci),
                split=Split.validation,
                sim=config.sim.copy(
                    update={
                        "seed": plan.validation_seed,
                        "n_ues": plan.attack_n_ues
                        if plan.validation_n_ues is None
                        else plan.validation_n_ues,
                        "duration_s": plan.dwell_s,
                    }
                ),
                scenario=attack,
            )
        )
    runs.append(
        ScenarioRun(
            label=scenario_label("holdout"),
            split=Split.holdout,
            sim=config.sim.copy(
                update={
                    "seed": plan.attack_seed,
                    "n_ues": plan.attack_n_ues,
                    "duration_s": plan.holdout_s,
                }
            ),
            scenario=BenignScenario(),
        )
    )
    return runs


def split_runs(config: PipelineConfig, split: Split) -> list[ScenarioRun]:
    return [run for run in plan_scenarios(config) if run.split == split]


def model_name(serving_pci: int, scheme: FeatureScheme, detector: DetectorKind) -> str:
    return f"serving_{serving_pci:02d}_{scheme.value}_{detector.value}"


def features_name(serving_pci: int, scheme: FeatureScheme) -> str:
    return f"serving_{serving_pci:02d}_{scheme.value}"
