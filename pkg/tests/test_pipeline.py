import json
import os

import pytest

from fbs_workbench.base.api import ArtifactExistsError
from fbs_workbench.base.exceptions import ConfigError, DependencyError
from fbs_workbench.base.tools import read_frame
from fbs_workbench.service.dataset_features.types import FeatureScheme
from fbs_workbench.service.detectors.api import DetectorTrainer
from fbs_workbench.service.detectors.types import DetectorKind
from fbs_workbench.service.eval.api import Evaluator, Reporter
from fbs_workbench.service.pipeline.api import Pipeline
from fbs_workbench.service.pipeline.types import PipelineConfig, ScenarioPlan, Split
from fbs_workbench.service.pipeline.utils import (
    apply_overrides,
    load_config,
    model_name,
    plan_scenarios,
    split_runs,
)


@pytest.mark.parametrize("name", ["full", "desk"])
def test_presets_load(name):
    config = load_config(name)
    assert config.scenarios.false_cells == list(range(1, 13))
    assert config.target_fpr == 0.005


def test_full_preset_values():
    config = load_config("full")
    assert config.sim.n_ues == 200
    assert config.sim.duration_s == 1000.0
    assert config.scenarios.attack_n_ues == 100
    assert config.adf.n_trees == 150
    assert set(config.detectors) == set(DetectorKind)


def test_unknown_key_is_a_config_error(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("sim:\n  n_ues: 10\n  colour: blue\n")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_broken_yaml_is_a_config_error(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("sim: [\n")
    with pytest.raises(ConfigError):
        load_config(str(path))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.yaml"))


def test_false_cells_must_exist():
    with pytest.raises(ValueError):
        PipelineConfig(scenarios=ScenarioPlan(false_cells=[13]))
    with pytest.raises(ValueError):
        ScenarioPlan(false_cells=[2, 2])


def test_apply_overrides():
    config = apply_overrides(
        PipelineConfig(),
        seed=11,
        scenario="7",
        features="xy",
        model="ae",
        fpr=0.01,
        output_dir="out",
        workers=3,
    )
    assert config.sim.seed == 11
    assert config.scenarios.false_cells == [7]
    assert config.schemes == [FeatureScheme.xy]
    assert config.detectors == [DetectorKind.ae]
    assert config.target_fpr == 0.01
    assert config.output_dir == "out"
    assert config.workers == 3
    assert apply_overrides(config, scenario="benign").scenarios.false_cells == []


def test_bad_overrides():
    with pytest.raises(ConfigError):
        apply_overrides(PipelineConfig(), scenario="somewhere")
    with pytest.raises(ConfigError):
        apply_overrides(PipelineConfig(), fpr=2.0)


def test_plan_scenarios():
    config = PipelineConfig(scenarios=ScenarioPlan(false_cells=[3, 8]))
    runs = plan_scenarios(config)
    assert [run.label for run in runs] == [
        "benign",
        "attack_03",
        "validation_03",
        "attack_08",
        "validation_08",
        "holdout",
    ]
    attack, validation = runs[1], runs[2]
    assert attack.false_pci == 3
    assert attack.sim.duration_s == 320.0
    assert attack.sim.seed == 9
    assert validation.sim.duration_s == 200.0
    assert validation.sim.seed == 5
    # The false cell starts at the site of the cell it replaces
    start = attack.scenario.script.start_position
    assert (start.x, start.y) == (1000.0, 0.0)
    assert runs[0].false_pci is None
    holdout = runs[-1]
    assert holdout.split == Split.holdout
    assert holdout.false_pci is None
    assert holdout.sim.seed == 9
    assert holdout.sim.n_ues == config.scenarios.attack_n_ues
    assert holdout.sim.duration_s == config.scenarios.holdout_s
    assert [run.label for run in split_runs(config, Split.validation)] == [
        "validation_03",
        "validation_08",
    ]


def test_combinations_only_run_rc_on_col():
    config = PipelineConfig(schemes=list(FeatureScheme), detectors=list(DetectorKind))
    combinations = config.combinations
    assert (FeatureScheme.col, DetectorKind.rc) in combinations
    assert (FeatureScheme.xy, DetectorKind.rc) not in combinations
    assert len(combinations) == 7


def test_missing_features_is_a_dependency_error(tiny_pipeline_config):
    with pytest.raises(DependencyError) as e:
        Pipeline(tiny_pipeline_config).train()
    assert e.value.stage == "train"
    assert e.value.exit_code == 3


@pytest.mark.parametrize(
    "cls, stage",
    [(DetectorTrainer, "train"), (Evaluator, "evaluate"), (Reporter, "report")],
)
def test_missing_upstream_artifacts_name_the_reading_stage(
    tiny_pipeline_config, cls, stage
):
    config = tiny_pipeline_config
    with pytest.raises(DependencyError) as e:
        cls(config.output_dir, config).run()
    assert e.value.stage == stage


def _read(path):
    with open(path, "rb") as f:
        return f.read()


@pytest.mark.slow
def test_pipeline_end_to_end(tiny_pipeline_config):
    config = tiny_pipeline_config
    out = config.output_dir
    written = Pipeline(config).run()
    assert written

    for label in ("benign", "attack_05", "validation_05", "holdout"):
        assert os.path.exists(os.path.join(out, "sim", label, "reports.csv"))
    with open(os.path.join(out, "features", "manifest.json")) as f:
        served = json.load(f)["catalogs"]
    assert served
    model = os.path.join(
        out, "models", f"{model_name(served[0], FeatureScheme.col, DetectorKind.adf)}.json"
    )
    assert os.path.exists(model)

    recall = read_frame(os.path.join(out, "reports", "recall_report.csv"))
    assert set(recall["false_pci"]) == {5}
    # Rates agree with the counts they come from
    rated = recall.dropna(subset=["benign_fpr_achieved"])
    assert list(rated["benign_fpr_achieved"]) == pytest.approx(
        list(rated["fp"] / rated["n_benign"])
    )
    assert (recall.loc[recall["n_benign"] == 0, "benign_fpr_achieved"].isna()).all()
    holdout = read_frame(os.path.join(out, "reports", "holdout_report.csv"))
    thresholds = read_frame(os.path.join(out, "reports", "thresholds.csv"))
    assert sorted(holdout["serving_pci"]) == sorted(thresholds["serving_pci"])
    heard = holdout[holdout["n_records"] > 0]
    assert not heard.empty
    assert list(heard["fpr"]) == pytest.approx(list(heard["fp"] / heard["n_records"]))
    assert (heard["fpr_with_static"] >= heard["fpr"]).all()
    assert holdout.loc[holdout["n_records"] == 0, "fpr"].isna().all()
    aggregated = read_frame(os.path.join(out, "reports", "aggregated_report.csv"))
    assert list(aggregated["visibility"]) == ["1", "2", ">2"]
    scores = read_frame(os.path.join(out, "reports", "scores.csv"))
    assert list(scores.columns[:3]) == ["scenario", "record_id", "time_s"]
    for name in ("summary.csv", "score_gaps.csv", "serving_fpr.csv"):
        assert os.path.exists(os.path.join(out, "reports", "summary", name))
    gaps = read_frame(os.path.join(out, "reports", "summary", "score_gaps.csv"))
    assert list(gaps["scenario"]) == ["attack_05"]

    # Nothing changed, so nothing is rebuilt
    assert Pipeline(config).run() == []

    # Models are only replaced on request
    with pytest.raises(ArtifactExistsError) as e:
        Pipeline(config).train()
    assert e.value.exit_code == 2

    # A forced rerun reproduces the reports byte for byte
    names = ("scores.csv", "recall_report.csv", "aggregated_report.csv")
    before = [_read(os.path.join(out, "reports", name)) for name in names]
    Pipeline(config, force=True).run()
    assert [_read(os.path.join(out, "reports", name)) for name in names] == before


@pytest.mark.slow
def test_desk_preset_acceptance(tmp_path):
    """
    The desk preset end to end: the network detects the false cell on most of its positions, every serving cell stays
    within [0.1%, 1%] false positives on benign reports, and reports naming the false PCI outscore the rest in every
    attack scenario
    """
    config = apply_overrides(load_config("desk"), output_dir=str(tmp_path / "desk"))
    Pipeline(config).run()
    summary_dir = os.path.join(config.output_dir, "reports", "summary")

    summary = read_frame(os.path.join(summary_dir, "summary.csv"))
    assert len(summary) == 1
    assert summary["mean_detection"][0] >= 0.6

    cells = read_frame(os.path.join(summary_dir, "serving_fpr.csv"))
    assert len(cells) == 12
    assert cells["benign_fpr"].between(0.001, 0.01).all(), cells
    # No false cell and no missing cell, so no more false positives than the attack runs' benign records
    assert (cells["holdout_fpr"] <= 0.01).all(), cells

    gaps = read_frame(os.path.join(summary_dir, "score_gaps.csv"))
    assert len(gaps) == 12
    assert (gaps["gap"] > 0).all(), gaps
