import numpy as np
import pytest

from fbs_workbench.base.types import Position
from fbs_workbench.service.dataset_features.types import (
    FeatureMatrix,
    FeatureScheme,
    NeighborCatalog,
    ReportRecord,
)
from fbs_workbench.service.detectors.types import AdfParams, DetectorKind
from fbs_workbench.service.pipeline.types import PipelineConfig, ScenarioPlan
from fbs_workbench.service.radio_sim.types import CellSite, SimConfig, UeState
from fbs_workbench.service.radio_sim.utils import build_grid_topology


@pytest.fixture
def grid_topology() -> list[CellSite]:
    return build_grid_topology(SimConfig().grid)


@pytest.fixture
def small_sim() -> SimConfig:
    return SimConfig(n_ues=8, duration_s=20.0, seed=3)


@pytest.fixture
def ue() -> UeState:
    return UeState(ue_id=0, position=Position(x=100.0, y=100.0), height_m=1.5, heading=0.0)


@pytest.fixture
def tiny_pipeline_config(tmp_path) -> PipelineConfig:
    """
    Small enough to run the whole pipeline in a test: one false cell, short runs, few trees
    """
    return PipelineConfig(
        sim=SimConfig(n_ues=30, duration_s=60.0, seed=1),
        scenarios=ScenarioPlan(
            false_cells=[5],
            attack_n_ues=30,
            dwell_s=20.0,
            travel_s=20.0,
            holdout_s=40.0,
        ),
        schemes=[FeatureScheme.col],
        detectors=[DetectorKind.adf],
        adf=AdfParams(n_trees=10, subsample=64),
        output_dir=str(tmp_path / "artifacts"),
    )


def make_records(rows: list[tuple[int, list[tuple[int, float]]]], serving_pci: int = 1):
    """
    ReportRecords from (ue_id, neighbor list) pairs, one second apart
    """
    return [
        ReportRecord(
            record_id=i,
            time_s=float(i),
            ue_id=ue_id,
            serving_pci=serving_pci,
            serving_rsrp_dbm=-80.0 - i,
            neighbor_list=neighbors,
        )
        for i, (ue_id, neighbors) in enumerate(rows)
    ]


def make_catalog(
    topology: list[CellSite], serving_pci: int, known: list[int], max_concurrent: int = 3
) -> NeighborCatalog:
    positions = {cell.pci: cell.position for cell in topology}
    return NeighborCatalog(
        serving_pci=serving_pci,
        serving_position=positions[serving_pci],
        known_neighbors=known,
        neighbor_positions=positions,
        max_concurrent_neighbors=max_concurrent,
        training_size=0,
    )


def make_matrix(values, scheme: FeatureScheme = FeatureScheme.col, names=None):
    values = np.asarray(values, dtype=np.float64)
    names = names or [f"f{j}" for j in range(values.shape[1])]
    return FeatureMatrix(
        scheme=scheme,
        serving_pci=1,
        column_names=names,
        values=values,
        record_ids=np.arange(len(values)),
        times=np.arange(len(values), dtype=np.float64),
    )
