import json
import os

from fbs_workbench.base.api import Workbench
from fbs_workbench.base.logging import log
from fbs_workbench.base.tools import read_frame, write_frame
from fbs_workbench.service.pipeline.types import ScenarioRun
from fbs_workbench.service.pipeline.utils import plan_scenarios
from fbs_workbench.service.radio_sim.types import CellSite, MeasurementReport
from fbs_workbench.service.radio_sim.utils import (
    frame_to_reports,
    frame_to_topology,
    reports_to_frame,
    run_scenario,
    scenario_topology,
    topology_to_frame,
)

REPORTS_FILE = "reports.csv"
TOPOLOGY_FILE = "topology.csv"


class RadioSimulator(Workbench):
    """
    Simulates the scenarios of the plan into sim/<scenario>/
    """

    stage = "simulate"

    def _hashed_config(self) -> dict:
        return {
            "sim": json.loads(self.config.sim.json()),
            "scenarios": json.loads(self.config.scenarios.json()),
        }

    def scenario_dir(self, label: str) -> str:
        return self._path("sim", label)

    def simulate(self, run: ScenarioRun) -> str:
        """
        Write reports.csv, topology.csv and the manifest of one scenario, and return its directory
        """
        directory = self.scenario_dir(run.label)
        log("info", "Simulating", stage=self.stage, scenario=run.label)
        reports = run_scenario(run.sim, run.scenario)
        topology = scenario_topology(run.sim, run.scenario)
        write_frame(
            reports_to_frame(reports, run.sim.max_neighbors_per_report),
            os.path.join(directory, REPORTS_FILE),
        )
        write_frame(topology_to_frame(topology), os.path.join(directory, TOPOLOGY_FILE))
        self._write_manifest(
            directory,
            {
                "scenario": run.label,
                "kind": run.scenario.kind,
                "split": run.split.value,
                "seed": run.sim.seed,
                "decommissioned_pci": run.false_pci,
                "n_reports": len(reports),
                "artifacts": [REPORTS_FILE, TOPOLOGY_FILE],
            },
        )
        return directory

    def run(
        self, labels: list[str] | None = None, skip_current: bool = False
    ) -> list[str]:
        runs = plan_scenarios(self.config)
        if labels is not None:
            runs = [run for run in runs if run.label in labels]
        if skip_current:
            runs = [
                run for run in runs if not self.is_current(self.scenario_dir(run.label))
            ]
        return self._map(self.simulate, runs)

    def load_reports(self, label: str) -> list[MeasurementReport]:
        path = self._require(
            os.path.join(self.scenario_dir(label), REPORTS_FILE), f"reports of {label}"
        )
        return frame_to_reports(read_frame(path))

    def load_topology(self, label: str) -> list[CellSite]:
        path = self._require(
            os.path.join(self.scenario_dir(label), TOPOLOGY_FILE), f"topology of {label}"
        )
        return frame_to_topology(read_frame(path))
