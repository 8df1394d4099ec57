import json
import os

from fbs_workbench.base.api import Workbench
from fbs_workbench.base.logging import log
from fbs_workbench.base.tools import read_frame, write_frame
from fbs_workbench.service.dataset_features.types import (
    FeatureMatrix,
    FeatureMeta,
    FeatureScheme,
    ImputePolicy,
    NeighborCatalog,
    ReportRecord,
)
from fbs_workbench.service.dataset_features.utils import (
    extract,
    feature_meta,
    fit_impute_policy,
    fit_neighbor_catalog,
    frame_to_matrix,
    matrix_to_frame,
    preprocess,
)
from fbs_workbench.service.pipeline.types import ScenarioRun, Split
from fbs_workbench.service.pipeline.utils import features_name, plan_scenarios
from fbs_workbench.service.radio_sim.api import RadioSimulator

TRAIN_DIR = "train"
CATALOG_DIR = "catalogs"


class FeatureExtractor(Workbench):
    """
    Turns simulated reports into per serving cell feature files.

    Catalogs and imputation are fitted on the benign training run only; validation and test runs are extracted with
    the catalog of their serving cell. Test reports served by a cell without a catalog are dropped.
    """

    stage = "extract"

    def _hashed_config(self) -> dict:
        return {
            "sim": json.loads(self.config.sim.json()),
            "scenarios": json.loads(self.config.scenarios.json()),
            "schemes": [scheme.value for scheme in self.config.schemes],
            "impute": json.loads(self.config.impute.json()),
        }

    @property
    def simulator(self) -> RadioSimulator:
        return self._upstream(RadioSimulator)

    def split_dir(self, split_name: str) -> str:
        return self._path("features", split_name)

    def catalog_path(self, serving_pci: int) -> str:
        return os.path.join(
            self._path("features", CATALOG_DIR), f"serving_{serving_pci:02d}.json"
        )

    def _write_matrix(
        self,
        split_name: str,
        matrix: FeatureMatrix,
        catalog: NeighborCatalog,
        policy: ImputePolicy,
    ) -> str:
        base = os.path.join(
            self.split_dir(split_name), features_name(matrix.serving_pci, matrix.scheme)
        )
        write_frame(matrix_to_frame(matrix), f"{base}.csv")
        feature_meta(matrix, catalog, policy).dump(f"{base}.meta.json")
        return f"{base}.csv"

    def records(self, label: str) -> dict[int, list[ReportRecord]]:
        return preprocess(self.simulator.load_reports(label))

    def fit_catalogs(self, train_label: str) -> dict[int, NeighborCatalog]:
        topology = self.simulator.load_topology(train_label)
        return {
            serving_pci: fit_neighbor_catalog(records, topology, serving_pci)
            for serving_pci, records in self.records(train_label).items()
        }

    def extract_run(
        self,
        run: ScenarioRun,
        catalogs: dict[int, NeighborCatalog],
        policies: dict[tuple[int, FeatureScheme], ImputePolicy],
    ) -> list[str]:
        by_serving = self.records(run.label)
        unknown = sorted(set(by_serving) - set(catalogs))
        if unknown:
            log(
                "warning",
                f"Serving cells {unknown} have no training catalog, their reports are dropped",
                stage=self.stage,
                scenario=run.label,
            )
        split_name = TRAIN_DIR if run.split == Split.train else run.label
        written = []
        for serving_pci, catalog in catalogs.items():
            records = by_serving.get(serving_pci, [])
            for scheme in self.config.schemes:
                matrix = extract(scheme, records, catalog)
                written.append(
                    self._write_matrix(
                        split_name, matrix, catalog, policies[(serving_pci, scheme)]
                    )
                )
        log(
            "info",
            f"Extracted {len(written)} feature files",
            stage=self.stage,
            scenario=run.label,
        )
        return written

    def run(self) -> list[str]:
        runs = plan_scenarios(self.config)
        train = [run for run in runs if run.split == Split.train]
        assert len(train) == 1, "The plan has exactly one training run"
        catalogs = self.fit_catalogs(train[0].label)
        for catalog in catalogs.values():
            path = self.catalog_path(catalog.serving_pci)
            os.makedirs(os.path.dirname(path), exist_ok=True)
            catalog.dump(path)

        train_records = self.records(train[0].label)
        policies = {
            (pci, scheme): fit_impute_policy(
                extract(scheme, train_records[pci], catalog), self.config.impute
            )
            for pci, catalog in catalogs.items()
            for scheme in self.config.schemes
        }
        written = []
        for run in runs:
            written += self.extract_run(run, catalogs, policies)
        self._write_manifest(
            self._path("features"),
            {
                "catalogs": sorted(catalogs),
                "splits": [
                    TRAIN_DIR if run.split == Split.train else run.label for run in runs
                ],
                "artifacts": [os.path.relpath(path, self.output_dir) for path in written],
            },
        )
        return written

    def load_catalog(self, serving_pci: int) -> NeighborCatalog:
        return NeighborCatalog.load(
            self._require(self.catalog_path(serving_pci), "neighbor catalog")
        )

    def load_matrix(
        self, split_name: str, serving_pci: int, scheme: FeatureScheme
    ) -> FeatureMatrix:
        base = os.path.join(self.split_dir(split_name), features_name(serving_pci, scheme))
        path = self._require(f"{base}.csv", f"{scheme.value} features of {split_name}")
        return frame_to_matrix(read_frame(path), scheme, serving_pci)

    def load_meta(
        self, split_name: str, serving_pci: int, scheme: FeatureScheme
    ) -> FeatureMeta:
        base = os.path.join(self.split_dir(split_name), features_name(serving_pci, scheme))
        return FeatureMeta.load(self._require(f"{base}.meta.json", "feature metadata"))

    def served_cells(self) -> list[int]:
        manifest = self._read_manifest(self._path("features"))
        if manifest is None:
            self._require(self._path("features", "manifest.json"), "extracted features")
        assert manifest is not None
        return manifest["catalogs"]
