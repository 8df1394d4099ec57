import json
import os

from fbs_workbench.base.api import Workbench
from fbs_workbench.base.logging import log
from fbs_workbench.service.dataset_features.api import TRAIN_DIR, FeatureExtractor
from fbs_workbench.service.dataset_features.types import FeatureScheme
from fbs_workbench.service.detectors.types import DetectorKind, DetectorModel
from fbs_workbench.service.detectors.utils import fit_detector, load_detector
from fbs_workbench.service.mlcore.exceptions import InsufficientDataError
from fbs_workbench.service.pipeline.utils import model_name

MODEL_DIR = "models"


class DetectorTrainer(Workbench):
    """
    One model per (serving cell, feature scheme, detector), trained on the benign training features. Existing models
    are only replaced with `force`.
    """

    stage = "train"

    def _hashed_config(self) -> dict:
        config = json.loads(self.config.json())
        return {
            key: config[key]
            for key in (
                "sim",
                "scenarios",
                "schemes",
                "detectors",
                "impute",
                "rc",
                "adf",
                "ae",
                "model_seed",
            )
        }

    @property
    def extractor(self) -> FeatureExtractor:
        return self._upstream(FeatureExtractor)

    def model_path(
        self, serving_pci: int, scheme: FeatureScheme, detector: DetectorKind
    ) -> str:
        return self._path(MODEL_DIR, f"{model_name(serving_pci, scheme, detector)}.json")

    def catalog_path(self, serving_pci: int) -> str:
        return self._path(MODEL_DIR, "catalogs", f"serving_{serving_pci:02d}.json")

    def train_one(self, task: tuple[int, FeatureScheme, DetectorKind]) -> str | None:
        serving_pci, scheme, detector = task
        extractor = self.extractor
        matrix = extractor.load_matrix(TRAIN_DIR, serving_pci, scheme)
        catalog = extractor.load_catalog(serving_pci)
        try:
            model = fit_detector(
                detector,
                matrix,
                catalog,
                seed=self.config.model_seed,
                impute_policy=self.config.impute,
                rc_params=self.config.rc,
                adf_params=self.config.adf,
                ae_config=self.config.ae,
            )
        except InsufficientDataError as e:
            log(
                "warning",
                f"No model: {e}",
                stage=self.stage,
                serving_pci=serving_pci,
                scheme=scheme.value,
                detector=detector.value,
            )
            return None
        path = self.model_path(serving_pci, scheme, detector)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        model.dump(path)
        log(
            "info",
            "Trained",
            stage=self.stage,
            serving_pci=serving_pci,
            scheme=scheme.value,
            detector=detector.value,
            n_rows=matrix.n_rows,
        )
        return path

    def run(self) -> list[str]:
        extractor = self.extractor
        serving_cells = extractor.served_cells()
        tasks = [
            (serving_pci, scheme, detector)
            for serving_pci in serving_cells
            for scheme, detector in self.config.combinations
        ]
        for task in tasks:
            self._guard_overwrite(self.model_path(*task))

        for serving_pci in serving_cells:
            path = self.catalog_path(serving_pci)
            os.makedirs(os.path.dirname(path), exist_ok=True)
            extractor.load_catalog(serving_pci).dump(path)

        written = [path for path in self._map(self.train_one, tasks) if path is not None]
        self._write_manifest(
            self._path(MODEL_DIR),
            {
                "seed": self.config.model_seed,
                "models": [os.path.relpath(path, self.output_dir) for path in written],
            },
        )
        return written

    def trained_models(self) -> list[str]:
        manifest = self._read_manifest(self._path(MODEL_DIR))
        if manifest is None:
            self._require(self._path(MODEL_DIR, "manifest.json"), "trained models")
        assert manifest is not None
        return [
            self._require(self._path(path), "model") for path in manifest["models"]
        ]

    def load(self, path: str) -> DetectorModel:
        return load_detector(path)
