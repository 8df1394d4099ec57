import json
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, TypeVar

from fbs_workbench.base.exceptions import ConfigError, DependencyError
from fbs_workbench.base.logging import log
from fbs_workbench.base.tools import stable_hash
from fbs_workbench.base.types import WorkbenchBaseModel

T = TypeVar("T")
R = TypeVar("R")
W = TypeVar("W", bound="Workbench")

MANIFEST_NAME = "manifest.json"


class ArtifactExistsError(ConfigError):
    pass


class Workbench:
    """
    Common base for the pipeline stages. Each stage reads the artifacts of the stages before it from `output_dir`,
    and writes its own artifacts next to them together with a manifest recording the config hash.

    Artifact tree:
        sim/<scenario>/{reports.csv,topology.csv,manifest.json}
        features/<split>/serving_<pci>_<scheme>.{csv,meta.json}
        models/serving_<pci>_<scheme>_<detector>.json, models/catalogs/serving_<pci>.json
        reports/{scores.csv,recall_report.csv,aggregated_report.csv,...}
    """

    # Every stage has a name, which is used for manifests and for tagging errors
    _stages: list[str] = [
        "simulate",
        "extract",
        "train",
        "evaluate",
        "report",
    ]

    stage: str
    # Set when another stage reads this stage's artifacts, missing ones are then that stage's dependency errors
    reader_stage: str | None = None

    def __init__(
        self,
        output_dir: str,
        config: WorkbenchBaseModel,
        force: bool = False,
        workers: int = 1,
    ) -> None:
        self.output_dir = output_dir
        self.config = config
        self.force = force
        self.workers = max(1, workers)
        assert (
            self.stage in self._stages
        ), "`Workbench` must be subclassed, and all subclasses must have `.stage` set"

    def _hashed_config(self) -> dict[str, Any]:
        """
        The part of the config this stage depends on. Stages narrow this down so that e.g. changing a detector
        hyperparameter does not invalidate the simulated reports.
        """
        return json.loads(self.config.json())

    @property
    def config_hash(self) -> str:
        return stable_hash(self._hashed_config())

    def _path(self, *parts: str) -> str:
        return os.path.join(self.output_dir, *parts)

    def _require(self, path: str, what: str) -> str:
        if not os.path.exists(path):
            raise DependencyError(
                f"Missing {what}: {path}", stage=self.reader_stage or self.stage
            )
        return path

    def _upstream(self, cls: type["W"]) -> "W":
        """
        Stage `cls` on the same output directory, for reading its artifacts
        """
        stage = cls(self.output_dir, self.config, workers=self.workers)
        stage.reader_stage = self.reader_stage or self.stage
        return stage

    def _guard_overwrite(self, path: str) -> None:
        """
        Refuse to overwrite an artifact from an earlier run unless we're forced to
        """
        if os.path.exists(path) and not self.force:
            raise ArtifactExistsError(
                f"{path} already exists, pass --force to overwrite", stage=self.stage
            )

    def _write_manifest(self, directory: str, payload: dict[str, Any]) -> str:
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, MANIFEST_NAME)
        manifest = {"stage": self.stage, "config_hash": self.config_hash, **payload}
        with open(path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True, default=str)
            f.write("\n")
        return path

    def _read_manifest(self, directory: str) -> dict[str, Any] | None:
        path = os.path.join(directory, MANIFEST_NAME)
        if not os.path.exists(path):
            return None
        with open(path, encoding="utf-8") as f:
            return json.load(f)

    def is_current(self, directory: str) -> bool:
        """
        True when `directory` holds this stage's output for the current config
        """
        manifest = self._read_manifest(directory)
        return bool(manifest) and manifest.get("config_hash") == self.config_hash

    def _map(self, func: Callable[[T], R], items: Iterable[T]) -> list[R]:
        """
        Run independent work items, possibly in worker processes. Results always come back in input order, so the
        artifacts do not depend on the number of workers.
        """
        items = list(items)
        if self.workers == 1 or len(items) < 2:
            return [func(item) for item in items]
        log("debug", f"Fanning out {len(items)} items", stage=self.stage)
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(func, items))
