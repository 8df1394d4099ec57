from fbs_workbench.base.api import Workbench
from fbs_workbench.base.exceptions import WorkbenchError
from fbs_workbench.base.logging import log, timed
from fbs_workbench.service.dataset_features.api import FeatureExtractor
from fbs_workbench.service.detectors.api import MODEL_DIR, DetectorTrainer
from fbs_workbench.service.eval.api import REPORT_DIR, SUMMARY_DIR, Evaluator, Reporter
from fbs_workbench.service.pipeline.types import PipelineConfig
from fbs_workbench.service.pipeline.utils import plan_scenarios
from fbs_workbench.service.radio_sim.api import RadioSimulator


class Pipeline:
    """
    Runs the stages in dependency order against one output directory.

    Stages whose manifest matches the current config are skipped, and anything stale is rebuilt. Errors are tagged
    with the stage they came from.
    """

    def __init__(
        self, config: PipelineConfig, force: bool = False, workers: int | None = None
    ) -> None:
        self.config = config
        self.force = force
        self.workers = workers or config.workers

    def _stage(self, cls: type[Workbench], force: bool | None = None) -> Workbench:
        return cls(
            self.config.output_dir,
            self.config,
            force=self.force if force is None else force,
            workers=self.workers,
        )

    @staticmethod
    def _tagged(stage: Workbench, func, *args, **kwargs):
        try:
            with timed("Stage finished", stage=stage.stage):
                return func(*args, **kwargs)
        except WorkbenchError as e:
            if e.stage is None:
                e.stage = stage.stage
            raise

    def simulate(self, labels: list[str] | None = None) -> list[str]:
        simulator = self._stage(RadioSimulator)
        return self._tagged(simulator, simulator.run, labels)

    def extract(self) -> list[str]:
        extractor = self._stage(FeatureExtractor)
        return self._tagged(extractor, extractor.run)

    def train(self) -> list[str]:
        trainer = self._stage(DetectorTrainer)
        return self._tagged(trainer, trainer.run)

    def evaluate(self) -> list[str]:
        evaluator = self._stage(Evaluator)
        return self._tagged(evaluator, evaluator.run)

    def report(self) -> list[str]:
        reporter = self._stage(Reporter)
        return self._tagged(reporter, reporter.run)

    def run(self) -> list[str]:
        """
        Simulate every scenario of the plan (benign, then per false cell its attack and validation runs), extract,
        train, evaluate and report
        """
        written: list[str] = []
        simulator = self._stage(RadioSimulator)
        written += self._tagged(simulator, simulator.run, None, not self.force)
        stages: list[tuple[type[Workbench], tuple[str, ...]]] = [
            (FeatureExtractor, ("features",)),
            (DetectorTrainer, (MODEL_DIR,)),
            (Evaluator, (REPORT_DIR,)),
            (Reporter, (REPORT_DIR, SUMMARY_DIR)),
        ]
        rebuilt = len(written) > 0
        for cls, directory in stages:
            stage = self._stage(cls, force=True)
            if not (rebuilt or self.force) and stage.is_current(stage._path(*directory)):
                log("info", "Up to date, skipping", stage=stage.stage)
                continue
            written += self._tagged(stage, stage.run)
            rebuilt = True
        log(
            "info",
            f"Pipeline done, {len(plan_scenarios(self.config))} scenarios",
            n_artifacts=len(written),
        )
        return written
