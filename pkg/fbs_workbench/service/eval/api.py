import json
import math
import os

import numpy as np
import pandas as pd

from fbs_workbench.base.api import Workbench
from fbs_workbench.base.logging import log
from fbs_workbench.base.tools import read_frame, write_frame
from fbs_workbench.service.dataset_features.api import FeatureExtractor
from fbs_workbench.service.dataset_features.types import FeatureMatrix, ReportRecord
from fbs_workbench.service.dataset_features.utils import dataset_summary
from fbs_workbench.service.detectors.api import DetectorTrainer
from fbs_workbench.service.detectors.types import (
    DetectorModel,
    RegressionClusteringModel,
)
from fbs_workbench.service.detectors.utils import rc_calibrate, score_matrix
from fbs_workbench.service.eval.types import (
    AggregatedReport,
    HoldoutReport,
    RecallReport,
    ServingResult,
)
from fbs_workbench.service.eval.utils import (
    aggregate_false_cell,
    aggregated_reports_to_frame,
    calibrate_threshold,
    corroboration,
    export_timeline,
    holdout_report,
    holdout_reports_to_frame,
    json_row,
    label_records,
    recall_report,
    recall_reports_to_frame,
    roc_auc,
    score_gaps,
    score_gaps_to_frame,
    serving_fprs,
    timelines_to_frame,
)
from fbs_workbench.service.pipeline.types import ScenarioRun, Split
from fbs_workbench.service.pipeline.utils import model_name, split_runs

REPORT_DIR = "reports"
SUMMARY_DIR = "summary"


def _rows(matrix: FeatureMatrix, mask: np.ndarray) -> FeatureMatrix:
    return matrix.copy(
        update={
            "values": matrix.values[mask],
            "record_ids": matrix.record_ids[mask],
            "times": matrix.times[mask],
        }
    )


class Evaluator(Workbench):
    """
    Calibrates every trained model on the benign records of the validation runs, then scores the attack runs and
    writes the recall, aggregated detection, score and corroboration reports. The benign holdout run gives the false
    positive rate each calibrated threshold achieves on data it never saw.
    """

    stage = "evaluate"

    def _hashed_config(self) -> dict:
        config = json.loads(self.config.json())
        config.pop("output_dir")
        config.pop("workers")
        return config

    @property
    def extractor(self) -> FeatureExtractor:
        return self._upstream(FeatureExtractor)

    @property
    def trainer(self) -> DetectorTrainer:
        return self._upstream(DetectorTrainer)

    def report_path(self, name: str) -> str:
        return self._path(REPORT_DIR, name)

    def _records(self, run: ScenarioRun) -> dict[int, ReportRecord]:
        return {
            record.record_id: record
            for records in self.extractor.records(run.label).values()
            for record in records
        }

    def benign_validation(
        self,
        model: DetectorModel,
        validation: list[tuple[ScenarioRun, dict[int, ReportRecord]]],
    ) -> list[FeatureMatrix]:
        """
        The model's validation rows without the false PCI of their run, one matrix per run
        """
        matrices = []
        for run, records in validation:
            matrix = self.extractor.load_matrix(run.label, model.serving_pci, model.scheme)
            benign = np.array(
                [run.false_pci not in records[int(rid)].neighbor_pcis for rid in matrix.record_ids],
                dtype=bool,
            ).reshape(matrix.n_rows)
            matrices.append(_rows(matrix, benign))
        return matrices

    def calibrate(
        self,
        model: DetectorModel,
        validation: list[tuple[ScenarioRun, dict[int, ReportRecord]]],
    ) -> tuple[DetectorModel, int]:
        matrices = [m for m in self.benign_validation(model, validation) if m.n_rows]
        n_rows = sum(m.n_rows for m in matrices)
        context = {
            "stage": self.stage,
            "serving_pci": model.serving_pci,
            "scheme": model.scheme.value,
            "detector": model.kind.value,
        }
        if not n_rows:
            log("warning", "No benign validation records, nothing will be flagged", **context)
            return model.copy(update={"threshold": math.inf}), 0
        pooled = matrices[0].copy(
            update={
                "values": np.vstack([m.values for m in matrices]),
                "record_ids": np.concatenate([m.record_ids for m in matrices]),
                "times": np.concatenate([m.times for m in matrices]),
            }
        )
        if isinstance(model, RegressionClusteringModel):
            threshold = rc_calibrate(model, pooled, self.config.target_fpr)
        else:
            threshold = calibrate_threshold(
                score_matrix(model, pooled), self.config.target_fpr
            )
        log("info", f"Calibrated threshold {threshold:.6g}", n_rows=n_rows, **context)
        return model.copy(update={"threshold": threshold}), n_rows

    def score_run(
        self,
        model: DetectorModel,
        run: ScenarioRun,
        records: dict[int, ReportRecord],
    ) -> tuple[ServingResult, RecallReport]:
        assert model.threshold is not None, "Only calibrated models score test runs"
        extractor = self.extractor
        matrix = extractor.load_matrix(run.label, model.serving_pci, model.scheme)
        catalog = extractor.load_catalog(model.serving_pci)
        test_records = [records[int(rid)] for rid in matrix.record_ids]
        labels = label_records(test_records, run.false_pci, catalog)
        scores = score_matrix(model, matrix)
        timeline = export_timeline(
            scores,
            labels,
            matrix.times,
            model.serving_pci,
            threshold=model.threshold,
            ue_ids=[record.ue_id for record in test_records],
        )
        report = recall_report(
            scores,
            model.threshold,
            labels,
            model.serving_pci,
            model.scheme,
            model.kind,
            false_pci=run.false_pci,
        )
        report = report.copy(
            update={"roc_auc": roc_auc(scores, [label.is_tp for label in labels])}
        )
        result = ServingResult(
            serving_pci=model.serving_pci, threshold=model.threshold, timeline=timeline
        )
        return result, report

    def score_holdout(
        self,
        model: DetectorModel,
        run: ScenarioRun,
        records: dict[int, ReportRecord],
    ) -> HoldoutReport:
        assert model.threshold is not None, "Only calibrated models score the holdout run"
        matrix = self.extractor.load_matrix(run.label, model.serving_pci, model.scheme)
        catalog = self.extractor.load_catalog(model.serving_pci)
        labels = label_records(
            [records[int(rid)] for rid in matrix.record_ids], None, catalog
        )
        return holdout_report(
            score_matrix(model, matrix),
            model.threshold,
            labels,
            model.serving_pci,
            model.scheme,
            model.kind,
        )

    def run(self) -> list[str]:
        trainer = self.trainer
        models = [trainer.load(path) for path in trainer.trained_models()]
        validation = [
            (run, self._records(run)) for run in split_runs(self.config, Split.validation)
        ]
        tests = [(run, self._records(run)) for run in split_runs(self.config, Split.test)]
        holdout = [
            (run, self._records(run)) for run in split_runs(self.config, Split.holdout)
        ]

        calibrated = []
        threshold_rows = []
        for model in models:
            model, n_rows = self.calibrate(model, validation)
            calibrated.append(model)
            path = self.report_path(
                os.path.join(
                    "calibrated",
                    f"{model_name(model.serving_pci, model.scheme, model.kind)}.json",
                )
            )
            os.makedirs(os.path.dirname(path), exist_ok=True)
            model.dump(path)
            threshold_rows.append(
                [model.serving_pci, model.scheme.value, model.kind.value, model.threshold, n_rows]
            )

        holdout_reports = [
            self.score_holdout(model, run, records)
            for run, records in holdout
            for model in calibrated
        ]

        score_frames = []
        recalls: list[RecallReport] = []
        aggregated: list[AggregatedReport] = []
        corroborated = []
        for run, records in tests:
            duration = run.sim.duration_s
            trajectory = np.arange(0.0, duration, run.sim.report_period_s)
            for scheme, detector in self.config.combinations:
                group = [m for m in calibrated if m.scheme == scheme and m.kind == detector]
                results = []
                for model in group:
                    result, report = self.score_run(model, run, records)
                    results.append(result)
                    recalls.append(report)
                frame = timelines_to_frame(results)
                frame.insert(0, "scenario", run.label)
                frame.insert(4, "scheme", scheme.value)
                frame.insert(5, "detector", detector.value)
                score_frames.append(frame)
                aggregated.append(
                    aggregate_false_cell(
                        results,
                        trajectory,
                        self.config.position_bin_s,
                        false_pci=run.false_pci or 0,
                        scheme=scheme,
                        detector=detector,
                    )
                )
                for row in corroboration(results, self.config.position_bin_s):
                    corroborated.append(
                        {"scenario": run.label, "scheme": scheme.value, "detector": detector.value}
                        | json_row(row)
                    )
            log("info", "Scored", stage=self.stage, scenario=run.label)

        written = []
        scores = pd.concat(score_frames, ignore_index=True) if score_frames else None
        written.append(self._write("scores.csv", self._scores_frame(scores)))
        written.append(
            self._write("recall_report.csv", recall_reports_to_frame(recalls))
        )
        written.append(
            self._write("aggregated_report.csv", aggregated_reports_to_frame(aggregated))
        )
        written.append(
            self._write("holdout_report.csv", holdout_reports_to_frame(holdout_reports))
        )
        written.append(
            self._write(
                "corroboration.csv",
                pd.DataFrame(
                    corroborated,
                    columns=[
                        "scenario",
                        "scheme",
                        "detector",
                        "time_bin",
                        "n_flagged",
                        "n_serving_cells",
                        "n_ues",
                    ],
                ),
            )
        )
        written.append(
            self._write(
                "thresholds.csv",
                pd.DataFrame(
                    threshold_rows,
                    columns=["serving_pci", "scheme", "detector", "threshold", "n_calibration"],
                ),
            )
        )
        self._write_manifest(
            self._path(REPORT_DIR),
            {
                "target_fpr": self.config.target_fpr,
                "artifacts": [os.path.relpath(path, self.output_dir) for path in written],
            },
        )
        return written

    SCORE_COLUMNS = [
        "scenario",
        "record_id",
        "time_s",
        "serving_pci",
        "ue_id",
        "scheme",
        "detector",
        "score",
        "flagged",
        "is_static",
        "is_tp",
    ]

    def _scores_frame(self, frame: pd.DataFrame | None) -> pd.DataFrame:
        if frame is None or frame.empty:
            return pd.DataFrame(columns=self.SCORE_COLUMNS)
        frame = frame.rename(columns={"contains_false_pci": "is_tp"})
        return frame[self.SCORE_COLUMNS]

    def _write(self, name: str, frame: pd.DataFrame) -> str:
        path = self.report_path(name)
        write_frame(frame, path)
        return path

    def load_recall_report(self) -> pd.DataFrame:
        return read_frame(self._require(self.report_path("recall_report.csv"), "recall report"))

    def load_aggregated_report(self) -> pd.DataFrame:
        return read_frame(
            self._require(self.report_path("aggregated_report.csv"), "aggregated report")
        )

    def load_holdout_report(self) -> pd.DataFrame:
        return read_frame(
            self._require(self.report_path("holdout_report.csv"), "holdout report")
        )

    def load_scores(self) -> pd.DataFrame:
        return read_frame(self._require(self.report_path("scores.csv"), "scores"))


class Reporter(Workbench):
    """
    Summaries over the evaluated runs: dataset statistics per serving cell, the score gap of every attack scenario,
    and per (scheme, detector) the mean detection ratio, the benign FPRs and the smallest score gap
    """

    stage = "report"

    def _hashed_config(self) -> dict:
        return Evaluator(self.output_dir, self.config)._hashed_config()

    def run(self) -> list[str]:
        evaluator = self._upstream(Evaluator)
        extractor = evaluator.extractor
        catalogs = {pci: extractor.load_catalog(pci) for pci in extractor.served_cells()}
        validation = [
            extractor.records(run.label) for run in split_runs(self.config, Split.validation)
        ]
        tests = {
            run.false_pci: extractor.records(run.label)
            for run in split_runs(self.config, Split.test)
        }
        datasets = pd.DataFrame(
            [json_row(row) for row in dataset_summary(catalogs, validation, tests)]
        )
        written = [self._write("datasets.csv", datasets)]

        gaps = score_gaps_to_frame(score_gaps(evaluator.load_scores()))
        written.append(self._write("score_gaps.csv", gaps))
        recall = evaluator.load_recall_report()
        holdout = evaluator.load_holdout_report()
        written.append(self._write("serving_fpr.csv", serving_fprs(recall, holdout)))
        summary = self.summarize(recall, evaluator.load_aggregated_report(), holdout, gaps)
        written.append(self._write("summary.csv", summary))
        self._write_manifest(
            self._path(REPORT_DIR, SUMMARY_DIR),
            {"artifacts": [os.path.relpath(path, self.output_dir) for path in written]},
        )
        return written

    @staticmethod
    def summarize(
        recall: pd.DataFrame,
        aggregated: pd.DataFrame,
        holdout: pd.DataFrame | None = None,
        gaps: pd.DataFrame | None = None,
    ) -> pd.DataFrame:
        """
        Detection over all visible positions (pooled over visibility buckets) averaged over scenarios, next to the
        benign FPR of the serving cells on the attack runs (per scenario and pooled per cell) and on the holdout
        run, and the smallest score gap of any attack scenario
        """
        columns = [
            "scheme",
            "detector",
            "mean_detection",
            "mean_detection_no_static",
            "mean_benign_fpr",
            "max_benign_fpr",
            "min_cell_fpr",
            "max_cell_fpr",
            "mean_recall_with_static",
            "mean_recall_without_static",
            "mean_holdout_fpr",
            "min_holdout_fpr",
            "max_holdout_fpr",
            "min_score_gap",
        ]
        if aggregated.empty:
            return pd.DataFrame(columns=columns)
        aggregated = aggregated.assign(
            detected=aggregated["D"].fillna(0) * aggregated["positions"],
            detected_no_static=aggregated["D_no_static"].fillna(0) * aggregated["positions"],
        )
        per_scenario = aggregated.groupby(["scheme", "detector", "false_pci"]).sum(
            numeric_only=True
        )
        per_scenario = per_scenario[per_scenario["positions"] > 0]
        per_scenario = per_scenario.assign(
            D=per_scenario["detected"] / per_scenario["positions"],
            D_no_static=per_scenario["detected_no_static"] / per_scenario["positions"],
        )
        detection = per_scenario.groupby(["scheme", "detector"])[["D", "D_no_static"]].mean()
        fpr = recall.groupby(["scheme", "detector"]).agg(
            mean_benign_fpr=("benign_fpr_achieved", "mean"),
            max_benign_fpr=("benign_fpr_achieved", "max"),
            mean_recall_with_static=("recall_with_static", "mean"),
            mean_recall_without_static=("recall_without_static", "mean"),
        )
        summary = detection.rename(
            columns={"D": "mean_detection", "D_no_static": "mean_detection_no_static"}
        ).join(fpr, how="outer")
        cells = serving_fprs(recall)
        if not cells.empty:
            summary = summary.join(
                cells.groupby(["scheme", "detector"]).agg(
                    min_cell_fpr=("benign_fpr", "min"),
                    max_cell_fpr=("benign_fpr", "max"),
                ),
                how="left",
            )
        if holdout is not None and not holdout.empty:
            summary = summary.join(
                holdout.groupby(["scheme", "detector"]).agg(
                    mean_holdout_fpr=("fpr", "mean"),
                    min_holdout_fpr=("fpr", "min"),
                    max_holdout_fpr=("fpr", "max"),
                ),
                how="left",
            )
        if gaps is not None and not gaps.empty:
            summary = summary.join(
                gaps.groupby(["scheme", "detector"]).agg(min_score_gap=("gap", "min")),
                how="left",
            )
        summary = summary.reindex(columns=columns[2:])
        return summary.reset_index()[columns]

    def _write(self, name: str, frame: pd.DataFrame) -> str:
        path = self._path(REPORT_DIR, SUMMARY_DIR, name)
        write_frame(frame, path)
        return path
