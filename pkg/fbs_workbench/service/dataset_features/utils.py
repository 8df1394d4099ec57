from collections import defaultdict

import numpy as np
import pandas as pd

from fbs_workbench.base.utils import format_pci_ranges
from fbs_workbench.service.dataset_features.exceptions import TopologyCoverageError
from fbs_workbench.service.dataset_features.types import (
    PREFIX_COLUMNS,
    DatasetSummaryRow,
    FeatureMatrix,
    FeatureMeta,
    FeatureScheme,
    ImputedMatrix,
    ImputePolicy,
    NeighborCatalog,
    ReportRecord,
)
from fbs_workbench.service.radio_sim.types import CellSite, MeasurementReport


def preprocess(reports: list[MeasurementReport]) -> dict[int, list[ReportRecord]]:
    """
    Drop reports without neighbors (they cannot carry false base station information) and split the rest by serving
    cell. `record_id` is the report's index in the full log.
    """
    by_serving: dict[int, list[ReportRecord]] = defaultdict(list)
    for record_id, report in enumerate(reports):
        if not report.neighbors:
            continue
        by_serving[report.serving_pci].append(
            ReportRecord(
                record_id=record_id,
                time_s=report.time_s,
                ue_id=report.ue_id,
                serving_pci=report.serving_pci,
                serving_rsrp_dbm=report.serving_rsrp_dbm,
                neighbor_list=[(n.pci, n.rsrp_dbm) for n in report.neighbors],
            )
        )
    return {pci: by_serving[pci] for pci in sorted(by_serving)}


def fit_neighbor_catalog(
    records: list[ReportRecord],
    topology: list[CellSite],
    serving_pci: int | None = None,
) -> NeighborCatalog:
    """
    Neighbor PCIs seen by one serving cell in training data, together with the legitimate cell positions
    """
    positions = {cell.pci: cell.position for cell in topology}
    if serving_pci is None:
        assert records, "Either records or serving_pci is needed to know the serving cell"
        serving_pci = records[0].serving_pci
    assert all(
        r.serving_pci == serving_pci for r in records
    ), "A catalog is fitted on the records of a single serving cell"
    if serving_pci not in positions:
        raise TopologyCoverageError(f"Serving PCI {serving_pci} is not in the topology")

    known: set[int] = set()
    max_concurrent = 0
    for record in records:
        known |= record.neighbor_pcis
        max_concurrent = max(max_concurrent, len(record.neighbor_list))
    unknown = known - set(positions)
    if unknown:
        raise TopologyCoverageError(
            f"Neighbors {sorted(unknown)} of serving cell {serving_pci} are not in the topology"
        )

    return NeighborCatalog(
        serving_pci=serving_pci,
        serving_position=positions[serving_pci],
        known_neighbors=sorted(known),
        neighbor_positions={pci: pos for pci, pos in positions.items()},
        max_concurrent_neighbors=max_concurrent,
        training_size=len(records),
    )


def flag_static(record: ReportRecord, catalog: NeighborCatalog) -> bool:
    """
    True if the record names a neighbor the serving cell never saw during training
    """
    assert record.serving_pci == catalog.serving_pci, "Catalog of another serving cell"
    known = set(catalog.known_neighbors)
    return any(pci not in known for pci, _ in record.neighbor_list)


def _prefix(record: ReportRecord) -> list[float]:
    # Unknown PCIs count as neighbors here even though they get no COL column
    return [record.serving_rsrp_dbm, float(len(record.neighbor_list))]


def _matrix(
    scheme: FeatureScheme,
    catalog: NeighborCatalog,
    records: list[ReportRecord],
    column_names: list[str],
    rows: list[list[float]],
) -> FeatureMatrix:
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(column_names))
    return FeatureMatrix(
        scheme=scheme,
        serving_pci=catalog.serving_pci,
        column_names=column_names,
        values=values,
        record_ids=[r.record_id for r in records],
        times=[r.time_s for r in records],
    )


def extract_col(
    records: list[ReportRecord], catalog: NeighborCatalog
) -> FeatureMatrix:
    """
    One column per catalog PCI (ascending) holding that neighbor's RSRP
    """
    columns = {pci: i for i, pci in enumerate(catalog.known_neighbors)}
    rows = []
    for record in records:
        row = _prefix(record) + [np.nan] * len(columns)
        for pci, rsrp in record.neighbor_list:
            if pci in columns:
                row[len(PREFIX_COLUMNS) + columns[pci]] = rsrp
        rows.append(row)
    names = PREFIX_COLUMNS + [f"rsrp_{pci}" for pci in catalog.known_neighbors]
    return _matrix(FeatureScheme.col, catalog, records, names, rows)


def _slots(
    record: ReportRecord, catalog: NeighborCatalog
) -> list[tuple[float, float, float, float]]:
    """
    Neighbor slots for DST/XY as (rsrp, distance, dx, dy): strongest first, ties to the closer then the lower PCI.

    Geometry always comes from the legitimate topology entry of the PCI, never from wherever the transmitter really is.
    """
    slots: list[tuple[float, float, float, float, int]] = []
    origin = catalog.serving_position
    for pci, rsrp in record.neighbor_list:
        position = catalog.neighbor_positions.get(pci)
        if position is None:
            raise TopologyCoverageError(f"Neighbor {pci} has no known position")
        dx, dy = origin.offset_to(position)
        slots.append((rsrp, float(np.hypot(dx, dy)), dx, dy, pci))
    slots.sort(key=lambda s: (-s[0], s[1], s[4]))
    if len(slots) > catalog.max_concurrent_neighbors:
        # More neighbors than ever seen in training: only the strongest fit
        slots = slots[: catalog.max_concurrent_neighbors]
    return [(rsrp, dist, dx, dy) for rsrp, dist, dx, dy, _ in slots]


def extract_dst(
    records: list[ReportRecord], catalog: NeighborCatalog
) -> FeatureMatrix:
    width = catalog.max_concurrent_neighbors
    rows = []
    for record in records:
        row = _prefix(record) + [np.nan] * (2 * width)
        for i, (rsrp, dist, _, _) in enumerate(_slots(record, catalog)):
            row[2 + 2 * i] = rsrp
            row[3 + 2 * i] = dist
        rows.append(row)
    names = PREFIX_COLUMNS + [
        name for i in range(1, width + 1) for name in (f"nbr{i}_rsrp", f"nbr{i}_dst")
    ]
    return _matrix(FeatureScheme.dst, catalog, records, names, rows)


def extract_xy(
    records: list[ReportRecord], catalog: NeighborCatalog
) -> FeatureMatrix:
    width = catalog.max_concurrent_neighbors
    rows = []
    for record in records:
        row = _prefix(record) + [np.nan] * (3 * width)
        for i, (rsrp, _, dx, dy) in enumerate(_slots(record, catalog)):
            row[2 + 3 * i] = rsrp
            row[3 + 3 * i] = dx
            row[4 + 3 * i] = dy
        rows.append(row)
    names = PREFIX_COLUMNS + [
        name
        for i in range(1, width + 1)
        for name in (f"nbr{i}_rsrp", f"nbr{i}_x", f"nbr{i}_y")
    ]
    return _matrix(FeatureScheme.xy, catalog, records, names, rows)


EXTRACTORS = {
    FeatureScheme.col: extract_col,
    FeatureScheme.dst: extract_dst,
    FeatureScheme.xy: extract_xy,
}


def extract(
    scheme: FeatureScheme, records: list[ReportRecord], catalog: NeighborCatalog
) -> FeatureMatrix:
    return EXTRACTORS[FeatureScheme(scheme)](records, catalog)


def fit_impute_policy(matrix: FeatureMatrix, policy: ImputePolicy) -> ImputePolicy:
    """
    Resolve per-column fills from (training) data. A column that was never observed is filled with `-value`.
    """
    if policy.kind != ImputePolicy.Kind.per_column_min_minus:
        return policy
    fills = []
    for j in range(matrix.values.shape[1]):
        column = matrix.values[:, j]
        observed = column[~np.isnan(column)]
        base = float(observed.min()) if observed.size else 0.0
        fills.append(base - policy.value)
    return policy.copy(update={"column_fill": fills})


def impute(matrix: FeatureMatrix, policy: ImputePolicy) -> ImputedMatrix:
    mask = matrix.missing_mask
    if policy.kind == ImputePolicy.Kind.fill_value:
        fills = np.full(matrix.values.shape[1], policy.value)
    else:
        if policy.column_fill is None:
            policy = fit_impute_policy(matrix, policy)
        assert policy.column_fill is not None
        assert len(policy.column_fill) == matrix.values.shape[1], (
            "Fitted imputation has another width than the matrix"
        )
        fills = np.asarray(policy.column_fill)
    values = np.where(mask, fills[np.newaxis, :], matrix.values)
    return ImputedMatrix(
        scheme=matrix.scheme,
        serving_pci=matrix.serving_pci,
        column_names=matrix.column_names,
        values=values,
        missing_mask=mask,
        record_ids=matrix.record_ids,
        policy=policy,
    )


def feature_meta(
    matrix: FeatureMatrix, catalog: NeighborCatalog, policy: ImputePolicy
) -> FeatureMeta:
    return FeatureMeta(
        scheme=matrix.scheme,
        serving_pci=matrix.serving_pci,
        catalog_pcis=catalog.known_neighbors,
        max_concurrent_neighbors=catalog.max_concurrent_neighbors,
        impute_policy=policy,
        n_rows=matrix.n_rows,
    )


def matrix_to_frame(matrix: FeatureMatrix) -> pd.DataFrame:
    frame = pd.DataFrame(matrix.values, columns=matrix.column_names)
    frame.insert(0, "time_s", np.asarray(matrix.times))
    frame.insert(0, "record_id", np.asarray(matrix.record_ids))
    return frame


def frame_to_matrix(
    frame: pd.DataFrame, scheme: FeatureScheme, serving_pci: int
) -> FeatureMatrix:
    columns = [c for c in frame.columns if c not in ("record_id", "time_s")]
    return FeatureMatrix(
        scheme=scheme,
        serving_pci=serving_pci,
        column_names=columns,
        values=frame[columns].to_numpy(dtype=np.float64).reshape(len(frame), len(columns)),
        record_ids=frame["record_id"].to_numpy(dtype=np.int64),
        times=frame["time_s"].to_numpy(dtype=np.float64),
    )


def dataset_summary(
    catalogs: dict[int, NeighborCatalog],
    validation_sets: list[dict[int, list[ReportRecord]]],
    test_sets: dict[int, dict[int, list[ReportRecord]]],
) -> list[DatasetSummaryRow]:
    """
    Per serving cell sizes of the three splits, pooled over scenarios, with the test anomalies (records naming the
    false PCI of their scenario) and how many of those are static novelties.

    `test_sets` maps the false PCI of each attack scenario to its preprocessed records.
    """
    rows = []
    for serving_pci in sorted(catalogs):
        catalog = catalogs[serving_pci]
        test_size = anomalies = static = 0
        for false_pci, by_serving in test_sets.items():
            for record in by_serving.get(serving_pci, []):
                test_size += 1
                if false_pci in record.neighbor_pcis:
                    anomalies += 1
                    static += flag_static(record, catalog)
        rows.append(
            DatasetSummaryRow(
                serving_pci=serving_pci,
                training_size=catalog.training_size,
                neighbors_in_training=format_pci_ranges(catalog.known_neighbors),
                validation_size=sum(
                    len(split.get(serving_pci, [])) for split in validation_sets
                ),
                test_size=test_size,
                anomalies=anomalies,
                static_anomalies=static,
            )
        )
    return rows
