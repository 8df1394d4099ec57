import math

import numpy as np
import pandas as pd

from fbs_workbench.base.exceptions import DomainError
from fbs_workbench.base.logging import log
from fbs_workbench.base.types import Position
from fbs_workbench.base.utils import optional_float
from fbs_workbench.service.radio_sim.exceptions import ScriptError, UnknownCellError
from fbs_workbench.service.radio_sim.types import (
    AttackScenario,
    CellSite,
    FalseCellScript,
    GridConfig,
    MeasurementReport,
    MobilityConfig,
    NeighborMeasurement,
    PropagationParams,
    Scenario,
    SimConfig,
    UeState,
)

TWO_PI = 2.0 * math.pi

# Okumura-Hata is specified for 150-1500 MHz. Base heights below its nominal 30 m floor (the grid uses 25 m, the false
# cell 2 m) are evaluated as-is.
HATA_CARRIER_RANGE_MHZ = (150.0, 1500.0)


def okumura_hata_loss(
    carrier_mhz: float,
    base_height_m: float,
    mobile_height_m: float,
    distance_km: float,
) -> float:
    """
    Median path loss in dB for a small/medium-sized city
    """
    if not distance_km > 0:
        raise DomainError(f"Distance must be positive, got {distance_km} km")
    lo, hi = HATA_CARRIER_RANGE_MHZ
    if not lo <= carrier_mhz <= hi:
        raise DomainError(f"Carrier {carrier_mhz} MHz outside {lo}-{hi} MHz")
    if not base_height_m > 0:
        raise DomainError(f"Base height must be positive, got {base_height_m} m")

    log_f = math.log10(carrier_mhz)
    log_hb = math.log10(base_height_m)
    mobile_correction = (1.1 * log_f - 0.7) * mobile_height_m - (1.56 * log_f - 0.8)
    return (
        69.55
        + 26.16 * log_f
        - 13.82 * log_hb
        - mobile_correction
        + (44.9 - 6.55 * log_hb) * math.log10(distance_km)
    )


def _ground_distance_km(
    cell: CellSite, position: Position, prop: PropagationParams
) -> float:
    return max(cell.position.distance_to(position), prop.min_distance_m) / 1000.0


def rsrp_of(cell: CellSite, ue: UeState, prop: PropagationParams) -> float:
    """
    Received reference signal power in dBm. Ground distances closer than `prop.min_distance_m` are clamped.
    """
    loss = okumura_hata_loss(
        prop.carrier_mhz,
        cell.height_m,
        ue.height_m,
        _ground_distance_km(cell, ue.position, prop),
    )
    return cell.tx_power_dbm - loss


def _dbm_to_mw(dbm):
    return np.power(10.0, np.asarray(dbm, dtype=np.float64) / 10.0)


def _rsrq_from_rsrp(
    rsrp_dbm: np.ndarray, prop: PropagationParams
) -> np.ndarray:
    """
    RSRQ of every cell given the RSRP of every transmitting cell at the UE: N * RSRP / RSSI, where RSSI is the total
    received power plus the noise floor
    """
    received_mw = _dbm_to_mw(rsrp_dbm)
    rssi_mw = received_mw.sum() + _dbm_to_mw(prop.noise_floor_dbm)
    return 10.0 * np.log10(prop.rsrq_bandwidth_blocks * received_mw / rssi_mw)


def rsrq_of(
    cell: CellSite,
    ue: UeState,
    all_cells: list[CellSite],
    prop: PropagationParams,
) -> float:
    assert any(
        other.pci == cell.pci for other in all_cells
    ), "RSRQ is measured against the set of transmitting cells, which must include the cell itself"
    rsrp = np.array([rsrp_of(other, ue, prop) for other in all_cells])
    index = next(i for i, other in enumerate(all_cells) if other.pci == cell.pci)
    return float(_rsrq_from_rsrp(rsrp, prop)[index])


def measure(
    ue: UeState,
    cells: list[CellSite],
    prop: PropagationParams,
    shadowing_db: np.ndarray | None = None,
) -> dict[int, tuple[float, float]]:
    """
    RSRP and RSRQ of every transmitting cell at the UE's position, keyed by PCI. `shadowing_db` is added to the RSRP of
    each cell (in `cells` order) when given.
    """
    rsrp = np.array([rsrp_of(cell, ue, prop) for cell in cells])
    if shadowing_db is not None:
        rsrp = rsrp + shadowing_db
    rsrq = _rsrq_from_rsrp(rsrp, prop)
    return {
        cell.pci: (float(p), float(q)) for cell, p, q in zip(cells, rsrp, rsrq)
    }


def _reflect(value: float, lo: float, hi: float) -> tuple[float, bool]:
    flipped = False
    while value < lo or value > hi:
        value = 2 * lo - value if value < lo else 2 * hi - value
        flipped = not flipped
    return value, flipped


def step_ue(
    ue: UeState, dt_s: float, mobility: MobilityConfig, rng: np.random.Generator
) -> UeState:
    """
    Advance a UE by one time step of its random walk. The heading is redrawn once `redirect_interval_s` has passed, and
    the UE bounces off the boundary like a ball.
    """
    assert dt_s > 0, "Time steps must be positive"
    heading = ue.heading
    elapsed = ue.elapsed_s
    if elapsed >= mobility.redirect_interval_s - 1e-9:
        heading = float(rng.uniform(0.0, TWO_PI))
        elapsed = 0.0

    distance = mobility.speed_mps * dt_s
    x = ue.position.x + distance * math.cos(heading)
    y = ue.position.y + distance * math.sin(heading)
    x, flip_x = _reflect(x, *mobility.x_range)
    y, flip_y = _reflect(y, *mobility.y_range)
    if flip_x:
        heading = math.pi - heading
    if flip_y:
        heading = -heading

    return ue.copy(
        update={
            "position": Position(x=x, y=y),
            "heading": heading % TWO_PI,
            "elapsed_s": elapsed + dt_s,
        }
    )


def _best_cell(candidates: list[tuple[int, float]]) -> tuple[int, float]:
    # Highest RSRQ, ties to the lowest PCI
    return min(candidates, key=lambda item: (-item[1], item[0]))


def update_serving(
    ue: UeState,
    cells: list[CellSite],
    prop: PropagationParams,
    hysteresis_db: float,
    measurements: dict[int, tuple[float, float]] | None = None,
) -> int:
    """
    Serving cell after this step. A UE without a (still valid) serving cell attaches to the best cell by RSRQ. An
    attached UE hands over when a neighbor is better than the serving cell by more than `hysteresis_db`.
    """
    measurements = measurements or measure(ue, cells, prop)
    candidates = [
        (cell.pci, measurements[cell.pci][1]) for cell in cells if cell.can_serve
    ]
    assert candidates, "At least one cell must be able to serve"
    serving_rsrq = dict(candidates).get(ue.serving_pci) if ue.serving_pci else None
    if serving_rsrq is None:
        return _best_cell(candidates)[0]

    others = [item for item in candidates if item[0] != ue.serving_pci]
    if not others:
        return ue.serving_pci
    target, target_rsrq = _best_cell(others)
    if target_rsrq > serving_rsrq + hysteresis_db:
        return target
    return ue.serving_pci


def emit_report(
    ue: UeState,
    cells: list[CellSite],
    prop: PropagationParams,
    config: SimConfig,
    time_s: float = 0.0,
    measurements: dict[int, tuple[float, float]] | None = None,
) -> MeasurementReport:
    assert ue.serving_pci is not None, "Only attached UEs report"
    measurements = measurements or measure(ue, cells, prop)
    serving_rsrp, serving_rsrq = measurements[ue.serving_pci]
    audible = [
        (pci, rsrp, rsrq)
        for pci, (rsrp, rsrq) in measurements.items()
        if pci != ue.serving_pci and rsrp >= config.neighbor_detect_threshold_dbm
    ]
    audible.sort(key=lambda item: (-item[1], item[0]))
    return MeasurementReport(
        time_s=time_s,
        ue_id=ue.ue_id,
        serving_pci=ue.serving_pci,
        serving_rsrp_dbm=serving_rsrp,
        serving_rsrq_db=serving_rsrq,
        neighbors=[
            NeighborMeasurement(pci=pci, rsrp_dbm=rsrp, rsrq_db=rsrq)
            for pci, rsrp, rsrq in audible[: config.max_neighbors_per_report]
        ],
    )


def false_cell_position(script: FalseCellScript, t_s: float) -> Position:
    assert t_s >= 0, "Time must be non-negative"
    if script.travel_s > 0 and not script.waypoints:
        raise ScriptError("A travelling false cell needs waypoints")
    if t_s < script.dwell_s or not script.waypoints:
        return script.start_position
    # Going from the dwell point to the first waypoint is a jump
    travelled = t_s - script.dwell_s
    if script.travel_s <= 0 or travelled >= script.travel_s:
        return script.waypoints[-1]

    target = script.path_length_m * travelled / script.travel_s
    for a, b in zip(script.waypoints[:-1], script.waypoints[1:]):
        segment = a.distance_to(b)
        if target <= segment and segment > 0:
            share = target / segment
            return Position(x=a.x + share * (b.x - a.x), y=a.y + share * (b.y - a.y))
        target -= segment
    return script.waypoints[-1]


def build_grid_topology(grid: GridConfig) -> list[CellSite]:
    """
    Row-first grid layout, PCIs starting at 1
    """
    return [
        CellSite(
            pci=index + 1,
            position=Position(
                x=(index % grid.grid_width) * grid.delta_x_m,
                y=(index // grid.grid_width) * grid.delta_y_m,
            ),
            height_m=grid.height_m,
            tx_power_dbm=grid.tx_power_dbm,
        )
        for index in range(grid.n_cells)
    ]


def scenario_topology(config: SimConfig, scenario: Scenario) -> list[CellSite]:
    """
    The legitimate network as the operator knows it. In an attack the decommissioned cell is still listed, but no
    longer admits UEs.
    """
    topology = build_grid_topology(config.grid)
    if not isinstance(scenario, AttackScenario):
        return topology
    if scenario.decommissioned_pci not in {cell.pci for cell in topology}:
        raise UnknownCellError(
            f"Cannot decommission PCI {scenario.decommissioned_pci}, it is not in the topology"
        )
    return [
        cell.copy(update={"can_serve": False})
        if cell.pci == scenario.decommissioned_pci
        else cell
        for cell in topology
    ]


def spawn_ue(ue_id: int, config: SimConfig, rng: np.random.Generator) -> UeState:
    x_lo, x_hi = config.mobility.x_range
    y_lo, y_hi = config.mobility.y_range
    h_lo, h_hi = config.ue_height_range_m
    return UeState(
        ue_id=ue_id,
        position=Position(x=rng.uniform(x_lo, x_hi), y=rng.uniform(y_lo, y_hi)),
        height_m=rng.uniform(h_lo, h_hi),
        heading=rng.uniform(0.0, TWO_PI),
    )


def run_scenario(config: SimConfig, scenario: Scenario) -> list[MeasurementReport]:
    """
    Simulate all UEs for `config.duration_s` and collect one report per UE per report period.

    In an attack scenario the decommissioned cell's own transmitter is gone; the false cell transmits its PCI from the
    scripted position but never serves.
    """
    rng = np.random.default_rng(config.seed)
    topology = scenario_topology(config, scenario)
    legitimate = topology
    script: FalseCellScript | None = None
    if isinstance(scenario, AttackScenario):
        script = scenario.script
        legitimate = [cell for cell in topology if cell.pci != script.pci]
        # Validate the script before spending time on the run
        false_cell_position(script, 0.0)

    ues = [spawn_ue(ue_id, config, rng) for ue_id in range(config.n_ues)]
    n_steps = int(round(config.duration_s / config.report_period_s))
    prop = config.propagation
    reports: list[MeasurementReport] = []

    for step in range(n_steps):
        time_s = step * config.report_period_s
        cells = legitimate
        if script is not None:
            cells = legitimate + [
                CellSite(
                    pci=script.pci,
                    position=false_cell_position(script, time_s),
                    height_m=script.height_m,
                    tx_power_dbm=script.tx_power_dbm,
                    can_serve=False,
                )
            ]
        for index, ue in enumerate(ues):
            if step > 0:
                ue = step_ue(ue, config.report_period_s, config.mobility, rng)
            shadowing = None
            if prop.shadowing_std_db > 0:
                shadowing = rng.normal(0.0, prop.shadowing_std_db, size=len(cells))
            measurements = measure(ue, cells, prop, shadowing)
            serving = update_serving(
                ue, cells, prop, config.handover_hysteresis_db, measurements
            )
            ue = ue.copy(update={"serving_pci": serving})
            ues[index] = ue
            reports.append(
                emit_report(ue, cells, prop, config, time_s, measurements)
            )

    log(
        "info",
        f"Simulated {len(reports)} reports",
        scenario=scenario.kind,
        n_ues=config.n_ues,
        duration_s=config.duration_s,
    )
    return reports


REPORT_COLUMNS = [
    "time_s",
    "ue_id",
    "serving_pci",
    "serving_rsrp_dbm",
    "serving_rsrq_db",
    "n_neighbors",
]

TOPOLOGY_COLUMNS = ["pci", "x_m", "y_m", "height_m", "tx_power_dbm", "can_serve"]


def _neighbor_columns(max_neighbors: int) -> list[str]:
    return [
        name
        for i in range(1, max_neighbors + 1)
        for name in (f"nbr{i}_pci", f"nbr{i}_rsrp_dbm", f"nbr{i}_rsrq_db")
    ]


def reports_to_frame(
    reports: list[MeasurementReport], max_neighbors: int
) -> pd.DataFrame:
    """
    Flat reports table, one row per report and `max_neighbors` (pci, rsrp, rsrq) slots with empty fields for absent
    neighbors
    """
    rows = []
    for report in reports:
        row: list = [
            report.time_s,
            report.ue_id,
            report.serving_pci,
            report.serving_rsrp_dbm,
            report.serving_rsrq_db,
            len(report.neighbors),
        ]
        for i in range(max_neighbors):
            if i < len(report.neighbors):
                n = report.neighbors[i]
                row += [n.pci, n.rsrp_dbm, n.rsrq_db]
            else:
                row += [None, None, None]
        rows.append(row)
    frame = pd.DataFrame(rows, columns=REPORT_COLUMNS + _neighbor_columns(max_neighbors))
    frame = frame.astype(
        {"time_s": "float64", "ue_id": "int64", "serving_pci": "int64", "n_neighbors": "int64"}
    )
    # PCIs stay integers even with empty slots
    pci_columns = [f"nbr{i}_pci" for i in range(1, max_neighbors + 1)]
    return frame.astype({column: "Int64" for column in pci_columns})


def frame_to_reports(frame: pd.DataFrame) -> list[MeasurementReport]:
    slots = [
        int(column.removeprefix("nbr").removesuffix("_pci"))
        for column in frame.columns
        if column.startswith("nbr") and column.endswith("_pci")
    ]
    reports = []
    for row in frame.itertuples(index=False):
        values = row._asdict()
        neighbors = []
        for i in sorted(slots)[: int(values["n_neighbors"])]:
            pci = optional_float(values[f"nbr{i}_pci"])
            if pci is None:
                break
            neighbors.append(
                NeighborMeasurement(
                    pci=int(pci),
                    rsrp_dbm=values[f"nbr{i}_rsrp_dbm"],
                    rsrq_db=values[f"nbr{i}_rsrq_db"],
                )
            )
        reports.append(
            MeasurementReport(
                time_s=values["time_s"],
                ue_id=int(values["ue_id"]),
                serving_pci=int(values["serving_pci"]),
                serving_rsrp_dbm=values["serving_rsrp_dbm"],
                serving_rsrq_db=values["serving_rsrq_db"],
                neighbors=neighbors,
            )
        )
    return reports


def topology_to_frame(topology: list[CellSite]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            [
                cell.pci,
                cell.position.x,
                cell.position.y,
                cell.height_m,
                cell.tx_power_dbm,
                cell.can_serve,
            ]
            for cell in topology
        ],
        columns=TOPOLOGY_COLUMNS,
    )


def frame_to_topology(frame: pd.DataFrame) -> list[CellSite]:
    return [
        CellSite(
            pci=int(row.pci),
            position=Position(x=row.x_m, y=row.y_m),
            height_m=row.height_m,
            tx_power_dbm=row.tx_power_dbm,
            can_serve=bool(row.can_serve),
        )
        for row in frame.itertuples(index=False)
    ]
