from enum import Enum
from typing import Literal

from pydantic import Field, root_validator, validator

from fbs_workbench.base.types import Position, WorkbenchBaseModel

# All public imports should be done through fbs_workbench.types.radio_sim
__all__: list = []


class CellSite(WorkbenchBaseModel):
    """
    A transmitting cell. A cell with `can_serve` false still transmits (it shows up as a neighbor in reports), but is
    never selected as serving cell. This is how a decommissioned cell, or a false cell, is represented.
    """

    pci: int = Field(gt=0)
    position: Position
    height_m: float = Field(gt=0)
    tx_power_dbm: float = 30.0
    can_serve: bool = True


class UeState(WorkbenchBaseModel):
    ue_id: int
    position: Position
    height_m: float
    # Radians, direction of travel
    heading: float
    # Time since the heading was last drawn
    elapsed_s: float = 0.0
    serving_pci: int | None = None


class MobilityConfig(WorkbenchBaseModel):
    """
    Random walk inside a rectangle: constant speed, a fresh uniform heading every `redirect_interval_s`, and specular
    reflection at the boundary.
    """

    # Rectangle given by two opposite corners
    boundary: tuple[Position, Position] = (
        Position(x=-250.0, y=-250.0),
        Position(x=1250.0, y=1750.0),
    )
    speed_mps: float = Field(5.0, ge=0)
    redirect_interval_s: float = Field(20.0, gt=0)

    @validator("boundary")
    def _non_degenerate(cls, value):
        a, b = value
        assert a.x != b.x and a.y != b.y, "Mobility boundary must be a proper rectangle"
        return value

    @property
    def x_range(self) -> tuple[float, float]:
        a, b = self.boundary
        return min(a.x, b.x), max(a.x, b.x)

    @property
    def y_range(self) -> tuple[float, float]:
        a, b = self.boundary
        return min(a.y, b.y), max(a.y, b.y)

    def contains(self, position: Position) -> bool:
        x_lo, x_hi = self.x_range
        y_lo, y_hi = self.y_range
        return x_lo <= position.x <= x_hi and y_lo <= position.y <= y_hi


class FalseCellScript(WorkbenchBaseModel):
    """
    Where the false cell is over time: parked at `start_position` for `dwell_s`, then moving at constant speed along
    `waypoints` for `travel_s`, then parked at the last waypoint.
    """

    pci: int = Field(gt=0)
    start_position: Position
    dwell_s: float = Field(200.0, ge=0)
    height_m: float = Field(2.0, gt=0)
    tx_power_dbm: float = 30.0
    waypoints: list[Position] = [
        Position(x=250.0, y=-250.0),
        Position(x=250.0, y=1750.0),
        Position(x=750.0, y=1750.0),
        Position(x=750.0, y=-250.0),
    ]
    travel_s: float = Field(120.0, ge=0)

    @property
    def path_length_m(self) -> float:
        return sum(
            a.distance_to(b) for a, b in zip(self.waypoints[:-1], self.waypoints[1:])
        )


class PropagationParams(WorkbenchBaseModel):
    class Environment(str, Enum):
        medium_city = "medium-city"

    carrier_mhz: float = Field(900.0, ge=150, le=1500)
    environment: Environment = Environment.medium_city
    noise_floor_dbm: float = -110.0
    # N in RSRQ = N * RSRP / RSSI
    rsrq_bandwidth_blocks: int = Field(25, ge=1)
    min_distance_m: float = Field(1.0, gt=0)
    # Log-normal shadowing, drawn per UE, cell and step. Off by default to stay with the plain Okumura-Hata model.
    shadowing_std_db: float = Field(0.0, ge=0)


class GridConfig(WorkbenchBaseModel):
    """
    Row-first grid: PCI 1 at the origin, then along x until `grid_width` cells, then the next row
    """

    delta_x_m: float = Field(500.0, gt=0)
    delta_y_m: float = Field(500.0, gt=0)
    grid_width: int = Field(3, ge=1)
    n_cells: int = Field(12, ge=1)
    height_m: float = Field(25.0, gt=0)
    tx_power_dbm: float = 30.0


class SimConfig(WorkbenchBaseModel):
    grid: GridConfig = GridConfig()
    n_ues: int = Field(200, ge=0)
    ue_height_range_m: tuple[float, float] = (1.5, 2.0)
    duration_s: float = Field(1000.0, gt=0)
    report_period_s: float = Field(1.0, gt=0)
    # Neighbors weaker than this are not reported. Around 1 km for a 25 m cell at 900 MHz.
    neighbor_detect_threshold_dbm: float = -98.0
    max_neighbors_per_report: int = Field(8, ge=1)
    handover_hysteresis_db: float = Field(1.0, ge=0)
    seed: int = Field(1, ge=0, lt=2**64)
    mobility: MobilityConfig = MobilityConfig()
    propagation: PropagationParams = PropagationParams()

    @root_validator(skip_on_failure=True)
    def _period_divides_redirect(cls, values):
        period = values["report_period_s"]
        interval = values["mobility"].redirect_interval_s
        steps = interval / period
        assert (
            abs(steps - round(steps)) < 1e-9
        ), "report_period_s must divide mobility.redirect_interval_s"
        return values


class NeighborMeasurement(WorkbenchBaseModel):
    pci: int
    rsrp_dbm: float
    rsrq_db: float


class MeasurementReport(WorkbenchBaseModel):
    """
    One periodic report from a UE to its serving cell, neighbors strongest first
    """

    time_s: float
    ue_id: int
    serving_pci: int
    serving_rsrp_dbm: float
    serving_rsrq_db: float
    neighbors: list[NeighborMeasurement] = []

    @property
    def neighbor_pcis(self) -> list[int]:
        return [n.pci for n in self.neighbors]


class BenignScenario(WorkbenchBaseModel):
    kind: Literal["benign"] = "benign"


class AttackScenario(WorkbenchBaseModel):
    """
    One legitimate cell is decommissioned (it stops transmitting and admits no UEs), and a false cell takes over its PCI
    following `script`
    """

    kind: Literal["attack"] = "attack"
    decommissioned_pci: int
    script: FalseCellScript

    @root_validator(skip_on_failure=True)
    def _same_pci(cls, values):
        assert (
            values["script"].pci == values["decommissioned_pci"]
        ), "The false cell must reuse the decommissioned PCI"
        return values


Scenario = BenignScenario | AttackScenario
