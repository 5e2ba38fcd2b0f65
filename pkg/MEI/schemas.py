import math
import re
from enum import Enum
from typing import (
    Annotated,
    ClassVar,
    Dict,
    FrozenSet,
    List,
    Literal,
    Mapping,
    Optional,
    Tuple,
    Union,
)

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    field_validator,
    model_validator,
)

from MEI import exceptions

IDENTIFIER_PATTERN = re.compile(r"^[A-Za-z0-9_-]+$")
COUPLING_TOLERANCE = 1e-12
STORE_TOLERANCE = 1e-9


class Carrier(str, Enum):
    """The four energy carriers of a micro energy internet."""

    ELECTRICITY = "electricity"
    HEAT = "heat"
    COOLING = "cooling"
    GAS = "gas"


CARRIERS: Tuple[Carrier, ...] = (Carrier.ELECTRICITY, Carrier.HEAT, Carrier.COOLING, Carrier.GAS)
CARRIER_INDEX: Dict[Carrier, int] = {carrier: index for index, carrier in enumerate(CARRIERS)}


class OperationMode(str, Enum):
    AUTONOMOUS = "autonomous"
    GRID_CONNECTED = "grid_connected"


class FrozenModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')


def _check_identifier(value: str, context: str) -> str:
    if not IDENTIFIER_PATTERN.match(value):
        raise ValueError(f"{context} '{value}' must match [A-Za-z0-9_-]+")
    return value


class PortVector(FrozenModel):
    """
    Per-carrier power of one port, in kW.

    Positive values are injections into the network, negative values are withdrawals.
    Carriers that are not given read as 0 kW.

    Attributes:

        electricity (float): Electric power in kW.
        heat (float): Heat power in kW.
        cooling (float): Cooling power in kW.
        gas (float): Gas power in kW.

    Example Usage:

        >>> chp = PortVector(electricity=30.0, heat=45.0)
        >>> chp.get(Carrier.GAS)
        0.0

    Validators:

        check_finite:
            Rejects NaN and infinite entries.
    """

    electricity: float = 0.0
    heat: float = 0.0
    cooling: float = 0.0
    gas: float = 0.0

    @field_validator("electricity", "heat", "cooling", "gas")
    def check_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("PortVector entries must be finite")
        return value

    @classmethod
    def from_mapping(cls, values: Mapping[Union[Carrier, str], float]) -> "PortVector":
        return cls(**{Carrier(carrier).value: float(value) for carrier, value in values.items()})

    @classmethod
    def from_sequence(cls, values) -> "PortVector":
        return cls(**{carrier.value: float(value) for carrier, value in zip(CARRIERS, values)})

    def get(self, carrier: Union[Carrier, str]) -> float:
        return getattr(self, Carrier(carrier).value)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return self.electricity, self.heat, self.cooling, self.gas

    def total(self) -> float:
        return self.electricity + self.heat + self.cooling + self.gas

    def scaled(self, factor: float) -> "PortVector":
        return PortVector.from_sequence([factor * value for value in self.as_tuple()])

    def __add__(self, other: "PortVector") -> "PortVector":
        return PortVector.from_sequence([a + b for a, b in zip(self.as_tuple(), other.as_tuple())])

    def __sub__(self, other: "PortVector") -> "PortVector":
        return PortVector.from_sequence([a - b for a, b in zip(self.as_tuple(), other.as_tuple())])


class CouplingMatrix(FrozenModel):
    """
    Energy-hub coupling matrix: entries[out_carrier][in_carrier] is the fraction of the input
    power on in_carrier that leaves the hub on out_carrier.

    Attributes:

        entries (Dict[Carrier, Dict[Carrier, float]]):
            Sparse efficiency fractions; absent pairs are 0.

    Example Usage:

        >>> chp = CouplingMatrix(entries={Carrier.ELECTRICITY: {Carrier.GAS: 0.30},
        ...                               Carrier.HEAT: {Carrier.GAS: 0.45}})

    Validators:

        check_entries:
            Every entry lies in [0, 1].
        check_columns:
            For every input carrier the column sum is at most 1 (no energy creation).
    """

    entries: Dict[Carrier, Dict[Carrier, float]] = Field(default_factory=dict)

    @field_validator("entries")
    def check_entries(cls, entries):
        for out_carrier, row in entries.items():
            for in_carrier, value in row.items():
                if not (0.0 <= value <= 1.0):
                    raise ValueError(
                        f"coupling entry {out_carrier.value}<-{in_carrier.value} = {value} must lie in [0, 1]"
                    )
        return entries

    @model_validator(mode="after")
    def check_columns(self):
        for in_carrier in CARRIERS:
            column_sum = self.column_sum(in_carrier)
            if column_sum > 1.0 + COUPLING_TOLERANCE:
                raise exceptions.HubColumnError(in_carrier.value, column_sum)
        return self

    @classmethod
    def identity(cls) -> "CouplingMatrix":
        return cls(entries={carrier: {carrier: 1.0} for carrier in CARRIERS})

    def coefficient(self, out_carrier: Carrier, in_carrier: Carrier) -> float:
        return self.entries.get(out_carrier, {}).get(in_carrier, 0.0)

    def column_sum(self, in_carrier: Carrier) -> float:
        return sum(row.get(in_carrier, 0.0) for row in self.entries.values())

    def as_array(self) -> np.ndarray:
        matrix = np.zeros((len(CARRIERS), len(CARRIERS)))
        for out_carrier, row in self.entries.items():
            for in_carrier, value in row.items():
                matrix[CARRIER_INDEX[out_carrier], CARRIER_INDEX[in_carrier]] = value
        return matrix


class Node(FrozenModel):
    id: str
    carriers: FrozenSet[Carrier] = frozenset()

    @field_validator("id")
    def check_id(cls, value):
        return _check_identifier(value, "node id")


class Link(FrozenModel):
    """A capacity-bounded single-carrier flow path between two nodes."""

    id: str
    source: str
    target: str
    carrier: Carrier
    capacity: float

    @field_validator("id")
    def check_id(cls, value):
        return _check_identifier(value, "link id")

    @field_validator("capacity")
    def check_capacity(cls, value):
        if not value > 0:
            raise ValueError("link capacity must be > 0")
        return value


class Hub(FrozenModel):
    id: str
    node: str
    coupling: CouplingMatrix
    # kW of total input, None means unbounded
    capacity: Optional[float] = None

    @field_validator("id")
    def check_id(cls, value):
        return _check_identifier(value, "hub id")

    @field_validator("capacity")
    def check_capacity(cls, value):
        if value is not None and value < 0:
            raise ValueError("hub capacity must be >= 0")
        return value


class DevicePlacement(FrozenModel):
    node: str
    device: str


class NetworkTopology(FrozenModel):
    """
    Nodes, links, hubs and device placements of one micro energy internet.

    Validators:

        check_references:
            Node ids are unique, link endpoints exist and every hub/device node exists.
    """

    nodes: Tuple[Node, ...] = ()
    links: Tuple[Link, ...] = ()
    hubs: Tuple[Hub, ...] = ()
    devices: Tuple[DevicePlacement, ...] = ()

    @model_validator(mode="after")
    def check_references(self):
        node_ids = [node.id for node in self.nodes]
        if len(set(node_ids)) != len(node_ids):
            raise ValueError("node ids must be unique within a scenario")
        known = set(node_ids)
        for link in self.links:
            for endpoint in (link.source, link.target):
                if endpoint not in known:
                    raise ValueError(f"link '{link.id}' refers to unknown node '{endpoint}'")
        for hub in self.hubs:
            if hub.node not in known:
                raise ValueError(f"hub '{hub.id}' refers to unknown node '{hub.node}'")
        for placement in self.devices:
            if placement.node not in known:
                raise ValueError(f"device '{placement.device}' refers to unknown node '{placement.node}'")
        for label, ids in (
                ("link", [link.id for link in self.links]),
                ("hub", [hub.id for hub in self.hubs]),
                ("device", [placement.device for placement in self.devices]),
        ):
            if len(set(ids)) != len(ids):
                raise ValueError(f"{label} ids must be unique within a scenario")
        return self

    def node_ids(self) -> List[str]:
        return [node.id for node in self.nodes]

    def device_nodes(self) -> Dict[str, str]:
        return {placement.device: placement.node for placement in self.devices}


# Device specifications

class StCaesState(FrozenModel):
    """
    Solar-thermal compressed air energy storage: state and parameters of the energy-bucket model.

    The air store holds compressed-air energy, the thermal store holds compression and solar
    heat. Charging splits electricity into the air store (charge_efficiency) and the thermal
    store (heat_capture); discharging expands air through the turbine (expansion_efficiency),
    gains heat_boost kWh of electricity per kWh of preheat and yields cooling_coefficient kWh of
    cooling per kWh of air from the turbine exhaust.

    Attributes:

        air, thermal (float): Stored energies in kWh.
        air_capacity, thermal_capacity (float): Store capacities in kWh.
        charge_efficiency (float): eta_c in (0, 1].
        heat_capture (float): eta_h in [0, 1).
        loss (float): Fraction of both stores lost at the start of each step, in [0, 1).
        expansion_efficiency (float): eta_t in (0, 1].
        heat_boost (float): beta in [0, 1].
        cooling_coefficient (float): kappa >= 0.
        charge_power, discharge_power (Optional[float]): Electric power ratings in kW.
        collector_area (float): Parabolic trough collector area in m2.
        collector_efficiency (float): Collector efficiency in [0, 1].
        irradiance (Optional[str]): Irradiance profile feeding the collector.

    Validators:

        check_chain:
            eta_c + eta_h <= 1, eta_t + kappa <= 1 and stores within [0, capacity].
    """

    kind: Literal["st_caes"] = "st_caes"
    air: float = 0.0
    thermal: float = 0.0
    air_capacity: float = Field(..., ge=0)
    thermal_capacity: float = Field(..., ge=0)
    charge_efficiency: float = Field(..., gt=0, le=1)
    heat_capture: float = Field(0.0, ge=0, lt=1)
    loss: float = Field(0.0, ge=0, lt=1)
    expansion_efficiency: float = Field(..., gt=0, le=1)
    heat_boost: float = Field(0.0, ge=0, le=1)
    cooling_coefficient: float = Field(0.0, ge=0)
    charge_power: Optional[float] = Field(None, ge=0)
    discharge_power: Optional[float] = Field(None, ge=0)
    collector_area: float = Field(0.0, ge=0)
    collector_efficiency: float = Field(0.0, ge=0, le=1)
    irradiance: Optional[str] = None

    @model_validator(mode="after")
    def check_chain(self):
        if self.charge_efficiency + self.heat_capture > 1.0 + COUPLING_TOLERANCE:
            raise ValueError("charge_efficiency + heat_capture must not exceed 1")
        if self.expansion_efficiency + self.cooling_coefficient > 1.0 + COUPLING_TOLERANCE:
            raise ValueError("expansion_efficiency + cooling_coefficient must not exceed 1")
        if not (-STORE_TOLERANCE <= self.air <= self.air_capacity + STORE_TOLERANCE):
            raise ValueError("air store must lie within [0, air_capacity]")
        if not (-STORE_TOLERANCE <= self.thermal <= self.thermal_capacity + STORE_TOLERANCE):
            raise ValueError("thermal store must lie within [0, thermal_capacity]")
        return self


class SolarSourceSpec(FrozenModel):
    """
    PV station, solar chimney or full-spectrum station.

    For full_spectrum sources `efficiency` applies to the photovoltaic share of the spectrum
    and `thermal_efficiency` to the infrared share.
    """

    SPECTRUM_PV_FRACTION: ClassVar[float] = 0.58
    SPECTRUM_THERMAL_FRACTION: ClassVar[float] = 0.42

    kind: Literal["pv", "chimney", "full_spectrum"]
    rated_capacity: float = Field(..., gt=0)
    efficiency: float
    thermal_efficiency: Optional[float] = None
    area: float = Field(..., ge=0)
    pv_fraction: float = SPECTRUM_PV_FRACTION
    thermal_fraction: float = SPECTRUM_THERMAL_FRACTION
    irradiance: Optional[str] = None

    @field_validator("efficiency", "thermal_efficiency")
    def check_efficiency(cls, value):
        if value is not None and not (0.0 < value <= 1.0):
            raise ValueError("efficiency must lie in (0, 1]")
        return value

    @model_validator(mode="after")
    def check_fractions(self):
        if abs(self.pv_fraction + self.thermal_fraction - 1.0) > COUPLING_TOLERANCE:
            raise ValueError("spectrum fractions must sum to 1.0")
        return self

    @property
    def heat_efficiency(self) -> float:
        return self.efficiency if self.thermal_efficiency is None else self.thermal_efficiency


class DualRolePlantSpec(FrozenModel):
    """Carbon-fibre recycling plant, either a power load or an equivalent CHP generator."""

    kind: Literal["dual_role"] = "dual_role"
    mode: Literal["load", "generator"]
    demand: float = Field(0.0, ge=0)
    electric_output: float = Field(0.0, ge=0)
    heat_output: float = Field(0.0, ge=0)
    salt_setpoint: float = 600.0
    salt_tolerance: float = Field(2.0, ge=0)
    salt_temperature: float = 600.0


class LoadSpec(FrozenModel):
    """Demand device; each field names a kW profile that is withdrawn from the node."""

    kind: Literal["load"] = "load"
    electricity: Optional[str] = None
    heat: Optional[str] = None
    cooling: Optional[str] = None
    gas: Optional[str] = None


class BipvSpec(FrozenModel):
    """Building-integrated PV micro-grid seen as a signed net injection profile per carrier."""

    kind: Literal["bipv"] = "bipv"
    electricity: Optional[str] = None
    heat: Optional[str] = None
    cooling: Optional[str] = None


class GasSourceSpec(FrozenModel):
    kind: Literal["gas_source"] = "gas_source"
    capacity: float = Field(..., ge=0)
    emission_factor: float = Field(0.2, ge=0)


DeviceSpec = Annotated[
    Union[StCaesState, SolarSourceSpec, DualRolePlantSpec, LoadSpec, BipvSpec, GasSourceSpec],
    Field(discriminator="kind"),
]

CLEAN_SOURCE_KINDS = frozenset({"pv", "chimney", "full_spectrum", "bipv"})
SOURCE_KINDS = CLEAN_SOURCE_KINDS | {"dual_role", "gas_source"}
IRRADIANCE_UNIT = "W/m2"
POWER_UNIT = "kW"


class Profile(FrozenModel):
    name: str
    unit: Literal["W/m2", "kW"]
    values: Tuple[float, ...]

    @field_validator("values")
    def check_values(cls, values):
        if not all(math.isfinite(value) for value in values):
            raise ValueError("profile values must be finite")
        return values


class UtilityConnection(FrozenModel):
    """Point of common coupling with the utilities and the exchange bound per carrier."""

    id: str = "utility"
    node: str
    bounds: PortVector = PortVector()
    feed_in_ratio: float = Field(1.0, ge=0, le=1)

    @field_validator("bounds")
    def check_bounds(cls, bounds: PortVector):
        if any(value < 0 for value in bounds.as_tuple()):
            raise ValueError("exchange bounds must be >= 0")
        return bounds


class LayerTimescales(FrozenModel):
    """
    Update periods of the thermal (slow), gas (medium) and electric (fast) sub-layers, in hours.

    Validators:

        check_nesting:
            slow >= medium >= fast > 0 and each period is an integer multiple of the next.
    """

    slow: float = 1.0
    medium: float = 1.0
    fast: float = 1.0

    @model_validator(mode="after")
    def check_nesting(self):
        if not (self.slow >= self.medium >= self.fast > 0):
            raise ValueError("timescales must satisfy slow >= medium >= fast > 0")
        for coarse, fine in ((self.slow, self.medium), (self.medium, self.fast)):
            ratio = coarse / fine
            if abs(ratio - round(ratio)) > 1e-9:
                raise ValueError(f"timescale {coarse} h is not an integer multiple of {fine} h")
        return self


class EmsSettings(FrozenModel):
    id: str = "ems"
    timescales: LayerTimescales = LayerTimescales()
    gamma: Optional[float] = Field(None, gt=0)


class CatalogComponent(FrozenModel):
    """Candidate hub component for portfolio planning."""

    id: str
    capital_cost: float = Field(..., ge=0)
    operating_cost: float = Field(0.0, ge=0)
    emission: float = Field(0.0, ge=0)
    capability: PortVector = PortVector()

    @field_validator("id")
    def check_id(cls, value):
        return _check_identifier(value, "catalog id")


class DynamicsSpec(FrozenModel):
    """Linear component dynamics as nested row tuples, converted to arrays by the control layer."""

    id: str
    A: Tuple[Tuple[float, ...], ...]
    B1: Tuple[Tuple[float, ...], ...]
    B2: Tuple[Tuple[float, ...], ...]
    C: Tuple[Tuple[float, ...], ...]
    D: Tuple[Tuple[float, ...], ...]


class Scenario(FrozenModel):
    """
    Full description of one micro energy internet.

    Attributes:

        name (str): Scenario identifier.
        topology (NetworkTopology): Nodes, links, hubs and device placements.
        devices (Dict[str, DeviceSpec]): Device specifications by device id.
        profiles (Dict[str, Profile]): Irradiance (W/m2) and demand (kW) series.
        prices (Dict[Carrier, Tuple[float, ...]]): Utility price series per carrier, currency/kWh.
        mode (OperationMode): Configured operation mode.
        self_use (bool): Energy is mainly for self-use on the demand side.
        time_step (float): Step length in hours.
        utility (Optional[UtilityConnection]): Coupling node and exchange bounds.
        ems (Optional[EmsSettings]): Energy management configuration.
        catalog (Tuple[CatalogComponent, ...]): Planning catalog.
        dynamics (Tuple[DynamicsSpec, ...]): Component-layer models.

    Validators:

        check_consistency:
            Every device is placed, profile references exist with the right unit, all series share
            one horizon and the utility node exists.
    """

    name: str = "scenario"
    topology: NetworkTopology = NetworkTopology()
    devices: Dict[str, DeviceSpec] = Field(default_factory=dict)
    profiles: Dict[str, Profile] = Field(default_factory=dict)
    prices: Dict[Carrier, Tuple[float, ...]] = Field(default_factory=dict)
    mode: OperationMode = OperationMode.GRID_CONNECTED
    self_use: bool = False
    time_step: float = 1.0
    utility: Optional[UtilityConnection] = None
    ems: Optional[EmsSettings] = None
    catalog: Tuple[CatalogComponent, ...] = ()
    dynamics: Tuple[DynamicsSpec, ...] = ()

    @field_validator("time_step")
    def check_time_step(cls, value):
        if not value > 0:
            raise ValueError("time step must be > 0")
        return value

    @model_validator(mode="after")
    def check_consistency(self):
        placed = set(self.topology.device_nodes())
        if placed != set(self.devices):
            missing = sorted(placed.symmetric_difference(self.devices))
            raise ValueError(f"devices and placements disagree: {missing}")

        for device_id, spec in self.devices.items():
            for profile_name, unit in profile_references(spec):
                profile = self.profiles.get(profile_name)
                if profile is None:
                    raise ValueError(f"device '{device_id}' refers to unknown profile '{profile_name}'")
                if profile.unit != unit:
                    raise ValueError(f"profile '{profile_name}' of device '{device_id}' must be in {unit}")

        lengths = {f"profile {name}": len(profile.values) for name, profile in self.profiles.items()}
        lengths.update({f"price {carrier.value}": len(values) for carrier, values in self.prices.items()})
        if len(set(lengths.values())) > 1:
            raise ValueError(f"all profiles and prices must share one horizon, got {lengths}")

        if self.utility is not None and self.utility.node not in set(self.topology.node_ids()):
            raise ValueError(f"utility node '{self.utility.node}' does not exist")
        return self

    @property
    def horizon(self) -> int:
        """Number of steps covered by the profile and price series."""
        for profile in self.profiles.values():
            return len(profile.values)
        for values in self.prices.values():
            return len(values)
        return 0

    def devices_of_kind(self, *kinds: str) -> List[str]:
        return sorted(device_id for device_id, spec in self.devices.items() if spec.kind in kinds)


def profile_references(spec) -> List[Tuple[str, str]]:
    if isinstance(spec, (SolarSourceSpec, StCaesState)):
        return [(spec.irradiance, IRRADIANCE_UNIT)] if spec.irradiance else []
    if isinstance(spec, (LoadSpec, BipvSpec)):
        names = [getattr(spec, carrier.value, None) for carrier in CARRIERS]
        return [(name, POWER_UNIT) for name in names if name]
    return []


# Run records

class PrincipleCheck(FrozenModel):
    name: str
    satisfied: bool
    message: str


class ComplianceReport(FrozenModel):
    """Outcome of the five design-principle checks, in the order they are stated."""

    checks: Tuple[PrincipleCheck, ...]

    @property
    def flags(self) -> Tuple[bool, ...]:
        return tuple(check.satisfied for check in self.checks)

    @property
    def all_satisfied(self) -> bool:
        return all(self.flags)


class ExchangeFlow(FrozenModel):
    """Signed flow series between a micro energy internet and its counterparty; positive is import."""

    party: str
    counterparty: str
    carrier: Carrier
    bound: float = Field(..., ge=0)
    values: Tuple[float, ...]

    @model_validator(mode="after")
    def check_bound(self):
        for value in self.values:
            if abs(value) > self.bound + STORE_TOLERANCE:
                raise ValueError(f"exchange flow {value} exceeds bound {self.bound}")
        return self


class ExchangeSchedule(FrozenModel):
    """
    Exchange flows decided by the utility-connection layer.

    Validators:

        check_autonomous:
            In autonomous mode every flow is exactly zero.
    """

    mode: OperationMode
    steps: int = Field(..., ge=0)
    flows: Tuple[ExchangeFlow, ...] = ()
    converged: bool = True
    residual: float = 0.0
    iterations: int = 0

    @model_validator(mode="after")
    def check_autonomous(self):
        for flow in self.flows:
            if len(flow.values) != self.steps:
                raise ValueError("exchange flow length must equal the schedule steps")
            if self.mode is OperationMode.AUTONOMOUS and any(value != 0.0 for value in flow.values):
                raise ValueError("autonomous mode requires all exchange flows to be zero")
        return self

    def series(self, party: str, carrier: Carrier) -> Tuple[float, ...]:
        """Sum of the flows of `party` on `carrier` over all counterparties."""
        total = [0.0] * self.steps
        for flow in self.flows:
            if flow.party == party and flow.carrier is carrier:
                total = [a + b for a, b in zip(total, flow.values)]
        return tuple(total)


class StorageSnapshot(FrozenModel):
    air: float
    thermal: float


class DispatchSetpoints(FrozenModel):
    """
    Per-step setpoints produced by the intra-energy-net layer.

    Attributes:

        steps (int): Number of dispatch steps.
        time_step (float): Step length in hours.
        devices (Dict[str, Tuple[PortVector, ...]]): Signed device injections per step.
        hub_inputs (Dict[str, Tuple[PortVector, ...]]): Hub input consumption per step.
        dumps (Dict[str, Tuple[PortVector, ...]]): Heat/cooling dissipated per node and step (<= 0).
        link_flows (Dict[str, Tuple[float, ...]]): Link flows, positive from source to target.
        storage (Dict[str, Tuple[StorageSnapshot, ...]]): Store contents at the end of each step.
        exchange (Optional[ExchangeSchedule]): Exchange schedule the dispatch was built on.
        exchange_node (Optional[str]): Node where exchange flows enter.
        party (str): Name of the dispatched micro energy internet.
        cost (float): Operating cost (fuel + purchases - sales).
        costs (Dict[str, float]): Cost breakdown, e.g. leader/follower costs.
        shortfall (Tuple[float, ...]): Unserved imbalance per step in kW (zero when feasible).
    """

    steps: int = Field(..., ge=0)
    time_step: float = 1.0
    devices: Dict[str, Tuple[PortVector, ...]] = Field(default_factory=dict)
    hub_inputs: Dict[str, Tuple[PortVector, ...]] = Field(default_factory=dict)
    dumps: Dict[str, Tuple[PortVector, ...]] = Field(default_factory=dict)
    link_flows: Dict[str, Tuple[float, ...]] = Field(default_factory=dict)
    storage: Dict[str, Tuple[StorageSnapshot, ...]] = Field(default_factory=dict)
    exchange: Optional[ExchangeSchedule] = None
    exchange_node: Optional[str] = None
    party: str = "scenario"
    cost: float = 0.0
    costs: Dict[str, float] = Field(default_factory=dict)
    shortfall: Tuple[float, ...] = ()

    def node_injections(self, device_nodes: Mapping[str, str], step: int) -> Dict[str, PortVector]:
        """Device injections, dumps and exchange imports summed per node for one step."""
        totals: Dict[str, List[float]] = {}

        def add(node: str, vector: PortVector) -> None:
            accumulator = totals.setdefault(node, [0.0] * len(CARRIERS))
            for index, value in enumerate(vector.as_tuple()):
                accumulator[index] += value

        for device_id, series in self.devices.items():
            if device_id in device_nodes:
                add(device_nodes[device_id], series[step])
        for node, series in self.dumps.items():
            add(node, series[step])
        if self.exchange is not None and self.exchange_node is not None:
            add(self.exchange_node, PortVector.from_sequence(
                [self.exchange.series(self.party, carrier)[step] for carrier in CARRIERS]
            ))
        return {node: PortVector.from_sequence(values) for node, values in totals.items()}

    def hub_inputs_at(self, step: int) -> Dict[str, PortVector]:
        return {hub_id: series[step] for hub_id, series in self.hub_inputs.items()}

    def link_flows_at(self, step: int) -> Dict[str, float]:
        return {link_id: series[step] for link_id, series in self.link_flows.items()}


if __name__ == "__main__":
    print("This is only a library. Nothing will happen when you execute it.")
