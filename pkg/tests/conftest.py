from pathlib import Path

import pytest
from sqlalchemy.pool import StaticPool
from sqlmodel import create_engine, SQLModel

from MEI import scenario_io, schemas
from MEI.schemas import Carrier, PortVector

DATA_DIRECTORY = Path(__file__).parent.parent / "data"
REFERENCE_SCENARIO = DATA_DIRECTORY / "qinghai.mei"


def single_node_scenario(
        devices,
        profiles=None,
        prices=None,
        hubs=(),
        utility=None,
        carriers=("electricity", "heat", "cooling", "gas"),
        name="toy",
        **fields,
):
    """
    Build a scenario whose devices and hubs all sit on one node "n".

    Args:
        devices (dict): Device specifications by device id.
        profiles (dict): Profile values by name; names used by irradiance references get W/m2.
        prices (dict): Price series by carrier name.
        hubs (tuple): Hub models placed on "n".
        utility (UtilityConnection): Optional coupling point.
        carriers (tuple): Carriers served by "n".

    Returns:
        Scenario: The validated scenario.
    """
    irradiance_names = {
        spec.irradiance for spec in devices.values() if getattr(spec, "irradiance", None)
    }
    profile_models = {
        key: schemas.Profile(name=key, unit="W/m2" if key in irradiance_names else "kW", values=tuple(values))
        for key, values in (profiles or {}).items()
    }
    topology = schemas.NetworkTopology(
        nodes=(schemas.Node(id="n", carriers=frozenset(Carrier(c) for c in carriers)),),
        hubs=tuple(hubs),
        devices=tuple(schemas.DevicePlacement(node="n", device=device_id) for device_id in devices),
    )
    return schemas.Scenario(
        name=name,
        topology=topology,
        devices=devices,
        profiles=profile_models,
        prices={Carrier(key): tuple(values) for key, values in (prices or {}).items()},
        utility=utility,
        **fields,
    )


def chp_hub(capacity=None):
    coupling = schemas.CouplingMatrix(entries={
        Carrier.ELECTRICITY: {Carrier.GAS: 0.30},
        Carrier.HEAT: {Carrier.GAS: 0.45},
    })
    return schemas.Hub(id="chp", node="n", coupling=coupling, capacity=capacity)


def storage_unit(**overrides):
    parameters = dict(
        air_capacity=40.0,
        thermal_capacity=0.0,
        charge_efficiency=0.7,
        expansion_efficiency=0.6,
    )
    parameters.update(overrides)
    return schemas.StCaesState(**parameters)


@pytest.fixture(scope="module")
def qinghai():
    return scenario_io.load_scenario(REFERENCE_SCENARIO)


@pytest.fixture(scope="module")
def qinghai_document():
    return REFERENCE_SCENARIO.read_text(encoding="utf-8")


@pytest.fixture
def chp_storage_scenario():
    """
    Gas CHP and one ST-CAES unit serving a flat 30 kW load over three steps with a gas price
    peak in the middle step.
    """
    return single_node_scenario(
        devices={
            "demand": schemas.LoadSpec(electricity="demand"),
            "gas": schemas.GasSourceSpec(capacity=1000.0),
            "caes": storage_unit(),
        },
        profiles={"demand": [30.0, 30.0, 30.0]},
        prices={"gas": [0.1, 0.5, 0.1], "electricity": [0.3, 0.9, 0.3]},
        hubs=(chp_hub(),),
    )


@pytest.fixture
def pv_load_scenario():
    """A 1 kW PV output covering a flat 1 kW load, plus an idle storage unit."""
    return single_node_scenario(
        devices={
            "pv": schemas.SolarSourceSpec(kind="pv", rated_capacity=5.0, efficiency=0.2, area=10.0, irradiance="sun"),
            "demand": schemas.LoadSpec(electricity="demand"),
            "caes": storage_unit(air=10.0),
        },
        profiles={"sun": [500.0] * 4, "demand": [1.0] * 4},
    )


@pytest.fixture
def zero_demand_scenario():
    """24 steps of zero demand with a utility connection and a full energy management setup."""
    return single_node_scenario(
        devices={"demand": schemas.LoadSpec(electricity="demand")},
        profiles={"demand": [0.0] * 24},
        prices={"electricity": [0.5] * 24},
        utility=schemas.UtilityConnection(node="n", bounds=PortVector(electricity=100.0)),
        self_use=True,
        ems=schemas.EmsSettings(timescales=schemas.LayerTimescales(slow=4, medium=2, fast=1)),
    )


@pytest.fixture
def archive_engine():
    engine = create_engine("sqlite://", connect_args={"check_same_thread": False}, poolclass=StaticPool)
    SQLModel.metadata.create_all(engine)
    yield engine
    engine.dispose()


if __name__ == "__main__":
    print(
        "This is only a library of fixtures. Run pytest to execute the tests."
    )
