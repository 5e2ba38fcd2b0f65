import math

import pytest
from pydantic import ValidationError

from MEI import schemas
from MEI.schemas import Carrier, OperationMode, PortVector


def test_port_vector_defaults_missing_carriers_to_zero():
    """Carriers that are not given read as 0 kW."""
    vector = PortVector(electricity=30.0, heat=45.0)

    assert vector.get(Carrier.GAS) == 0.0
    assert vector.get("heat") == 45.0
    assert vector.as_tuple() == (30.0, 45.0, 0.0, 0.0)


def test_port_vector_rejects_non_finite_entries():
    """NaN and infinite powers are rejected."""
    with pytest.raises(ValidationError) as exc_info:
        PortVector(electricity=math.inf)
    assert "PortVector entries must be finite" in str(exc_info.value)

    with pytest.raises(ValidationError):
        PortVector(heat=math.nan)


def test_port_vector_arithmetic():
    """Addition, subtraction and scaling act per carrier."""
    a = PortVector(electricity=1.0, gas=2.0)
    b = PortVector(electricity=0.5, heat=3.0)

    assert (a + b).as_tuple() == (1.5, 3.0, 0.0, 2.0)
    assert (a - b).as_tuple() == (0.5, -3.0, 0.0, 2.0)
    assert a.scaled(2.0).total() == 6.0


def test_port_vector_is_frozen():
    """Port vectors are immutable."""
    vector = PortVector(electricity=1.0)
    with pytest.raises(ValidationError):
        vector.electricity = 2.0


def test_coupling_matrix_rejects_column_above_unity():
    """A hub may not create energy: every input column sums to at most 1."""
    with pytest.raises(ValidationError) as exc_info:
        schemas.CouplingMatrix(entries={
            Carrier.ELECTRICITY: {Carrier.GAS: 0.7},
            Carrier.HEAT: {Carrier.GAS: 0.5},
        })
    assert "hub column exceeds unity: input gas sums to 1.2" in str(exc_info.value)


def test_coupling_matrix_rejects_entries_outside_unit_interval():
    """Entries are efficiency fractions in [0, 1]."""
    with pytest.raises(ValidationError) as exc_info:
        schemas.CouplingMatrix(entries={Carrier.HEAT: {Carrier.ELECTRICITY: -0.1}})
    assert "must lie in [0, 1]" in str(exc_info.value)


def test_coupling_matrix_array_layout():
    """as_array places entries[out][in] at [out, in] in carrier order."""
    coupling = schemas.CouplingMatrix(entries={Carrier.HEAT: {Carrier.GAS: 0.45}})
    matrix = coupling.as_array()

    assert matrix.shape == (4, 4)
    assert matrix[1, 3] == 0.45
    assert matrix.sum() == 0.45
    assert coupling.column_sum(Carrier.GAS) == 0.45


def test_topology_rejects_unknown_link_endpoint():
    """Link endpoints must be nodes of the topology."""
    with pytest.raises(ValidationError) as exc_info:
        schemas.NetworkTopology(
            nodes=(schemas.Node(id="a"),),
            links=(schemas.Link(id="l", source="a", target="b", carrier=Carrier.ELECTRICITY, capacity=1.0),),
        )
    assert "refers to unknown node 'b'" in str(exc_info.value)


def test_topology_rejects_duplicate_node_ids():
    """Node ids are unique within a scenario."""
    with pytest.raises(ValidationError) as exc_info:
        schemas.NetworkTopology(nodes=(schemas.Node(id="a"), schemas.Node(id="a")))
    assert "node ids must be unique" in str(exc_info.value)


def test_node_id_must_be_an_identifier():
    """Ids follow [A-Za-z0-9_-]+."""
    with pytest.raises(ValidationError) as exc_info:
        schemas.Node(id="bad id")
    assert "must match" in str(exc_info.value)


def test_link_capacity_must_be_positive():
    """A link with zero capacity is rejected."""
    with pytest.raises(ValidationError) as exc_info:
        schemas.Link(id="l", source="a", target="b", carrier=Carrier.HEAT, capacity=0.0)
    assert "link capacity must be > 0" in str(exc_info.value)


def test_st_caes_rejects_energy_creating_chain():
    """Charge fractions and discharge fractions each stay within unity."""
    with pytest.raises(ValidationError) as exc_info:
        schemas.StCaesState(air_capacity=10, thermal_capacity=10, charge_efficiency=0.8, heat_capture=0.3,
                            expansion_efficiency=0.6)
    assert "charge_efficiency + heat_capture must not exceed 1" in str(exc_info.value)

    with pytest.raises(ValidationError) as exc_info:
        schemas.StCaesState(air_capacity=10, thermal_capacity=10, charge_efficiency=0.7,
                            expansion_efficiency=0.9, cooling_coefficient=0.2)
    assert "expansion_efficiency + cooling_coefficient must not exceed 1" in str(exc_info.value)


def test_st_caes_store_within_capacity():
    """Stored energy lies within [0, capacity]."""
    with pytest.raises(ValidationError) as exc_info:
        schemas.StCaesState(air=11, air_capacity=10, thermal_capacity=0, charge_efficiency=0.7,
                            expansion_efficiency=0.6)
    assert "air store must lie within [0, air_capacity]" in str(exc_info.value)


def test_solar_source_spectrum_fractions_sum_to_one():
    """The photovoltaic and infrared shares of a full-spectrum station sum to 1."""
    spec = schemas.SolarSourceSpec(kind="full_spectrum", rated_capacity=1.0, efficiency=0.2, area=1.0)
    assert spec.pv_fraction == 0.58
    assert spec.thermal_fraction == 0.42

    with pytest.raises(ValidationError) as exc_info:
        schemas.SolarSourceSpec(kind="full_spectrum", rated_capacity=1.0, efficiency=0.2, area=1.0,
                                pv_fraction=0.6, thermal_fraction=0.3)
    assert "spectrum fractions must sum to 1.0" in str(exc_info.value)


def test_solar_source_efficiency_range():
    """Efficiencies lie in (0, 1]."""
    with pytest.raises(ValidationError) as exc_info:
        schemas.SolarSourceSpec(kind="pv", rated_capacity=1.0, efficiency=0.0, area=1.0)
    assert "efficiency must lie in (0, 1]" in str(exc_info.value)


def test_layer_timescales_nesting():
    """slow >= medium >= fast > 0, each an integer multiple of the next."""
    assert schemas.LayerTimescales(slow=4, medium=2, fast=1).slow == 4

    with pytest.raises(ValidationError) as exc_info:
        schemas.LayerTimescales(slow=1, medium=2, fast=1)
    assert "slow >= medium >= fast > 0" in str(exc_info.value)

    with pytest.raises(ValidationError) as exc_info:
        schemas.LayerTimescales(slow=3, medium=2, fast=1)
    assert "not an integer multiple" in str(exc_info.value)


def _node_scenario(**fields):
    topology = schemas.NetworkTopology(
        nodes=(schemas.Node(id="n"),),
        devices=(schemas.DevicePlacement(node="n", device="load"),),
    )
    return schemas.Scenario(topology=topology, **fields)


def test_scenario_rejects_unknown_profile_reference():
    """Every referenced profile exists."""
    with pytest.raises(ValidationError) as exc_info:
        _node_scenario(devices={"load": schemas.LoadSpec(electricity="missing")})
    assert "refers to unknown profile 'missing'" in str(exc_info.value)


def test_scenario_rejects_wrong_profile_unit():
    """Load profiles are in kW."""
    with pytest.raises(ValidationError) as exc_info:
        _node_scenario(
            devices={"load": schemas.LoadSpec(electricity="sun")},
            profiles={"sun": schemas.Profile(name="sun", unit="W/m2", values=(1.0,))},
        )
    assert "must be in kW" in str(exc_info.value)


def test_scenario_rejects_mismatched_horizons():
    """Profiles and prices share one horizon."""
    with pytest.raises(ValidationError) as exc_info:
        _node_scenario(
            devices={"load": schemas.LoadSpec(electricity="demand")},
            profiles={"demand": schemas.Profile(name="demand", unit="kW", values=(1.0, 2.0))},
            prices={Carrier.GAS: (0.1, 0.2, 0.3)},
        )
    assert "must share one horizon" in str(exc_info.value)


def test_scenario_rejects_unplaced_device():
    """Devices and placements agree."""
    with pytest.raises(ValidationError) as exc_info:
        _node_scenario(devices={})
    assert "devices and placements disagree" in str(exc_info.value)


def test_scenario_horizon_and_kinds():
    """The horizon is the shared series length; devices are listed by kind."""
    scenario = _node_scenario(
        devices={"load": schemas.LoadSpec(electricity="demand")},
        profiles={"demand": schemas.Profile(name="demand", unit="kW", values=(1.0, 2.0, 3.0))},
    )
    assert scenario.horizon == 3
    assert scenario.devices_of_kind("load") == ["load"]
    assert scenario.devices_of_kind("pv") == []


def test_exchange_flow_respects_bound():
    """Exchange flows never exceed their bound."""
    with pytest.raises(ValidationError) as exc_info:
        schemas.ExchangeFlow(party="a", counterparty="utility", carrier=Carrier.ELECTRICITY, bound=5.0,
                             values=(1.0, -6.0))
    assert "exceeds bound" in str(exc_info.value)


def test_autonomous_schedule_requires_zero_flows():
    """In autonomous mode all exchange flows are exactly zero."""
    flow = schemas.ExchangeFlow(party="a", counterparty="utility", carrier=Carrier.GAS, bound=5.0, values=(1.0,))
    with pytest.raises(ValidationError) as exc_info:
        schemas.ExchangeSchedule(mode=OperationMode.AUTONOMOUS, steps=1, flows=(flow,))
    assert "autonomous mode requires all exchange flows to be zero" in str(exc_info.value)


def test_exchange_schedule_series_sums_counterparties():
    """series() adds the flows of one party on one carrier over all counterparties."""
    flows = (
        schemas.ExchangeFlow(party="a", counterparty="utility", carrier=Carrier.ELECTRICITY, bound=5.0,
                             values=(1.0, 2.0)),
        schemas.ExchangeFlow(party="a", counterparty="b", carrier=Carrier.ELECTRICITY, bound=5.0,
                             values=(-0.5, 0.5)),
        schemas.ExchangeFlow(party="b", counterparty="a", carrier=Carrier.ELECTRICITY, bound=5.0,
                             values=(0.5, -0.5)),
    )
    schedule = schemas.ExchangeSchedule(mode=OperationMode.GRID_CONNECTED, steps=2, flows=flows)

    assert schedule.series("a", Carrier.ELECTRICITY) == (0.5, 2.5)
    assert schedule.series("a", Carrier.HEAT) == (0.0, 0.0)


def test_compliance_report_flags():
    """Flags follow the order of the checks."""
    report = schemas.ComplianceReport(checks=(
        schemas.PrincipleCheck(name="clean_resource", satisfied=True, message=""),
        schemas.PrincipleCheck(name="storage", satisfied=False, message=""),
    ))
    assert report.flags == (True, False)
    assert not report.all_satisfied
