import logging

import numpy as np
import pytest

from MEI import devices, exceptions, schemas
from MEI.schemas import PortVector
from tests.conftest import storage_unit


def _caes(**overrides):
    parameters = dict(air_capacity=400.0, thermal_capacity=300.0, heat_capture=0.25)
    parameters.update(overrides)
    return storage_unit(**parameters)


def test_charge_with_no_input_leaves_state_unchanged():
    """A null charge changes nothing."""
    state = _caes(air=10.0, thermal=5.0)
    new_state, accepted_elec, accepted_heat = devices.st_caes_charge(state, 0.0, 0.0, 1.0)

    assert new_state == state
    assert (accepted_elec, accepted_heat) == (0.0, 0.0)


def test_charge_splits_electricity_into_both_stores():
    """Electricity fills the air store with eta_c and the thermal store with eta_h."""
    new_state, accepted_elec, _ = devices.st_caes_charge(_caes(), 100.0, 0.0, 1.0)

    assert accepted_elec == pytest.approx(100.0)
    assert new_state.air == pytest.approx(70.0)
    assert new_state.thermal == pytest.approx(25.0)


def test_charge_saturated_air_store_accepts_solar_heat_only():
    """A full air store refuses electricity but the thermal store still takes solar heat."""
    state = _caes(air=400.0)
    new_state, accepted_elec, accepted_heat = devices.st_caes_charge(state, 50.0, 20.0, 1.0)

    assert accepted_elec == 0.0
    assert accepted_heat == pytest.approx(20.0)
    assert new_state.thermal == pytest.approx(20.0)


def test_charge_full_thermal_store_refuses_compression():
    """With no thermal headroom the compressor cannot run, since its heat has nowhere to go."""
    state = _caes(thermal=300.0)
    new_state, accepted_elec, accepted_heat = devices.st_caes_charge(state, 100.0, 20.0, 1.0)

    assert (accepted_elec, accepted_heat) == (0.0, 0.0)
    assert new_state == state


def test_charge_thermal_overflow_scales_both_inputs():
    """Compression and solar heat share the last 10 kWh of thermal headroom pro rata."""
    new_state, accepted_elec, accepted_heat = devices.st_caes_charge(_caes(thermal=290.0), 100.0, 15.0, 1.0)

    assert accepted_elec == pytest.approx(25.0)
    assert accepted_heat == pytest.approx(3.75)
    assert new_state.air == pytest.approx(17.5)
    assert new_state.thermal == pytest.approx(300.0)


def test_charge_without_heat_capture_ignores_full_thermal_store():
    """Electricity that leaves no compression heat is not held back by a full thermal store."""
    state = _caes(thermal=300.0, heat_capture=0.0)
    new_state, accepted_elec, accepted_heat = devices.st_caes_charge(state, 100.0, 20.0, 1.0)

    assert accepted_elec == pytest.approx(100.0)
    assert accepted_heat == 0.0
    assert new_state.air == pytest.approx(70.0)


def test_charge_respects_power_rating():
    """Accepted electricity is capped at the charge rating."""
    _, accepted_elec, _ = devices.st_caes_charge(_caes(charge_power=30.0), 100.0, 0.0, 1.0)
    assert accepted_elec == pytest.approx(30.0)


def test_charge_applies_step_loss_first():
    """The loss fraction leaves both stores at the start of the step."""
    new_state, _, _ = devices.st_caes_charge(_caes(air=100.0, thermal=100.0, loss=0.1), 0.0, 0.0, 1.0)

    assert new_state.air == pytest.approx(90.0)
    assert new_state.thermal == pytest.approx(90.0)


def test_charge_rejects_negative_power():
    """Charge powers are nonnegative."""
    with pytest.raises(exceptions.DeviceInputError) as exc_info:
        devices.st_caes_charge(_caes(), -1.0, 0.0, 1.0)
    assert "negative charge power" in str(exc_info.value)


def test_discharge_null_request():
    """A null request delivers nothing and keeps the state."""
    state = _caes(air=10.0)
    new_state, delivered = devices.st_caes_discharge(state, 0.0, 0.0, 0.0, 1.0)

    assert new_state == state
    assert delivered == PortVector()


def test_discharge_from_empty_stores():
    """Empty stores deliver nothing whatever is asked."""
    _, delivered = devices.st_caes_discharge(_caes(), 50.0, 50.0, 50.0, 1.0)
    assert delivered == PortVector()


def test_discharge_single_path():
    """Without preheat 100 kWh of air yield eta_t x 100 kWh of electricity."""
    state = storage_unit(air=100.0, air_capacity=400.0, expansion_efficiency=0.6)
    new_state, delivered = devices.st_caes_discharge(state, 1000.0, 0.0, 0.0, 1.0)

    assert delivered.electricity == pytest.approx(60.0)
    assert new_state.air == pytest.approx(0.0)


def test_discharge_with_preheat_boost():
    """Each kWh of air preheated by a kWh of stored heat yields eta_t + beta."""
    state = _caes(air=100.0, thermal=100.0, heat_boost=0.1)
    new_state, delivered = devices.st_caes_discharge(state, 35.0, 0.0, 0.0, 1.0)

    assert delivered.electricity == pytest.approx(35.0)
    assert new_state.air == pytest.approx(50.0)
    assert new_state.thermal == pytest.approx(50.0)


def test_discharge_exhaust_cooling_and_heat():
    """The turbine exhaust cools and surplus stored heat serves the heat request."""
    state = _caes(air=100.0, thermal=40.0, cooling_coefficient=0.1)
    _, delivered = devices.st_caes_discharge(state, 6.0, 30.0, 5.0, 1.0)

    assert delivered.electricity == pytest.approx(6.0)
    assert delivered.cooling == pytest.approx(1.0)
    assert delivered.heat == pytest.approx(30.0)


def test_discharge_rejects_negative_request():
    """Requests are nonnegative."""
    with pytest.raises(exceptions.DeviceInputError) as exc_info:
        devices.st_caes_discharge(_caes(), 0.0, -1.0, 0.0, 1.0)
    assert "negative discharge request" in str(exc_info.value)


def test_step_round_trip_efficiency():
    """Charging then discharging the same air returns eta_c x eta_t of the electricity."""
    state, injection = devices.st_caes_step(storage_unit(air_capacity=400.0), -100.0)
    assert injection.electricity == pytest.approx(-100.0)

    state, injection = devices.st_caes_step(state, 1000.0)
    assert injection.electricity == pytest.approx(42.0)
    assert state.air == pytest.approx(0.0)


def test_step_applies_loss_once():
    """An idle step loses exactly one loss fraction."""
    state, injection = devices.st_caes_step(_caes(air=100.0, loss=0.01), 0.0)

    assert state.air == pytest.approx(99.0)
    assert injection == PortVector()


def test_random_step_sequence_stays_within_bounds():
    """Ten thousand random charge and discharge steps keep both stores inside their capacities."""
    rng = np.random.default_rng(2024)
    steps = 10_000
    state = _caes(air=200.0, thermal=150.0, heat_boost=0.1, cooling_coefficient=0.3, loss=0.001)
    setpoints = rng.uniform(-300.0, 300.0, steps)
    solar = rng.uniform(0.0, 80.0, steps) * (rng.random(steps) < 0.5)
    heat = rng.uniform(0.0, 50.0, steps)
    cool = rng.uniform(0.0, 50.0, steps)

    for t in range(steps):
        state, injection = devices.st_caes_step(
            state, float(setpoints[t]), float(solar[t]), float(heat[t]), float(cool[t]), 0.5
        )
        assert 0.0 <= state.air <= state.air_capacity
        assert 0.0 <= state.thermal <= state.thermal_capacity
        assert injection.electricity <= max(float(setpoints[t]), 0.0) + 1e-9
        assert injection.electricity >= min(float(setpoints[t]), 0.0) - 1e-9


def test_collector_heat():
    """Collector heat is irradiance x area x efficiency in kW."""
    state = _caes(collector_area=100.0, collector_efficiency=0.6)
    heat = devices.collector_heat(state, [0.0, 500.0, -3.0])
    np.testing.assert_allclose(heat, [0.0, 30.0, 0.0])


def test_full_spectrum_split_at_unit_efficiency():
    """58% of the captured spectrum becomes electricity and 42% heat."""
    spec = schemas.SolarSourceSpec(kind="full_spectrum", rated_capacity=1.0, efficiency=1.0,
                                   thermal_efficiency=1.0, area=1.0)
    electric, heat = devices.full_spectrum_output(1000.0, spec)

    assert electric == pytest.approx(0.58)
    assert heat == pytest.approx(0.42)


def test_full_spectrum_split_in_the_dark():
    """No irradiance, no output."""
    spec = schemas.SolarSourceSpec(kind="full_spectrum", rated_capacity=1.0, efficiency=0.2, area=1.0)
    assert devices.full_spectrum_output(0.0, spec) == (0.0, 0.0)


def test_full_spectrum_split_arithmetic():
    """Each share is scaled by its own conversion efficiency."""
    spec = schemas.SolarSourceSpec(kind="full_spectrum", rated_capacity=1.0, efficiency=0.2,
                                   thermal_efficiency=0.5, area=2.0)
    electric, heat = devices.full_spectrum_output(500.0, spec)

    assert electric == pytest.approx(0.116)
    assert heat == pytest.approx(0.21)


def test_full_spectrum_split_rejects_other_kinds():
    """Only full-spectrum stations split the spectrum."""
    spec = schemas.SolarSourceSpec(kind="pv", rated_capacity=1.0, efficiency=0.2, area=1.0)
    with pytest.raises(exceptions.SpectrumSplitError) as exc_info:
        devices.full_spectrum_output(500.0, spec)
    assert "spectrum split undefined for this source" in str(exc_info.value)


def test_pv_output_zero_and_clipped():
    """Dark hours produce nothing and strong irradiance is clipped at the rating."""
    spec = schemas.SolarSourceSpec(kind="pv", rated_capacity=50.0, efficiency=0.16, area=1000.0)

    np.testing.assert_array_equal(devices.pv_output([0.0, 0.0], spec), [0.0, 0.0])
    np.testing.assert_array_equal(devices.pv_output([1000.0, 1200.0], spec), [50.0, 50.0])


def test_pv_reference_year_calibration():
    """A calibrated station yields 80,000 kWh over the reference year within 1%."""
    irradiance = devices.reference_irradiance()
    spec = schemas.SolarSourceSpec(kind="pv", rated_capacity=50.0, efficiency=0.16, area=100.0)
    calibrated = devices.calibrate_area(spec, irradiance)
    annual = devices.pv_output(irradiance, calibrated).sum()

    assert len(irradiance) == 8760
    assert annual == pytest.approx(80_000.0, rel=0.01)


def test_pv_calibration_beyond_rating():
    """A target above the rated ceiling cannot be met."""
    spec = schemas.SolarSourceSpec(kind="pv", rated_capacity=1.0, efficiency=0.16, area=100.0)
    with pytest.raises(exceptions.InfeasibleDemandError) as exc_info:
        devices.calibrate_area(spec, devices.reference_irradiance())
    assert "infeasible demand" in str(exc_info.value)


def test_reference_irradiance_shape():
    """Nights are dark and the midday peak follows the season."""
    irradiance = devices.reference_irradiance()
    summer_noon = irradiance[171 * 24 + 12]
    winter_noon = irradiance[355 * 24 + 12]

    assert irradiance[0] == 0.0
    assert irradiance.max() <= 900.0 + 1e-9
    assert summer_noon > winter_noon > 0.0


def test_chimney_output():
    """The chimney yields eta x S x A and never exceeds its rating."""
    spec = schemas.SolarSourceSpec(kind="chimney", rated_capacity=5.0, efficiency=0.01, area=100.0)

    assert devices.chimney_output(0.0, spec) == 0.0
    assert devices.chimney_output(800.0, spec) == pytest.approx(0.8)
    assert devices.chimney_output(1e9, spec) == 5.0


def test_dual_role_plant_modes():
    """Load mode withdraws its demand; generator mode injects electricity and heat."""
    load = schemas.DualRolePlantSpec(mode="load", demand=50.0)
    generator = schemas.DualRolePlantSpec(mode="generator", electric_output=30.0, heat_output=45.0)
    idle = schemas.DualRolePlantSpec(mode="generator")

    assert devices.dual_role_plant(load) == PortVector(electricity=-50.0)
    assert devices.dual_role_plant(generator) == PortVector(electricity=30.0, heat=45.0)
    assert devices.dual_role_plant(idle) == PortVector()


def test_dual_role_plant_cold_salt(caplog):
    """Generator mode is disabled while the molten salt is outside 600 +/- 2 degC."""
    spec = schemas.DualRolePlantSpec(mode="generator", electric_output=30.0, salt_temperature=590.0)

    with caplog.at_level(logging.WARNING, logger="mei"):
        assert devices.dual_role_plant(spec) == PortVector()
    assert not devices.molten_salt_ready(spec)
    assert "generator mode disabled" in caplog.text


def test_load_and_bipv_injections():
    """Loads withdraw their profiles; BIPV injects its signed net profile."""
    profiles = {
        "demand": schemas.Profile(name="demand", unit="kW", values=(10.0, 20.0)),
        "net": schemas.Profile(name="net", unit="kW", values=(-5.0, 5.0)),
    }
    load = devices.load_injection(schemas.LoadSpec(electricity="demand"), profiles, 2)
    bipv = devices.bipv_output(schemas.BipvSpec(electricity="net"), profiles, 2)

    assert [vector.electricity for vector in load] == [-10.0, -20.0]
    assert [vector.electricity for vector in bipv] == [-5.0, 5.0]


def test_load_rejects_negative_profiles():
    """Demand profiles are nonnegative."""
    profiles = {"demand": schemas.Profile(name="demand", unit="kW", values=(-1.0,))}
    with pytest.raises(exceptions.DeviceInputError) as exc_info:
        devices.load_injection(schemas.LoadSpec(electricity="demand"), profiles, 1)
    assert "load profiles must be nonnegative" in str(exc_info.value)


def test_fixed_injections_of_reference_devices(qinghai):
    """Fixed injections are steps x carriers arrays; the spectrum station also yields heat."""
    spectrum = devices.fixed_injections(qinghai, "spectrum", 24)
    plant = devices.fixed_injections(qinghai, "carbon-fibre", 24)

    assert spectrum.shape == (24, 4)
    assert spectrum[12, 1] > 0.0
    assert spectrum[0].sum() == 0.0
    np.testing.assert_array_equal(plant[:, 0], -40.0)
