import logging
from typing import (
    Dict,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
from scipy.optimize import brentq

from MEI import exceptions, schemas
from MEI.schemas import CARRIERS, Carrier, PortVector

logger = logging.getLogger("mei")

HOURS_PER_YEAR = 8760
SUMMER_SOLSTICE_DAY = 172
PEAK_IRRADIANCE = 700.0
SEASONAL_SWING = 200.0
SUNRISE_HOUR = 6.0
SUNSET_HOUR = 18.0
PV_ANNUAL_TARGET_KWH = 80_000.0


def _check_time_step(dt: float) -> None:
    if not dt > 0:
        raise exceptions.DeviceInputError(f"time step must be > 0 (dt = {dt})")


# ST-CAES

def _decay(state: schemas.StCaesState) -> schemas.StCaesState:
    if state.loss == 0.0:
        return state
    keep = 1.0 - state.loss
    return state.model_copy(update={"air": state.air * keep, "thermal": state.thermal * keep})


def _charge(
        state: schemas.StCaesState,
        elec_in: float,
        solar_heat_in: float,
        dt: float,
) -> Tuple[schemas.StCaesState, float, float]:
    accepted_elec = elec_in if state.charge_power is None else min(elec_in, state.charge_power)
    air_headroom = max(state.air_capacity - state.air, 0.0)
    if state.charge_efficiency * accepted_elec * dt > air_headroom:
        accepted_elec = air_headroom / (state.charge_efficiency * dt)

    # Compression heat and solar heat share the thermal headroom pro rata; none of it is vented.
    accepted_heat = solar_heat_in
    thermal_headroom = max(state.thermal_capacity - state.thermal, 0.0)
    thermal_offer = (state.heat_capture * accepted_elec + accepted_heat) * dt
    if thermal_offer > thermal_headroom:
        share = thermal_headroom / thermal_offer
        accepted_heat *= share
        if state.heat_capture > 0:
            accepted_elec *= share

    air = min(state.air + state.charge_efficiency * accepted_elec * dt, state.air_capacity)
    thermal = min(state.thermal + (state.heat_capture * accepted_elec + accepted_heat) * dt, state.thermal_capacity)
    return state.model_copy(update={"air": air, "thermal": thermal}), accepted_elec, accepted_heat


def _discharge(
        state: schemas.StCaesState,
        elec_req: float,
        heat_req: float,
        cool_req: float,
        dt: float,
) -> Tuple[schemas.StCaesState, PortVector]:
    if state.discharge_power is not None:
        elec_req = min(elec_req, state.discharge_power)
    energy_request = elec_req * dt
    eta_t = state.expansion_efficiency
    beta = state.heat_boost

    # Each kWh of air is preheated by at most one kWh from the thermal store.
    paired = min(state.air, state.thermal) if beta > 0 else 0.0
    if energy_request <= (eta_t + beta) * paired:
        air_draw = energy_request / (eta_t + beta)
        preheat = air_draw if beta > 0 else 0.0
    else:
        preheat = paired
        air_draw = min(state.air, paired + (energy_request - (eta_t + beta) * paired) / eta_t)

    electricity = min(eta_t * air_draw + beta * preheat, energy_request)
    cooling = min(state.cooling_coefficient * air_draw, cool_req * dt)
    heat = min(heat_req * dt, max(state.thermal - preheat, 0.0))

    new_state = state.model_copy(update={
        "air": max(state.air - air_draw, 0.0),
        "thermal": max(state.thermal - preheat - heat, 0.0),
    })
    delivered = PortVector(electricity=electricity / dt, heat=heat / dt, cooling=cooling / dt)
    return new_state, delivered


def st_caes_charge(
        state: schemas.StCaesState,
        elec_in: float,
        solar_heat_in: float,
        dt: float,
) -> Tuple[schemas.StCaesState, float, float]:
    """
    Charge an ST-CAES unit for one step.

    The step loss is applied to both stores first. Electricity enters the air store with
    charge_efficiency and the thermal store with heat_capture; solar collector heat joins it in
    the thermal store. Electricity is first capped by the air headroom; if compression and solar
    heat together overflow the thermal store, both are scaled down by the same factor, so no
    accepted power is lost.

    Args:
        state (StCaesState): Unit state at the start of the step.
        elec_in (float): Offered electric power in kW.
        solar_heat_in (float): Offered solar heat in kW.
        dt (float): Step length in hours.

    Returns:
        Tuple[StCaesState, float, float]: New state, accepted electric power (kW) and accepted
        solar heat (kW).

    Raises:
        DeviceInputError: If an input is negative or dt is not positive.
    """
    if elec_in < 0 or solar_heat_in < 0:
        raise exceptions.DeviceInputError("negative charge power")
    _check_time_step(dt)
    return _charge(_decay(state), elec_in, solar_heat_in, dt)


def st_caes_discharge(
        state: schemas.StCaesState,
        elec_req: float,
        heat_req: float,
        cool_req: float,
        dt: float,
) -> Tuple[schemas.StCaesState, PortVector]:
    """
    Discharge an ST-CAES unit for one step.

    Air is expanded through the turbine, preheated from the thermal store when heat_boost > 0.
    The electric path is served first; surplus thermal energy then serves the heat request and
    the turbine exhaust provides cooling_coefficient kWh of cooling per kWh of air.

    Args:
        state (StCaesState): Unit state at the start of the step.
        elec_req (float): Requested electric power in kW.
        heat_req (float): Requested heat in kW.
        cool_req (float): Requested cooling in kW.
        dt (float): Step length in hours.

    Returns:
        Tuple[StCaesState, PortVector]: New state and delivered power in kW per carrier.

    Raises:
        DeviceInputError: If a request is negative or dt is not positive.
    """
    if elec_req < 0 or heat_req < 0 or cool_req < 0:
        raise exceptions.DeviceInputError("negative discharge request")
    _check_time_step(dt)
    return _discharge(_decay(state), elec_req, heat_req, cool_req, dt)


def st_caes_step(
        state: schemas.StCaesState,
        setpoint: float,
        solar_heat_in: float = 0.0,
        heat_req: float = 0.0,
        cool_req: float = 0.0,
        dt: float = 1.0,
) -> Tuple[schemas.StCaesState, PortVector]:
    """
    Run one ST-CAES step from a signed electric setpoint, applying the loss exactly once.

    A negative setpoint charges with -setpoint kW, a positive one requests setpoint kW of
    electricity. Heat requests are served from the thermal store after the electric path.

    Returns:
        Tuple[StCaesState, PortVector]: New state and the unit's signed net injection in kW.
    """
    if solar_heat_in < 0 or heat_req < 0 or cool_req < 0:
        raise exceptions.DeviceInputError("negative discharge request")
    _check_time_step(dt)
    state = _decay(state)
    if setpoint < 0:
        state, accepted_elec, _ = _charge(state, -setpoint, solar_heat_in, dt)
        state, delivered = _discharge(state, 0.0, heat_req, cool_req, dt)
        return state, PortVector(electricity=-accepted_elec, heat=delivered.heat)
    if solar_heat_in > 0:
        state, _, _ = _charge(state, 0.0, solar_heat_in, dt)
    return _discharge(state, setpoint, heat_req, cool_req, dt)


def collector_heat(state: schemas.StCaesState, irradiance: Sequence[float]) -> np.ndarray:
    """Parabolic trough collector heat in kW for an irradiance series in W/m2."""
    series = np.asarray(irradiance, dtype=float)
    return np.maximum(series, 0.0) * state.collector_area * state.collector_efficiency / 1000.0


# Solar sources

def full_spectrum_output(irradiance: float, spec: schemas.SolarSourceSpec) -> Tuple[float, float]:
    """
    Split captured irradiance of a full-spectrum station into photovoltaic electricity and
    infrared heat.

    Args:
        irradiance (float): Irradiance in W/m2.
        spec (SolarSourceSpec): A full_spectrum source.

    Returns:
        Tuple[float, float]: (electric kW, heat kW).

    Raises:
        SpectrumSplitError: If the source is not a full_spectrum station.
        DeviceInputError: If irradiance is negative.
    """
    if spec.kind != "full_spectrum":
        raise exceptions.SpectrumSplitError(spec.kind)
    if irradiance < 0:
        raise exceptions.DeviceInputError(f"negative irradiance ({irradiance} W/m2)")
    captured = irradiance * spec.area / 1000.0
    return spec.pv_fraction * captured * spec.efficiency, spec.thermal_fraction * captured * spec.heat_efficiency


def pv_output(irradiance: Sequence[float], spec: schemas.SolarSourceSpec) -> np.ndarray:
    """
    PV station output p(t) = min(rated capacity, S(t) * area * efficiency / 1000) in kW.
    """
    series = np.maximum(np.asarray(irradiance, dtype=float), 0.0)
    return np.minimum(spec.rated_capacity, series * spec.area * spec.efficiency / 1000.0)


def chimney_output(irradiance: float, spec: schemas.SolarSourceSpec) -> float:
    # Updraft power law P = eta * S * A, clipped at the rating.
    return float(min(spec.rated_capacity, max(irradiance, 0.0) * spec.area * spec.efficiency / 1000.0))


def reference_irradiance(hours: int = HOURS_PER_YEAR, start_hour: int = 0) -> np.ndarray:
    """
    Deterministic clear-sky irradiance of the plateau reference site in W/m2, hourly from
    January 1st 00:00 (plus start_hour).

    Each day is a half-sine between 06:00 and 18:00 whose peak follows the season,
    700 +/- 200 W/m2 with the maximum at the summer solstice.
    """
    hour_index = np.arange(start_hour, start_hour + hours, dtype=float)
    day_of_year = np.floor(hour_index / 24.0) % 365 + 1
    hour_of_day = hour_index % 24.0
    peak = PEAK_IRRADIANCE + SEASONAL_SWING * np.cos(2.0 * np.pi * (day_of_year - SUMMER_SOLSTICE_DAY) / 365.0)
    daylight = (hour_of_day >= SUNRISE_HOUR) & (hour_of_day <= SUNSET_HOUR)
    shape = np.sin(np.pi * (hour_of_day - SUNRISE_HOUR) / (SUNSET_HOUR - SUNRISE_HOUR))
    return np.where(daylight, peak * np.maximum(shape, 0.0), 0.0)


def calibrate_area(
        spec: schemas.SolarSourceSpec,
        irradiance: Sequence[float],
        target_kwh: float = PV_ANNUAL_TARGET_KWH,
        dt: float = 1.0,
) -> schemas.SolarSourceSpec:
    """
    Return a copy of a PV source whose collector area yields target_kwh over the irradiance series.

    Raises:
        InfeasibleDemandError: If the target exceeds what the rated capacity can deliver.
    """
    _check_time_step(dt)
    series = np.maximum(np.asarray(irradiance, dtype=float), 0.0)
    ceiling = float(np.count_nonzero(series) * spec.rated_capacity * dt)
    if target_kwh >= ceiling:
        raise exceptions.InfeasibleDemandError(
            f"PV target {target_kwh} kWh exceeds the rated ceiling {ceiling:.1f} kWh"
        )

    def energy_gap(area: float) -> float:
        return float(np.sum(pv_output(series, spec.model_copy(update={"area": area}))) * dt) - target_kwh

    upper = target_kwh / (float(np.sum(series)) * spec.efficiency * dt / 1000.0)
    while energy_gap(upper) < 0:
        upper *= 2.0
    area = brentq(energy_gap, 0.0, upper, xtol=1e-9)
    logger.debug(f"Calibrated PV area to {area:.4f} m2 for {target_kwh} kWh")
    return spec.model_copy(update={"area": area})


# Carbon-fibre plant, loads, BIPV

def molten_salt_ready(spec: schemas.DualRolePlantSpec) -> bool:
    return abs(spec.salt_temperature - spec.salt_setpoint) <= spec.salt_tolerance


def dual_role_plant(spec: schemas.DualRolePlantSpec) -> PortVector:
    """
    Injection of the carbon-fibre plant: a power load in load mode or an equivalent CHP
    generator in generator mode. A generator whose molten salt is outside the tolerance band
    is not ready and injects nothing.
    """
    if spec.mode == "load":
        return PortVector(electricity=-spec.demand)
    if not molten_salt_ready(spec):
        logger.warning(
            f"Molten salt at {spec.salt_temperature} degC outside {spec.salt_setpoint} +/- "
            f"{spec.salt_tolerance} degC; generator mode disabled"
        )
        return PortVector()
    return PortVector(electricity=spec.electric_output, heat=spec.heat_output)


def _profile_values(profiles: Dict[str, schemas.Profile], name: Optional[str], steps: int) -> np.ndarray:
    if name is None:
        return np.zeros(steps)
    return np.asarray(profiles[name].values[:steps], dtype=float)


def load_injection(spec: schemas.LoadSpec, profiles: Dict[str, schemas.Profile], steps: int) -> List[PortVector]:
    """Demand profiles of a load device as negative injections, one PortVector per step."""
    columns = [_profile_values(profiles, getattr(spec, carrier.value), steps) for carrier in CARRIERS]
    if any(np.any(column < 0) for column in columns):
        raise exceptions.DeviceInputError("load profiles must be nonnegative")
    return [PortVector.from_sequence([-column[t] for column in columns]) for t in range(steps)]


def bipv_output(spec: schemas.BipvSpec, profiles: Dict[str, schemas.Profile], steps: int) -> List[PortVector]:
    """Library BIPV micro-grid as a signed net injection per step; the sign decides source or load."""
    columns = [
        _profile_values(profiles, getattr(spec, carrier.value, None), steps) if carrier is not Carrier.GAS
        else np.zeros(steps)
        for carrier in CARRIERS
    ]
    return [PortVector.from_sequence([column[t] for column in columns]) for t in range(steps)]


def irradiance_series(scenario: schemas.Scenario, name: Optional[str], steps: int) -> np.ndarray:
    return _profile_values(scenario.profiles, name, steps)


def fixed_injections(scenario: schemas.Scenario, device_id: str, steps: int) -> np.ndarray:
    """
    Non-dispatchable injection (or, for renewables, the available output) of a device as a
    steps x 4 array in carrier order. Storage and gas sources have no fixed part.
    """
    spec = scenario.devices[device_id]
    series = np.zeros((steps, len(CARRIERS)))
    if isinstance(spec, schemas.SolarSourceSpec):
        irradiance = irradiance_series(scenario, spec.irradiance, steps)
        if spec.kind == "pv":
            series[:, 0] = pv_output(irradiance, spec)
        elif spec.kind == "chimney":
            series[:, 0] = [chimney_output(value, spec) for value in irradiance]
        else:
            split = np.array([full_spectrum_output(max(value, 0.0), spec) for value in irradiance]).reshape(-1, 2)
            series[:, 0] = split[:, 0]
            series[:, 1] = split[:, 1]
    elif isinstance(spec, schemas.LoadSpec):
        series[:] = [vector.as_tuple() for vector in load_injection(spec, scenario.profiles, steps)]
    elif isinstance(spec, schemas.BipvSpec):
        series[:] = [vector.as_tuple() for vector in bipv_output(spec, scenario.profiles, steps)]
    elif isinstance(spec, schemas.DualRolePlantSpec):
        series[:] = dual_role_plant(spec).as_tuple()
    return series


if __name__ == "__main__":
    print("This is only a library. Nothing will happen when you execute it.")
