"""
End-to-end orchestration behind the CLI verbs: dispatch runs, portfolio planning and component
control synthesis.
"""

import logging
from pathlib import Path
from typing import (
    Dict,
    List,
    Optional,
    Tuple,
    Union,
)

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from MEI import (
    control,
    core_model,
    dependencies,
    ems,
    exceptions,
    planner,
    reports,
    schemas,
)
from MEI.schemas import CARRIERS, OperationMode

logger = logging.getLogger("mei")

CONTROL_SAMPLES = 100
CONTROL_HORIZON = 2.0
CONTROL_TIME_STEP = 1e-3


class ControlReport(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    gamma: float
    laws: Tuple[Tuple[str, control.ControlLaw], ...]
    dissipation: Tuple[Tuple[str, bool, float], ...]


def exchange_schedule(
        scenario: schemas.Scenario,
        steps: int,
        decision: ems.ModeDecision,
) -> schemas.ExchangeSchedule:
    """
    Exchange decided by the utility-connection layer for a mode decision. Autonomous runs keep one
    zero flow per configured carrier so the exchange table shows the cut-off coupling point.
    """
    autonomous = decision.mode is OperationMode.AUTONOMOUS
    models = ems.scenario_exchange_models(scenario, steps, None if autonomous else decision)
    if not models:
        return schemas.ExchangeSchedule(mode=decision.mode, steps=steps)
    return ems.exchange_equilibrium(models, decision.mode)


def balance_residuals(
        scenario: schemas.Scenario,
        setpoints: schemas.DispatchSetpoints,
) -> List[Dict[Tuple[str, schemas.Carrier], float]]:
    """
    Balance residual of every step of a dispatch.

    Raises:
        BalanceViolationError: If any residual exceeds BALANCE_TOLERANCE.
    """
    tolerance = dependencies.get_solver_config().BALANCE_TOLERANCE
    device_nodes = scenario.topology.device_nodes()
    rows = []
    for t in range(setpoints.steps):
        row = core_model.balance_residual(
            scenario.topology,
            setpoints.node_injections(device_nodes, t),
            setpoints.hub_inputs_at(t),
            setpoints.link_flows_at(t),
        )
        for (node, carrier), value in sorted(row.items(), key=lambda item: (item[0][0], CARRIERS.index(item[0][1]))):
            if abs(value) > tolerance:
                raise exceptions.BalanceViolationError(t, node, carrier.value, value)
        rows.append(row)
    return rows


def run_dispatch(
        scenario: schemas.Scenario,
        horizon: int,
        islanded: bool = False,
        stackelberg: bool = False,
) -> reports.RunReport:
    """
    Run the three management layers on a scenario.

    The operation mode is decided first, then the exchange equilibrium, then the cooperative (or
    leader-follower) dispatch; every emitted step is checked for balance.

    Args:
        scenario (Scenario): The micro energy internet.
        horizon (int): Number of steps.
        islanded (bool): Open the coupling point.
        stackelberg (bool): Use the leader-follower dispatch.

    Returns:
        RunReport: Tables and summary of the run.

    Raises:
        HorizonMisalignedError: If the horizon is not aligned to the layer timescales.
        InconsistentHorizonError: If the scenario series are shorter than the horizon.
        InfeasibleDispatchError: At the first step that cannot be balanced.
    """
    if scenario.profiles or scenario.prices:
        if horizon > scenario.horizon:
            raise exceptions.InconsistentHorizonError({"requested": horizon, "scenario": scenario.horizon})
    compliance = core_model.check_design_principles(scenario)
    if scenario.ems is not None:
        ems.timescale_schedule(scenario.ems.timescales, horizon * scenario.time_step)

    decision = ems.scenario_mode(scenario, islanded)
    exchange = exchange_schedule(scenario, horizon, decision)
    if stackelberg:
        setpoints = ems.scenario_stackelberg(scenario, exchange, horizon)
    else:
        setpoints = ems.iopf_cooperative(scenario, exchange, horizon)

    residuals = balance_residuals(scenario, setpoints)
    report = reports.build_report(scenario, setpoints, exchange, compliance, residuals)
    logger.info(
        f"Dispatch of '{scenario.name}' over {horizon} steps in {decision.mode.value} mode: "
        f"cost {setpoints.cost:.6g}, max residual {report.max_residual():.3e} kW"
    )
    return report


def run_planning(scenario: schemas.Scenario, directory: Optional[Union[str, Path]] = None) -> planner.PortfolioPlan:
    """
    Plan the hub portfolio of a scenario's catalog against its peak demand and optionally write
    front.csv (selection, cost, emission, weight) to `directory`.
    """
    plan = planner.plan_hub_portfolio(scenario.catalog, planner.peak_demand(scenario))
    if directory is not None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame({
            "selection": ["+".join(point.x) for point in plan.front.points],
            "cost": [reports.format_number(point.f1) for point in plan.front.points],
            "emission": [reports.format_number(point.f2) for point in plan.front.points],
            "weight": ["" if point.weight is None else reports.format_number(point.weight) for point in plan.front.points],
        })
        frame.to_csv(directory / "front.csv", index=False, lineterminator="\n")
    return plan


def run_control(scenario: schemas.Scenario, gamma: float, seed: int = 0) -> ControlReport:
    """
    Synthesize the H-infinity law of every component model and check the dissipation inequality
    on seeded random bounded disturbances from rest.
    """
    rng = np.random.default_rng(seed)
    laws = control.synthesize_all(scenario, gamma)
    steps = int(round(CONTROL_HORIZON / CONTROL_TIME_STEP))
    checks = []
    for (model_id, law), spec in zip(laws, scenario.dynamics):
        dynamics = control.DeviceDynamics.from_spec(spec)
        worst, passed = -np.inf, True
        for _ in range(CONTROL_SAMPLES):
            w = rng.uniform(-1.0, 1.0, size=(steps, dynamics.B1.shape[1]))
            result = control.dissipation_check(
                control.simulate_closed_loop(dynamics, law, w, CONTROL_TIME_STEP, CONTROL_HORIZON), gamma,
            )
            worst = max(worst, result.worst)
            passed = passed and result.passed
        checks.append((model_id, passed, float(worst)))
        logger.info(f"Control law of '{model_id}' at gamma {gamma}: dissipation {'passed' if passed else 'failed'}")
    return ControlReport(gamma=gamma, laws=laws, dissipation=tuple(checks))


if __name__ == "__main__":
    print("This is only a library. Nothing will happen when you execute it.")
