"""
Hierarchical energy management: the utility-connection layer (operation mode and exchange
equilibrium) and the intra-energy-net layer (cooperative and leader-follower IOPF) plus the
update instants of the slow, medium and fast sub-layers.

The component layer lives in MEI.control.
"""

import logging
import math
from typing import (
    Any,
    Callable,
    Dict,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from MEI import dependencies, exceptions, schemas
from MEI.dispatch import DispatchEngine
from MEI.game_kit import (
    BilevelProblem,
    GameProblem,
    PlayerProblem,
    StrategySet,
    nash_solve,
    stackelberg_solve,
)
from MEI.schemas import CARRIERS, Carrier, OperationMode, PortVector

logger = logging.getLogger("mei")


class ModeDecision(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    mode: OperationMode
    bounds: PortVector


class MeiCostModel(BaseModel):
    """
    Player of the exchange game.

    Attributes:

        name (str): Party name used in the exchange schedule.
        counterparty (str): The other end of the exchange (utility id or another MEI).
        carriers (Tuple[Carrier, ...]): Traded carriers.
        steps (int): Horizon of the exchange vector.
        bounds (PortVector): Absolute exchange bound per carrier in kW.
        cost (Callable): cost(own, others) -> operating cost, where own is the flat exchange vector
            in carrier-major order (all steps of the first carrier, then the next) and others maps
            the other parties' names to their flat vectors.
        resolution (Optional[float]): Grid the cost is evaluated on; equilibrium flows are snapped to it.
    """

    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    name: str
    counterparty: str = "utility"
    carriers: Tuple[Carrier, ...] = Field(..., min_length=1)
    steps: int = Field(..., ge=1)
    bounds: PortVector
    cost: Callable[[np.ndarray, Dict[str, np.ndarray]], float]
    resolution: Optional[float] = Field(None, gt=0)

    def strategy_set(self) -> StrategySet:
        upper = [self.bounds.get(carrier) for carrier in self.carriers for _ in range(self.steps)]
        return StrategySet.box([-value for value in upper], upper)


class InfrastructureModel(BaseModel):
    """
    Player of the leader-follower IOPF: one infrastructure owner and its setpoint space.

    `cost(own, other)` is the owner's cost given the other player's strategy. A follower may provide
    `response(leader)` in closed form; `dispatch(leader, follower)` assembles full setpoints when the
    strategies are not plain setpoint series.
    """

    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    name: str
    carrier: Carrier
    strategies: StrategySet
    cost: Callable[[Any, Any], float]
    response: Optional[Callable[[Any], Any]] = None
    dispatch: Optional[Callable[[Any, Any], schemas.DispatchSetpoints]] = None


class LayerSchedule(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    slow: Tuple[float, ...]
    medium: Tuple[float, ...]
    fast: Tuple[float, ...]


# Utility-connection layer

def decide_mode(
        prices: Mapping[Any, Sequence[float]],
        forecasts: Mapping[str, Sequence[float]],
        islanded: bool,
        bounds: Optional[PortVector] = None,
) -> ModeDecision:
    """
    Decide the operation mode and the exchange bounds.

    Args:
        prices (Mapping): Price series per carrier.
        forecasts (Mapping[str, Sequence[float]]): Demand and irradiance forecasts by name.
        islanded (bool): The coupling point is open.
        bounds (Optional[PortVector]): Configured exchange bounds, zero when absent.

    Returns:
        ModeDecision: Autonomous with zero bounds when islanded, grid-connected with the configured
            bounds otherwise.

    Raises:
        InconsistentHorizonError: If the series do not share one horizon.
    """
    lengths = {f"price {getattr(key, 'value', key)}": len(values) for key, values in prices.items()}
    lengths.update({f"forecast {name}": len(values) for name, values in forecasts.items()})
    if len(set(lengths.values())) > 1:
        raise exceptions.InconsistentHorizonError(lengths)

    if islanded:
        decision = ModeDecision(mode=OperationMode.AUTONOMOUS, bounds=PortVector())
    else:
        decision = ModeDecision(mode=OperationMode.GRID_CONNECTED, bounds=bounds or PortVector())
    logger.info(f"Operation mode: {decision.mode.value}")
    return decision


def scenario_mode(scenario: schemas.Scenario, islanded: bool = False) -> ModeDecision:
    """decide_mode on a scenario's prices, profiles and utility bounds; a configured autonomous mode islands."""
    forecasts = {name: profile.values for name, profile in scenario.profiles.items()}
    bounds = scenario.utility.bounds if scenario.utility is not None else PortVector()
    return decide_mode(scenario.prices, forecasts, islanded or scenario.mode is OperationMode.AUTONOMOUS, bounds)


def _zero_schedule(meis: Sequence[MeiCostModel], mode: OperationMode, bound: Callable[[MeiCostModel, Carrier], float]):
    steps = meis[0].steps if meis else 0
    flows = tuple(
        schemas.ExchangeFlow(
            party=mei.name,
            counterparty=mei.counterparty,
            carrier=carrier,
            bound=bound(mei, carrier),
            values=(0.0,) * steps,
        )
        for mei in meis
        for carrier in mei.carriers
    )
    return schemas.ExchangeSchedule(mode=mode, steps=steps, flows=flows)


def exchange_equilibrium(
        meis: Sequence[MeiCostModel],
        mode: OperationMode,
        tol: Optional[float] = None,
) -> schemas.ExchangeSchedule:
    """
    Exchange schedule at the Nash equilibrium of the MEIs' exchange game.

    Each MEI is a player whose strategy is its full exchange vector within [-bound, bound];
    best-response iteration starts from zero exchange. Autonomous mode returns the zero schedule
    without solving.

    Raises:
        DimensionError: If no MEI is given or the horizons differ.
    """
    if not meis:
        raise exceptions.DimensionError("the exchange game needs at least one MEI")
    if len({mei.steps for mei in meis}) > 1:
        raise exceptions.DimensionError("all MEIs must share one exchange horizon")
    if mode is OperationMode.AUTONOMOUS:
        logger.info("Autonomous mode: exchange flows set to zero")
        return _zero_schedule(meis, mode, lambda mei, carrier: 0.0)

    names = [mei.name for mei in meis]

    def objective(index: int) -> Callable[[Any, Tuple[Any, ...]], float]:
        def cost(own: Any, profile: Tuple[Any, ...]) -> float:
            others = {name: np.asarray(strategy) for k, (name, strategy) in enumerate(zip(names, profile)) if k != index}
            return float(meis[index].cost(np.asarray(own, dtype=float), others))
        return cost

    game = GameProblem(players=tuple(
        PlayerProblem(objective=objective(index), strategies=mei.strategy_set()) for index, mei in enumerate(meis)
    ))
    init = [np.zeros(len(mei.carriers) * mei.steps) for mei in meis]
    result = nash_solve(game, init, tol=tol)

    steps = meis[0].steps
    flows = []
    for mei, strategy in zip(meis, result.profile):
        vector = np.asarray(strategy, dtype=float).reshape(len(mei.carriers), steps)
        if mei.resolution is not None:
            vector = np.round(vector / mei.resolution) * mei.resolution
        for row, carrier in zip(vector, mei.carriers):
            bound = mei.bounds.get(carrier)
            flows.append(schemas.ExchangeFlow(
                party=mei.name,
                counterparty=mei.counterparty,
                carrier=carrier,
                bound=bound,
                values=tuple(float(np.clip(value, -bound, bound)) for value in row),
            ))
    logger.info(
        f"Exchange equilibrium: residual {result.residual:.3e} after {result.iterations} sweeps"
        f"{'' if result.converged else ' (not converged)'}"
    )
    return schemas.ExchangeSchedule(
        mode=mode,
        steps=steps,
        flows=tuple(flows),
        converged=result.converged,
        residual=result.residual,
        iterations=result.iterations,
    )


def scenario_exchange_models(
        scenario: schemas.Scenario,
        steps: int,
        decision: Optional[ModeDecision] = None,
        engine: Optional[DispatchEngine] = None,
) -> List[MeiCostModel]:
    """
    The scenario as a single player trading with its utility.

    The cost of an exchange vector is the operating cost of the balance closure with idle storage,
    summed over the steps; step costs are memoized on imports quantized to EXCHANGE_QUANTUM.
    Returns no player when the scenario has no utility connection or no positive bound.
    """
    if scenario.utility is None:
        return []
    bounds = decision.bounds if decision is not None else scenario.utility.bounds
    carriers = tuple(carrier for carrier in CARRIERS if bounds.get(carrier) > 0)
    if not carriers:
        return []
    engine = engine or DispatchEngine(scenario, steps)
    quantum = dependencies.get_solver_config().EXCHANGE_QUANTUM
    columns = [CARRIERS.index(carrier) for carrier in carriers]

    def cost(own: np.ndarray, others: Dict[str, np.ndarray]) -> float:
        rows = own.reshape(len(carriers), steps)
        total = 0.0
        for t in range(steps):
            imports = [0.0] * len(CARRIERS)
            for row, column in zip(rows, columns):
                imports[column] = float(row[t])
            total += engine.exchange_step_cost(t, imports, quantum)
        return total

    return [MeiCostModel(
        name=scenario.name,
        counterparty=scenario.utility.id,
        carriers=carriers,
        steps=steps,
        bounds=bounds,
        cost=cost,
        resolution=quantum,
    )]


# Intra-energy-net layer

def _check_exchange(scenario: schemas.Scenario, exchange: Optional[schemas.ExchangeSchedule], steps: int) -> None:
    if exchange is None:
        return
    if exchange.steps < steps:
        raise exceptions.InconsistentHorizonError({"exchange": exchange.steps, "dispatch": steps})
    bounds = scenario.utility.bounds if scenario.utility is not None else PortVector()
    for carrier in CARRIERS:
        for value in exchange.series(scenario.name, carrier):
            if abs(value) > bounds.get(carrier) + schemas.STORE_TOLERANCE:
                raise exceptions.ExchangeBoundError(scenario.name, carrier.value, value, bounds.get(carrier))


def iopf_cooperative(
        scenario: schemas.Scenario,
        exchange: Optional[schemas.ExchangeSchedule],
        horizon: int,
) -> schemas.DispatchSetpoints:
    """
    Cooperative integrated optimal power flow: one joint minimization of the operating cost
    (fuel + purchases - sales) over all device setpoints for a fixed exchange schedule.

    Args:
        scenario (Scenario): The micro energy internet.
        exchange (Optional[ExchangeSchedule]): Exchange flows decided by the upper layer.
        horizon (int): Number of steps.

    Returns:
        DispatchSetpoints: Balanced setpoints, storage trajectories and cost.

    Raises:
        ExchangeBoundError: If the exchange exceeds the scenario bounds.
        InfeasibleDispatchError: At the first step that cannot be balanced.
    """
    _check_exchange(scenario, exchange, horizon)
    engine = DispatchEngine(scenario, horizon, exchange)
    simulation = engine.optimize_storage()
    setpoints = engine.setpoints(simulation, dependencies.get_solver_config().BALANCE_TOLERANCE)
    logger.info(f"Cooperative IOPF of '{scenario.name}' over {horizon} steps: cost {setpoints.cost:.6g}")
    return setpoints


def _series(strategy: Any, carrier: Carrier) -> Tuple[PortVector, ...]:
    values = np.atleast_1d(np.asarray(strategy, dtype=float))
    return tuple(PortVector.from_mapping({carrier: float(value)}) for value in values)


def iopf_stackelberg(
        leader: InfrastructureModel,
        follower: InfrastructureModel,
        tol: Optional[float] = None,
) -> schemas.DispatchSetpoints:
    """
    Leader-follower integrated optimal power flow between two infrastructure owners.

    The leader commits first anticipating the follower's best response. Unless the follower
    assembles full setpoints, each strategy is read as the owner's setpoint series on its carrier.
    The costs map reports "leader" and "follower".
    """
    problem = BilevelProblem(
        leader_objective=lambda x, y: leader.cost(x, y),
        follower_objective=lambda y, x: follower.cost(y, x),
        leader_set=leader.strategies,
        follower_set=follower.strategies,
        follower_response=follower.response,
    )
    result = stackelberg_solve(problem, tol)
    costs = {"leader": result.leader_cost, "follower": result.follower_cost}

    if follower.dispatch is not None:
        setpoints = follower.dispatch(result.leader, result.follower)
        return setpoints.model_copy(update={"costs": {**setpoints.costs, **costs}})

    devices = {
        leader.name: _series(result.leader, leader.carrier),
        follower.name: _series(result.follower, follower.carrier),
    }
    steps = max(len(series) for series in devices.values())
    if any(len(series) != steps for series in devices.values()):
        raise exceptions.DimensionError("leader and follower setpoint series differ in length")
    return schemas.DispatchSetpoints(
        steps=steps,
        devices=devices,
        party=leader.name,
        cost=result.leader_cost + result.follower_cost,
        costs=costs,
        shortfall=(0.0,) * steps,
    )


def scenario_stackelberg(
        scenario: schemas.Scenario,
        exchange: Optional[schemas.ExchangeSchedule],
        steps: int,
) -> schemas.DispatchSetpoints:
    """
    Leader-follower IOPF of a scenario: the storage owner leads by committing air-store level
    trajectories and is paid the electricity price for its net electric injection; the network
    operator follows with the cost-minimal balance closure.

    Without storage this is the cooperative dispatch with idle storage.
    """
    _check_exchange(scenario, exchange, steps)
    solver_config = dependencies.get_solver_config()
    engine = DispatchEngine(scenario, steps, exchange)
    units = len(engine.storage)
    if units == 0 or steps == 0:
        return engine.setpoints(engine.simulate(engine.idle_targets()), solver_config.BALANCE_TOLERANCE)

    shape = (units, steps)
    capacity = np.repeat([unit.spec.air_capacity for unit in engine.storage], steps)
    price = engine.prices[:, CARRIERS.index(Carrier.ELECTRICITY)]

    def follower_response(levels):
        return engine.simulate(np.asarray(levels, dtype=float).reshape(shape))

    def follower_cost(simulation, levels) -> float:
        return simulation.objective

    def leader_cost(levels, simulation) -> float:
        revenue = math.fsum(
            price[t] * injection[CARRIERS.index(Carrier.ELECTRICITY)] * engine.dt
            for t, step in enumerate(simulation.injections)
            for injection in step
        )
        return -revenue + engine.penalty * engine.dt * math.fsum(simulation.shortfalls)

    owner = scenario.devices_of_kind("st_caes")[0]
    leader = InfrastructureModel(
        name=owner,
        carrier=Carrier.ELECTRICITY,
        strategies=StrategySet.box(np.zeros(units * steps), capacity),
        cost=leader_cost,
    )
    follower = InfrastructureModel(
        name=scenario.name,
        carrier=Carrier.ELECTRICITY,
        strategies=StrategySet.finite(["closure"]),
        cost=follower_cost,
        response=follower_response,
        dispatch=lambda levels, simulation: engine.setpoints(simulation, solver_config.BALANCE_TOLERANCE),
    )
    setpoints = iopf_stackelberg(leader, follower, solver_config.DISPATCH_LINE_TOLERANCE)
    logger.info(f"Stackelberg IOPF of '{scenario.name}': leader cost {setpoints.costs['leader']:.6g}")
    return setpoints


# Sub-layer timescales

def timescale_schedule(ts: schemas.LayerTimescales, horizon: float) -> LayerSchedule:
    """
    Update instants (h) of the thermal (slow), gas (medium) and electric (fast) sub-layers.

    Raises:
        HorizonMisalignedError: If the horizon is not a multiple of the slow step.
    """
    count = horizon / ts.slow
    if horizon < 0 or abs(count - round(count)) > 1e-9:
        raise exceptions.HorizonMisalignedError(horizon, ts.slow)

    def instants(step: float) -> Tuple[float, ...]:
        return tuple(k * step for k in range(int(round(horizon / step))))

    return LayerSchedule(slow=instants(ts.slow), medium=instants(ts.medium), fast=instants(ts.fast))


if __name__ == "__main__":
    print("This is only a library. Nothing will happen when you execute it.")
