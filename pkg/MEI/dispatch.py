"""
Intra-energy-net dispatch engine.

Every step is closed by a merit-order balance on per-carrier copper plates (the connected
components of each carrier's link graph); a step whose plate balance would overload a link is
closed again as a linear program over nodal balances within the link capacities. Storage is the
only coupling between steps and is optimized as air-store level trajectories by projected
block-coordinate descent with golden-section line searches.
"""

import logging
import math
from typing import (
    Dict,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
from scipy.optimize import linprog

from MEI import core_model, dependencies, devices, exceptions, schemas
from MEI.game_kit import golden_section
from MEI.schemas import CARRIERS, PortVector

logger = logging.getLogger("mei")

ELECTRICITY, HEAT, COOLING, GAS = range(4)
# Deficits are covered downstream: cooling may draw on heat, heat on electricity, electricity on gas
DEFICIT_ORDER = (COOLING, HEAT, ELECTRICITY, GAS)
SURPLUS_ORDER = (ELECTRICITY, GAS, HEAT, COOLING)
CURTAILABLE = (ELECTRICITY, HEAT)
DUMPABLE = (HEAT, COOLING)
EPSILON = 1e-12
TIE_BREAK = 1e-6
NUDGE_FACTOR = 10.0

PlateKey = Tuple[int, int]


class _Hub(NamedTuple):
    id: str
    node: str
    matrix: Tuple[Tuple[float, ...], ...]
    capacity: float


class _Mode(NamedTuple):
    hub: _Hub
    input: int
    efficiency: float


class _Storage(NamedTuple):
    id: str
    node: str
    spec: schemas.StCaesState
    solar_heat: Tuple[float, ...]


class StepResult(NamedTuple):
    cost: float
    shortfall: float
    gas: Dict[str, float]
    curtailment: Dict[Tuple[str, int], float]
    hub_inputs: Dict[str, List[float]]
    dumps: Dict[Tuple[str, int], float]
    flows: Dict[str, float] = {}


class Simulation(NamedTuple):
    targets: np.ndarray
    achieved: np.ndarray
    states: Tuple[Tuple[schemas.StCaesState, ...], ...]
    injections: Tuple[Tuple[Tuple[float, ...], ...], ...]
    costs: Tuple[float, ...]
    shortfalls: Tuple[float, ...]
    objective: float


class DispatchEngine:
    """
    Dispatch model of one scenario over a fixed horizon and exchange schedule.

    Args:
        scenario (Scenario): The micro energy internet.
        steps (int): Number of steps to dispatch.
        exchange (Optional[ExchangeSchedule]): Exchange flows entering at the utility node.
        party (Optional[str]): Name of this MEI in the exchange schedule, defaults to the scenario name.
    """

    def __init__(
            self,
            scenario: schemas.Scenario,
            steps: int,
            exchange: Optional[schemas.ExchangeSchedule] = None,
            party: Optional[str] = None,
    ):
        if steps > scenario.horizon and (scenario.profiles or scenario.prices):
            raise exceptions.InconsistentHorizonError({"requested": steps, "scenario": scenario.horizon})
        solver_config = dependencies.get_solver_config()
        self.scenario = scenario
        self.steps = steps
        self.dt = scenario.time_step
        self.exchange = exchange
        self.party = party or scenario.name
        self.penalty = solver_config.SHORTFALL_PENALTY
        self.line_tolerance = solver_config.DISPATCH_LINE_TOLERANCE
        self.max_sweeps = solver_config.MAX_SWEEPS

        topology = scenario.topology
        components = core_model.carrier_components(topology)
        self.comp = [components[carrier] for carrier in CARRIERS]
        self.node_ids = topology.node_ids()
        self.links = sorted(topology.links, key=lambda link: link.id)
        self.forest = core_model.routing_forest(topology)
        self.dump_nodes: List[Dict[int, str]] = []
        for index in range(len(CARRIERS)):
            first: Dict[int, str] = {}
            for node_id in sorted(self.comp[index]):
                first.setdefault(self.comp[index][node_id], node_id)
            self.dump_nodes.append(first)
        device_nodes = topology.device_nodes()
        self.device_nodes = device_nodes

        self.prices = np.zeros((steps, len(CARRIERS)))
        for carrier, values in scenario.prices.items():
            self.prices[:, CARRIERS.index(carrier)] = np.asarray(values[:steps], dtype=float)

        self.utility_node = scenario.utility.node if scenario.utility is not None else None
        self.feed_in_ratio = scenario.utility.feed_in_ratio if scenario.utility is not None else 1.0
        self.imports = np.zeros((steps, len(CARRIERS)))
        if exchange is not None and self.utility_node is not None:
            for index, carrier in enumerate(CARRIERS):
                self.imports[:, index] = exchange.series(self.party, carrier)[:steps]

        self.fixed: Dict[str, np.ndarray] = {}
        self.renewables: List[Tuple[str, str, List[List[float]]]] = []
        self.gas_sources: List[Tuple[str, str, float]] = []
        self.storage: List[_Storage] = []
        for device_id in sorted(scenario.devices):
            spec = scenario.devices[device_id]
            node = device_nodes[device_id]
            if spec.kind in ("load", "bipv", "dual_role"):
                self.fixed[device_id] = devices.fixed_injections(scenario, device_id, steps)
            elif spec.kind in ("pv", "chimney", "full_spectrum"):
                self.renewables.append((device_id, node, devices.fixed_injections(scenario, device_id, steps).tolist()))
            elif spec.kind == "gas_source":
                self.gas_sources.append((device_id, node, spec.capacity))
            elif spec.kind == "st_caes":
                irradiance = devices.irradiance_series(scenario, spec.irradiance, steps)
                self.storage.append(_Storage(device_id, node, spec, tuple(devices.collector_heat(spec, irradiance))))

        self.hubs = [
            _Hub(hub.id, hub.node, tuple(map(tuple, hub.coupling.as_array())),
                 math.inf if hub.capacity is None else hub.capacity)
            for hub in sorted(topology.hubs, key=lambda hub: hub.id)
        ]
        self.free_modes: Dict[int, List[_Mode]] = {}
        self.merit_modes: Dict[int, List[_Mode]] = {}
        for output in DEFICIT_ORDER:
            downstream = DEFICIT_ORDER[DEFICIT_ORDER.index(output) + 1:]
            modes = []
            for hub in self.hubs:
                inputs = [(hub.matrix[output][j], j) for j in downstream if hub.matrix[output][j] > 0]
                if inputs:
                    efficiency, j = max(inputs)
                    modes.append(_Mode(hub, j, efficiency))
            self.free_modes[output] = sorted(modes, key=lambda m: (-m.efficiency, m.hub.id))
            self.merit_modes[output] = sorted(modes, key=lambda m: (m.input != GAS, -m.efficiency, m.hub.id))
        # Hubs whose outputs from a carrier are only dumpable heat or cooling can absorb its surplus
        self.absorbers: Dict[int, List[_Mode]] = {}
        for carrier in (ELECTRICITY, GAS):
            self.absorbers[carrier] = [
                _Mode(hub, carrier, 1.0) for hub in self.hubs
                if any(hub.matrix[i][carrier] > 0 for i in range(len(CARRIERS)))
                and all(hub.matrix[i][carrier] == 0 for i in range(len(CARRIERS)) if i not in DUMPABLE)
            ]

        self.fixed_plates = [self._fixed_plates(t) for t in range(steps)]
        self.needs = [self._storage_needs(t) for t in range(steps)]
        self._cache: Optional[Simulation] = None
        self._exchange_memo: Dict[Tuple, float] = {}

    # Plates

    def _add(self, plates: Dict[PlateKey, float], carrier: int, node: str, value: float) -> None:
        if value:
            key = (carrier, self.comp[carrier][node])
            plates[key] = plates.get(key, 0.0) + value

    def _fixed_plates(self, t: int) -> Dict[PlateKey, float]:
        plates: Dict[PlateKey, float] = {}
        for device_id, series in self.fixed.items():
            for carrier in range(len(CARRIERS)):
                self._add(plates, carrier, self.device_nodes[device_id], float(series[t, carrier]))
        return plates

    def _storage_needs(self, t: int) -> Dict[PlateKey, float]:
        """Heat and cooling deficits left by fixed devices and renewables; storage may serve them."""
        plates = dict(self.fixed_plates[t])
        for _, node, available in self.renewables:
            for carrier in range(len(CARRIERS)):
                self._add(plates, carrier, node, available[t][carrier])
        return {key: -value for key, value in plates.items() if key[0] in DUMPABLE and value < 0}

    def _imports_into(self, plates: Dict[PlateKey, float], imports: Sequence[float]) -> None:
        if self.utility_node is None:
            return
        for carrier, value in enumerate(imports):
            self._add(plates, carrier, self.utility_node, float(value))

    # Balance closure

    def _run_hub(self, plates, hub: _Hub, j: int, amount: float, hub_inputs, hub_loads) -> None:
        hub_loads[hub.id] = hub_loads.get(hub.id, 0.0) + amount
        hub_inputs.setdefault(hub.id, [0.0] * len(CARRIERS))[j] += amount
        self._add(plates, j, hub.node, -amount)
        for i in range(len(CARRIERS)):
            self._add(plates, i, hub.node, hub.matrix[i][j] * amount)

    def _cover(self, plates, key: PlateKey, hub_inputs, hub_loads) -> None:
        output, component = key
        for free_only, modes in ((True, self.free_modes[output]), (False, self.merit_modes[output])):
            for mode in modes:
                deficit = -plates.get(key, 0.0)
                if deficit <= EPSILON:
                    return
                hub = mode.hub
                if self.comp[output][hub.node] != component:
                    continue
                room = hub.capacity - hub_loads.get(hub.id, 0.0)
                if room <= EPSILON:
                    continue
                amount = min(deficit / mode.efficiency, room)
                if free_only:
                    available = plates.get((mode.input, self.comp[mode.input][hub.node]), 0.0)
                    if available <= EPSILON:
                        continue
                    amount = min(amount, available)
                self._run_hub(plates, hub, mode.input, amount, hub_inputs, hub_loads)

    def close_step(
            self,
            t: int,
            storage: Sequence[Tuple[float, ...]] = (),
            imports: Optional[Sequence[float]] = None,
    ) -> StepResult:
        """
        Close the balance of one step around given storage injections.

        Renewables start at full availability; deficits are covered from cooling down to gas by
        hubs (free surplus inputs first, then gas-fed hubs, each by efficiency) and gas sources;
        surpluses are removed by curtailment, reduced gas firing, hub absorption and heat/cooling
        dumps. Whatever cannot be closed is reported as shortfall.

        Link flows come from routing the closed step over the spanning forest of each carrier; if that
        overloads a link the step is re-closed node by node with every link held within capacity.
        """
        plates = dict(self.fixed_plates[t])
        step_imports = self.imports[t] if imports is None else imports
        self._imports_into(plates, step_imports)
        for _, node, available in self.renewables:
            for carrier in range(len(CARRIERS)):
                self._add(plates, carrier, node, available[t][carrier])
        for unit, injection in zip(self.storage, storage):
            for carrier in range(len(CARRIERS)):
                self._add(plates, carrier, unit.node, injection[carrier])

        hub_inputs: Dict[str, List[float]] = {}
        hub_loads: Dict[str, float] = {}
        gas: Dict[str, float] = {}
        for output in DEFICIT_ORDER:
            for key in sorted(k for k, v in plates.items() if k[0] == output and v < -EPSILON):
                self._cover(plates, key, hub_inputs, hub_loads)
                if output == GAS:
                    for device_id, node, capacity in self.gas_sources:
                        deficit = -plates.get(key, 0.0)
                        if deficit <= EPSILON:
                            break
                        if self.comp[GAS][node] != key[1]:
                            continue
                        fired = min(deficit, capacity - gas.get(device_id, 0.0))
                        if fired > 0:
                            gas[device_id] = gas.get(device_id, 0.0) + fired
                            self._add(plates, GAS, node, fired)

        curtailment: Dict[Tuple[str, int], float] = {}
        dumps: Dict[Tuple[str, int], float] = {}
        for carrier in SURPLUS_ORDER:
            for key in sorted(k for k, v in plates.items() if k[0] == carrier and v > EPSILON):
                component = key[1]
                if carrier in CURTAILABLE:
                    for device_id, node, available in self.renewables:
                        surplus = plates[key]
                        if surplus <= EPSILON:
                            break
                        if self.comp[carrier][node] != component:
                            continue
                        cut = min(surplus, available[t][carrier] - curtailment.get((device_id, carrier), 0.0))
                        if cut > 0:
                            curtailment[(device_id, carrier)] = curtailment.get((device_id, carrier), 0.0) + cut
                            plates[key] -= cut
                if carrier == GAS:
                    for device_id, node, _ in reversed(self.gas_sources):
                        surplus = plates[key]
                        if surplus <= EPSILON:
                            break
                        if self.comp[GAS][node] != component:
                            continue
                        cut = min(surplus, gas.get(device_id, 0.0))
                        if cut > 0:
                            gas[device_id] -= cut
                            plates[key] -= cut
                if carrier in self.absorbers:
                    for mode in self.absorbers[carrier]:
                        surplus = plates[key]
                        if surplus <= EPSILON:
                            break
                        if self.comp[carrier][mode.hub.node] != component:
                            continue
                        amount = min(surplus, mode.hub.capacity - hub_loads.get(mode.hub.id, 0.0))
                        if amount > 0:
                            self._run_hub(plates, mode.hub, carrier, amount, hub_inputs, hub_loads)
                if carrier in DUMPABLE and plates[key] > EPSILON:
                    node = self.dump_nodes[carrier][component]
                    dumps[(node, carrier)] = dumps.get((node, carrier), 0.0) - plates[key]
                    plates[key] = 0.0

        shortfall = math.fsum(abs(value) for value in plates.values())
        result = StepResult(self._spend(t, gas, step_imports), shortfall, gas, curtailment, hub_inputs, dumps)
        if not self.links:
            return result
        flows = core_model.forest_flows(
            self.scenario.topology, self._node_net(t, storage, step_imports, result), self.forest
        )
        if all(abs(flows[link.id]) <= link.capacity + core_model.FLOW_TOLERANCE for link in self.links):
            return result._replace(flows=flows)
        return self._close_within_capacities(t, storage, step_imports)

    def _spend(self, t: int, gas: Dict[str, float], imports: Sequence[float]) -> float:
        spend = math.fsum(amount * self.prices[t, GAS] for amount in gas.values())
        for carrier, amount in enumerate(imports):
            ratio = 1.0 if amount >= 0 else self.feed_in_ratio
            spend += ratio * amount * self.prices[t, carrier]
        return spend * self.dt

    def _node_net(
            self,
            t: int,
            storage: Sequence[Tuple[float, ...]],
            imports: Sequence[float],
            result: StepResult,
    ) -> Dict[str, List[float]]:
        """Net injection of every node into its links, indexed like CARRIERS."""
        net: Dict[str, List[float]] = {node_id: [0.0] * len(CARRIERS) for node_id in self.node_ids}

        def inject(node: str, vector: Sequence[float]) -> None:
            for carrier, value in enumerate(vector):
                net[node][carrier] += value

        for device_id, series in self.fixed.items():
            inject(self.device_nodes[device_id], series[t])
        for device_id, node, available in self.renewables:
            inject(node, [available[t][c] - result.curtailment.get((device_id, c), 0.0) for c in range(len(CARRIERS))])
        for device_id, node, _ in self.gas_sources:
            net[node][GAS] += result.gas.get(device_id, 0.0)
        for unit, injection in zip(self.storage, storage):
            inject(unit.node, injection)
        for hub in self.hubs:
            inputs = result.hub_inputs.get(hub.id)
            if inputs is not None:
                outputs = np.asarray(hub.matrix) @ np.asarray(inputs)
                inject(hub.node, [out - used for out, used in zip(outputs, inputs)])
        for (node, carrier), value in result.dumps.items():
            net[node][carrier] += value
        if self.utility_node is not None:
            inject(self.utility_node, imports)
        return net

    def _close_within_capacities(
            self,
            t: int,
            storage: Sequence[Tuple[float, ...]],
            imports: Sequence[float],
    ) -> StepResult:
        """
        Close one step as a linear program over nodal balances with every link inside its capacity.

        Used when the merit-order closure would overload a link: local hubs and gas sources then
        take over what the links cannot carry. Hub inputs, curtailment, dumps and link flows carry
        a tie-break cost; balance slack is priced at the shortfall penalty and reported as shortfall.
        """
        width = len(CARRIERS)
        rows = {node_id: index * width for index, node_id in enumerate(self.node_ids)}
        constant = np.zeros(len(self.node_ids) * width)
        for node_id, values in self._node_net(t, storage, imports, StepResult(0.0, 0.0, {}, {}, {}, {})).items():
            constant[rows[node_id]:rows[node_id] + width] = values

        tags: List[Tuple] = []
        costs: List[float] = []
        bounds: List[Tuple[float, Optional[float]]] = []
        entries: List[Dict[int, float]] = []

        def column(tag: Tuple, cost: float, upper: Optional[float], coefficients: Dict[int, float]) -> None:
            tags.append(tag)
            costs.append(cost)
            bounds.append((0.0, upper))
            entries.append(coefficients)

        for hub in self.hubs:
            for j in range(width):
                if any(hub.matrix[i][j] > 0 for i in range(width)):
                    coefficients = {rows[hub.node] + i: hub.matrix[i][j] for i in range(width) if hub.matrix[i][j]}
                    coefficients[rows[hub.node] + j] = coefficients.get(rows[hub.node] + j, 0.0) - 1.0
                    column(("hub", hub.id, j), TIE_BREAK, None, coefficients)
        for device_id, node, capacity in self.gas_sources:
            column(("gas", device_id), self.prices[t, GAS] + TIE_BREAK, capacity, {rows[node] + GAS: 1.0})
        for device_id, node, available in self.renewables:
            for carrier in CURTAILABLE:
                if available[t][carrier] > 0:
                    column(("curtail", device_id, carrier), TIE_BREAK, available[t][carrier],
                           {rows[node] + carrier: -1.0})
        for node_id in self.node_ids:
            for carrier in DUMPABLE:
                column(("dump", node_id, carrier), TIE_BREAK, None, {rows[node_id] + carrier: -1.0})
        for link in self.links:
            if link.source == link.target:
                continue
            carrier = CARRIERS.index(link.carrier)
            forward = {rows[link.source] + carrier: -1.0, rows[link.target] + carrier: 1.0}
            column(("link", link.id, 1.0), TIE_BREAK, link.capacity, forward)
            column(("link", link.id, -1.0), TIE_BREAK, link.capacity, {row: -value for row, value in forward.items()})
        for row in range(len(constant)):
            column(("slack",), self.penalty, None, {row: 1.0})
            column(("slack",), self.penalty, None, {row: -1.0})

        equalities = np.zeros((len(constant), len(tags)))
        for index, coefficients in enumerate(entries):
            for row, value in coefficients.items():
                equalities[row, index] = value
        limited = [hub for hub in self.hubs if math.isfinite(hub.capacity)]
        inequalities = np.zeros((len(limited), len(tags)))
        for row, hub in enumerate(limited):
            for index, tag in enumerate(tags):
                if tag[0] == "hub" and tag[1] == hub.id:
                    inequalities[row, index] = 1.0
        solution = linprog(
            np.asarray(costs),
            A_ub=inequalities if limited else None,
            b_ub=np.array([hub.capacity for hub in limited]) if limited else None,
            A_eq=equalities,
            b_eq=-constant,
            bounds=bounds,
            method="highs",
        )
        if solution.status != 0:
            raise exceptions.InfeasibleDispatchError(t, f"capacity-constrained closure failed: {solution.message}")

        gas: Dict[str, float] = {}
        curtailment: Dict[Tuple[str, int], float] = {}
        hub_inputs: Dict[str, List[float]] = {}
        dumps: Dict[Tuple[str, int], float] = {}
        flows = {link.id: 0.0 for link in self.links}
        shortfall = 0.0
        for tag, value in zip(tags, solution.x):
            value = max(float(value), 0.0)
            if tag[0] == "slack":
                shortfall += value
            elif tag[0] == "link":
                flows[tag[1]] += tag[2] * value
            elif value <= 0.0:
                continue
            elif tag[0] == "hub":
                hub_inputs.setdefault(tag[1], [0.0] * width)[tag[2]] = value
            elif tag[0] == "gas":
                gas[tag[1]] = value
            elif tag[0] == "curtail":
                curtailment[(tag[1], tag[2])] = value
            else:
                dumps[(tag[1], tag[2])] = -value
        logger.debug("step %d closed within link capacities, shortfall %.3g kW", t, shortfall)
        return StepResult(self._spend(t, gas, imports), shortfall, gas, curtailment, hub_inputs, dumps, flows)

    # Storage

    def idle_targets(self) -> np.ndarray:
        targets = np.zeros((len(self.storage), self.steps))
        for u, unit in enumerate(self.storage):
            keep = 1.0 - unit.spec.loss
            targets[u] = unit.spec.air * keep ** np.arange(1, self.steps + 1)
        return targets

    def _setpoint(self, unit: _Storage, state: schemas.StCaesState, target: float, t: int) -> float:
        keep = 1.0 - state.loss
        air = state.air * keep
        delta = target - air
        if delta > EPSILON:
            return -delta / (state.charge_efficiency * self.dt)
        if delta < -EPSILON:
            draw = -delta
            thermal = min(state.thermal * keep + unit.solar_heat[t] * self.dt, state.thermal_capacity)
            paired = min(air, thermal) if state.heat_boost > 0 else 0.0
            boosted = state.expansion_efficiency + state.heat_boost
            energy = boosted * min(draw, paired) + state.expansion_efficiency * max(draw - paired, 0.0)
            return energy / self.dt
        return 0.0

    def simulate(self, targets: np.ndarray) -> Simulation:
        """
        Simulate the storage fleet along air-store level targets and close every step.

        Results of the previous call are reused up to the first step whose targets changed.
        """
        targets = np.asarray(targets, dtype=float).reshape(len(self.storage), self.steps)
        start = 0
        cache = self._cache
        if cache is not None and cache.targets.shape == targets.shape:
            changed = np.flatnonzero(np.any(targets != cache.targets, axis=0))
            start = int(changed[0]) if changed.size else self.steps
            if start == self.steps:
                return cache

        states = list(cache.states[:start + 1]) if start > 0 else [tuple(unit.spec for unit in self.storage)]
        injections = list(cache.injections[:start]) if start > 0 else []
        costs = list(cache.costs[:start]) if start > 0 else []
        shortfalls = list(cache.shortfalls[:start]) if start > 0 else []
        achieved = cache.achieved.copy() if start > 0 else np.zeros_like(targets)

        for t in range(start, self.steps):
            needs = dict(self.needs[t])
            step_states = []
            step_injections = []
            for u, unit in enumerate(self.storage):
                state = states[t][u]
                heat_key = (HEAT, self.comp[HEAT][unit.node])
                cool_key = (COOLING, self.comp[COOLING][unit.node])
                setpoint = self._setpoint(unit, state, targets[u, t], t)
                state, injection = devices.st_caes_step(
                    state, setpoint, unit.solar_heat[t], needs.get(heat_key, 0.0), needs.get(cool_key, 0.0), self.dt,
                )
                if heat_key in needs:
                    needs[heat_key] = max(needs[heat_key] - injection.heat, 0.0)
                if cool_key in needs:
                    needs[cool_key] = max(needs[cool_key] - injection.cooling, 0.0)
                step_states.append(state)
                step_injections.append(injection.as_tuple())
                achieved[u, t] = state.air
            states.append(tuple(step_states))
            injections.append(tuple(step_injections))
            result = self.close_step(t, step_injections)
            costs.append(result.cost)
            shortfalls.append(result.shortfall)

        objective = math.fsum(costs) + self.penalty * self.dt * math.fsum(shortfalls)
        self._cache = Simulation(
            targets=targets.copy(),
            achieved=achieved,
            states=tuple(states),
            injections=tuple(injections),
            costs=tuple(costs),
            shortfalls=tuple(shortfalls),
            objective=objective,
        )
        return self._cache

    def optimize_storage(self) -> Simulation:
        """
        Projected block-coordinate descent over the air-store level trajectories.

        Blocks are single steps and suffixes, shifted by a common offset kept within
        [0, air_capacity]. Each block first tries a small step in both directions; a golden-section line
        search runs only on an improving side. Accepted moves keep the levels actually achieved.
        """
        targets = self.idle_targets()
        simulation = self.simulate(targets)
        if not self.storage or self.steps == 0:
            return simulation

        tol = self.line_tolerance
        blocks = [(i, i) for i in range(self.steps)] + [(i, self.steps - 1) for i in range(self.steps - 1)]
        sweeps = 0
        for sweeps in range(1, self.max_sweeps + 1):
            improved = False
            for u, unit in enumerate(self.storage):
                capacity = unit.spec.air_capacity
                for first, last in blocks:
                    segment = targets[u, first:last + 1]
                    lower, upper = -float(segment.min()), capacity - float(segment.max())
                    if upper - lower <= tol:
                        continue

                    def shifted(delta: float) -> np.ndarray:
                        trial = targets.copy()
                        trial[u, first:last + 1] = np.clip(trial[u, first:last + 1] + delta, 0.0, capacity)
                        return trial

                    def objective(delta: float) -> float:
                        return self.simulate(shifted(delta)).objective

                    value = simulation.objective
                    threshold = value - 1e-9 * (1.0 + abs(value))
                    nudge = NUDGE_FACTOR * tol
                    up = objective(min(nudge, upper)) if upper > 0 else math.inf
                    down = objective(max(-nudge, lower)) if lower < 0 else math.inf
                    if min(up, down) >= threshold:
                        continue
                    a, b = (0.0, upper) if up <= down else (lower, 0.0)
                    candidates = [min(nudge, upper) if up <= down else max(-nudge, lower)]
                    if b - a > tol:
                        candidates.append(golden_section(objective, a, b, tol))
                    best = min(candidates, key=objective)
                    trial = self.simulate(shifted(best))
                    if trial.objective < threshold:
                        targets = trial.achieved.copy()
                        simulation = self.simulate(targets)
                        improved = True
            if not improved:
                break
        logger.debug(f"Storage descent finished after {sweeps} sweeps, objective {simulation.objective:.6g}")
        return simulation

    # Exchange layer

    def exchange_step_cost(self, t: int, imports: Sequence[float], quantum: float) -> float:
        """Operating cost of one step with idle storage for the given exchange imports (memoized)."""
        key = (t,) + tuple(int(round(value / quantum)) for value in imports)
        if key not in self._exchange_memo:
            result = self.close_step(t, (), [k * quantum for k in key[1:]])
            self._exchange_memo[key] = result.cost + self.penalty * self.dt * result.shortfall
        return self._exchange_memo[key]

    # Assembly

    def setpoints(self, simulation: Simulation, tolerance: float) -> schemas.DispatchSetpoints:
        """
        Turn a simulated storage trajectory into dispatch setpoints.

        Raises:
            InfeasibleDispatchError: At the first step whose imbalance cannot be closed within device,
                exchange and link limits.
        """
        topology = self.scenario.topology
        device_series: Dict[str, List[PortVector]] = {device_id: [] for device_id in sorted(self.scenario.devices)}
        hub_series: Dict[str, List[PortVector]] = {hub.id: [] for hub in self.hubs}
        dump_rows: List[Dict[Tuple[str, int], float]] = []
        link_rows: List[Dict[str, float]] = []
        costs = []

        for t in range(self.steps):
            if simulation.shortfalls[t] > tolerance:
                raise exceptions.InfeasibleDispatchError(
                    t, f"{simulation.shortfalls[t]:.6g} kW cannot be balanced within device and exchange limits"
                )
            result = self.close_step(t, simulation.injections[t])
            costs.append(result.cost)
            for device_id, series in self.fixed.items():
                device_series[device_id].append(PortVector.from_sequence(series[t]))
            for device_id, node, available in self.renewables:
                delivered = [available[t][c] - result.curtailment.get((device_id, c), 0.0) for c in range(len(CARRIERS))]
                device_series[device_id].append(PortVector.from_sequence(delivered))
            for device_id, node, _ in self.gas_sources:
                device_series[device_id].append(PortVector(gas=result.gas.get(device_id, 0.0)))
            for unit, injection in zip(self.storage, simulation.injections[t]):
                device_series[unit.id].append(PortVector.from_sequence(injection))
            for hub in self.hubs:
                hub_series[hub.id].append(PortVector.from_sequence(result.hub_inputs.get(hub.id, [0.0] * len(CARRIERS))))
            dump_rows.append(result.dumps)
            link_rows.append(result.flows)

        dump_nodes = sorted({node for row in dump_rows for node, _ in row})
        dumps = {
            node: tuple(
                PortVector.from_sequence([row.get((node, c), 0.0) for c in range(len(CARRIERS))]) for row in dump_rows
            )
            for node in dump_nodes
        }
        storage = {
            unit.id: tuple(
                schemas.StorageSnapshot(air=states[u].air, thermal=states[u].thermal)
                for states in simulation.states[1:]
            )
            for u, unit in enumerate(self.storage)
        }
        gas_cost = math.fsum(
            self.dt * self.prices[t, GAS] * sum(vectors[t].gas for device_id, vectors in device_series.items()
                                                 if self.scenario.devices[device_id].kind == "gas_source")
            for t in range(self.steps)
        )
        total = math.fsum(costs)
        return schemas.DispatchSetpoints(
            steps=self.steps,
            time_step=self.dt,
            devices={device_id: tuple(vectors) for device_id, vectors in device_series.items()},
            hub_inputs={hub_id: tuple(vectors) for hub_id, vectors in hub_series.items()},
            dumps=dumps,
            link_flows={link.id: tuple(row[link.id] for row in link_rows) for link in topology.links},
            storage=storage,
            exchange=self.exchange,
            exchange_node=self.utility_node,
            party=self.party,
            cost=total,
            costs={"operating": total, "gas": gas_cost, "exchange": total - gas_cost},
            shortfall=tuple(simulation.shortfalls),
        )


if __name__ == "__main__":
    print("This is only a library. Nothing will happen when you execute it.")
