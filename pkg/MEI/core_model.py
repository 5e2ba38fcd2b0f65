import logging
from typing import (
    Dict,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import networkx as nx
import numpy as np
from scipy.optimize import linprog

from MEI import exceptions, schemas
from MEI.schemas import CARRIER_INDEX, CARRIERS, Carrier, PortVector

logger = logging.getLogger("mei")

FLOW_TOLERANCE = 1e-9

InjectionValue = Union[PortVector, Sequence[PortVector]]
RoutingForest = Dict[Carrier, Tuple[Tuple[str, str, str, float], ...]]

_NO_INJECTION = (0.0, 0.0, 0.0, 0.0)


def hub_output(coupling: schemas.CouplingMatrix, p_in: PortVector) -> PortVector:
    """
    Apply the linear hub coupling law out[i] = sum_j c[i][j] * p_in[j].

    Args:
        coupling (CouplingMatrix): The hub's coupling matrix.
        p_in (PortVector): Input consumption per carrier, all entries >= 0.

    Returns:
        PortVector: Output power per carrier.

    Raises:
        HubInputError: If an input entry is negative.
    """
    for carrier in CARRIERS:
        value = p_in.get(carrier)
        if value < 0:
            raise exceptions.HubInputError(carrier.value, value)
    output = coupling.as_array() @ [p_in.get(carrier) for carrier in CARRIERS]
    return PortVector.from_sequence(output)


def _summed(value: InjectionValue) -> PortVector:
    if isinstance(value, PortVector):
        return value
    total = PortVector()
    for vector in value:
        total = total + vector
    return total


def balance_residual(
        topology: schemas.NetworkTopology,
        injections: Mapping[str, InjectionValue],
        hub_inputs: Optional[Mapping[str, PortVector]] = None,
        link_flows: Optional[Mapping[str, float]] = None,
) -> Dict[Tuple[str, Carrier], float]:
    """
    Per-node, per-carrier power balance residual of one network state.

    residual = injections + hub outputs - hub inputs - link outflows + link inflows.
    A node may receive several injection vectors (e.g. a source and a demand) as a list.

    Args:
        topology (NetworkTopology): The network.
        injections (Mapping[str, PortVector | Sequence[PortVector]]): Signed injections by node id.
        hub_inputs (Optional[Mapping[str, PortVector]]): Hub input consumption by hub id.
        link_flows (Optional[Mapping[str, float]]): Link flows by link id, positive from source to target.

    Returns:
        Dict[Tuple[str, Carrier], float]: Residual in kW for every node and carrier that is served by
        the node or receives a term. An empty network without injections yields an empty map.

    Raises:
        UnknownNodeError: If an injection refers to a node that does not exist.
        UnknownComponentError: If a hub or link id does not exist.
    """
    nodes = {node.id: node for node in topology.nodes}
    hubs = {hub.id: hub for hub in topology.hubs}
    links = {link.id: link for link in topology.links}
    residual: Dict[Tuple[str, Carrier], float] = {}

    def add(node_id: str, carrier: Carrier, value: float) -> None:
        key = (node_id, carrier)
        residual[key] = residual.get(key, 0.0) + value

    touched = set()
    for node_id, value in injections.items():
        if node_id not in nodes:
            raise exceptions.UnknownNodeError(node_id)
        touched.add(node_id)
        vector = _summed(value)
        for carrier in CARRIERS:
            if vector.get(carrier) != 0.0 or carrier in nodes[node_id].carriers:
                add(node_id, carrier, vector.get(carrier))

    for hub_id, p_in in (hub_inputs or {}).items():
        if hub_id not in hubs:
            raise exceptions.UnknownComponentError("hub", hub_id)
        hub = hubs[hub_id]
        touched.add(hub.node)
        p_out = hub_output(hub.coupling, p_in)
        for carrier in CARRIERS:
            delta = p_out.get(carrier) - p_in.get(carrier)
            if delta != 0.0 or p_in.get(carrier) != 0.0:
                add(hub.node, carrier, delta)

    for link_id, flow in (link_flows or {}).items():
        if link_id not in links:
            raise exceptions.UnknownComponentError("link", link_id)
        link = links[link_id]
        touched.update((link.source, link.target))
        add(link.source, link.carrier, -flow)
        add(link.target, link.carrier, flow)

    for node_id in touched:
        for carrier in nodes[node_id].carriers:
            residual.setdefault((node_id, carrier), 0.0)
    return residual


def carrier_graph(topology: schemas.NetworkTopology, carrier: Carrier) -> nx.Graph:
    """Undirected graph of all nodes and the links of one carrier; link ids ride on the edges."""
    graph = nx.Graph()
    graph.add_nodes_from(topology.node_ids())
    for link in sorted(topology.links, key=lambda link: link.id):
        if link.carrier is not carrier or link.source == link.target:
            continue
        if not graph.has_edge(link.source, link.target):
            graph.add_edge(link.source, link.target, link_id=link.id, weight=len(graph.edges))
    return graph


def carrier_components(topology: schemas.NetworkTopology) -> Dict[Carrier, Dict[str, int]]:
    """
    Connected-component index of every node, per carrier.

    Components are numbered in the order of their smallest node id, so the numbering is stable.
    """
    components: Dict[Carrier, Dict[str, int]] = {}
    for carrier in CARRIERS:
        graph = carrier_graph(topology, carrier)
        ordered = sorted((sorted(component) for component in nx.connected_components(graph)), key=lambda c: c[0])
        components[carrier] = {node_id: index for index, members in enumerate(ordered) for node_id in members}
    return components


def routing_forest(topology: schemas.NetworkTopology) -> RoutingForest:
    """
    Spanning forest of each carrier's link graph as (node, parent, link id, sign) rows, children first.

    The sign is +1 when the link runs from the node to its parent, so a positive upstream injection
    maps to a positive link flow.
    """
    links = {link.id: link for link in topology.links}
    rows: RoutingForest = {}
    for carrier in CARRIERS:
        graph = carrier_graph(topology, carrier)
        carrier_rows: List[Tuple[str, str, str, float]] = []
        if graph.number_of_edges():
            forest = nx.minimum_spanning_tree(graph, weight="weight")
            for component in sorted(nx.connected_components(forest), key=min):
                if len(component) < 2:
                    continue
                root = min(component)
                parents = nx.dfs_predecessors(forest, source=root)
                for node_id in nx.dfs_postorder_nodes(forest, source=root):
                    if node_id == root:
                        continue
                    link_id = forest.edges[parents[node_id], node_id]["link_id"]
                    sign = 1.0 if links[link_id].source == node_id else -1.0
                    carrier_rows.append((node_id, parents[node_id], link_id, sign))
        rows[carrier] = tuple(carrier_rows)
    return rows


def forest_flows(
        topology: schemas.NetworkTopology,
        net: Mapping[str, Sequence[float]],
        forest: RoutingForest,
) -> Dict[str, float]:
    """
    Uncapped flows that carry each node's net injection towards its forest root.

    Args:
        topology (NetworkTopology): The network.
        net (Mapping[str, Sequence[float]]): Net injection per node, indexed like CARRIERS.
        forest (RoutingForest): Rows from routing_forest.

    Returns:
        Dict[str, float]: Flow per link id; links outside the forest carry 0 kW.
    """
    flows = {link.id: 0.0 for link in topology.links}
    for index, carrier in enumerate(CARRIERS):
        subtree: Dict[str, float] = {}
        for node_id, parent, link_id, sign in forest[carrier]:
            upstream = subtree.get(node_id, 0.0) + net.get(node_id, _NO_INJECTION)[index]
            flows[link_id] = sign * upstream
            subtree[parent] = subtree.get(parent, 0.0) + upstream
    return flows


def _capacity_flows(
        topology: schemas.NetworkTopology,
        carrier: Carrier,
        net: Mapping[str, Sequence[float]],
) -> Optional[Dict[str, float]]:
    """Least total flow over every link of `carrier` within capacity, or None if none balances the nodes."""
    index = CARRIER_INDEX[carrier]
    links = sorted(
        (link for link in topology.links if link.carrier is carrier and link.source != link.target),
        key=lambda link: link.id,
    )
    nodes = sorted({link.source for link in links} | {link.target for link in links})
    rows = {node_id: row for row, node_id in enumerate(nodes)}
    # forward flows leave the source and enter the target; the second half runs backwards
    incidence = np.zeros((len(nodes), 2 * len(links)))
    for column, link in enumerate(links):
        incidence[rows[link.source], column] = -1.0
        incidence[rows[link.target], column] = 1.0
        incidence[:, len(links) + column] = -incidence[:, column]
    injections = np.array([net.get(node_id, _NO_INJECTION)[index] for node_id in nodes])
    result = linprog(
        np.ones(2 * len(links)),
        A_eq=incidence,
        b_eq=-injections,
        bounds=[(0.0, link.capacity) for link in links] * 2,
        method="highs",
    )
    if result.status != 0:
        return None
    return {link.id: float(result.x[column] - result.x[len(links) + column]) for column, link in enumerate(links)}


def link_flows(
        topology: schemas.NetworkTopology,
        net_injections: Mapping[str, PortVector],
        step: int = 0,
        forest: Optional[RoutingForest] = None,
) -> Dict[str, float]:
    """
    Route nodal net injections over the links of each carrier within their capacities.

    Injections are first pushed along a spanning forest of each carrier's link graph; links outside
    the forest then carry 0 kW. A carrier whose forest routing overloads a link is rerouted over all
    of its links, parallel and cycle-closing ones included, with the least total flow that keeps
    every link inside its capacity. Net injections of every component are expected to sum to zero.

    Args:
        topology (NetworkTopology): The network.
        net_injections (Mapping[str, PortVector]): Net power each node pushes into its links.
        step (int): Step index used in error messages.
        forest (Optional[RoutingForest]): Precomputed routing_forest rows.

    Returns:
        Dict[str, float]: Flow per link id, positive from source to target.

    Raises:
        InfeasibleDispatchError: If no routing keeps the flows within the link capacities.
    """
    forest = routing_forest(topology) if forest is None else forest
    net = {node_id: vector.as_tuple() for node_id, vector in net_injections.items()}
    flows = forest_flows(topology, net, forest)
    for carrier in CARRIERS:
        over = [
            link for link in topology.links
            if link.carrier is carrier and abs(flows[link.id]) > link.capacity + FLOW_TOLERANCE
        ]
        if not over:
            continue
        rerouted = _capacity_flows(topology, carrier, net)
        if rerouted is None:
            link = over[0]
            raise exceptions.InfeasibleDispatchError(
                step, f"link '{link.id}' flow {flows[link.id]:.6g} kW exceeds capacity {link.capacity:.6g} kW "
                      f"and no other routing of {carrier.value} fits"
            )
        flows.update(rerouted)
    return flows


def conversion_graph(scenario: schemas.Scenario) -> nx.DiGraph:
    """
    Directed carrier graph with an edge in -> out for every conversion some hub or ST-CAES unit offers.
    """
    graph = nx.DiGraph()
    graph.add_nodes_from(CARRIERS)
    for hub in scenario.topology.hubs:
        for out_carrier, row in hub.coupling.entries.items():
            for in_carrier, value in row.items():
                if value > 0:
                    graph.add_edge(in_carrier, out_carrier, via=hub.id)
    for device_id, spec in scenario.devices.items():
        if not isinstance(spec, schemas.StCaesState) or spec.air_capacity <= 0:
            continue
        graph.add_edge(Carrier.ELECTRICITY, Carrier.ELECTRICITY, via=device_id)
        if spec.heat_capture > 0 and spec.thermal_capacity > 0:
            graph.add_edge(Carrier.ELECTRICITY, Carrier.HEAT, via=device_id)
        if spec.cooling_coefficient > 0:
            graph.add_edge(Carrier.ELECTRICITY, Carrier.COOLING, via=device_id)
    return graph


def _clean_sources(scenario: schemas.Scenario) -> List[str]:
    return scenario.devices_of_kind(*schemas.CLEAN_SOURCE_KINDS)


def _storage_devices(scenario: schemas.Scenario) -> List[str]:
    return [
        device_id for device_id in scenario.devices_of_kind("st_caes")
        if scenario.devices[device_id].air_capacity > 0 or scenario.devices[device_id].thermal_capacity > 0
    ]


def check_design_principles(scenario: schemas.Scenario) -> schemas.ComplianceReport:
    """
    Check the five design principles of a micro energy internet.

    1. At least one clean energy resource is integrated.
    2. At least one storage device with capacity > 0 exists.
    3. Electricity can be converted to heat and to cooling through some hub or device.
    4. Energy is mainly for self-use on the demand side.
    5. A self-approaching-optimum energy management system is configured.

    Absent features yield False, never an error.
    """
    clean = _clean_sources(scenario)
    storage = _storage_devices(scenario)
    graph = conversion_graph(scenario)
    to_heat = nx.has_path(graph, Carrier.ELECTRICITY, Carrier.HEAT)
    to_cooling = nx.has_path(graph, Carrier.ELECTRICITY, Carrier.COOLING)

    checks = (
        schemas.PrincipleCheck(
            name="clean_resource",
            satisfied=bool(clean),
            message=f"clean sources: {', '.join(clean)}" if clean else "no clean energy resource integrated",
        ),
        schemas.PrincipleCheck(
            name="storage",
            satisfied=bool(storage),
            message=f"storage devices: {', '.join(storage)}" if storage else "no storage device with capacity",
        ),
        schemas.PrincipleCheck(
            name="conversion",
            satisfied=to_heat and to_cooling,
            message=(
                f"electricity->heat {'available' if to_heat else 'missing'}, "
                f"electricity->cooling {'available' if to_cooling else 'missing'}"
            ),
        ),
        schemas.PrincipleCheck(
            name="self_use",
            satisfied=scenario.self_use,
            message="energy mainly for self-use" if scenario.self_use else "self-use flag not set",
        ),
        schemas.PrincipleCheck(
            name="ems",
            satisfied=scenario.ems is not None,
            message=(
                f"energy management system '{scenario.ems.id}' configured"
                if scenario.ems is not None else "no energy management system configured"
            ),
        ),
    )
    report = schemas.ComplianceReport(checks=checks)
    logger.debug(f"Design principles for '{scenario.name}': {report.flags}")
    return report


if __name__ == "__main__":
    print("This is only a library. Nothing will happen when you execute it.")
