"""
Scenario documents: a line-oriented sectioned key-value grammar.

    # comment
    [node station]
    carriers = electricity, heat

    [hub chp]
    node = station
    gas_to_electricity = 0.30
    gas_to_heat = 0.45

Sections open with "[section id]", entries are "key = value", lists are comma-separated and
matrix rows are separated by ";". Keys are case-sensitive and unknown keys are errors.
"""

import logging
import re
from contextlib import contextmanager
from pathlib import Path
from typing import (
    Dict,
    Iterator,
    List,
    NamedTuple,
    Optional,
    Tuple,
    Union,
)

from pydantic import TypeAdapter, ValidationError

from MEI import exceptions, schemas
from MEI.schemas import CARRIERS, Carrier

logger = logging.getLogger("mei")

SECTION_PATTERN = re.compile(r"^\[\s*([a-z_]+)\s+([A-Za-z0-9_-]+)\s*\]$")
ENTRY_PATTERN = re.compile(r"^([A-Za-z0-9_]+)\s*=\s*(.*)$")
SECTION_KINDS = ("scenario", "node", "link", "hub", "device", "profile", "price", "utility", "ems", "catalog", "dynamics")
SINGLE_SECTIONS = ("scenario", "utility", "ems")
MATRIX_KEYS = ("A", "B1", "B2", "C", "D")
DEVICE_ADAPTER = TypeAdapter(schemas.DeviceSpec)


class Section(NamedTuple):
    kind: str
    id: str
    line: int
    entries: Dict[str, str]
    lines: Dict[str, int]

    def label(self) -> str:
        return f"{self.kind} {self.id}"

    def line_of(self, key: Optional[str]) -> int:
        return self.lines.get(key, self.line) if key else self.line


def _error_message(exc: ValidationError) -> Tuple[str, Optional[str], Optional[str]]:
    error = exc.errors()[0]
    key = str(error["loc"][0]) if error.get("loc") else None
    if error["type"] == "extra_forbidden":
        return f"unknown key '{key}'", key, None
    cause = (error.get("ctx") or {}).get("error")
    if isinstance(cause, exceptions.DetailedValueError):
        return cause.headline, key, cause.detail
    message = error["msg"]
    if message.startswith("Value error, "):
        message = message[len("Value error, "):]
    elif key:
        message = f"{key}: {message}"
    return message, key, None


@contextmanager
def _positioned(section: Section) -> Iterator[None]:
    """Re-raise validation failures inside a section as positioned parse errors."""
    try:
        yield
    except ValidationError as exc:
        message, key, detail = _error_message(exc)
        raise exceptions.ScenarioParseError(message, section.line_of(key), section.label(), detail) from exc
    except exceptions.DetailedValueError as exc:
        raise exceptions.ScenarioParseError(exc.headline, section.line, section.label(), exc.detail) from exc
    except (ValueError, KeyError) as exc:
        raise exceptions.ScenarioParseError(str(exc).strip("'\""), section.line, section.label()) from exc


# Tokenizing

def split_sections(doc: str) -> List[Section]:
    """
    Split a document into sections.

    Raises:
        ScenarioParseError: On malformed lines, entries outside a section, unknown section kinds,
            duplicate section ids or duplicate keys.
    """
    sections: List[Section] = []
    seen = set()
    current: Optional[Section] = None
    for number, raw in enumerate(doc.splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        label = current.label() if current else None
        if text.startswith("["):
            match = SECTION_PATTERN.match(text)
            if match is None:
                raise exceptions.ScenarioParseError(f"malformed section header '{text}'", number, label)
            kind, section_id = match.groups()
            if kind not in SECTION_KINDS:
                raise exceptions.ScenarioParseError(f"unknown section '{kind}'", number, f"{kind} {section_id}")
            if (kind, section_id) in seen:
                raise exceptions.ScenarioParseError(f"duplicate {kind} id '{section_id}'", number, f"{kind} {section_id}")
            if kind in SINGLE_SECTIONS and any(section.kind == kind for section in sections):
                raise exceptions.ScenarioParseError(f"only one [{kind}] section is allowed", number, f"{kind} {section_id}")
            seen.add((kind, section_id))
            current = Section(kind, section_id, number, {}, {})
            sections.append(current)
            continue
        match = ENTRY_PATTERN.match(text)
        if match is None:
            raise exceptions.ScenarioParseError(f"malformed line '{text}'", number, label)
        if current is None:
            raise exceptions.ScenarioParseError("entry outside a section", number)
        key, value = match.group(1), match.group(2).strip()
        if key in current.entries:
            raise exceptions.ScenarioParseError(f"duplicate key '{key}'", number, label)
        current.entries[key] = value
        current.lines[key] = number
    return sections


def _split_list(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _numbers(section: Section, key: str) -> Tuple[float, ...]:
    try:
        return tuple(float(item) for item in _split_list(section.entries[key]))
    except ValueError:
        raise exceptions.ScenarioParseError(f"'{key}' must be a list of numbers", section.line_of(key), section.label())


def _matrix(section: Section, key: str) -> Tuple[Tuple[float, ...], ...]:
    rows = []
    for row in section.entries[key].split(";"):
        try:
            rows.append(tuple(float(item) for item in _split_list(row)))
        except ValueError:
            raise exceptions.ScenarioParseError(f"'{key}' must be a matrix of numbers", section.line_of(key), section.label())
    if not rows or len({len(row) for row in rows}) != 1 or not rows[0]:
        raise exceptions.ScenarioParseError(f"'{key}' rows must be non-empty and of equal length", section.line_of(key), section.label())
    return tuple(rows)


def _require(section: Section, *keys: str) -> None:
    for key in keys:
        if key not in section.entries:
            raise exceptions.ScenarioParseError(f"missing key '{key}'", section.line, section.label())


def _check_node(section: Section, key: str, nodes: Dict[str, schemas.Node]) -> str:
    node = section.entries[key]
    if node not in nodes:
        raise exceptions.ScenarioParseError(f"unknown node '{node}'", section.line_of(key), section.label())
    return node


def _carrier_vector(section: Section, keys: List[str]) -> schemas.PortVector:
    return schemas.PortVector(**{key: section.entries[key] for key in keys})


# Section builders

def _build_hub(section: Section, nodes: Dict[str, schemas.Node]) -> schemas.Hub:
    _require(section, "node")
    node = _check_node(section, "node", nodes)
    entries: Dict[Carrier, Dict[Carrier, float]] = {}
    for key, value in section.entries.items():
        if key in ("node", "capacity"):
            continue
        source, _, target = key.partition("_to_")
        if source not in {c.value for c in CARRIERS} or target not in {c.value for c in CARRIERS}:
            raise exceptions.ScenarioParseError(f"unknown key '{key}'", section.line_of(key), section.label())
        try:
            coefficient = float(value)
        except ValueError:
            raise exceptions.ScenarioParseError(f"'{key}' must be a number", section.line_of(key), section.label())
        entries.setdefault(Carrier(target), {})[Carrier(source)] = coefficient
    with _positioned(section):
        coupling = schemas.CouplingMatrix(entries=entries)
    with _positioned(section):
        return schemas.Hub(id=section.id, node=node, coupling=coupling, capacity=section.entries.get("capacity"))


def _build_device(section: Section, nodes, profiles) -> Tuple[schemas.DevicePlacement, schemas.DeviceSpec]:
    _require(section, "node", "kind")
    node = _check_node(section, "node", nodes)
    fields = {key: value for key, value in section.entries.items() if key != "node"}
    with _positioned(section):
        spec = DEVICE_ADAPTER.validate_python(fields)
    for name, unit in schemas.profile_references(spec):
        key = next((k for k, v in fields.items() if v == name), None)
        profile = profiles.get(name)
        if profile is None:
            raise exceptions.ScenarioParseError(f"unknown profile '{name}'", section.line_of(key), section.label())
        if profile.unit != unit:
            raise exceptions.ScenarioParseError(f"profile '{name}' must be in {unit}", section.line_of(key), section.label())
    return schemas.DevicePlacement(node=node, device=section.id), spec


def parse_scenario(doc: str) -> schemas.Scenario:
    """
    Parse and validate a scenario document.

    Args:
        doc (str): Document text.

    Returns:
        Scenario: The fully validated scenario.

    Raises:
        ScenarioParseError: Naming the line and section of the first problem found.
    """
    sections = split_sections(doc)
    by_kind: Dict[str, List[Section]] = {kind: [s for s in sections if s.kind == kind] for kind in SECTION_KINDS}
    carrier_names = [carrier.value for carrier in CARRIERS]

    profiles: Dict[str, schemas.Profile] = {}
    for section in by_kind["profile"]:
        _require(section, "unit", "values")
        with _positioned(section):
            profiles[section.id] = schemas.Profile(
                name=section.id,
                unit=section.entries["unit"],
                values=_numbers(section, "values"),
                **{k: v for k, v in section.entries.items() if k not in ("unit", "values")},
            )

    prices: Dict[Carrier, Tuple[float, ...]] = {}
    for section in by_kind["price"]:
        if section.id not in carrier_names:
            raise exceptions.ScenarioParseError(f"unknown carrier '{section.id}'", section.line, section.label())
        _require(section, "values")
        extra = [key for key in section.entries if key != "values"]
        if extra:
            raise exceptions.ScenarioParseError(f"unknown key '{extra[0]}'", section.line_of(extra[0]), section.label())
        prices[Carrier(section.id)] = _numbers(section, "values")

    nodes: Dict[str, schemas.Node] = {}
    for section in by_kind["node"]:
        with _positioned(section):
            nodes[section.id] = schemas.Node(
                id=section.id,
                carriers=_split_list(section.entries.get("carriers", "")),
                **{k: v for k, v in section.entries.items() if k != "carriers"},
            )

    links = []
    for section in by_kind["link"]:
        _require(section, "source", "target", "carrier", "capacity")
        _check_node(section, "source", nodes)
        _check_node(section, "target", nodes)
        with _positioned(section):
            links.append(schemas.Link(id=section.id, **section.entries))

    hubs = [_build_hub(section, nodes) for section in by_kind["hub"]]

    placements, devices = [], {}
    for section in by_kind["device"]:
        placement, spec = _build_device(section, nodes, profiles)
        placements.append(placement)
        devices[section.id] = spec

    utility = None
    for section in by_kind["utility"]:
        _require(section, "node")
        node = _check_node(section, "node", nodes)
        bound_keys = [key for key in section.entries if key in carrier_names]
        with _positioned(section):
            utility = schemas.UtilityConnection(
                id=section.id,
                node=node,
                bounds=_carrier_vector(section, bound_keys),
                **{k: v for k, v in section.entries.items() if k not in bound_keys and k != "node"},
            )

    ems = None
    for section in by_kind["ems"]:
        timescale_keys = [key for key in section.entries if key in ("slow", "medium", "fast")]
        with _positioned(section):
            ems = schemas.EmsSettings(
                id=section.id,
                timescales=schemas.LayerTimescales(**{key: section.entries[key] for key in timescale_keys}),
                **{k: v for k, v in section.entries.items() if k not in timescale_keys},
            )

    catalog = []
    for section in by_kind["catalog"]:
        capability_keys = [key for key in section.entries if key in carrier_names]
        with _positioned(section):
            catalog.append(schemas.CatalogComponent(
                id=section.id,
                capability=_carrier_vector(section, capability_keys),
                **{k: v for k, v in section.entries.items() if k not in capability_keys},
            ))

    dynamics = []
    for section in by_kind["dynamics"]:
        _require(section, *MATRIX_KEYS)
        with _positioned(section):
            dynamics.append(schemas.DynamicsSpec(
                id=section.id,
                **{key: _matrix(section, key) if key in MATRIX_KEYS else value for key, value in section.entries.items()},
            ))

    header = by_kind["scenario"][0] if by_kind["scenario"] else Section("scenario", "scenario", 1, {}, {})
    with _positioned(header):
        topology = schemas.NetworkTopology(
            nodes=tuple(nodes.values()), links=tuple(links), hubs=tuple(hubs), devices=tuple(placements),
        )
        scenario = schemas.Scenario(
            name=header.id,
            topology=topology,
            devices=devices,
            profiles=profiles,
            prices=prices,
            utility=utility,
            ems=ems,
            catalog=tuple(catalog),
            dynamics=tuple(dynamics),
            **header.entries,
        )
    logger.debug(
        f"Parsed scenario '{scenario.name}': {len(nodes)} nodes, {len(devices)} devices, {len(hubs)} hubs"
    )
    return scenario


def load_scenario(path: Union[str, Path]) -> schemas.Scenario:
    """Read and parse a UTF-8 scenario document."""
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


# Serialization

def format_value(value) -> str:
    """Shortest text that parses back to the same value; numbers use up to 9 significant digits when exact."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        value = float(value)
        short = f"{value:.9g}"
        text = short if float(short) == value else repr(value)
        return "0" if text == "-0" else text
    if isinstance(value, Carrier):
        return value.value
    if isinstance(value, (tuple, list)):
        if value and isinstance(value[0], (tuple, list)):
            return "; ".join(format_value(row) for row in value)
        return ", ".join(format_value(item) for item in value)
    return str(value)


def _section(kind: str, section_id: str, entries: List[Tuple[str, object]]) -> str:
    lines = [f"[{kind} {section_id}]"]
    lines.extend(f"{key} = {format_value(value)}" for key, value in entries)
    return "\n".join(lines)


def _vector_entries(vector: schemas.PortVector) -> List[Tuple[str, float]]:
    return [(carrier.value, vector.get(carrier)) for carrier in CARRIERS if vector.get(carrier) != 0.0]


def serialize_scenario(scenario: schemas.Scenario) -> str:
    """
    Render a scenario in the document grammar; parse_scenario(serialize_scenario(s)) == s.
    """
    blocks = [_section("scenario", scenario.name, [
        ("mode", scenario.mode.value),
        ("self_use", scenario.self_use),
        ("time_step", scenario.time_step),
    ])]
    topology = scenario.topology
    for node in topology.nodes:
        blocks.append(_section("node", node.id, [("carriers", [c for c in CARRIERS if c in node.carriers])]))
    for link in topology.links:
        blocks.append(_section("link", link.id, [
            ("source", link.source), ("target", link.target), ("carrier", link.carrier), ("capacity", link.capacity),
        ]))
    for hub in topology.hubs:
        entries: List[Tuple[str, object]] = [("node", hub.node)]
        if hub.capacity is not None:
            entries.append(("capacity", hub.capacity))
        for target in CARRIERS:
            for source in CARRIERS:
                if source in hub.coupling.entries.get(target, {}):
                    entries.append((f"{source.value}_to_{target.value}", hub.coupling.entries[target][source]))
        blocks.append(_section("hub", hub.id, entries))
    device_nodes = topology.device_nodes()
    for placement in topology.devices:
        spec = scenario.devices[placement.device]
        fields = spec.model_dump(exclude_defaults=True, exclude={"kind"})
        blocks.append(_section("device", placement.device, [
            ("node", device_nodes[placement.device]), ("kind", spec.kind), *fields.items(),
        ]))
    for name, profile in scenario.profiles.items():
        blocks.append(_section("profile", name, [("unit", profile.unit), ("values", profile.values)]))
    for carrier in CARRIERS:
        if carrier in scenario.prices:
            blocks.append(_section("price", carrier.value, [("values", scenario.prices[carrier])]))
    if scenario.utility is not None:
        blocks.append(_section("utility", scenario.utility.id, [
            ("node", scenario.utility.node),
            ("feed_in_ratio", scenario.utility.feed_in_ratio),
            *_vector_entries(scenario.utility.bounds),
        ]))
    if scenario.ems is not None:
        timescales = scenario.ems.timescales
        entries = [("slow", timescales.slow), ("medium", timescales.medium), ("fast", timescales.fast)]
        if scenario.ems.gamma is not None:
            entries.append(("gamma", scenario.ems.gamma))
        blocks.append(_section("ems", scenario.ems.id, entries))
    for component in scenario.catalog:
        blocks.append(_section("catalog", component.id, [
            ("capital_cost", component.capital_cost),
            ("operating_cost", component.operating_cost),
            ("emission", component.emission),
            *_vector_entries(component.capability),
        ]))
    for spec in scenario.dynamics:
        blocks.append(_section("dynamics", spec.id, [(key, getattr(spec, key)) for key in MATRIX_KEYS]))
    return "\n\n".join(blocks) + "\n"


if __name__ == "__main__":
    print("This is only a library. Nothing will happen when you execute it.")
