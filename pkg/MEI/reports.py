"""
Run reports: per-step CSV tables, the summary text and long-format plot data.

CSV files use a comma separator, "." decimals, LF line endings and numbers with up to 9
significant digits, so identical runs produce byte-identical files.
"""

import logging
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import (
    Dict,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from MEI import schemas
from MEI.schemas import CARRIERS, OperationMode

logger = logging.getLogger("mei")

REPORT_FILES = ("dispatch.csv", "exchange.csv", "storage.csv", "residuals.csv", "summary.txt")
PLOTDATA_FILE = "plotdata.csv"
KWH_PER_MWH = 1000.0
SOURCE_LABELS = {
    "pv": "PV",
    "chimney": "solar chimney",
    "full_spectrum": "full-spectrum",
    "bipv": "BIPV",
    "dual_role": "carbon-fibre plant",
    "gas_source": "gas",
}


class RunReport(BaseModel):
    """
    Everything a run emits.

    Attributes:

        scenario (str): Scenario name.
        mode (OperationMode): Operation mode of the run.
        steps (int): Number of steps.
        time_step (float): Step length in hours.
        dispatch (pd.DataFrame): Device injections, hub inputs and dumps per step, kW.
        exchange (pd.DataFrame): Exchange flows per step, kW.
        storage (pd.DataFrame): Store contents at the end of each step, kWh.
        residuals (pd.DataFrame): Balance residuals per step, kW, with the largest in `max`.
        generation (Dict[str, float]): Cumulative generation per source label, MWh.
        compliance (Optional[ComplianceReport]): Design-principle checks.
        cost (float): Operating cost.
        converged (bool): Exchange equilibrium flag.
        equilibrium_residual (float): Residual of the exchange equilibrium.
        iterations (int): Best-response sweeps of the exchange equilibrium.
        costs (Dict[str, float]): Cost breakdown.
    """

    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    scenario: str
    mode: OperationMode
    steps: int
    time_step: float = 1.0
    dispatch: pd.DataFrame
    exchange: pd.DataFrame
    storage: pd.DataFrame
    residuals: pd.DataFrame
    generation: Dict[str, float] = {}
    compliance: Optional[schemas.ComplianceReport] = None
    cost: float = 0.0
    converged: bool = True
    equilibrium_residual: float = 0.0
    iterations: int = 0
    costs: Dict[str, float] = {}

    def energy_columns(self) -> List[Tuple[str, pd.Series]]:
        """Power columns of the dispatch and exchange tables, in file order."""
        columns = []
        for frame in (self.dispatch, self.exchange):
            columns.extend((name, frame[name]) for name in frame.columns if name != "step")
        return columns

    def totals(self) -> Dict[str, float]:
        """Energy of every power column in MWh (column sum x time step)."""
        return {
            name: float(column.sum()) * self.time_step / KWH_PER_MWH
            for name, column in self.energy_columns()
        }

    def max_residual(self) -> float:
        if self.residuals.empty or "max" not in self.residuals:
            return 0.0
        return float(self.residuals["max"].max())


def empty_report(scenario: str = "scenario", mode: OperationMode = OperationMode.GRID_CONNECTED) -> RunReport:
    frame = pd.DataFrame({"step": pd.Series([], dtype=int)})
    return RunReport(
        scenario=scenario, mode=mode, steps=0,
        dispatch=frame, exchange=frame.copy(), storage=frame.copy(), residuals=frame.assign(max=pd.Series([], dtype=float)),
    )


# Formatting

def format_number(value: float) -> str:
    """Up to 9 significant digits, shortest form; negative zero prints as 0."""
    text = f"{float(value):.9g}"
    return "0" if text == "-0" else text


def format_mwh(value: float) -> str:
    """Exactly two decimals, rounding half up on the decimal representation."""
    rounded = Decimal(repr(float(value))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    return "0.00" if rounded == 0 else f"{rounded}"


def generation_line(label: str, mwh: float) -> str:
    return f"cumulative {label} generation: {format_mwh(mwh)} MWh"


# Building

def _steps(steps: int) -> Dict[str, List[int]]:
    return {"step": list(range(steps))}


def build_report(
        scenario: schemas.Scenario,
        setpoints: schemas.DispatchSetpoints,
        exchange: Optional[schemas.ExchangeSchedule] = None,
        compliance: Optional[schemas.ComplianceReport] = None,
        residuals: Optional[Sequence[Mapping[Tuple[str, schemas.Carrier], float]]] = None,
) -> RunReport:
    """
    Tabulate a dispatch run.

    Args:
        scenario (Scenario): The dispatched scenario.
        setpoints (DispatchSetpoints): Dispatch result.
        exchange (Optional[ExchangeSchedule]): Exchange schedule of the run.
        compliance (Optional[ComplianceReport]): Design-principle checks.
        residuals (Optional[Sequence[Mapping]]): Balance residual per (node, carrier) for each step.

    Returns:
        RunReport: Tables and summary values.
    """
    steps = setpoints.steps
    dispatch = _steps(steps)
    for device_id in sorted(setpoints.devices):
        for carrier in CARRIERS:
            dispatch[f"{device_id}_{carrier.value}"] = [vector.get(carrier) for vector in setpoints.devices[device_id]]
    for hub_id in sorted(setpoints.hub_inputs):
        for carrier in CARRIERS:
            dispatch[f"{hub_id}_in_{carrier.value}"] = [vector.get(carrier) for vector in setpoints.hub_inputs[hub_id]]
    for node in sorted(setpoints.dumps):
        for carrier in (schemas.Carrier.HEAT, schemas.Carrier.COOLING):
            dispatch[f"dump_{node}_{carrier.value}"] = [vector.get(carrier) for vector in setpoints.dumps[node]]

    exchange_table = _steps(steps)
    if exchange is not None:
        for flow in exchange.flows:
            exchange_table[f"{flow.party}_{flow.counterparty}_{flow.carrier.value}"] = list(flow.values[:steps])

    storage = _steps(steps)
    for unit in sorted(setpoints.storage):
        storage[f"{unit}_air"] = [snapshot.air for snapshot in setpoints.storage[unit]]
        storage[f"{unit}_thermal"] = [snapshot.thermal for snapshot in setpoints.storage[unit]]

    residual_table = _steps(steps)
    keys = sorted({key for row in residuals or () for key in row}, key=lambda k: (k[0], CARRIERS.index(k[1])))
    for node, carrier in keys:
        residual_table[f"{node}_{carrier.value}"] = [abs(row.get((node, carrier), 0.0)) for row in residuals]
    residual_table["max"] = [
        max((abs(value) for value in row.values()), default=0.0) for row in residuals
    ] if residuals else [0.0] * steps

    generation: Dict[str, float] = {}
    for kind, label in SOURCE_LABELS.items():
        devices = [d for d in scenario.devices_of_kind(kind) if d in setpoints.devices]
        if not devices:
            continue
        energy = sum(
            max(value, 0.0) for d in devices for vector in setpoints.devices[d] for value in vector.as_tuple()
        )
        generation[label] = energy * setpoints.time_step / KWH_PER_MWH

    return RunReport(
        scenario=scenario.name,
        mode=exchange.mode if exchange is not None else scenario.mode,
        steps=steps,
        time_step=setpoints.time_step,
        dispatch=pd.DataFrame(dispatch),
        exchange=pd.DataFrame(exchange_table),
        storage=pd.DataFrame(storage),
        residuals=pd.DataFrame(residual_table),
        generation=generation,
        compliance=compliance,
        cost=setpoints.cost,
        converged=exchange.converged if exchange is not None else True,
        equilibrium_residual=exchange.residual if exchange is not None else 0.0,
        iterations=exchange.iterations if exchange is not None else 0,
        costs=dict(setpoints.costs),
    )


def summary_text(report: RunReport) -> str:
    """Summary of a run: mode, principle compliance, equilibrium, cumulative generation and MWh totals."""
    lines = [
        f"scenario: {report.scenario}",
        f"mode: {report.mode.value}",
        f"steps: {report.steps} x {format_number(report.time_step)} h",
    ]
    if report.compliance is not None:
        lines.append("design principles:")
        lines.extend(
            f"  {check.name}: {'satisfied' if check.satisfied else 'violated'} ({check.message})"
            for check in report.compliance.checks
        )
    lines.append(
        f"exchange equilibrium: {'converged' if report.converged else 'not converged'}, "
        f"residual {format_number(report.equilibrium_residual)}, sweeps {report.iterations}"
    )
    lines.append(f"max balance residual: {format_number(report.max_residual())} kW")
    lines.append(f"operating cost: {format_number(report.cost)}")
    for name in sorted(report.costs):
        lines.append(f"  {name}: {format_number(report.costs[name])}")
    lines.extend(generation_line(label, mwh) for label, mwh in report.generation.items())
    lines.append("totals (MWh):")
    lines.extend(f"  {name} = {format_number(value)}" for name, value in report.totals().items())
    return "\n".join(lines) + "\n"


# Emission

def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    text = frame.copy()
    for column in text.columns:
        if column == "step":
            text[column] = text[column].astype(int).astype(str)
        else:
            text[column] = [format_number(value) for value in frame[column]]
    text.to_csv(path, index=False, lineterminator="\n")


def emit_report(report: RunReport, directory: Union[str, Path]) -> List[Path]:
    """
    Write dispatch.csv, exchange.csv, storage.csv, residuals.csv and summary.txt.

    Raises:
        OSError: If the directory cannot be created or written, naming the path.
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        paths = [directory / name for name in REPORT_FILES]
        for frame, path in zip((report.dispatch, report.exchange, report.storage, report.residuals), paths):
            _write_csv(frame, path)
        paths[-1].write_text(summary_text(report), encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write report to '{directory}': {exc}") from exc
    logger.info(f"Report of '{report.scenario}' written to {directory}")
    return paths


def emit_plotdata(report: RunReport, path: Union[str, Path]) -> Path:
    """
    Write long-format plot data: one (time, series, value) row per step and series, with the
    series names listed in a leading "# series:" comment line.
    """
    path = Path(path)
    series: List[Tuple[str, pd.Series]] = report.energy_columns()
    series.extend((name, report.storage[name]) for name in report.storage.columns if name != "step")
    names = [name for name, _ in series]
    rows = {
        "time": np.repeat(np.arange(report.steps) * report.time_step, len(series)),
        "series": names * report.steps,
        "value": [float(column.iloc[t]) for t in range(report.steps) for _, column in series],
    }
    frame = pd.DataFrame(rows, columns=["time", "series", "value"])
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write(f"# series: {', '.join(names)}\n")
        frame.assign(
            time=[format_number(value) for value in frame["time"]],
            value=[format_number(value) for value in frame["value"]],
        ).to_csv(handle, index=False, lineterminator="\n")
    return path


def read_plotdata(path: Union[str, Path]) -> pd.DataFrame:
    """Re-import plot data written by emit_plotdata."""
    return pd.read_csv(path, comment="#", dtype={"time": float, "series": str, "value": float})


def aggregate_plotdata(frame: pd.DataFrame, time_step: float) -> Dict[str, float]:
    """Energy per series in MWh from long-format plot data, in first-appearance order."""
    sums = frame.groupby("series", sort=False)["value"].sum()
    return {name: float(value) * time_step / KWH_PER_MWH for name, value in sums.items()}


if __name__ == "__main__":
    print("This is only a library. Nothing will happen when you execute it.")
