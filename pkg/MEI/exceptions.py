from typing import Optional

from pydantic import ValidationError as PydanticValidationError

ValidationError = PydanticValidationError


class LoggingSetupError(Exception):
    """
    Custom exception raised when logging setup fails.
    """

    def __init__(self, message: str):
        super().__init__(message)


class ScenarioValidationError(Exception):
    """Base class of every input or argument error. The CLI maps it to exit code 1."""


class InfeasibilityError(Exception):
    """Base class of every infeasible-problem error. The CLI maps it to exit code 2."""


class ScenarioParseError(ScenarioValidationError):
    """Raised when a scenario document cannot be parsed or violates an invariant."""

    def __init__(self, message: str, line: int, section: Optional[str] = None, detail: Optional[str] = None):
        self.line = line
        self.section = section
        self.detail = detail
        location = f" at line {line}"
        if section:
            location += f" in section [{section}]"
        super().__init__(f"{message}{location}: {detail}" if detail else f"{message}{location}")


class DetailedValueError(ValueError):
    """A model invariant failure whose headline is positioned before its detail in parse errors."""

    def __init__(self, headline: str, detail: str):
        self.headline = headline
        self.detail = detail
        super().__init__(f"{headline}: {detail}")


class HubColumnError(DetailedValueError):
    def __init__(self, carrier: str, column_sum: float):
        super().__init__("hub column exceeds unity", f"input {carrier} sums to {column_sum:.6g}")


class HubInputError(ScenarioValidationError):
    def __init__(self, carrier: str, value: float):
        super().__init__(f"hub input must be nonnegative ({carrier} = {value})")


class UnknownNodeError(ScenarioValidationError):
    def __init__(self, node_id: str):
        self.node_id = node_id
        super().__init__(f"unknown node '{node_id}'")


class UnknownComponentError(ScenarioValidationError):
    def __init__(self, kind: str, component_id: str):
        super().__init__(f"unknown {kind} '{component_id}'")


class DeviceInputError(ScenarioValidationError):
    """Raised when a device operation receives a negative power or request."""

    def __init__(self, message: str):
        super().__init__(message)


class SpectrumSplitError(ScenarioValidationError):
    def __init__(self, kind: str):
        super().__init__(f"spectrum split undefined for this source (kind '{kind}')")


class EmptyIntervalError(ScenarioValidationError):
    def __init__(self, lower: float, upper: float):
        super().__init__(f"empty interval [{lower}, {upper}]")


class InvalidToleranceError(ScenarioValidationError):
    def __init__(self, tolerance: float):
        super().__init__(f"invalid tolerance {tolerance}")


class UnknownPlayerError(ScenarioValidationError):
    def __init__(self, index: int, player_count: int):
        super().__init__(f"unknown player {index} (game has {player_count} players)")


class DimensionError(ScenarioValidationError):
    def __init__(self, detail: str):
        super().__init__(f"dimension error: {detail}")


class NoWeightsError(ScenarioValidationError):
    def __init__(self):
        super().__init__("no weights given for the Pareto sweep")


class InvalidWeightError(ScenarioValidationError):
    def __init__(self, weight: float):
        super().__init__(f"weight {weight} outside [0, 1]")


class EmptyParetoFrontError(ScenarioValidationError):
    def __init__(self):
        super().__init__("empty Pareto front")


class InvalidDisagreementPointError(ScenarioValidationError):
    def __init__(self, f1: float, f2: float, d1: float, d2: float):
        super().__init__(
            f"invalid disagreement point ({d1}, {d2}): front point ({f1}, {f2}) is not dominated"
        )


class InconsistentHorizonError(ScenarioValidationError):
    def __init__(self, lengths: dict):
        detail = ", ".join(f"{name}={length}" for name, length in sorted(lengths.items()))
        super().__init__(f"inconsistent horizon ({detail})")


class HorizonMisalignedError(ScenarioValidationError):
    def __init__(self, horizon: float, step: float):
        super().__init__(f"horizon misaligned: {horizon} h is not a multiple of {step} h")


class ExchangeBoundError(ScenarioValidationError):
    def __init__(self, party: str, carrier: str, value: float, bound: float):
        super().__init__(f"exchange flow {value} kW of '{party}' on {carrier} exceeds bound {bound} kW")


class InfeasibleDispatchError(InfeasibilityError):
    """Raised when no dispatch serves the demand of a step within device and link limits."""

    def __init__(self, step: int, detail: str = ""):
        self.step = step
        message = f"infeasible dispatch at step {step}"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class InfeasibleDemandError(InfeasibilityError):
    def __init__(self, detail: str = ""):
        message = "infeasible demand"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class AttenuationInfeasibleError(InfeasibilityError):
    def __init__(self, gamma: float, reason: str):
        self.gamma = gamma
        super().__init__(f"attenuation level infeasible for gamma = {gamma}: {reason}")


class BalanceViolationError(InfeasibilityError):
    """Raised when an emitted dispatch state does not balance."""

    def __init__(self, step: int, node: str, carrier: str, residual: float):
        super().__init__(
            f"balance residual {residual:.3e} kW at step {step}, node '{node}', carrier {carrier}"
        )


if __name__ == "__main__":
    print("This is only a library. Nothing will happen when you execute it")
