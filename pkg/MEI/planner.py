import itertools
import logging
from typing import (
    Any,
    Callable,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from MEI import dependencies, exceptions, schemas
from MEI.game_kit import coordinate_descent, golden_section
from MEI.schemas import CARRIERS, PortVector

logger = logging.getLogger("mei")

MAX_CATALOG_SIZE = 20
DOMINANCE_SLACK = 1e-9
GRID_SAMPLE_LIMIT = 100_000
RANDOM_SAMPLE_COUNT = 10_000
DEFAULT_PORTFOLIO_WEIGHTS = tuple(i / 10 for i in range(11))


class BiObjectiveProblem(BaseModel):
    """
    Cost/emission planning problem: minimize (f1(x), f2(x)) subject to g(x) = 0 and h(x) <= 0.

    Attributes:

        f1 (Callable): Cost map x -> currency.
        f2 (Callable): Emission map x -> kg CO2.
        equalities (Tuple[Callable, ...]): Maps g with g(x) = 0 required (scalar or array valued).
        inequalities (Tuple[Callable, ...]): Maps h with h(x) <= 0 required.
        lower, upper (Tuple[float, ...]): Variable box in R^m.
        candidates (Optional[Tuple[Any, ...]]): Finite decision set; replaces the box when given.

    Validators:

        check_domain:
            The box is non-empty (lower <= upper, m >= 1) unless a non-empty candidate list is given.
    """

    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    f1: Callable[[Any], float]
    f2: Callable[[Any], float]
    equalities: Tuple[Callable[[Any], Any], ...] = ()
    inequalities: Tuple[Callable[[Any], Any], ...] = ()
    lower: Tuple[float, ...] = ()
    upper: Tuple[float, ...] = ()
    candidates: Optional[Tuple[Any, ...]] = None

    @model_validator(mode="after")
    def check_domain(self):
        if self.candidates is not None:
            if len(self.candidates) == 0:
                raise ValueError("candidate list must not be empty")
            return self
        if len(self.lower) == 0 or len(self.lower) != len(self.upper):
            raise ValueError("box bounds must be non-empty and of equal length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("box requires lower <= upper component-wise")
        return self

    def violation(self, x: Any) -> float:
        """Squared constraint violation: sum g(x)^2 + sum max(h(x), 0)^2."""
        total = 0.0
        for g in self.equalities:
            total += float(np.sum(np.square(np.asarray(g(x), dtype=float))))
        for h in self.inequalities:
            total += float(np.sum(np.square(np.maximum(np.asarray(h(x), dtype=float), 0.0))))
        return total

    def is_feasible(self, x: Any, tolerance: float) -> bool:
        for g in self.equalities:
            if np.any(np.abs(np.asarray(g(x), dtype=float)) > tolerance):
                return False
        for h in self.inequalities:
            if np.any(np.asarray(h(x), dtype=float) > tolerance):
                return False
        return True


class ParetoPoint(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    x: Any
    f1: float
    f2: float
    # First sweep weight whose scalarized minimizer is this point; None for unsupported points
    weight: Optional[float] = None


class ParetoFront(BaseModel):
    """
    Nondominated (x, f1, f2) points sorted by f1 ascending.

    Validators:

        check_front:
            Points are sorted by f1 and no point dominates another.
    """

    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    points: Tuple[ParetoPoint, ...] = ()

    @model_validator(mode="after")
    def check_front(self):
        for left, right in zip(self.points, self.points[1:]):
            if right.f1 < left.f1:
                raise ValueError("Pareto points must be sorted by f1 ascending")
        for p, q in itertools.permutations(self.points, 2):
            if _dominates(q.f1, q.f2, p.f1, p.f2):
                raise ValueError(f"point ({q.f1}, {q.f2}) dominates ({p.f1}, {p.f2})")
        return self

    def objectives(self) -> np.ndarray:
        return np.array([(point.f1, point.f2) for point in self.points], dtype=float).reshape(-1, 2)

    def with_point(self, point: ParetoPoint) -> "ParetoFront":
        """The front with `point` inserted and the points it dominates removed; unchanged if `point` is dominated."""
        if any(_dominates(q.f1, q.f2, point.f1, point.f2) for q in self.points):
            return self
        kept = [
            q for q in self.points
            if not _dominates(point.f1, point.f2, q.f1, q.f2) and (q.f1, q.f2) != (point.f1, point.f2)
        ]
        return ParetoFront(points=tuple(sorted(kept + [point], key=lambda p: (p.f1, p.f2))))


class DisagreementPoint(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    f1: float
    f2: float


class BargainResult(BaseModel):
    """
    Nash bargaining compromise.

    Attributes:

        x (Any): Selected decision.
        f1, f2 (float): Its cost and emission.
        product (float): Nash product (d1 - f1)(d2 - f2) >= 0.
        weight (Optional[float]): Scalarization weight supporting the point.
        disagreement (DisagreementPoint): Reference point of the bargain.
        front (ParetoFront): The front the bargain was struck on, holding x.
    """

    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    x: Any
    f1: float
    f2: float
    product: float
    weight: Optional[float]
    disagreement: DisagreementPoint
    front: ParetoFront = ParetoFront()

    @model_validator(mode="after")
    def check_product(self):
        if self.product < 0:
            raise ValueError("Nash product must be nonnegative")
        return self


class PortfolioPlan(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    selection: Tuple[str, ...]
    bargain: BargainResult
    front: ParetoFront
    peak_demand: PortVector


def _dominates(a1: float, a2: float, b1: float, b2: float) -> bool:
    return a1 <= b1 and a2 <= b2 and (a1 < b1 or a2 < b2)


def nondominated_mask(f1: np.ndarray, f2: np.ndarray) -> np.ndarray:
    """
    Boolean mask of the nondominated entries; of several identical objective pairs only the first
    (in input order) is kept.
    """
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    keep = np.zeros(f1.size, dtype=bool)
    if f1.size == 0:
        return keep
    order = np.lexsort((np.arange(f1.size), f2, f1))
    sorted_f2 = f2[order]
    best_before = np.minimum.accumulate(np.concatenate(([np.inf], sorted_f2[:-1])))
    keep[order[sorted_f2 < best_before]] = True
    return keep


def _normalization(problem: BiObjectiveProblem) -> Tuple[float, float, float, float]:
    """Sampled (min f1, range f1, min f2, range f2) over the box or the candidate list."""
    if problem.candidates is not None:
        samples = list(problem.candidates)
    else:
        lower = np.asarray(problem.lower, dtype=float)
        upper = np.asarray(problem.upper, dtype=float)
        per_axis = dependencies.get_solver_config().NORMALIZATION_SAMPLES
        if per_axis ** lower.size <= GRID_SAMPLE_LIMIT:
            axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(lower, upper)]
            samples = [np.array(point) for point in itertools.product(*axes)]
        else:
            rng = np.random.default_rng(0)
            samples = list(lower + (upper - lower) * rng.random((RANDOM_SAMPLE_COUNT, lower.size)))
    values1 = np.array([float(problem.f1(x)) for x in samples])
    values2 = np.array([float(problem.f2(x)) for x in samples])
    range1 = float(values1.max() - values1.min()) or 1.0
    range2 = float(values2.max() - values2.min()) or 1.0
    return float(values1.min()), range1, float(values2.min()), range2


def _check_weights(weights: Sequence[float]) -> None:
    if len(weights) == 0:
        raise exceptions.NoWeightsError()
    for weight in weights:
        if not 0.0 <= weight <= 1.0:
            raise exceptions.InvalidWeightError(weight)


def _scalarized_minimizer(problem: BiObjectiveProblem, weight: float, scale) -> np.ndarray:
    min1, range1, min2, range2 = scale
    penalty = dependencies.get_solver_config().PENALTY_COEFFICIENT

    def scalarized(x: np.ndarray) -> float:
        value = weight * (problem.f1(x) - min1) / range1 + (1.0 - weight) * (problem.f2(x) - min2) / range2
        return float(value) + penalty * problem.violation(x)

    x, _, _ = coordinate_descent(scalarized, problem.lower, problem.upper)
    return x


def front_from_values(
        decisions: Sequence[Any],
        f1: np.ndarray,
        f2: np.ndarray,
        weights: Sequence[float],
) -> ParetoFront:
    """
    Pareto front of a finite evaluated decision set; every nondominated decision stays on the
    front and carries the first weight whose normalized scalarization selects it.
    """
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    if f1.size == 0:
        return ParetoFront()
    keep = np.flatnonzero(nondominated_mask(f1, f2))
    range1 = float(f1.max() - f1.min()) or 1.0
    range2 = float(f2.max() - f2.min()) or 1.0

    selected_by = {}
    for weight in weights:
        scalar = weight * (f1[keep] - f1.min()) / range1 + (1.0 - weight) * (f2[keep] - f2.min()) / range2
        winner = int(keep[int(np.argmin(scalar))])
        selected_by.setdefault(winner, weight)

    order = sorted(keep, key=lambda index: (f1[index], f2[index]))
    points = tuple(
        ParetoPoint(x=decisions[index], f1=float(f1[index]), f2=float(f2[index]), weight=selected_by.get(int(index)))
        for index in order
    )
    return ParetoFront(points=points)


def pareto_sweep(problem: BiObjectiveProblem, weights: Sequence[float]) -> ParetoFront:
    """
    Weighting-method Pareto sweep.

    For each weight lambda, minimize lambda * f1_hat + (1 - lambda) * f2_hat where the objectives
    are normalized to [0, 1] by sampled min/max over the box, with constraints as a quadratic
    penalty. Points violating the constraints beyond FEASIBILITY_TOLERANCE and dominated points
    are dropped. Finite candidate sets are evaluated exhaustively.

    Args:
        problem (BiObjectiveProblem): The planning problem.
        weights (Sequence[float]): Scalarization weights in [0, 1].

    Returns:
        ParetoFront: The nondominated points sorted by f1.

    Raises:
        NoWeightsError: If no weight is given.
        InvalidWeightError: If a weight lies outside [0, 1].
    """
    _check_weights(weights)
    tolerance = dependencies.get_solver_config().FEASIBILITY_TOLERANCE

    if problem.candidates is not None:
        feasible = [x for x in problem.candidates if problem.is_feasible(x, tolerance)]
        if len(feasible) < len(problem.candidates):
            logger.warning(f"Dropped {len(problem.candidates) - len(feasible)} infeasible candidates")
        f1 = np.array([float(problem.f1(x)) for x in feasible])
        f2 = np.array([float(problem.f2(x)) for x in feasible])
        return front_from_values(feasible, f1, f2, weights)

    scale = _normalization(problem)
    # Weight solves are independent; merge by weight then f1
    solved = []
    for weight in sorted(weights):
        x = _scalarized_minimizer(problem, weight, scale)
        if not problem.is_feasible(x, tolerance):
            logger.warning(f"Dropped infeasible Pareto point at weight {weight}")
            continue
        solved.append((weight, x, float(problem.f1(x)), float(problem.f2(x))))
    solved.sort(key=lambda item: (item[0], item[2]))

    if not solved:
        return ParetoFront()
    f1 = np.array([item[2] for item in solved])
    f2 = np.array([item[3] for item in solved])
    keep = nondominated_mask(f1, f2)
    points = sorted(
        (ParetoPoint(x=item[1], f1=item[2], f2=item[3], weight=item[0]) for item, kept in zip(solved, keep) if kept),
        key=lambda point: (point.f1, point.f2),
    )
    logger.debug(f"Pareto sweep over {len(weights)} weights kept {len(points)} points")
    return ParetoFront(points=tuple(points))


def disagreement_point(front: ParetoFront) -> DisagreementPoint:
    """
    Nadir of the computed front: the maximum cost and the maximum emission.

    Raises:
        EmptyParetoFrontError: If the front has no points.
    """
    if not front.points:
        raise exceptions.EmptyParetoFrontError()
    objectives = front.objectives()
    return DisagreementPoint(f1=float(objectives[:, 0].max()), f2=float(objectives[:, 1].max()))


def nash_product(f1: float, f2: float, d: DisagreementPoint) -> float:
    return (d.f1 - f1) * (d.f2 - f2)


def _gain_product(f1: float, f2: float, d: DisagreementPoint) -> float:
    return max(d.f1 - f1, 0.0) * max(d.f2 - f2, 0.0)


def supporting_weight(f1: float, f2: float, d: DisagreementPoint, scale) -> Optional[float]:
    """Scalarization weight whose level line is tangent to the Nash-product level curve at (f1, f2)."""
    _, range1, _, range2 = scale
    gain1, gain2 = d.f1 - f1, d.f2 - f2
    denominator = gain2 * range1 + gain1 * range2
    if denominator <= 0:
        return None
    return gain2 * range1 / denominator


def nash_bargain(
        problem: BiObjectiveProblem,
        front: ParetoFront,
        d: DisagreementPoint,
        tol: Optional[float] = None,
) -> BargainResult:
    """
    Nash bargaining compromise between cost and emission.

    Maximizes (d1 - f1(x)) (d2 - f2(x)). On a box the Pareto curve is parametrized by the
    scalarization weight and searched by golden section on lambda in [0, 1]; the best of that
    search and all stored front points is then refined by maximizing the product directly over
    the box. Finite candidate problems pick the best stored front point. A point found off the
    stored front is inserted into the returned front, so x is always one of its members.

    Args:
        problem (BiObjectiveProblem): The planning problem.
        front (ParetoFront): Front from pareto_sweep.
        d (DisagreementPoint): Disagreement point dominating every front point.
        tol (Optional[float]): Golden-section tolerance on lambda.

    Returns:
        BargainResult: The compromise solution.

    Raises:
        EmptyParetoFrontError: If the front is empty.
        InvalidDisagreementPointError: If some front point is not dominated by d.
    """
    if not front.points:
        raise exceptions.EmptyParetoFrontError()
    for point in front.points:
        if point.f1 > d.f1 + DOMINANCE_SLACK or point.f2 > d.f2 + DOMINANCE_SLACK:
            raise exceptions.InvalidDisagreementPointError(point.f1, point.f2, d.f1, d.f2)

    best = max(front.points, key=lambda point: _gain_product(point.f1, point.f2, d))
    best_x, best_f1, best_f2, best_weight = best.x, best.f1, best.f2, best.weight
    best_product = _gain_product(best_f1, best_f2, d)
    stored = True

    if problem.candidates is None:
        solver_config = dependencies.get_solver_config()
        tol = solver_config.GOLDEN_TOLERANCE if tol is None else tol
        scale = _normalization(problem)
        cache = {}

        def curve_point(weight: float):
            if weight not in cache:
                x = _scalarized_minimizer(problem, weight, scale)
                cache[weight] = (x, float(problem.f1(x)), float(problem.f2(x)))
            return cache[weight]

        weight = golden_section(lambda w: -_gain_product(*curve_point(w)[1:], d), 0.0, 1.0, tol)
        x, f1, f2 = curve_point(weight)
        if problem.is_feasible(x, solver_config.FEASIBILITY_TOLERANCE) and _gain_product(f1, f2, d) > best_product:
            best_x, best_f1, best_f2, best_weight = x, f1, f2, weight
            best_product = _gain_product(f1, f2, d)
            stored = False

        penalty = solver_config.PENALTY_COEFFICIENT
        refined, _, _ = coordinate_descent(
            lambda x: -_gain_product(float(problem.f1(x)), float(problem.f2(x)), d) + penalty * problem.violation(x),
            problem.lower,
            problem.upper,
            start=best_x,
        )
        f1, f2 = float(problem.f1(refined)), float(problem.f2(refined))
        if problem.is_feasible(refined, solver_config.FEASIBILITY_TOLERANCE) and _gain_product(f1, f2, d) >= best_product:
            best_x, best_f1, best_f2 = refined, f1, f2
            best_product = _gain_product(f1, f2, d)
            best_weight = supporting_weight(f1, f2, d, scale)
            stored = False

    if not stored:
        extended = front.with_point(ParetoPoint(x=best_x, f1=best_f1, f2=best_f2, weight=best_weight))
        if extended is front:
            # a stored point dominates the curve point within solver accuracy
            best = max(front.points, key=lambda point: _gain_product(point.f1, point.f2, d))
            best_x, best_f1, best_f2, best_weight = best.x, best.f1, best.f2, best.weight
            best_product = _gain_product(best_f1, best_f2, d)
        front = extended

    logger.debug(f"Nash bargain: product {best_product:.6g} at (f1 {best_f1:.6g}, f2 {best_f2:.6g})")
    return BargainResult(
        x=best_x, f1=best_f1, f2=best_f2, product=best_product, weight=best_weight, disagreement=d, front=front,
    )


def peak_demand(demand: Union[schemas.Scenario, PortVector]) -> PortVector:
    """Peak total load per carrier over the scenario horizon (a PortVector passes through)."""
    if isinstance(demand, PortVector):
        return demand
    steps = demand.horizon
    totals = np.zeros((steps, len(CARRIERS)))
    for device_id in demand.devices_of_kind("load"):
        spec = demand.devices[device_id]
        for column, carrier in enumerate(CARRIERS):
            name = getattr(spec, carrier.value)
            if name is not None:
                totals[:, column] += np.asarray(demand.profiles[name].values[:steps], dtype=float)
    peak = totals.max(axis=0) if steps else np.zeros(len(CARRIERS))
    return PortVector.from_sequence(peak)


def plan_hub_portfolio(
        catalog: Sequence[schemas.CatalogComponent],
        demand: Union[schemas.Scenario, PortVector],
        weights: Sequence[float] = DEFAULT_PORTFOLIO_WEIGHTS,
) -> PortfolioPlan:
    """
    Size the hub component portfolio by exhaustive subset enumeration and Nash bargaining.

    Every subset whose summed capability covers the peak demand per carrier is feasible;
    f1 = capital + operating cost and f2 = emissions of the subset. The finite Pareto front of
    the feasible subsets is bargained against its nadir.

    Args:
        catalog (Sequence[CatalogComponent]): At most 20 candidate components.
        demand (Scenario | PortVector): Scenario whose load peak must be covered, or the peak itself.
        weights (Sequence[float]): Sweep weights used to label supported front points.

    Returns:
        PortfolioPlan: Selected component ids, bargain result and the front.

    Raises:
        DimensionError: If the catalog has more than 20 components.
        InfeasibleDemandError: If no subset covers the peak demand.
    """
    _check_weights(weights)
    if len(catalog) > MAX_CATALOG_SIZE:
        raise exceptions.DimensionError(f"catalog of {len(catalog)} components exceeds {MAX_CATALOG_SIZE}")
    peak = peak_demand(demand)
    size = len(catalog)

    masks = (np.arange(2 ** size)[:, None] >> np.arange(size)) & 1
    capability = np.array([component.capability.as_tuple() for component in catalog], dtype=float).reshape(size, len(CARRIERS))
    cost = np.array([component.capital_cost + component.operating_cost for component in catalog], dtype=float)
    emission = np.array([component.emission for component in catalog], dtype=float)

    covered = masks @ capability if size else np.zeros((1, len(CARRIERS)))
    feasible = np.flatnonzero(np.all(covered >= np.asarray(peak.as_tuple()) - DOMINANCE_SLACK, axis=1))
    if feasible.size == 0:
        raise exceptions.InfeasibleDemandError(f"no catalog subset covers peak demand {peak.as_tuple()}")

    selections = [tuple(component.id for component, used in zip(catalog, masks[index]) if used) for index in feasible]
    f1 = masks[feasible] @ cost if size else np.zeros(1)
    f2 = masks[feasible] @ emission if size else np.zeros(1)
    front = front_from_values(selections, f1, f2, weights)
    d = disagreement_point(front)
    problem = BiObjectiveProblem(
        f1=lambda selection: float(sum(c.capital_cost + c.operating_cost for c in catalog if c.id in selection)),
        f2=lambda selection: float(sum(c.emission for c in catalog if c.id in selection)),
        candidates=tuple(point.x for point in front.points),
    )
    bargain = nash_bargain(problem, front, d)
    logger.info(
        f"Portfolio plan: {len(feasible)} feasible subsets, {len(front.points)} on the front, "
        f"selected {list(bargain.x) or 'nothing'}"
    )
    return PortfolioPlan(selection=tuple(bargain.x), bargain=bargain, front=front, peak_demand=peak)


if __name__ == "__main__":
    print("This is only a library. Nothing will happen when you execute it.")
