import logging
import math
from typing import (
    Any,
    Callable,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from MEI import dependencies, exceptions

logger = logging.getLogger("mei")

INV_PHI = (math.sqrt(5) - 1) / 2  # 1 / phi
INV_PHI_SQUARE = (3 - math.sqrt(5)) / 2  # 1 / phi^2
TIE_WEIGHT = 1e-9


class StrategySet(BaseModel):
    """
    Strategy set of one player: either a box [lower, upper] in R^n or a finite list of actions.

    Attributes:

        lower (Optional[Tuple[float, ...]]): Lower box corner.
        upper (Optional[Tuple[float, ...]]): Upper box corner.
        actions (Optional[Tuple[Any, ...]]): Finite action list.

    Example Usage:

        >>> StrategySet.box([0.0], [1.0])
        >>> StrategySet.finite([0, 1, 2])

    Validators:

        check_shape:
            Exactly one of box or actions is given, lower <= upper component-wise and the
            action list is non-empty.
    """

    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    lower: Optional[Tuple[float, ...]] = None
    upper: Optional[Tuple[float, ...]] = None
    actions: Optional[Tuple[Any, ...]] = None

    @model_validator(mode="after")
    def check_shape(self):
        is_box = self.lower is not None or self.upper is not None
        if is_box == (self.actions is not None):
            raise ValueError("a strategy set is either a box or a finite action list")
        if is_box:
            if self.lower is None or self.upper is None or len(self.lower) != len(self.upper):
                raise ValueError("box bounds must have equal length")
            if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
                raise ValueError("box requires lower <= upper component-wise")
        elif len(self.actions) == 0:
            raise ValueError("finite action list must not be empty")
        return self

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "StrategySet":
        return cls(lower=tuple(float(v) for v in lower), upper=tuple(float(v) for v in upper))

    @classmethod
    def finite(cls, actions: Sequence[Any]) -> "StrategySet":
        return cls(actions=tuple(actions))

    @property
    def is_finite(self) -> bool:
        return self.actions is not None

    def midpoint(self) -> np.ndarray:
        return (np.asarray(self.lower) + np.asarray(self.upper)) / 2.0

    def project(self, point) -> np.ndarray:
        return np.clip(np.asarray(point, dtype=float), self.lower, self.upper)


class PlayerProblem(BaseModel):
    """
    One player: objective(strategy, profile) -> cost, minimized over its strategy set.

    The profile passed to the objective is the full strategy profile with this player's slot
    already set to `strategy`.
    """

    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    objective: Callable[[Any, Tuple[Any, ...]], float]
    strategies: StrategySet


class GameProblem(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    players: Tuple[PlayerProblem, ...] = Field(..., min_length=1)


class EquilibriumResult(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    profile: Tuple[Any, ...]
    residual: float
    iterations: int
    converged: bool


class ZeroSumMatrixGame(BaseModel):
    """Payoff matrix of a zero-sum game; the row player maximizes, the column player minimizes."""

    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    payoff: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def coerce_payoff(cls, data):
        if isinstance(data, dict) and "payoff" in data:
            data = {**data, "payoff": np.atleast_2d(np.asarray(data["payoff"], dtype=float))}
        return data

    @model_validator(mode="after")
    def check_payoff(self):
        if self.payoff.ndim != 2 or self.payoff.size == 0:
            raise ValueError("payoff must be a non-empty m x n matrix")
        if not np.all(np.isfinite(self.payoff)):
            raise ValueError("payoff entries must be finite")
        return self


class SaddleResult(BaseModel):
    """
    Outcome of fictitious play on a zero-sum matrix game.

    Attributes:

        row_strategy, col_strategy (np.ndarray): Empirical mixed strategies.
        value (float): Midpoint of the upper and lower value bounds.
        exploitability (float): max_i (A y)_i - min_j (x A)_j, an upper bound on |value - true value| * 2.
        iterations (int): Fictitious-play rounds.
        checkpoints (Tuple[Tuple[int, float, float], ...]): (iteration, value, exploitability) at the
            requested checkpoints.
    """

    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    row_strategy: np.ndarray
    col_strategy: np.ndarray
    value: float
    exploitability: float
    iterations: int
    checkpoints: Tuple[Tuple[int, float, float], ...] = ()


class BilevelProblem(BaseModel):
    """
    Leader-follower problem: the leader minimizes F(x, y*(x)) where y*(x) minimizes the follower
    objective f(y, x). An optional follower_response(x) replaces the numerical inner solve.
    """

    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    leader_objective: Callable[[Any, Any], float]
    follower_objective: Callable[[Any, Any], float]
    leader_set: StrategySet
    follower_set: StrategySet
    follower_response: Optional[Callable[[Any], Any]] = None


class StackelbergResult(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    leader: Any
    follower: Any
    leader_cost: float
    follower_cost: float


def golden_section(f: Callable[[float], float], a: float, b: float, tol: Optional[float] = None) -> float:
    """
    Golden-section search for the minimizer of a unimodal function on [a, b].

    The bracket shrinks by 1/phi per evaluation; the midpoint of the final bracket is returned,
    so the error is at most tol for unimodal f. At most ceil(log((b - a) / tol) / log(phi)) + 2
    function evaluations are used.

    Args:
        f (Callable[[float], float]): Function to minimize.
        a (float): Left end of the interval.
        b (float): Right end of the interval.
        tol (Optional[float]): Bracket tolerance, defaults to GOLDEN_TOLERANCE.

    Returns:
        float: The approximate minimizer.

    Raises:
        EmptyIntervalError: If a >= b.
        InvalidToleranceError: If tol <= 0.
    """
    if tol is None:
        tol = dependencies.get_solver_config().GOLDEN_TOLERANCE
    if not a < b:
        raise exceptions.EmptyIntervalError(a, b)
    if not tol > 0:
        raise exceptions.InvalidToleranceError(tol)

    h = b - a
    if h <= tol:
        return (a + b) / 2

    # Required steps to achieve tolerance
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))

    c = a + INV_PHI_SQUARE * h
    d = a + INV_PHI * h
    yc = f(c)
    yd = f(d)

    for _ in range(n - 1):
        if yc < yd:
            b = d
            d = c
            yd = yc
            h = INV_PHI * h
            c = a + INV_PHI_SQUARE * h
            yc = f(c)
        else:
            a = c
            c = d
            yc = yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = f(d)

    if yc < yd:
        return (a + d) / 2
    return (c + b) / 2


def coordinate_descent(
        fn: Callable[[np.ndarray], float],
        lower: Sequence[float],
        upper: Sequence[float],
        start: Optional[Sequence[float]] = None,
        tol: Optional[float] = None,
        max_sweeps: Optional[int] = None,
) -> Tuple[np.ndarray, float, int]:
    """
    Derivative-free minimization over a box by cyclic golden-section line searches per coordinate.

    A coordinate move is kept only if it does not increase fn. Sweeps stop once no coordinate
    moves by more than tol; a one-dimensional box needs a single sweep.

    Returns:
        Tuple[np.ndarray, float, int]: Minimizer, its value and the number of sweeps used.
    """
    solver_config = dependencies.get_solver_config()
    tol = solver_config.GOLDEN_TOLERANCE if tol is None else tol
    max_sweeps = solver_config.MAX_SWEEPS if max_sweeps is None else max_sweeps
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x = (lower + upper) / 2.0 if start is None else np.clip(np.asarray(start, dtype=float), lower, upper)
    value = fn(x)

    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        largest_move = 0.0
        for i in range(x.size):
            if lower[i] == upper[i]:
                continue

            def along(t: float, i=i) -> float:
                trial = x.copy()
                trial[i] = t
                return fn(trial)

            t_best = golden_section(along, lower[i], upper[i], tol)
            trial_value = along(t_best)
            if trial_value <= value:
                largest_move = max(largest_move, abs(t_best - x[i]))
                x[i] = t_best
                value = trial_value
        if largest_move <= tol or x.size == 1:
            break
    return x, value, sweeps


def _check_profile(game: GameProblem, profile: Sequence[Any]) -> None:
    if len(profile) != len(game.players):
        raise exceptions.DimensionError(f"profile has {len(profile)} entries for {len(game.players)} players")


def _with(profile: Sequence[Any], index: int, strategy: Any) -> Tuple[Any, ...]:
    updated = list(profile)
    updated[index] = strategy
    return tuple(updated)


def player_cost(game: GameProblem, index: int, profile: Sequence[Any]) -> float:
    return float(game.players[index].objective(profile[index], tuple(profile)))


def best_response(game: GameProblem, index: int, profile: Sequence[Any]) -> Any:
    """
    Best response of one player to the others' strategies.

    Finite sets are enumerated (first minimizer wins ties); boxes use coordinate-wise
    golden-section descent to GOLDEN_TOLERANCE with at most MAX_SWEEPS sweeps.

    Args:
        game (GameProblem): The game.
        index (int): Player index (0-based).
        profile (Sequence[Any]): Current strategy profile; the player's own entry seeds the search.

    Returns:
        Any: The best-responding strategy.

    Raises:
        UnknownPlayerError: If index is out of range.
        DimensionError: If the profile length does not match the player count.
    """
    if not 0 <= index < len(game.players):
        raise exceptions.UnknownPlayerError(index, len(game.players))
    _check_profile(game, profile)
    player = game.players[index]

    if player.strategies.is_finite:
        best_action, best_cost = None, math.inf
        for action in player.strategies.actions:
            cost = float(player.objective(action, _with(profile, index, action)))
            if cost < best_cost:
                best_action, best_cost = action, cost
        return best_action

    start = profile[index]
    start = player.strategies.midpoint() if start is None else player.strategies.project(np.atleast_1d(start))
    x, _, _ = coordinate_descent(
        lambda own: float(player.objective(own, _with(profile, index, own))),
        player.strategies.lower,
        player.strategies.upper,
        start,
    )
    return x


def nash_residual(game: GameProblem, profile: Sequence[Any]) -> float:
    """Largest gain any player obtains by deviating unilaterally to its best response."""
    residual = 0.0
    for index in range(len(game.players)):
        response = best_response(game, index, profile)
        gain = player_cost(game, index, profile) - player_cost(game, index, _with(profile, index, response))
        residual = max(residual, gain)
    return residual


def nash_solve(
        game: GameProblem,
        init: Sequence[Any],
        tol: Optional[float] = None,
        max_iter: Optional[int] = None,
) -> EquilibriumResult:
    """
    Gauss-Seidel best-response iteration in the listed player order.

    Non-convergence is reported with converged = False and the last profile; it is never raised.
    """
    solver_config = dependencies.get_solver_config()
    tol = solver_config.NASH_TOLERANCE if tol is None else tol
    max_iter = solver_config.NASH_MAX_ITERATIONS if max_iter is None else max_iter
    if not tol > 0:
        raise exceptions.InvalidToleranceError(tol)
    _check_profile(game, init)

    profile = tuple(
        np.atleast_1d(np.asarray(strategy, dtype=float)) if not player.strategies.is_finite and strategy is not None
        else strategy
        for player, strategy in zip(game.players, init)
    )
    residual = math.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        for index in range(len(game.players)):
            profile = _with(profile, index, best_response(game, index, profile))
        residual = nash_residual(game, profile)
        logger.debug(f"Best-response sweep {iterations}: residual {residual:.3e}")
        if residual <= tol:
            return EquilibriumResult(profile=profile, residual=residual, iterations=iterations, converged=True)

    logger.warning(f"Best-response iteration did not converge after {iterations} sweeps (residual {residual:.3e})")
    return EquilibriumResult(profile=profile, residual=residual, iterations=iterations, converged=False)


def pure_nash_enumerate(row_costs, col_costs) -> List[Tuple[int, int]]:
    """
    All pure equilibria of a bimatrix cost game, as sorted (row, col) cells (0-based).

    A cell is an equilibrium when its row-cost entry is minimal within its column and its
    column-cost entry is minimal within its row.

    Raises:
        DimensionError: If the matrices differ in shape.
    """
    row_costs = np.atleast_2d(np.asarray(row_costs, dtype=float))
    col_costs = np.atleast_2d(np.asarray(col_costs, dtype=float))
    if row_costs.shape != col_costs.shape:
        raise exceptions.DimensionError(f"cost matrices of shape {row_costs.shape} and {col_costs.shape}")
    row_best = row_costs <= row_costs.min(axis=0, keepdims=True)
    col_best = col_costs <= col_costs.min(axis=1, keepdims=True)
    cells = np.argwhere(row_best & col_best)
    return sorted((int(row), int(col)) for row, col in cells)


def saddle_solve(
        game: ZeroSumMatrixGame,
        iterations: Optional[int] = None,
        checkpoints: Sequence[int] = (),
) -> SaddleResult:
    """
    Approximate the saddle point of a zero-sum matrix game by fictitious play.

    Both players best-respond simultaneously to the opponent's empirical mixture; ties go to
    the lowest index. The value estimate is the midpoint of the bounds max_i (A y)_i and
    min_j (x A)_j, whose gap is reported as the exploitability.
    """
    iterations = dependencies.get_solver_config().FICTITIOUS_PLAY_ITERATIONS if iterations is None else iterations
    if iterations < 1:
        raise exceptions.DimensionError(f"fictitious play needs at least one iteration, got {iterations}")
    payoff = game.payoff
    rows, cols = payoff.shape
    row_counts = np.zeros(rows)
    col_counts = np.zeros(cols)
    # Cumulative payoff of each pure row / column against the opponent's history
    row_payoff = np.zeros(rows)
    col_payoff = np.zeros(cols)
    wanted = set(checkpoints)
    history = []

    def bounds(t: int) -> Tuple[float, float]:
        upper = float(row_payoff.max()) / t
        lower = float(col_payoff.min()) / t
        return upper, lower

    for t in range(1, iterations + 1):
        i = int(np.argmax(row_payoff))
        j = int(np.argmin(col_payoff))
        row_counts[i] += 1
        col_counts[j] += 1
        row_payoff += payoff[:, j]
        col_payoff += payoff[i, :]
        if t in wanted:
            upper, lower = bounds(t)
            history.append((t, (upper + lower) / 2, upper - lower))

    upper, lower = bounds(iterations)
    logger.debug(f"Fictitious play: value in [{lower:.6g}, {upper:.6g}] after {iterations} rounds")
    return SaddleResult(
        row_strategy=row_counts / iterations,
        col_strategy=col_counts / iterations,
        value=(upper + lower) / 2,
        exploitability=upper - lower,
        iterations=iterations,
        checkpoints=tuple(history),
    )


def _follower_best(problem: BilevelProblem, leader: Any, tol: float) -> Any:
    if problem.follower_response is not None:
        return problem.follower_response(leader)

    follower_set = problem.follower_set
    if follower_set.is_finite:
        costs = [float(problem.follower_objective(y, leader)) for y in follower_set.actions]
        best = min(costs)
        slack = TIE_WEIGHT * (1.0 + abs(best))
        tied = [y for y, cost in zip(follower_set.actions, costs) if cost <= best + slack]
        # Optimistic rule: among tied follower actions take the one best for the leader
        return min(tied, key=lambda y: float(problem.leader_objective(leader, y)))

    y, _, _ = coordinate_descent(
        lambda y: float(problem.follower_objective(y, leader)) + TIE_WEIGHT * float(problem.leader_objective(leader, y)),
        follower_set.lower,
        follower_set.upper,
        tol=tol,
    )
    return y


def stackelberg_solve(problem: BilevelProblem, tol: Optional[float] = None) -> StackelbergResult:
    """
    Leader-follower solution by nested search.

    The follower's best response y*(x) is found by enumeration (finite sets) or golden-section
    coordinate descent (boxes) for every leader candidate; the leader then minimizes
    F(x, y*(x)) the same way. Follower ties are resolved in the leader's favor.

    Args:
        problem (BilevelProblem): Leader and follower objectives and sets.
        tol (Optional[float]): Leader tolerance, defaults to GOLDEN_TOLERANCE. The follower is solved
            to max(tol^2, 1e-15).

    Returns:
        StackelbergResult: Leader strategy, follower response and both costs.
    """
    tol = dependencies.get_solver_config().GOLDEN_TOLERANCE if tol is None else tol
    if not tol > 0:
        raise exceptions.InvalidToleranceError(tol)
    inner_tol = max(tol * tol, 1e-15)

    def leader_cost(x: Any) -> float:
        return float(problem.leader_objective(x, _follower_best(problem, x, inner_tol)))

    if problem.leader_set.is_finite:
        leader, best = None, math.inf
        for action in problem.leader_set.actions:
            cost = leader_cost(action)
            if cost < best:
                leader, best = action, cost
    else:
        leader, _, _ = coordinate_descent(leader_cost, problem.leader_set.lower, problem.leader_set.upper, tol=tol)

    follower = _follower_best(problem, leader, inner_tol)
    result = StackelbergResult(
        leader=leader,
        follower=follower,
        leader_cost=float(problem.leader_objective(leader, follower)),
        follower_cost=float(problem.follower_objective(follower, leader)),
    )
    logger.debug(f"Stackelberg solution: leader cost {result.leader_cost:.6g}")
    return result


if __name__ == "__main__":
    print("This is only a library. Nothing will happen when you execute it.")
