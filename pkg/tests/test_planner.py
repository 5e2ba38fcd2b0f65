import itertools

import numpy as np
import pytest

from MEI import exceptions, planner, schemas
from MEI.planner import BiObjectiveProblem, DisagreementPoint, ParetoFront, ParetoPoint
from MEI.schemas import PortVector


def _problem(f1, f2, lower=(0.0,), upper=(1.0,), **fields) -> BiObjectiveProblem:
    return BiObjectiveProblem(f1=f1, f2=f2, lower=lower, upper=upper, **fields)


def _linear_exchange() -> BiObjectiveProblem:
    return _problem(lambda x: float(x[0]), lambda x: float(1.0 - x[0]))


def _front(*pairs) -> ParetoFront:
    return ParetoFront(points=tuple(ParetoPoint(x=index, f1=f1, f2=f2) for index, (f1, f2) in enumerate(pairs)))


def test_nondominated_mask():
    """Dominated and repeated objective pairs are dropped; the first of a repeat survives."""
    keep = planner.nondominated_mask(np.array([1.0, 2.0, 1.0, 3.0, 4.0]), np.array([3.0, 1.0, 3.0, 0.0, 2.0]))
    assert keep.tolist() == [True, True, False, True, False]


def test_pareto_sweep_quadratics():
    """Scalarized minimizers of x^2 and (x - 1)^2 sit at x = 1 - lambda."""
    problem = _problem(lambda x: float(x[0] ** 2), lambda x: float((x[0] - 1.0) ** 2))
    front = planner.pareto_sweep(problem, [0.0, 0.5, 1.0])

    np.testing.assert_allclose([point.x[0] for point in front.points], [0.0, 0.5, 1.0], atol=1e-6)
    assert [point.weight for point in front.points] == [1.0, 0.5, 0.0]


def test_pareto_sweep_single_weight():
    """A single weight of 1 yields the f1 minimizer alone."""
    problem = _problem(lambda x: float(x[0] ** 2), lambda x: float((x[0] - 1.0) ** 2))
    front = planner.pareto_sweep(problem, [1.0])

    assert len(front.points) == 1
    assert front.points[0].x[0] == pytest.approx(0.0, abs=1e-6)


def test_pareto_sweep_matches_grid_scan():
    """Every swept point lies on the Pareto filter of a dense grid scan."""
    problem = _problem(lambda x: float((x[0] - 1.0) ** 2), lambda x: float((x[0] + 1.0) ** 2),
                       lower=(-1.0,), upper=(1.0,))
    front = planner.pareto_sweep(problem, np.linspace(0.0, 1.0, 21))

    grid = np.arange(-1.0, 1.0 + 1e-4, 1e-4)
    f1, f2 = (grid - 1.0) ** 2, (grid + 1.0) ** 2
    oracle = np.stack([f1, f2], axis=1)[planner.nondominated_mask(f1, f2)]

    assert len(front.points) == 21
    for point in front.points:
        assert np.min(np.hypot(oracle[:, 0] - point.f1, oracle[:, 1] - point.f2)) <= 1e-3
    objectives = front.objectives()
    assert np.all(np.diff(objectives[:, 0]) >= 0)


def test_pareto_sweep_penalizes_constraint():
    """An inequality x >= 0.3 moves the cost-optimal end of the front to 0.3."""
    problem = _problem(lambda x: float(x[0]), lambda x: float(1.0 - x[0]), inequalities=(lambda x: 0.3 - x[0],))
    front = planner.pareto_sweep(problem, [0.0, 1.0])

    assert front.points[0].f1 == pytest.approx(0.3, abs=1e-5)
    assert front.points[-1].f1 == pytest.approx(1.0, abs=1e-6)


def test_pareto_sweep_weight_errors():
    """Weights are non-empty and lie in [0, 1]."""
    with pytest.raises(exceptions.NoWeightsError) as exc_info:
        planner.pareto_sweep(_linear_exchange(), [])
    assert "no weights" in str(exc_info.value)

    with pytest.raises(exceptions.InvalidWeightError) as exc_info:
        planner.pareto_sweep(_linear_exchange(), [0.5, 1.5])
    assert "weight 1.5 outside [0, 1]" in str(exc_info.value)


def test_pareto_sweep_over_candidates():
    """Finite candidate sets are evaluated exhaustively and filtered for dominance."""
    problem = BiObjectiveProblem(f1=lambda x: x[0], f2=lambda x: x[1], candidates=((0, 4), (1, 1), (2, 2), (4, 0)))
    front = planner.pareto_sweep(problem, [0.0, 0.5, 1.0])

    assert [point.x for point in front.points] == [(0, 4), (1, 1), (4, 0)]


def test_pareto_front_rejects_dominated_points():
    """A front never holds a dominated point."""
    with pytest.raises(ValueError) as exc_info:
        _front((0.0, 1.0), (1.0, 2.0))
    assert "dominates" in str(exc_info.value)


def test_disagreement_point_examples():
    """The disagreement point is the componentwise maximum of the front."""
    assert planner.disagreement_point(_front((3.0, 7.0))) == DisagreementPoint(f1=3.0, f2=7.0)
    assert planner.disagreement_point(_front((0.0, 4.0), (4.0, 0.0))) == DisagreementPoint(f1=4.0, f2=4.0)


def test_disagreement_point_of_empty_front():
    """An empty front has no nadir."""
    with pytest.raises(exceptions.EmptyParetoFrontError) as exc_info:
        planner.disagreement_point(ParetoFront())
    assert "empty Pareto front" in str(exc_info.value)


def test_nash_bargain_symmetric_linear_exchange():
    """x(1 - x) peaks at x = 0.5 with product 0.25, balancing both objectives."""
    problem = _linear_exchange()
    front = planner.pareto_sweep(problem, np.linspace(0.0, 1.0, 11))
    result = planner.nash_bargain(problem, front, DisagreementPoint(f1=1.0, f2=1.0))

    assert result.x[0] == pytest.approx(0.5, abs=1e-6)
    assert result.product == pytest.approx(0.25, abs=1e-9)
    assert abs(result.f1 - result.f2) <= 1e-6


def _quadratic_pair(a1=1.0, b1=0.0, a2=1.0, b2=0.0) -> BiObjectiveProblem:
    return _problem(lambda x: float(a1 * (x[0] - 1.0) ** 2 + b1), lambda x: float(a2 * (x[0] + 1.0) ** 2 + b2),
                    lower=(-1.0,), upper=(1.0,))


@pytest.mark.parametrize("seed", range(20))
def test_nash_bargain_affine_invariance(seed):
    """Positive affine maps of the objectives, applied to the disagreement point too, keep the bargain in place."""
    a1, a2 = np.random.default_rng(seed).uniform(0.1, 10.0, 2)
    b1, b2 = np.random.default_rng(seed + 100).uniform(-5.0, 5.0, 2)
    weights = np.linspace(0.0, 1.0, 21)
    base = _quadratic_pair()
    mapped = _quadratic_pair(a1, b1, a2, b2)

    base_result = planner.nash_bargain(base, planner.pareto_sweep(base, weights), DisagreementPoint(f1=4.0, f2=9.0))
    mapped_result = planner.nash_bargain(
        mapped, planner.pareto_sweep(mapped, weights), DisagreementPoint(f1=a1 * 4.0 + b1, f2=a2 * 9.0 + b2),
    )

    assert mapped_result.x[0] == pytest.approx(base_result.x[0], abs=1e-5)


def test_nash_bargain_matches_grid_search():
    """An asymmetric disagreement point shifts the bargain above 0, as a dense grid search confirms."""
    problem = _problem(lambda x: float((x[0] - 1.0) ** 2), lambda x: float((x[0] + 1.0) ** 2),
                       lower=(-1.0,), upper=(1.0,))
    d = DisagreementPoint(f1=4.0, f2=9.0)
    result = planner.nash_bargain(problem, planner.pareto_sweep(problem, np.linspace(0.0, 1.0, 21)), d)

    grid = np.arange(-1.0, 1.0 + 1e-4, 1e-4)
    oracle = grid[np.argmax((4.0 - (grid - 1.0) ** 2) * (9.0 - (grid + 1.0) ** 2))]

    assert oracle > 0.0
    assert result.x[0] == pytest.approx(oracle, abs=1e-3)
    assert result.product >= 0.0


def test_nash_bargain_returns_a_front_member():
    """The compromise found between sweep points is one of the points of the returned front."""
    problem = _quadratic_pair()
    front = planner.pareto_sweep(problem, np.linspace(0.0, 1.0, 21))
    result = planner.nash_bargain(problem, front, DisagreementPoint(f1=4.0, f2=9.0))

    assert min(abs(point.x[0] - result.x[0]) for point in front.points) > 1e-6
    assert any(np.array_equal(point.x, result.x) for point in result.front.points)
    assert (result.f1, result.f2) in [(point.f1, point.f2) for point in result.front.points]
    assert len(result.front.points) >= len(front.points)


def test_front_with_point():
    """Inserting a point drops the points it dominates; a dominated point leaves the front unchanged."""
    front = _front((0.0, 3.0), (2.0, 2.0), (3.0, 0.0))

    extended = front.with_point(ParetoPoint(x="new", f1=1.0, f2=1.0))
    assert [(point.f1, point.f2) for point in extended.points] == [(0.0, 3.0), (1.0, 1.0), (3.0, 0.0)]
    assert front.with_point(ParetoPoint(x="worse", f1=2.5, f2=2.5)) is front


def test_nash_bargain_invalid_disagreement_point():
    """The disagreement point dominates every front point."""
    with pytest.raises(exceptions.InvalidDisagreementPointError) as exc_info:
        planner.nash_bargain(_linear_exchange(), _front((0.0, 1.0), (1.0, 0.0)), DisagreementPoint(f1=0.5, f2=0.5))
    assert "invalid disagreement point" in str(exc_info.value)


def test_peak_demand_of_scenario(chp_storage_scenario):
    """The peak is taken per carrier over the load profiles."""
    assert planner.peak_demand(chp_storage_scenario) == PortVector(electricity=30.0)


def test_portfolio_empty_catalog():
    """Nothing to buy and nothing to cover yields an empty selection."""
    plan = planner.plan_hub_portfolio([], PortVector())

    assert plan.selection == ()
    assert (plan.bargain.f1, plan.bargain.f2) == (0.0, 0.0)


def test_portfolio_single_covering_component():
    """A component that exactly covers the demand is selected."""
    boiler = schemas.CatalogComponent(id="boiler", capital_cost=10.0, emission=2.0, capability=PortVector(heat=50.0))
    plan = planner.plan_hub_portfolio([boiler], PortVector(heat=50.0))
    assert plan.selection == ("boiler",)


def _toy_catalog():
    return [
        schemas.CatalogComponent(id="chp_small", capital_cost=10.0, emission=9.0,
                                 capability=PortVector(electricity=40.0)),
        schemas.CatalogComponent(id="chp_clean", capital_cost=12.0, operating_cost=2.0, emission=4.0,
                                 capability=PortVector(electricity=40.0)),
        schemas.CatalogComponent(id="engine", capital_cost=6.0, emission=12.0,
                                 capability=PortVector(electricity=30.0)),
        schemas.CatalogComponent(id="fuel_cell", capital_cost=20.0, emission=1.0,
                                 capability=PortVector(electricity=30.0)),
        schemas.CatalogComponent(id="boiler", capital_cost=5.0, emission=3.0, capability=PortVector(heat=50.0)),
    ]


def test_portfolio_matches_subset_enumeration():
    """The plan equals the Nash-product optimum over all 2^5 subsets."""
    catalog = _toy_catalog()
    peak = PortVector(electricity=60.0, heat=50.0)

    candidates = []
    for size in range(len(catalog) + 1):
        for subset in itertools.combinations(catalog, size):
            capability = np.sum([c.capability.as_tuple() for c in subset], axis=0) if subset else np.zeros(4)
            if np.all(capability >= np.asarray(peak.as_tuple())):
                cost = sum(c.capital_cost + c.operating_cost for c in subset)
                candidates.append((tuple(c.id for c in subset), cost, sum(c.emission for c in subset)))
    front = [c for c in candidates if not any(
        o[1] <= c[1] and o[2] <= c[2] and (o[1] < c[1] or o[2] < c[2]) for o in candidates)]
    d1, d2 = max(c[1] for c in front), max(c[2] for c in front)
    expected = max(front, key=lambda c: (d1 - c[1]) * (d2 - c[2]))

    plan = planner.plan_hub_portfolio(catalog, peak)

    assert set(plan.selection) == set(expected[0]) == {"chp_small", "chp_clean", "boiler"}
    assert len(plan.front.points) == len(front)
    assert plan.bargain.product == pytest.approx((d1 - expected[1]) * (d2 - expected[2]))


def test_portfolio_infeasible_demand():
    """A peak no subset covers is infeasible."""
    with pytest.raises(exceptions.InfeasibleDemandError) as exc_info:
        planner.plan_hub_portfolio(_toy_catalog(), PortVector(heat=100.0))
    assert "infeasible demand" in str(exc_info.value)


def test_portfolio_catalog_size_limit():
    """Catalogs are limited to 20 components."""
    catalog = [schemas.CatalogComponent(id=f"c{i}", capital_cost=1.0) for i in range(21)]
    with pytest.raises(exceptions.DimensionError) as exc_info:
        planner.plan_hub_portfolio(catalog, PortVector())
    assert "dimension error" in str(exc_info.value)
