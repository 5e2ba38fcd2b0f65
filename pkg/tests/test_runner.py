import pytest

from MEI import exceptions, runner
from MEI.schemas import OperationMode


@pytest.fixture(scope="module")
def grid_connected_run(qinghai):
    return runner.run_dispatch(qinghai, 24)


@pytest.fixture(scope="module")
def islanded_run(qinghai):
    return runner.run_dispatch(qinghai, 24, islanded=True)


def test_grid_connected_day_balances(grid_connected_run):
    """A full day of the reference system balances every node within 1e-9 kW."""
    assert grid_connected_run.mode is OperationMode.GRID_CONNECTED
    assert grid_connected_run.steps == 24
    assert grid_connected_run.max_residual() <= 1e-9
    assert grid_connected_run.converged


def test_grid_connected_day_reports_sources(grid_connected_run):
    """Every clean source family of the reference system shows up in the generation summary."""
    assert set(grid_connected_run.generation) >= {"PV", "solar chimney", "full-spectrum", "BIPV"}
    assert all(value >= 0.0 for value in grid_connected_run.generation.values())
    assert all(check.satisfied for check in grid_connected_run.compliance.checks)


def test_islanded_day_has_no_exchange(islanded_run):
    """An opened coupling point keeps every exchange flow at zero."""
    columns = [name for name in islanded_run.exchange.columns if name != "step"]

    assert islanded_run.mode is OperationMode.AUTONOMOUS
    assert columns == ["qinghai_utility_electricity"]
    assert (islanded_run.exchange[columns] == 0.0).all().all()
    assert islanded_run.max_residual() <= 1e-9


def test_horizon_beyond_profiles(qinghai):
    """A run cannot be longer than the scenario's series."""
    with pytest.raises(exceptions.InconsistentHorizonError) as exc_info:
        runner.run_dispatch(qinghai, 25)
    assert "inconsistent horizon" in str(exc_info.value)


def test_horizon_misaligned_to_layers(qinghai):
    """The horizon covers whole slow-layer periods."""
    with pytest.raises(exceptions.HorizonMisalignedError) as exc_info:
        runner.run_dispatch(qinghai, 6)
    assert "is not a multiple of" in str(exc_info.value)


def test_run_planning_writes_front(qinghai, tmp_path):
    """The planning verb writes the Pareto front next to the bargained selection."""
    plan = runner.run_planning(qinghai, tmp_path)
    lines = (tmp_path / "front.csv").read_text().splitlines()

    assert lines[0] == "selection,cost,emission,weight"
    assert len(lines) == len(plan.front.points) + 1
    assert plan.selection
    assert "+".join(plan.selection) in {line.split(",")[0] for line in lines[1:]}


def test_run_planning_without_directory(qinghai, tmp_path):
    """Nothing is written unless a directory is given."""
    runner.run_planning(qinghai)
    assert not (tmp_path / "front.csv").exists()


def test_run_control_passes_dissipation(qinghai):
    """At gamma = 5 the turbine law attenuates random bounded disturbances."""
    report = runner.run_control(qinghai, 5.0)
    ((model_id, passed, worst),) = report.dissipation

    assert model_id == "turbine"
    assert passed
    assert worst < 0.0


def test_run_control_is_seeded(qinghai):
    """The same seed reproduces the same worst prefix."""
    first = runner.run_control(qinghai, 5.0, seed=3)
    second = runner.run_control(qinghai, 5.0, seed=3)
    assert first.dissipation == second.dissipation
