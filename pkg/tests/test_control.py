import math

import numpy as np
import pytest
from pydantic import ValidationError

from MEI import control, exceptions, schemas
from MEI.control import ControlLaw, DeviceDynamics
from tests.conftest import single_node_scenario

SQRT2 = math.sqrt(2.0)


@pytest.fixture
def integrator():
    """x' = w + u with z = (x, u)."""
    return DeviceDynamics(A=[[0.0]], B1=[[1.0]], B2=[[1.0]], C=[[1.0], [0.0]], D=[[0.0], [1.0]])


def test_dynamics_validation():
    """Control weights are nonsingular and orthogonal to the state output."""
    with pytest.raises(ValidationError) as exc_info:
        DeviceDynamics(A=[[0.0]], B1=[[1.0]], B2=[[1.0]], C=[[1.0]], D=[[1.0]])
    assert "C^T D must be zero" in str(exc_info.value)

    with pytest.raises(ValidationError) as exc_info:
        DeviceDynamics(A=[[0.0]], B1=[[1.0]], B2=[[1.0]], C=[[1.0], [0.0]], D=[[0.0], [0.0]])
    assert "D^T D must be positive definite" in str(exc_info.value)

    with pytest.raises(ValidationError) as exc_info:
        DeviceDynamics(A=[[0.0, 1.0]], B1=[[1.0]], B2=[[1.0]], C=[[1.0]], D=[[1.0]])
    assert "A must be square" in str(exc_info.value)


def test_synthesis_scalar_closed_form(integrator):
    """At gamma = sqrt(2) the Riccati solution is P = 1 / sqrt(1 - gamma^-2) = sqrt(2)."""
    law = control.hinf_synthesize(integrator, SQRT2)

    assert law.P[0, 0] == pytest.approx(SQRT2, abs=1e-9)
    assert law.K[0, 0] == pytest.approx(SQRT2, abs=1e-9)
    assert law.L[0, 0] == pytest.approx(SQRT2 / 2.0, abs=1e-9)
    assert np.abs(control.riccati_residual(integrator, law.P, SQRT2)).max() <= 1e-10


def test_synthesis_large_gamma_recovers_lqr(integrator):
    """As gamma grows the gain approaches the LQR gain 1."""
    law = control.hinf_synthesize(integrator, control.AttenuationLevel(gamma=1e6))
    assert law.K[0, 0] == pytest.approx(1.0, abs=1e-3)


def test_synthesis_infeasible_level(integrator):
    """gamma = 1 puts Hamiltonian eigenvalues on the imaginary axis."""
    with pytest.raises(exceptions.AttenuationInfeasibleError) as exc_info:
        control.hinf_synthesize(integrator, 1.0)
    assert "attenuation level infeasible" in str(exc_info.value)

    with pytest.raises(exceptions.AttenuationInfeasibleError):
        control.hinf_synthesize(integrator, 0.5)


def test_synthesis_rejects_non_positive_level(integrator):
    """Attenuation levels are positive."""
    with pytest.raises(ValidationError):
        control.hinf_synthesize(integrator, 0.0)


def test_riccati_solution_monotone_in_gamma(integrator):
    """A looser attenuation level needs a smaller storage function."""
    levels = [1.1, 1.5, 2.0, 5.0, 50.0]
    values = [control.hinf_synthesize(integrator, gamma).P[0, 0] for gamma in levels]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_feasible_gamma_bisection(integrator):
    """The smallest feasible level of the integrator is 1."""
    assert control.feasible_gamma(integrator, 0.5, 10.0) == pytest.approx(1.0, rel=1e-4)

    with pytest.raises(exceptions.EmptyIntervalError):
        control.feasible_gamma(integrator, 2.0, 1.0)
    with pytest.raises(exceptions.AttenuationInfeasibleError):
        control.feasible_gamma(integrator, 0.1, 0.5)


def test_step_response_matches_closed_form(integrator):
    """Under a unit disturbance x(t) = (1 - exp(-sqrt(2) t)) / sqrt(2)."""
    law = control.hinf_synthesize(integrator, SQRT2)
    trajectory = control.simulate_closed_loop(integrator, law, np.ones(10_000), 1e-4, 1.0)
    expected = (1.0 - np.exp(-SQRT2 * trajectory.t)) / SQRT2

    assert trajectory.x.shape == (10_001, 1)
    np.testing.assert_allclose(trajectory.x[:, 0], expected, atol=1e-3)
    np.testing.assert_allclose(trajectory.u[:, 0], -SQRT2 * trajectory.x[:-1, 0])


def test_zero_disturbance_gives_zero_trajectory(integrator):
    """From rest and without disturbance nothing moves."""
    law = control.hinf_synthesize(integrator, SQRT2)
    trajectory = control.simulate_closed_loop(integrator, law, np.zeros(100), 0.01, 1.0)

    assert not trajectory.x.any()
    assert control.dissipation_check(trajectory, SQRT2).passed


def test_synthesized_loop_is_dissipative(integrator):
    """The closed loop attenuates a persistent disturbance below gamma."""
    law = control.hinf_synthesize(integrator, SQRT2)
    trajectory = control.simulate_closed_loop(integrator, law, np.ones(5_000), 1e-3, 5.0)
    result = control.dissipation_check(trajectory, SQRT2)

    assert result.passed
    assert result.worst <= result.threshold


def test_unstable_open_loop_fails_dissipation():
    """Without feedback an unstable component amplifies the disturbance without bound."""
    unstable = DeviceDynamics(A=[[1.0]], B1=[[1.0]], B2=[[1.0]], C=[[1.0], [0.0]], D=[[0.0], [1.0]])
    law = ControlLaw(K=np.zeros((1, 1)), P=np.zeros((1, 1)), gamma=SQRT2)
    trajectory = control.simulate_closed_loop(unstable, law, np.ones(500), 0.01, 5.0)

    assert not control.dissipation_check(trajectory, SQRT2).passed


def test_simulation_argument_errors(integrator):
    """The horizon is a multiple of the step and every step has a disturbance sample."""
    law = control.hinf_synthesize(integrator, SQRT2)

    with pytest.raises(exceptions.HorizonMisalignedError) as exc_info:
        control.simulate_closed_loop(integrator, law, np.zeros(10), 0.3, 1.0)
    assert "horizon misaligned" in str(exc_info.value)

    with pytest.raises(exceptions.DimensionError) as exc_info:
        control.simulate_closed_loop(integrator, law, np.zeros(5), 0.1, 1.0)
    assert "5 disturbance samples for 10 steps" in str(exc_info.value)


def test_synthesize_all_uses_configured_level():
    """Every component model of a scenario gets a law at the scenario's attenuation level."""
    spec = schemas.DynamicsSpec(id="turbine", A=((0.0,),), B1=((1.0,),), B2=((1.0,),), C=((1.0,), (0.0,)),
                                D=((0.0,), (1.0,)))
    scenario = single_node_scenario(devices={}, dynamics=(spec,), ems=schemas.EmsSettings(gamma=SQRT2))
    ((name, law),) = control.synthesize_all(scenario)

    assert name == "turbine"
    assert law.gamma == SQRT2

    with pytest.raises(exceptions.DimensionError) as exc_info:
        control.synthesize_all(single_node_scenario(devices={}, dynamics=(spec,)))
    assert "no attenuation level configured" in str(exc_info.value)


def test_riccati_matches_hamiltonian_eigenvector_oracle():
    """On a random 3-state system the solution equals the one spanned by the stable Hamiltonian eigenvectors."""
    rng = np.random.default_rng(5)
    A = rng.normal(size=(3, 3))
    B1 = rng.normal(size=(3, 1))
    B2 = rng.normal(size=(3, 1))
    C = np.vstack([np.eye(3), np.zeros((1, 3))])
    D = np.array([[0.0], [0.0], [0.0], [1.0]])
    dynamics = DeviceDynamics(A=A.tolist(), B1=B1.tolist(), B2=B2.tolist(), C=C.tolist(), D=D.tolist())
    gamma = 100.0

    law = control.hinf_synthesize(dynamics, gamma)

    G = B2 @ B2.T - B1 @ B1.T / gamma ** 2
    H = np.block([[A, -G], [-C.T @ C, -A.T]])
    eigenvalues, vectors = np.linalg.eig(H)
    stable = vectors[:, eigenvalues.real < 0]
    oracle = np.real(stable[3:] @ np.linalg.inv(stable[:3]))

    assert np.abs(control.riccati_residual(dynamics, law.P, gamma)).max() <= 1e-8
    np.testing.assert_allclose(law.P, oracle, atol=1e-8 * (1.0 + np.abs(oracle).max()))
