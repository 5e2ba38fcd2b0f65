"""
Component layer: H-infinity state feedback from the zero-sum differential game between the
controller and the disturbance, for linear component dynamics

    x' = A x + B1 w + B2 u,    z = C x + D u.
"""

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import linalg

from MEI import dependencies, exceptions, schemas

logger = logging.getLogger("mei")

HURWITZ_MARGIN = 1e-10
NEWTON_STEPS = 8
DISSIPATION_SLACK = 1e-6


class _ArrayModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)


def _matrix(value) -> np.ndarray:
    return np.atleast_2d(np.asarray(value, dtype=float))


class DeviceDynamics(_ArrayModel):
    """
    Linear dynamics of one component.

    Attributes:

        A (np.ndarray): n x n state matrix.
        B1 (np.ndarray): n x m1 disturbance input matrix.
        B2 (np.ndarray): n x m2 control input matrix.
        C (np.ndarray): p x n output matrix.
        D (np.ndarray): p x m2 control weight.

    Example Usage:

        >>> DeviceDynamics(A=[[0.0]], B1=[[1.0]], B2=[[1.0]], C=[[1.0], [0.0]], D=[[0.0], [1.0]])

    Validators:

        check_dimensions:
            Shapes agree, D^T D is positive definite and C^T D = 0.
    """

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C: np.ndarray
    D: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def coerce_matrices(cls, data):
        if isinstance(data, dict):
            data = {key: _matrix(value) if key in ("A", "B1", "B2", "C", "D") else value for key, value in data.items()}
        return data

    @model_validator(mode="after")
    def check_dimensions(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        if self.B1.shape[0] != n or self.B2.shape[0] != n or self.C.shape[1] != n:
            raise ValueError("B1, B2 and C must match the state dimension")
        if self.D.shape != (self.C.shape[0], self.B2.shape[1]):
            raise ValueError("D must be p x m2")
        if not all(np.all(np.isfinite(m)) for m in (self.A, self.B1, self.B2, self.C, self.D)):
            raise ValueError("matrices must be finite")
        if np.linalg.eigvalsh(self.R).min() <= 0:
            raise ValueError("D^T D must be positive definite")
        if np.abs(self.C.T @ self.D).max() > 1e-12:
            raise ValueError("C^T D must be zero")
        return self

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def R(self) -> np.ndarray:
        return self.D.T @ self.D

    @classmethod
    def from_spec(cls, spec: schemas.DynamicsSpec) -> "DeviceDynamics":
        return cls(A=spec.A, B1=spec.B1, B2=spec.B2, C=spec.C, D=spec.D)


class AttenuationLevel(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    gamma: float = Field(..., gt=0)


class ControlLaw(_ArrayModel):
    """
    Saddle-point feedback pair: the controller plays u = -K x and the worst-case disturbance
    w = L x with L = gamma^-2 B1^T P.
    """

    K: np.ndarray
    P: np.ndarray
    gamma: float = Field(..., gt=0)
    L: Optional[np.ndarray] = None

    @model_validator(mode="after")
    def check_symmetric(self):
        if not np.allclose(self.P, self.P.T, atol=1e-9):
            raise ValueError("P must be symmetric")
        return self


class Trajectory(_ArrayModel):
    """Sampled closed-loop run: x has one row more than u, w and z."""

    dt: float = Field(..., gt=0)
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    z: np.ndarray


class DissipationResult(_ArrayModel):
    passed: bool
    worst: float
    threshold: float
    prefix: np.ndarray


def _gamma_value(gamma: Union[AttenuationLevel, float]) -> float:
    return gamma.gamma if isinstance(gamma, AttenuationLevel) else AttenuationLevel(gamma=gamma).gamma


def riccati_residual(d: DeviceDynamics, P: np.ndarray, gamma: float) -> np.ndarray:
    G = d.B2 @ np.linalg.solve(d.R, d.B2.T) - d.B1 @ d.B1.T / gamma ** 2
    return d.A.T @ P + P @ d.A + d.C.T @ d.C - P @ G @ P


def hinf_synthesize(d: DeviceDynamics, gamma: Union[AttenuationLevel, float]) -> ControlLaw:
    """
    Solve the game algebraic Riccati equation

        A^T P + P A + C^T C - P (B2 R^-1 B2^T - gamma^-2 B1 B1^T) P = 0,    R = D^T D

    for the stabilizing P >= 0 and return K = R^-1 B2^T P.

    The stable invariant subspace of the Hamiltonian matrix is taken from an ordered real Schur
    form; Newton steps on the Lyapunov form of the equation then polish P to RICCATI_TOLERANCE.

    Args:
        d (DeviceDynamics): Component dynamics.
        gamma (Union[AttenuationLevel, float]): Attenuation level.

    Returns:
        ControlLaw: Feedback gain, Riccati solution and worst-case disturbance gain.

    Raises:
        AttenuationInfeasibleError: If the Hamiltonian has imaginary-axis eigenvalues or the
            solution is not stabilizing or not positive semidefinite.
    """
    gamma = _gamma_value(gamma)
    tolerance = dependencies.get_solver_config().RICCATI_TOLERANCE
    n = d.n
    Q = d.C.T @ d.C
    G = d.B2 @ np.linalg.solve(d.R, d.B2.T) - d.B1 @ d.B1.T / gamma ** 2
    H = np.block([[d.A, -G], [-Q, -d.A.T]])

    eigenvalues = np.linalg.eigvals(H)
    scale = 1.0 + np.abs(H).max()
    if np.abs(eigenvalues.real).min() <= 1e-9 * scale:
        raise exceptions.AttenuationInfeasibleError(gamma, "Hamiltonian has eigenvalues on the imaginary axis")

    T, U, sdim = linalg.schur(H, output="real", sort="lhp")
    if sdim != n:
        raise exceptions.AttenuationInfeasibleError(gamma, f"stable subspace has dimension {sdim}, expected {n}")
    U11, U21 = U[:n, :n], U[n:, :n]
    if np.linalg.cond(U11) > 1e12:
        raise exceptions.AttenuationInfeasibleError(gamma, "stable subspace is not a graph")
    P = np.linalg.solve(U11.T, U21.T).T
    P = (P + P.T) / 2.0

    for step in range(NEWTON_STEPS):
        residual = riccati_residual(d, P, gamma)
        if np.abs(residual).max() <= tolerance:
            break
        closed = d.A - G @ P
        P = P + linalg.solve_continuous_lyapunov(closed.T, -residual)
        P = (P + P.T) / 2.0
    logger.debug(f"Riccati residual {np.abs(riccati_residual(d, P, gamma)).max():.3e} for gamma = {gamma}")

    if np.linalg.eigvalsh(P).min() < -1e-9 * (1.0 + np.abs(P).max()):
        raise exceptions.AttenuationInfeasibleError(gamma, "Riccati solution is not positive semidefinite")
    K = np.linalg.solve(d.R, d.B2.T @ P)
    for name, matrix in (("game", d.A - G @ P), ("controlled", d.A - d.B2 @ K)):
        if np.linalg.eigvals(matrix).real.max() >= -HURWITZ_MARGIN:
            raise exceptions.AttenuationInfeasibleError(gamma, f"{name} closed loop is not stable")

    return ControlLaw(K=K, P=P, gamma=gamma, L=d.B1.T @ P / gamma ** 2)


def feasible_gamma(d: DeviceDynamics, low: float, high: float, rel_tol: float = 1e-6) -> float:
    """
    Smallest attenuation level in [low, high] accepted by hinf_synthesize, found by bisection.

    Raises:
        AttenuationInfeasibleError: If even `high` is infeasible.
        EmptyIntervalError: If not 0 < low < high.
    """
    if not 0 < low < high:
        raise exceptions.EmptyIntervalError(low, high)

    def feasible(gamma: float) -> bool:
        try:
            hinf_synthesize(d, gamma)
        except exceptions.AttenuationInfeasibleError:
            return False
        return True

    if not feasible(high):
        raise exceptions.AttenuationInfeasibleError(high, "upper end of the search interval")
    if feasible(low):
        return low
    while high - low > rel_tol * high:
        middle = (low + high) / 2.0
        if feasible(middle):
            high = middle
        else:
            low = middle
    return high


def simulate_closed_loop(
        d: DeviceDynamics,
        law: ControlLaw,
        w: Sequence,
        dt: float,
        T: float,
        x0: Optional[Sequence[float]] = None,
) -> Trajectory:
    """
    Forward-Euler integration of x' = (A - B2 K) x + B1 w with z = C x - D K x.

    Args:
        w (Sequence): Disturbance samples, one row per step (a flat sequence for a scalar disturbance).
        dt (float): Step length.
        T (float): Horizon, a multiple of dt.
        x0 (Optional[Sequence[float]]): Initial state, zero by default.

    Raises:
        HorizonMisalignedError: If T is not a multiple of dt.
        DimensionError: If fewer disturbance samples than steps are given.
    """
    if not dt > 0:
        raise exceptions.InvalidToleranceError(dt)
    count = T / dt
    steps = int(round(count))
    if T < 0 or abs(count - steps) > 1e-9 * max(1.0, count):
        raise exceptions.HorizonMisalignedError(T, dt)

    disturbance = np.asarray(w, dtype=float).reshape(-1, d.B1.shape[1]) if np.size(w) else np.zeros((0, d.B1.shape[1]))
    if disturbance.shape[0] < steps:
        raise exceptions.DimensionError(f"{disturbance.shape[0]} disturbance samples for {steps} steps")
    disturbance = disturbance[:steps]

    closed = d.A - d.B2 @ law.K
    x = np.zeros((steps + 1, d.n))
    if x0 is not None:
        x[0] = np.asarray(x0, dtype=float)
    for k in range(steps):
        x[k + 1] = x[k] + dt * (closed @ x[k] + d.B1 @ disturbance[k])
    u = -x[:-1] @ law.K.T
    z = x[:-1] @ d.C.T + u @ d.D.T
    return Trajectory(dt=dt, t=np.arange(steps + 1) * dt, x=x, u=u, w=disturbance, z=z)


def dissipation_check(trajectory: Trajectory, gamma: Union[AttenuationLevel, float]) -> DissipationResult:
    """
    Check the dissipation inequality on every prefix of a sampled trajectory:

        J_T = sum (|z|^2 - gamma^2 |w|^2) dt <= 1e-6 (1 + sum |w|^2 dt).

    The inequality presumes x(0) = 0; other initial states are checked but logged.
    """
    gamma = _gamma_value(gamma)
    if trajectory.x.size and np.any(trajectory.x[0] != 0):
        logger.warning("Dissipation check on a trajectory with nonzero initial state")
    z_energy = np.sum(trajectory.z ** 2, axis=1) * trajectory.dt
    w_energy = np.sum(trajectory.w ** 2, axis=1) * trajectory.dt
    prefix = np.cumsum(z_energy - gamma ** 2 * w_energy)
    threshold = DISSIPATION_SLACK * (1.0 + float(w_energy.sum()))
    worst = float(prefix.max()) if prefix.size else 0.0
    return DissipationResult(passed=worst <= threshold, worst=worst, threshold=threshold, prefix=prefix)


def synthesize_all(scenario: schemas.Scenario, gamma: Optional[float] = None) -> Tuple[Tuple[str, ControlLaw], ...]:
    """Control laws for every component model of a scenario at its configured attenuation level."""
    if gamma is None:
        gamma = scenario.ems.gamma if scenario.ems is not None and scenario.ems.gamma is not None else None
    if gamma is None:
        raise exceptions.DimensionError("no attenuation level configured")
    return tuple((spec.id, hinf_synthesize(DeviceDynamics.from_spec(spec), gamma)) for spec in scenario.dynamics)


if __name__ == "__main__":
    print("This is only a library. Nothing will happen when you execute it.")
