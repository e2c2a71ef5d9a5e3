"""Exact 3x3 second-moment ODE for the gated least-squares model.

State (R, V, C) = (squared error, momentum energy, error-momentum
correlation) on the active-update clock t. The drift matrix is an
explicit function of (eta, beta, p, B, d) through the batch factors and
the geometric retention/drift coefficients; the system is linear and
time-invariant, so it is solved exactly by eigendecomposition (matrix
exponential stepping when the eigenvectors are ill-conditioned).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import evolve_lti
from .scaling import (
    BatchFactors,
    InstanceParams,
    RetentionDrift,
    batch_factors,
    retention_drift,
)
from .trajectory import Clock, Trajectory

__all__ = [
    "MomentState",
    "DriftMatrix",
    "ScaledTransform",
    "build_main_matrix",
    "char_poly",
    "evolve_linear",
    "to_scaled",
    "from_scaled",
    "clock_convert",
    "default_time_grid",
]

_CS_SLACK = 1e-9
_BLOWUP = 1e12


@dataclass(frozen=True)
class MomentState:
    """(R, V, C) with the Cauchy-Schwarz constraint C^2 <= R V."""

    R: float
    V: float
    C: float

    def __post_init__(self):
        if self.R < 0 or self.V < 0:
            raise ValueError(f"R and V must be >= 0, got R={self.R}, V={self.V}")
        rv = self.R * self.V
        if self.C * self.C > rv + _CS_SLACK * max(1.0, rv):
            raise ValueError(f"C^2={self.C**2} exceeds R*V={rv} beyond slack")

    def as_array(self) -> np.ndarray:
        return np.array([self.R, self.V, self.C])


@dataclass(frozen=True)
class DriftMatrix:
    """Main-ODE drift matrix with its constituents retained for audit.

    Row order (dR/dt, dV/dt, dC/dt), column order (R, V, C):
        [[a_R, a_V, a_C],
         [b_R, b_V, b_C],
         [c_R, c_V, c_C]]
    """

    a_R: float
    a_V: float
    a_C: float
    b_R: float
    b_V: float
    b_C: float
    c_R: float
    c_V: float
    c_C: float
    params: InstanceParams
    factors: BatchFactors
    drift: RetentionDrift

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                [self.a_R, self.a_V, self.a_C],
                [self.b_R, self.b_V, self.b_C],
                [self.c_R, self.c_V, self.c_C],
            ]
        )


def build_main_matrix(params: InstanceParams, eta: float | None = None) -> DriftMatrix:
    """Assemble the exact drift matrix at the given instance parameters.

    eta overrides params.eta when given (used by the stability
    bisection, which sweeps eta at fixed everything-else).
    """
    eta = params.eta if eta is None else float(eta)
    beta = params.beta
    eps = params.eps
    fac = batch_factors(params.p, params.B, params.d)
    dr = retention_drift(beta, fac.P_batch)
    B1, B2 = fac.B1, fac.B2

    a_R = -2.0 * eta * eps * B1 + eta ** 2 * eps ** 2 * B2
    a_V = (
        eta ** 2 * dr.delta_theta2
        - 2.0 * eta ** 3 * eps * B1 * dr.delta_theta_g
        + eta ** 4 * eps ** 2 * B2 * dr.delta_g2
    )
    a_C = (
        -2.0 * eta * dr.delta_theta
        + 2.0 * eta ** 2 * eps * B1 * (dr.delta_g + dr.delta_theta)
        - 2.0 * eta ** 3 * eps ** 2 * B2 * dr.delta_g
    )
    b_R = eps ** 2 * B2
    b_V = (
        (dr.beta_bar2 - 1.0)
        - 2.0 * eta * eps * B1 * dr.delta_m1_g
        + eta ** 2 * eps ** 2 * B2 * dr.delta_g2
    )
    b_C = 2.0 * eps * dr.beta_bar1 * B1 - 2.0 * eta * eps ** 2 * B2 * dr.delta_g
    c_R = eps * B1 - eta * eps ** 2 * B2
    c_V = (
        -eta * dr.delta_m1_theta
        + eta ** 2 * eps * B1 * (dr.delta_theta_g + dr.delta_m1_g)
        - eta ** 3 * eps ** 2 * B2 * dr.delta_g2
    )
    c_C = (
        (dr.beta_bar1 - 1.0)
        - eta * eps * B1 * (dr.delta_g + dr.delta_theta + dr.beta_bar1)
        + 2.0 * eta ** 2 * eps ** 2 * B2 * dr.delta_g
    )
    return DriftMatrix(
        a_R=a_R, a_V=a_V, a_C=a_C,
        b_R=b_R, b_V=b_V, b_C=b_C,
        c_R=c_R, c_V=c_V, c_C=c_C,
        params=params, factors=fac, drift=dr,
    )


def char_poly(matrix: DriftMatrix | np.ndarray) -> tuple[float, float, float]:
    """(c1, c2, c3) of det(zI - A) = z^3 + c1 z^2 + c2 z + c3.

    c1 = -tr(A); c2 = sum of principal 2x2 minors; c3 = -det(A).
    """
    A = matrix.as_array() if isinstance(matrix, DriftMatrix) else np.asarray(matrix, float)
    c1 = -(A[0, 0] + A[1, 1] + A[2, 2])
    c2 = (
        A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        + A[0, 0] * A[2, 2] - A[0, 2] * A[2, 0]
        + A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1]
    )
    c3 = -float(np.linalg.det(A))
    return float(c1), float(c2), float(c3)


def default_time_grid(matrix: DriftMatrix, n_points: int = 512) -> np.ndarray:
    """Log-spaced grid from 1e-3 * tau_fast to 10 * tau_slow.

    tau_fast = 1/rho (retention relaxation), tau_slow = 1/(eta B1)
    (learning timescale); one grid resolves both relaxations.
    """
    rho = matrix.drift.rho
    eta = matrix.params.eta
    tau_fast = 1.0 / rho
    tau_slow = 1.0 / (eta * matrix.factors.B1)
    lo = 1e-3 * tau_fast
    hi = 10.0 * max(tau_slow, tau_fast)
    return np.geomspace(lo, hi, n_points)


def evolve_linear(
    matrix: DriftMatrix, initial: MomentState, times: np.ndarray
) -> Trajectory:
    """Exact solution of the LTI system at the given grid points.

    Tiny negative R/V from roundoff are clamped to zero at output only.
    If any state exceeds 1e12, the metadata records the first such time
    (instability report) and the trajectory is truncated there.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    A = matrix.as_array()
    x0 = initial.as_array()
    prepend_zero = times[0] > 0.0
    grid = np.concatenate(([0.0], times)) if prepend_zero else times
    states = evolve_lti(A, x0, grid)
    if prepend_zero:
        states = states[1:]
    tr = ScaledTransform.for_matrix(matrix)
    meta = {
        "params": vars(matrix.params) | {"warnings": list(matrix.params.warnings)},
        "transform": {"Lambda_W": tr.Lambda_W, "Lambda_Z": tr.Lambda_Z},
        "solver": "eig3/expm3 exact LTI",
    }
    bad = ~np.isfinite(states).all(axis=1) | (np.abs(states) > _BLOWUP).any(axis=1)
    if bad.any():
        first = int(np.argmax(bad))
        meta["instability_time"] = float(times[first])
        times = times[:first]
        states = states[:first]
        if len(times) == 0:
            raise FloatingPointError(
                f"solution exceeds {_BLOWUP:g} already at the first grid point"
            )
    out = states.copy()
    out[:, 0] = np.where((out[:, 0] < 0) & (out[:, 0] > -1e-12), 0.0, out[:, 0])
    out[:, 1] = np.where((out[:, 1] < 0) & (out[:, 1] > -1e-12), 0.0, out[:, 1])
    return Trajectory(
        clock=Clock.ACTIVE, times=times, states=out,
        state_names=("R", "V", "C"), metadata=meta,
    )


@dataclass(frozen=True)
class ScaledTransform:
    """(R, V, C) -> (R, W, Z) diagonal change of variables.

    W = V / Lambda_W with Lambda_W = eps^2 B2 (normalizes the risk ->
    momentum-energy forcing to exactly 1); Z = C / Lambda_Z with
    Lambda_Z = P_batch + eps (the refresh + decay scale).
    """

    Lambda_W: float
    Lambda_Z: float

    @classmethod
    def for_matrix(cls, matrix: DriftMatrix) -> "ScaledTransform":
        eps = matrix.params.eps
        return cls(
            Lambda_W=eps ** 2 * matrix.factors.B2,
            Lambda_Z=matrix.factors.P_batch + eps,
        )

    def diag(self) -> np.ndarray:
        return np.array([1.0, self.Lambda_W, self.Lambda_Z])


def to_scaled(
    matrix: DriftMatrix, state: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray | None, ScaledTransform]:
    """Scaled matrix A~ = D^-1 A D and scaled state (R, W, Z)."""
    tr = ScaledTransform.for_matrix(matrix)
    if tr.Lambda_W == 0.0:
        raise ZeroDivisionError("Lambda_W = 0; invalid parameters")
    D = tr.diag()
    A = matrix.as_array()
    # multiply by D_j before dividing by D_i so that b~_R = b_R / Lambda_W
    # is exactly 1 (same float expression in numerator and denominator);
    # the diagonal is unscaled (D_i / D_i) and is restored verbatim
    A_scaled = (A * D[None, :]) / D[:, None]
    np.fill_diagonal(A_scaled, np.diag(A))
    x_scaled = None if state is None else np.asarray(state, float) / D
    return A_scaled, x_scaled, tr


def from_scaled(transform: ScaledTransform, scaled_state: np.ndarray) -> np.ndarray:
    return np.asarray(scaled_state, float) * transform.diag()


def clock_convert(
    traj: Trajectory,
    target: str,
    P_batch: float | None = None,
    d: int | None = None,
    slow_power: float | None = None,
) -> Trajectory:
    """Convert a trajectory's time axis between clocks.

    active <-> minibatch uses the mean inter-arrival 1/P_batch;
    active <-> slow uses tau = t / d^slow_power (caller supplies the
    regime's power).
    """
    if traj.clock == target:
        return traj

    def to_active(times: np.ndarray) -> np.ndarray:
        if traj.clock == Clock.ACTIVE:
            return times
        if traj.clock == Clock.MINIBATCH:
            _need(P_batch, "P_batch")
            return times * P_batch
        if traj.clock == Clock.SLOW:
            _need(d, "d")
            return times * float(d) ** traj.slow_power
        raise ValueError(f"unknown source clock {traj.clock!r}")

    t_active = to_active(traj.times)
    if target == Clock.ACTIVE:
        new_times, power = t_active, None
    elif target == Clock.MINIBATCH:
        _need(P_batch, "P_batch")
        new_times, power = t_active / P_batch, None
    elif target == Clock.SLOW:
        _need(d, "d")
        _need(slow_power, "slow_power")
        new_times, power = t_active / float(d) ** slow_power, slow_power
    else:
        raise ValueError(f"unknown target clock {target!r}")
    return Trajectory(
        clock=target, times=new_times, states=traj.states,
        state_names=traj.state_names, slow_power=power, metadata=dict(traj.metadata),
    )


def _need(value, name: str) -> None:
    if value is None:
        raise ValueError(f"clock conversion requires {name}")
