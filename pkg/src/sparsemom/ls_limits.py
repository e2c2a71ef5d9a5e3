"""High-dimensional limit systems of the LS moment dynamics, per region.

Below resonance the limit is scalar exponential decay (SGD law); above
resonance it is a deterministic 2D heavy-ball reached through the
square-root lift R = x^2, V = y^2, C = xy; on the resonance line and at
the triple point the limit is the irreducible 3D system with the
risk -> momentum-energy feedthrough xi*, equivalently the second-moment
closure of a linear 2D SDE.

Also provides the diagonal balancing transforms used to compare the
finite-d main ODE against the limits, and the Euler-Maruyama ensemble
for the SDE lift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ls_ode import build_main_matrix, to_scaled
from .numerics import RngStream, evolve_lti
from .scaling import (
    InstanceParams,
    Region,
    ScalingConstants,
    ScalingExponents,
    batch_factors,
    classify_region,
    instantiate,
    retention_drift,
)
from .trajectory import Clock, Trajectory

__all__ = [
    "Sgd1D",
    "HeavyBall2D",
    "Resonance3D",
    "BalancingTransform",
    "select_limit",
    "evolve_limit",
    "balancing_transform",
    "sde_lift_simulate",
    "compare_to_limit",
]


@dataclass(frozen=True)
class Sgd1D:
    """dR/dtau = -c_eff R on the slow clock tau = t / d^clock_power."""

    c_eff: float
    clock_power: float
    eta_eff: float
    chi: float = 1.0  # boundary factor p*B*/P* on the kappa=sigma ray, else 1

    dim = 1


@dataclass(frozen=True)
class HeavyBall2D:
    """dx/dtau = -rate*eta_bar*y, dy/dtau = rate*(x - y).

    Moments via the square-root lift (R, V, C) = (x^2, y^2, xy), valid
    for m0 = 0 initial data. Eigenpolynomial lambda^2 + rate*lambda
    + rate^2*eta_bar; oscillatory iff eta_bar > 1/4.
    """

    rate: float
    eta_bar: float
    clock_power: float
    note: str = ""

    dim = 2

    def lift_matrix(self) -> np.ndarray:
        r, e = self.rate, self.eta_bar
        return r * np.array([[0.0, 0.0, -2.0 * e], [0.0, -2.0, 2.0], [1.0, -e, -1.0]])


@dataclass(frozen=True)
class Resonance3D:
    """Irreducible 3D limit on the resonance line / triple point.

    dR = -2 rho* eta_bar C; dV = -2 rho* V + 2 rho* C + xi* R;
    dC = rho* R - rho* eta_bar V - rho* C. Hurwitz-stable iff
    eta_bar * zeta* < 2 (equivalently eta* < 2 B*).
    """

    rho_star: float
    eta_bar: float
    xi_star: float
    clock_power: float

    dim = 3

    @property
    def zeta_star(self) -> float:
        return self.xi_star / self.rho_star

    @property
    def hurwitz_stable(self) -> bool:
        return self.eta_bar * self.zeta_star < 2.0

    def matrix(self) -> np.ndarray:
        r, e, x = self.rho_star, self.eta_bar, self.xi_star
        return np.array(
            [
                [0.0, 0.0, -2.0 * r * e],
                [x, -2.0 * r, 2.0 * r],
                [r, -r * e, -r],
            ]
        )

    def normalized_cubic(self) -> tuple[float, float, float]:
        """Coefficients of p(mu) = mu^3 + 3 mu^2 + (2+4 etabar) mu
        + 2 etabar (2 - etabar zeta*), mu = lambda / rho*."""
        e, z = self.eta_bar, self.zeta_star
        return 3.0, 2.0 + 4.0 * e, 2.0 * e * (2.0 - e * z)

    def spectral_discriminant(self) -> float:
        """4((1-4 etabar)^3 - 27 etabar^4 zeta*^2); positive means three
        real eigenvalues, negative means one real + conjugate pair."""
        e, z = self.eta_bar, self.zeta_star
        return 4.0 * ((1.0 - 4.0 * e) ** 3 - 27.0 * e ** 4 * z ** 2)


LimitSystem = Sgd1D | HeavyBall2D | Resonance3D


def p_star_limit(constants: ScalingConstants) -> float:
    """P* = 1 - exp(-p* B*), the kappa = sigma boundary activation."""
    return -math.expm1(-constants.p_star * constants.B_star)


def select_limit(
    exponents: ScalingExponents, constants: ScalingConstants
) -> LimitSystem:
    """The boxed per-region limit system with its constants filled in."""
    region = classify_region(exponents)
    k, s, g = exponents.kappa, exponents.sigma, exponents.gamma
    p_, B_, e_, h_ = (
        constants.p_star,
        constants.B_star,
        constants.eps_star,
        constants.eta_star,
    )
    eta_bar = h_ * p_ / e_
    eta_eff = h_ / B_
    P_ = p_star_limit(constants)

    if region in (Region.A, Region.C):
        return HeavyBall2D(rate=e_, eta_bar=eta_bar, clock_power=g)
    if region is Region.NOISE_CHARACTER_LINE:
        # strict-interior constants on the boundary; the limit ODE is the
        # same on both sides of kappa = sigma - 1
        return HeavyBall2D(
            rate=e_, eta_bar=eta_bar, clock_power=g,
            note="noise-character line: strict-interior constants used",
        )
    if region is Region.F:
        nu = g - (k - s)
        return HeavyBall2D(rate=e_ / (p_ * B_), eta_bar=eta_bar, clock_power=nu)
    if region is Region.KAPPA_EQ_SIGMA_ABOVE:
        return HeavyBall2D(rate=e_ / P_, eta_bar=eta_bar, clock_power=g)
    if region is Region.B:
        return Sgd1D(
            c_eff=h_ * p_ * (2.0 - eta_eff),
            clock_power=1.0 - s + k,
            eta_eff=eta_eff,
        )
    if region in (Region.D, Region.E):
        return Sgd1D(c_eff=eta_eff * (2.0 - eta_eff), clock_power=1.0, eta_eff=eta_eff)
    if region is Region.KAPPA_EQ_SIGMA_BELOW:
        chi = p_ * B_ / P_
        return Sgd1D(
            c_eff=chi * eta_eff * (2.0 - eta_eff),
            clock_power=1.0,
            eta_eff=eta_eff,
            chi=chi,
        )
    if region is Region.RESONANCE_DENSE:
        return Resonance3D(
            rho_star=e_, eta_bar=eta_bar, xi_star=e_ ** 2 / (p_ * B_), clock_power=g
        )
    if region is Region.RESONANCE_SPARSE:
        rho = e_ / (p_ * B_)
        return Resonance3D(rho_star=rho, eta_bar=eta_bar, xi_star=rho ** 2, clock_power=1.0)
    if region is Region.TRIPLE_POINT:
        return Resonance3D(
            rho_star=e_ / P_,
            eta_bar=eta_bar,
            xi_star=e_ ** 2 / (P_ * p_ * B_),
            clock_power=1.0,
        )
    raise ValueError(f"no limit system for region {region}")


def evolve_limit(system: LimitSystem, initial, tau_grid: np.ndarray) -> Trajectory:
    """Integrate the limit system exactly on the slow clock.

    initial: scalar R0 for Sgd1D, (x0, y0) for HeavyBall2D,
    (R0, V0, C0) for Resonance3D.
    """
    tau = np.asarray(tau_grid, dtype=float)
    meta: dict = {"limit_kind": type(system).__name__, "system": vars(system)}
    if isinstance(system, Sgd1D):
        R0 = float(np.atleast_1d(initial)[0])
        states = (R0 * np.exp(-system.c_eff * tau))[:, None]
        return Trajectory(
            clock=Clock.SLOW, times=tau, states=states, state_names=("R",),
            slow_power=system.clock_power, metadata=meta,
        )
    if isinstance(system, HeavyBall2D):
        x0 = np.asarray(initial, dtype=float)
        if x0.shape != (2,):
            raise ValueError("HeavyBall2D initial must be (x0, y0)")
        A = system.rate * np.array([[0.0, -system.eta_bar], [1.0, -1.0]])
        xy = _evolve_lti_grid(A, x0, tau)
        x, y = xy[:, 0], xy[:, 1]
        states = np.column_stack([x * x, y * y, x * y])
        return Trajectory(
            clock=Clock.SLOW, times=tau, states=states, state_names=("R", "V", "C"),
            slow_power=system.clock_power, metadata=meta,
        )
    if isinstance(system, Resonance3D):
        x0 = np.asarray(initial, dtype=float)
        if x0.shape != (3,):
            raise ValueError("Resonance3D initial must be (R0, V0, C0)")
        if not system.hurwitz_stable:
            meta["unstable"] = True
        states = _evolve_lti_grid(system.matrix(), x0, tau)
        return Trajectory(
            clock=Clock.SLOW, times=tau, states=states, state_names=("R", "V", "C"),
            slow_power=system.clock_power, metadata=meta,
        )
    raise TypeError(f"unknown limit system {system!r}")


def _evolve_lti_grid(A: np.ndarray, x0: np.ndarray, tau: np.ndarray) -> np.ndarray:
    if tau[0] > 0.0:
        return evolve_lti(A, x0, np.concatenate(([0.0], tau)))[1:]
    return evolve_lti(A, x0, tau)


@dataclass(frozen=True)
class BalancingTransform:
    """Diagonal D(d) making D^-1 (d^power A~) D converge entrywise."""

    diag: tuple[float, float, float]
    clock_power: float
    region: Region

    def comparison_states(self, scaled_states: np.ndarray) -> np.ndarray:
        """Map (R, W, Z) rows to limit-comparison coordinates.

        The first balanced coordinate is normalized to raw R (the whole
        trajectory is rescaled by D_1, allowed by linearity), so rows
        compare directly against the boxed limits started from
        (R, V, C)(0) = (R_0, 0, 0).
        """
        d1, d2, d3 = self.diag
        out = np.asarray(scaled_states, dtype=float).copy()
        out[:, 1] *= d1 / d2
        out[:, 2] *= d1 / d3
        return out


_BALANCED_REGIONS = {
    Region.A,
    Region.C,
    Region.F,
    Region.NOISE_CHARACTER_LINE,
    Region.RESONANCE_DENSE,
    Region.RESONANCE_SPARSE,
    Region.KAPPA_EQ_SIGMA_ABOVE,
    Region.KAPPA_EQ_SIGMA_BELOW,
    Region.TRIPLE_POINT,
}


def balancing_transform(
    region: Region, params: InstanceParams, clock_power: float
) -> BalancingTransform:
    """Per-region diagonal balancing at finite d.

    1D interiors (B, D, E) have no balanced 2D/3D limit and are
    rejected; kappa = sigma below resonance is accepted because it
    shares the corner balancing (used for diagnostics even though its
    limit is 1D).
    """
    if region not in _BALANCED_REGIONS:
        raise ValueError(f"region {region} has no balanced 2D/3D limit")
    fac = batch_factors(params.p, params.B, params.d)
    rho = retention_drift(params.beta, fac.P_batch).rho
    d, p, B, P = float(params.d), params.p, float(params.B), fac.P_batch
    if region is Region.A or region is Region.NOISE_CHARACTER_LINE:
        diag = (rho ** 2, 1.0, rho ** 2 * p)
    elif region in (Region.C, Region.RESONANCE_DENSE):
        diag = (rho ** 2 * d / (B * p), 1.0, rho ** 2 * d / B)
    elif region in (Region.F, Region.RESONANCE_SPARSE):
        diag = (rho ** 2 * d, 1.0, rho ** 2 * d / B)
    else:  # corner rays and triple point
        diag = (rho ** 2 * d * P / (p * B), 1.0, rho ** 2 * d / B)
    return BalancingTransform(diag=diag, clock_power=clock_power, region=region)


def sde_lift_simulate(
    system: Resonance3D,
    initial: tuple[float, float],
    tau_grid: np.ndarray,
    n_paths: int,
    seed: int,
    step_factor: float = 0.005,
    chunk: int = 4096,
) -> Trajectory:
    """Euler-Maruyama ensemble of the resonance-line 2D SDE lift.

    dX = -rho* eta_bar Y dtau; dY = rho* (X - Y) dtau + sqrt(xi*) X dB.
    Records ensemble second moments (E X^2, E Y^2, E XY) with standard
    errors at the grid points. Step size = step_factor / rho* (<= the
    0.01 / rho* ceiling). Paths run in deterministic per-chunk streams.
    """
    if n_paths < 1000:
        raise ValueError(f"n_paths must be >= 1e3, got {n_paths}")
    if step_factor > 0.01:
        raise ValueError("step size ceiling is 0.01 / rho*")
    tau = np.asarray(tau_grid, dtype=float)
    if tau[0] < 0 or np.any(np.diff(tau) <= 0):
        raise ValueError("tau grid must be nonnegative and increasing")
    rho, ebar, xi = system.rho_star, system.eta_bar, system.xi_star
    h = step_factor / rho
    sqrt_xi_h = math.sqrt(xi * h)
    # align the grid to whole EM steps
    n_steps = [int(round(t / h)) for t in tau]
    master = RngStream(seed)
    sums = np.zeros((len(tau), 3))
    sums2 = np.zeros((len(tau), 3))
    n_nan = 0
    unstable = not system.hurwitz_stable
    for start in range(0, n_paths, chunk):
        m = min(chunk, n_paths - start)
        stream = master.child(start)
        X = np.full(m, float(initial[0]))
        Y = np.full(m, float(initial[1]))
        step = 0
        for gi, target in enumerate(n_steps):
            while step < target:
                dB = stream.gaussians(m)
                Xn = X + (-rho * ebar * Y) * h
                Yn = Y + rho * (X - Y) * h + sqrt_xi_h * X * dB
                X, Y = Xn, Yn
                step += 1
            block = np.column_stack([X * X, Y * Y, X * Y])
            good = np.isfinite(block).all(axis=1)
            n_nan += int((~good).sum())
            block = np.where(good[:, None], block, 0.0)
            sums[gi] += block.sum(axis=0)
            sums2[gi] += (block * block).sum(axis=0)
    mean = sums / n_paths
    var = np.maximum(sums2 / n_paths - mean ** 2, 0.0)
    se = np.sqrt(var / n_paths)
    states = np.column_stack([mean, se])
    return Trajectory(
        clock=Clock.SLOW,
        times=tau if tau[0] > 0 else tau + 0.0,
        states=states,
        state_names=("R", "V", "C", "se_R", "se_V", "se_C"),
        slow_power=system.clock_power,
        metadata={
            "limit_kind": "Resonance3D-SDE",
            "n_paths": n_paths,
            "step": h,
            "n_nan_paths": n_nan,
            "unstable": unstable,
            "seed": seed,
        },
    )


def compare_to_limit(
    exponents: ScalingExponents,
    constants: ScalingConstants,
    d: int,
    tau_grid: np.ndarray,
) -> dict:
    """Rescaled finite-d main ODE vs the boxed limit on one tau grid.

    Runs the main ODE from (R, V, C) = (1, 0, 0), maps (W, Z) through
    the regime balancing, and reports the normalized sup errors
    (absolute error divided by the sup of the limit curve; R starts at
    1 so its normalization is 1).
    """
    tau = np.asarray(tau_grid, dtype=float)
    region = classify_region(exponents)
    system = select_limit(exponents, constants)
    params = instantiate(exponents, constants, d)
    matrix = build_main_matrix(params)
    A_scaled, x0_scaled, _ = to_scaled(matrix, np.array([1.0, 0.0, 0.0]))
    t_grid = tau * float(d) ** system.clock_power
    scaled_states = _evolve_lti_grid(A_scaled, x0_scaled, t_grid)

    if isinstance(system, Sgd1D):
        limit_traj = evolve_limit(system, 1.0, tau)
        R_main = scaled_states[:, 0]
        R_lim = limit_traj.column("R")
        errors = {"R": float(np.max(np.abs(R_main - R_lim)) / np.max(np.abs(R_lim)))}
        main_states = R_main[:, None]
        names = ("R",)
    else:
        tr = balancing_transform(region, params, system.clock_power)
        main_states = tr.comparison_states(scaled_states)
        initial = (1.0, 0.0) if isinstance(system, HeavyBall2D) else (1.0, 0.0, 0.0)
        limit_traj = evolve_limit(system, initial, tau)
        names = ("R", "V", "C")
        errors = {}
        for j, name in enumerate(names):
            lim = limit_traj.states[:, j]
            scale = np.max(np.abs(lim))
            scale = scale if scale > 0 else 1.0
            errors[name] = float(np.max(np.abs(main_states[:, j] - lim)) / scale)
    return {
        "region": region,
        "system": system,
        "tau": tau,
        "main": main_states,
        "limit": limit_traj.states[:, : len(names)],
        "state_names": names,
        "errors": errors,
        "params": params,
    }
