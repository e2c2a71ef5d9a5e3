"""Rare-class logistic regression: coefficients, exact 5-variable ODE,
per-region reductions, equilibria, and the population KL.

The model is a two-class Gaussian mixture (rare class at mu, |mu| = r,
probability p) fit by a logistic classifier whose bias is pinned at the
Bayes value b* = log(p/(1-p)) - r^2/2. The five-variable state is

    s = <theta - mu, mu_hat>   u = <m, mu_hat>        (signal block)
    R_perp, V_perp, C_perp     (bulk second moments orthogonal to mu)

with auxiliaries theta_par = s + r, q = theta_par^2 + R_perp and
alpha = exp((q - r^2)/2). Coefficient functions are Gaussian-sigmoid
expectations: exact via Gauss-Hermite quadrature, or their tame-alpha
closed forms (valid for p -> 0 at bounded alpha).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit

from .numerics import gauss_hermite, newton_1d, rk_adaptive
from .scaling import BOUNDARY_TOL, ScalingConstants, ScalingExponents
from .trajectory import Clock, Trajectory

__all__ = [
    "LrParams",
    "LrState",
    "LrCoefficients",
    "LrRegion",
    "classify_lr_region",
    "lr_alpha_eta",
    "instantiate_lr",
    "coefficients_exact",
    "coefficients_tame",
    "drift_5var",
    "evolve_5var",
    "steady_state_5var",
    "reduced_system",
    "ReducedSystem",
    "equilibrium_slow",
    "jacobian_slow",
    "kl_pop",
    "kl_normalized",
    "lr_heatmaps",
]

R_PERP_MAX = 50.0
S_SHIFT_MAX = 10.0


@dataclass(frozen=True)
class LrParams:
    """Model + optimizer parameters; b* is pinned at the Bayes bias."""

    r: float
    p: float
    B: int
    beta: float
    eta: float
    d: int

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"r must be > 0, got {self.r}")
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must be in (0,1), got {self.p}")
        if self.B < 1 or self.d < 2:
            raise ValueError("need B >= 1 and d >= 2")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must be in [0,1), got {self.beta}")
        if not self.eta >= 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")

    @property
    def eps(self) -> float:
        return 1.0 - self.beta

    @property
    def b_star(self) -> float:
        return math.log(self.p / (1.0 - self.p)) - 0.5 * self.r ** 2


@dataclass(frozen=True)
class LrState:
    s: float
    u: float
    R_perp: float
    V_perp: float
    C_perp: float

    def __post_init__(self):
        if self.R_perp < 0 or self.V_perp < 0:
            raise ValueError("R_perp and V_perp must be >= 0")
        rv = self.R_perp * self.V_perp
        if self.C_perp ** 2 > rv + 1e-9 * max(1.0, rv):
            raise ValueError("C_perp^2 exceeds R_perp * V_perp beyond slack")

    def theta_par(self, r: float) -> float:
        return self.s + r

    def q(self, r: float) -> float:
        return self.theta_par(r) ** 2 + self.R_perp

    def alpha(self, r: float) -> float:
        return math.exp(0.5 * (self.q(r) - r ** 2))

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.u, self.R_perp, self.V_perp, self.C_perp])


@dataclass(frozen=True)
class LrCoefficients:
    """Gaussian-sigmoid coefficient functions at one state.

    A and Bcoef decompose the population gradient as A theta + Bcoef mu;
    D0/Dtheta build the orthogonal per-sample noise (d-1) D0 + R Dtheta;
    f = A theta_par + Bcoef r is the signal drift; N_perp_bar is the
    mini-batched orthogonal noise.
    """

    A: float
    Bcoef: float
    D0: float
    Dtheta: float
    f: float
    N_perp_bar: float
    mode: str


def _sigma_prime(z: np.ndarray) -> np.ndarray:
    return expit(z) * expit(-z)


def _sq_sigma_dd(z: np.ndarray) -> np.ndarray:
    # (sigma^2)'' = 2 sigma^2 (1 - sigma)(2 - 3 sigma)
    sg = expit(z)
    return 2.0 * sg * sg * (1.0 - sg) * (2.0 - 3.0 * sg)


def _sq_one_minus_sigma_dd(z: np.ndarray) -> np.ndarray:
    # ((1-sigma)^2)'' = -2 sigma (1 - sigma)^2 (1 - 3 sigma)
    sg = expit(z)
    return -2.0 * sg * (1.0 - sg) ** 2 * (1.0 - 3.0 * sg)


def coefficients_exact(
    state: LrState, params: LrParams, order: int = 64, verify: bool = True
) -> LrCoefficients:
    """Coefficients by Gauss-Hermite quadrature (default 64 nodes).

    G1 ~ N(b*, q) and G2 ~ N(theta_par r + b*, q); each expectation uses
    the change of variable z = mu_j + sqrt(2q) x. verify re-evaluates at
    doubled order and raises if the relative difference exceeds 1e-8.
    """
    q = state.q(params.r)
    if not q >= 0:
        raise ValueError(f"needs q >= 0, got {q}")
    if not verify:
        vals = _exact_raw(state, params, order)
        return _finish_coeffs(
            vals["A"], vals["B"], vals["D0"], vals["Dt"], state, params, "exact"
        )
    vals = _exact_raw(state, params, order)
    while True:
        higher = min(2 * order, 256)
        vals2 = _exact_raw(state, params, higher)
        converged = all(
            abs(vals[name] - vals2[name])
            <= 1e-8 * max(abs(vals[name]), abs(vals2[name]), 1e-14)
            or max(abs(vals[name]), abs(vals2[name])) <= 1e-14
            for name in vals
        )
        if converged:
            vals = vals2
            break
        if higher >= 256:
            raise RuntimeError(
                f"quadrature non-convergence at orders {order}/{higher}: "
                + ", ".join(f"{k}: {vals[k]} vs {vals2[k]}" for k in vals)
            )
        order, vals = higher, vals2
    return _finish_coeffs(vals["A"], vals["B"], vals["D0"], vals["Dt"], state, params, "exact")


def _exact_raw(state: LrState, params: LrParams, order: int) -> dict:
    rule = gauss_hermite(order)
    p, r = params.p, params.r
    q = state.q(r)
    b = params.b_star
    mu1 = b
    mu2 = state.theta_par(r) * r + b
    e1 = lambda fn: rule.expect(fn, mu1, q)
    e2 = lambda fn: rule.expect(fn, mu2, q)
    A = (1.0 - p) * e1(_sigma_prime) + p * e2(_sigma_prime)
    B = p * (e2(expit) - 1.0)
    D0 = (1.0 - p) * e1(lambda z: expit(z) ** 2) + p * e2(lambda z: (1.0 - expit(z)) ** 2)
    Dt = (1.0 - p) * e1(_sq_sigma_dd) + p * e2(_sq_one_minus_sigma_dd)
    return {"A": A, "B": B, "D0": D0, "Dt": Dt}


def coefficients_tame(state: LrState, params: LrParams) -> LrCoefficients:
    """Tame-alpha closed forms: A = p alpha, B = -p, D0 = p, Dtheta = 0.

    Valid for p -> 0 with alpha = O(1); signals departure when
    R_perp > 50 (alpha would leave the O(1) range) or p > 0.1.
    """
    if state.R_perp > R_PERP_MAX:
        raise ValueError(f"R_perp={state.R_perp} > {R_PERP_MAX}: left the tame regime")
    if params.p > 0.1:
        raise ValueError(f"p={params.p} > 0.1: tame reduction not applicable")
    alpha = state.alpha(params.r)
    p = params.p
    return _finish_coeffs(p * alpha, -p, p, 0.0, state, params, "tame")


def _finish_coeffs(A, B, D0, Dt, state: LrState, params: LrParams, mode: str) -> LrCoefficients:
    theta_par = state.theta_par(params.r)
    f = A * theta_par + B * params.r
    Bm = params.B
    if mode == "tame":
        noise = params.d * params.p / Bm + (Bm - 1) / Bm * A * A * state.R_perp
    else:
        noise = ((params.d - 1) * D0 + state.R_perp * Dt) / Bm + (Bm - 1) / Bm * A * A * state.R_perp
    return LrCoefficients(A=A, Bcoef=B, D0=D0, Dtheta=Dt, f=f, N_perp_bar=noise, mode=mode)


_COEFF_FNS = {"exact": coefficients_exact, "tame": coefficients_tame}


def _coeffs_raw(s: float, R: float, params: LrParams, mode: str) -> tuple[float, float, float]:
    """(A, f, N_perp_bar) at (s, R) without state validation.

    Used inside integrator right-hand sides, where intermediate stages
    may sit slightly off the feasible cone.
    """
    R = max(R, 0.0)
    if mode == "tame":
        alpha = math.exp(0.5 * ((s + params.r) ** 2 + R - params.r ** 2))
        A = params.p * alpha
        f = A * (s + params.r) - params.p * params.r
        Bm = params.B
        noise = params.d * params.p / Bm + (Bm - 1) / Bm * A * A * R
        return A, f, noise
    st = LrState(s, 0.0, R, 0.0, 0.0)
    co = coefficients_exact(st, params, verify=False)
    Bm = params.B
    noise = ((params.d - 1) * co.D0 + R * co.Dtheta) / Bm + (Bm - 1) / Bm * co.A ** 2 * R
    return co.A, co.f, noise


def drift_5var(state: LrState, params: LrParams, coeff_mode: str = "tame") -> np.ndarray:
    """Per-step conditional drift of (s, u, R_perp, V_perp, C_perp)."""
    co = _COEFF_FNS[coeff_mode](state, params)
    eta, eps = params.eta, params.eps
    one = 1.0 - eps
    A, f, N = co.A, co.f, co.N_perp_bar
    s, u, R, V, C = state.s, state.u, state.R_perp, state.V_perp, state.C_perp
    ds = -eta * one * u - eta * eps * f
    du = eps * (f - u)
    dR = (
        -2.0 * eta * one * C
        - 2.0 * eta * eps * A * R
        + eta ** 2 * one ** 2 * V
        + 2.0 * eta ** 2 * one * eps * A * C
        + eta ** 2 * eps ** 2 * N
    )
    dV = -(2.0 * eps - eps ** 2) * V + 2.0 * one * eps * A * C + eps ** 2 * N
    dC = (
        -eps * C
        + eps * A * R
        - eta * one ** 2 * V
        - 2.0 * eta * one * eps * A * C
        - eta * eps ** 2 * N
    )
    return np.array([ds, du, dR, dV, dC])


class _TameRegimeLeft(RuntimeError):
    pass


def evolve_5var(
    initial: LrState,
    params: LrParams,
    times: np.ndarray,
    coeff_mode: str = "tame",
    rtol: float = 1e-8,
    atol: float = 1e-12,
    with_kl: bool = False,
) -> Trajectory:
    """Integrate the five-variable ODE on the discrete-step clock t.

    Adaptive RK45 (rtol 1e-8 / atol 1e-12) with the step ceiling 0.1/eps
    to resolve the fast block; stiffness failures fall back to an
    implicit stepper and are recorded in the metadata. Aborts with
    "left tame regime" when R_perp > 50 or |s + r| > 10.
    """
    times = np.asarray(times, dtype=float)
    r = params.r

    def rhs(t, y):
        if y[2] > R_PERP_MAX or abs(y[0] + r) > S_SHIFT_MAX:
            raise _TameRegimeLeft(f"left tame regime at t={t:.6g}: s={y[0]:.4g}, R={y[2]:.4g}")
        A, f, N = _coeffs_raw(y[0], y[2], params, coeff_mode)
        eta, eps = params.eta, params.eps
        one = 1.0 - eps
        s, u, R, V, C = y
        return [
            -eta * one * u - eta * eps * f,
            eps * (f - u),
            -2.0 * eta * one * C - 2.0 * eta * eps * A * R
            + eta ** 2 * one ** 2 * V + 2.0 * eta ** 2 * one * eps * A * C
            + eta ** 2 * eps ** 2 * N,
            -(2.0 * eps - eps ** 2) * V + 2.0 * one * eps * A * C + eps ** 2 * N,
            -eps * C + eps * A * R - eta * one ** 2 * V
            - 2.0 * eta * one * eps * A * C - eta * eps ** 2 * N,
        ]

    grid = times if times[0] == 0.0 else np.concatenate(([0.0], times))
    res = rk_adaptive(
        rhs, initial.as_array(), grid, rtol=rtol, atol=atol, max_step=0.1 / params.eps
    )
    if not res.success:
        raise RuntimeError(f"evolve_5var failed: {res.message}")
    states = res.states if times[0] == 0.0 else res.states[1:]
    names = ["s", "u", "R_perp", "V_perp", "C_perp", "alpha"]
    alpha = np.exp(0.5 * ((states[:, 0] + r) ** 2 + states[:, 2] - r ** 2))
    cols = [states, alpha[:, None]]
    if with_kl:
        kl = np.array([kl_pop(si, Ri, params) for si, Ri in states[:, [0, 2]]])
        cols.append(kl[:, None])
        names.append("kl")
    return Trajectory(
        clock=Clock.ACTIVE,
        times=times,
        states=np.hstack(cols),
        state_names=tuple(names),
        metadata={
            "coeff_mode": coeff_mode,
            "params": vars(params),
            "stiff_fallback": res.stiff_fallback,
        },
    )


def steady_state_5var(
    params: LrParams, coeff_mode: str = "tame", tol: float = 1e-13, max_iter: int = 200
) -> LrState:
    """Algebraic fixed point of the five-variable ODE.

    At equilibrium u* = 0 and f = 0 (so alpha theta_par = r in tame
    mode), and the bulk equations are linear in (R, V, C) at frozen
    coefficients. Outer iteration: solve the signal equation for s at
    the current R, refresh coefficients, solve the 3x3 bulk system,
    repeat to fixed point. Avoids integrating through the slow-floor
    timescale entirely.
    """
    r = params.r
    eta, eps = params.eta, params.eps
    one = 1.0 - eps
    Bm = params.B
    R = 0.0

    def solve_signal(R_fixed: float) -> float:
        if coeff_mode == "tame":
            def g(s):
                alpha = math.exp(0.5 * ((s + r) ** 2 + R_fixed - r ** 2))
                return alpha * (s + r) - r

            def dg(s):
                alpha = math.exp(0.5 * ((s + r) ** 2 + R_fixed - r ** 2))
                return alpha * ((s + r) ** 2 + 1.0)

            return newton_1d(g, dg, 0.0, tol=1e-14)
        # exact mode: root of the quadrature signal drift f(s)
        def g(s):
            st = LrState(s, 0.0, R_fixed, 0.0, 0.0)
            return coefficients_exact(st, params, verify=False).f

        from .numerics import bisect_1d

        return bisect_1d(g, -r * 0.999, 2.0, tol=1e-14)

    def solve_bulk(R_fixed: float) -> tuple[float, np.ndarray]:
        s = solve_signal(R_fixed)
        st = LrState(s, 0.0, R_fixed, 0.0, 0.0)
        co = _COEFF_FNS[coeff_mode](st, params) if coeff_mode == "tame" else (
            coefficients_exact(st, params, verify=False)
        )
        A = co.A
        if coeff_mode == "tame":
            n0 = params.d * params.p / Bm
            n1 = (Bm - 1) / Bm * A * A
        else:
            n0 = (params.d - 1) * co.D0 / Bm
            n1 = co.Dtheta / Bm + (Bm - 1) / Bm * A * A
        # rows dR = dV = dC = 0, unknowns (R, V, C); noise split as n0 + n1 R
        M = np.array(
            [
                [
                    -2.0 * eta * eps * A + eta ** 2 * eps ** 2 * n1,
                    eta ** 2 * one ** 2,
                    -2.0 * eta * one + 2.0 * eta ** 2 * one * eps * A,
                ],
                [eps ** 2 * n1, -(2.0 * eps - eps ** 2), 2.0 * one * eps * A],
                [
                    eps * A - eta * eps ** 2 * n1,
                    -eta * one ** 2,
                    -eps - 2.0 * eta * one * eps * A,
                ],
            ]
        )
        rhs = np.array([-(eta ** 2) * eps ** 2 * n0, -(eps ** 2) * n0, eta * eps ** 2 * n0])
        return s, np.linalg.solve(M, rhs)

    for _ in range(max_iter):
        _, Rvc = solve_bulk(R)
        R_new = float(Rvc[0])
        if abs(R_new - R) <= tol * max(1.0, abs(R_new)):
            R = R_new
            break
        R = R_new
    s, Rvc = solve_bulk(R)
    return LrState(s, 0.0, float(Rvc[0]), float(Rvc[1]), float(Rvc[2]))


# ---------------------------------------------------------------------------
# Region atlas and reduced systems
# ---------------------------------------------------------------------------


class LrRegion(Enum):
    """Tame-alpha phase atlas (separate from the LS tags: no kappa=sigma
    line; the noise-character line kappa = sigma-1 replaces it)."""

    CONCENTRATED_ABOVE = "concentrated_above"
    NOISE_FLOOR_ABOVE = "noise_floor_above"
    NOISE_FLOOR_BELOW = "noise_floor_below"
    BOUNDARY_E = "resonance_line"
    BOUNDARY_F = "noise_character"


def classify_lr_region(exponents: ScalingExponents, tol: float = BOUNDARY_TOL) -> LrRegion:
    k, s, g = exponents.kappa, exponents.sigma, exponents.gamma
    res = 1.0 - s + k
    if abs(g - res) <= tol:
        return LrRegion.BOUNDARY_E
    if abs(k - (s - 1.0)) <= tol:
        return LrRegion.BOUNDARY_F
    if k < s - 1.0:
        if g < res:
            raise ValueError(
                "concentrated below resonance is empty: kappa < sigma-1 and "
                "gamma < 1-sigma+kappa force gamma < 0"
            )
        return LrRegion.CONCENTRATED_ABOVE
    return LrRegion.NOISE_FLOOR_ABOVE if g > res else LrRegion.NOISE_FLOOR_BELOW


def lr_alpha_eta(region: LrRegion, exponents: ScalingExponents) -> float:
    """Regime-adapted learning-rate exponent: gamma-kappa above
    resonance, 1-sigma below; both agree on the resonance line."""
    if region in (LrRegion.CONCENTRATED_ABOVE, LrRegion.NOISE_FLOOR_ABOVE, LrRegion.BOUNDARY_F):
        return exponents.gamma - exponents.kappa
    return 1.0 - exponents.sigma


def instantiate_lr(
    exponents: ScalingExponents, constants: ScalingConstants, d: int, r: float
) -> LrParams:
    region = classify_lr_region(exponents)
    alpha = lr_alpha_eta(region, exponents)
    p = min(constants.p_star * d ** (-exponents.kappa), 0.5)
    B = math.ceil(constants.B_star * d ** exponents.sigma)
    eps = min(constants.eps_star * d ** (-exponents.gamma), 1.0)
    eta = constants.eta_star * d ** (-alpha)
    return LrParams(r=r, p=p, B=B, beta=1.0 - eps, eta=eta, d=d)


@dataclass(frozen=True)
class ReducedSystem:
    """Reduced limit ODE for one LR region.

    state_names fixes the layout; rhs is d(state)/dtau on the slow clock
    tau = t / d^clock_power. rebalance maps full five-variable states
    (s, u, R, V, C) into the reduced coordinates at finite d.
    """

    region: LrRegion
    state_names: tuple[str, ...]
    clock_power: float
    constants: ScalingConstants
    r: float
    frozen_alpha: float | None = None

    def alpha(self, s: float, R: float) -> float:
        if self.frozen_alpha is not None:
            return self.frozen_alpha
        return math.exp(0.5 * ((s + self.r) ** 2 + R - self.r ** 2))

    def rhs(self, tau: float, y: np.ndarray) -> np.ndarray:
        c = self.constants
        e_, h_, p_, B_ = c.eps_star, c.eta_star, c.p_star, c.B_star
        eta_bar = h_ * p_ / e_
        if self.region in (LrRegion.CONCENTRATED_ABOVE, LrRegion.NOISE_FLOOR_ABOVE,
                           LrRegion.BOUNDARY_F):
            s, ub, R, Vt, Ct = y
            a = self.alpha(s, R)
            return np.array(
                [
                    -e_ * eta_bar * ub,
                    e_ * (a * (s + self.r) - self.r - ub),
                    -2.0 * h_ * p_ * Ct,
                    -2.0 * e_ * Vt + 2.0 * e_ * a * Ct,
                    -e_ * Ct + e_ * a * R - h_ * p_ * Vt,
                ]
            )
        if self.region is LrRegion.NOISE_FLOOR_BELOW:
            s, R = y
            a = self.alpha(s, R)
            eta_eff = h_ / B_
            return np.array(
                [
                    -h_ * p_ * (a * (s + self.r) - self.r),
                    -2.0 * h_ * p_ * a * R + h_ * p_ * eta_eff,
                ]
            )
        # Boundary E, rebalanced by pure powers of d
        s, ut, R, Vt, Ct = y
        a = self.alpha(s, R)
        return np.array(
            [
                -h_ * ut,
                e_ * (p_ * (a * (s + self.r) - self.r) - ut),
                -2.0 * h_ * Ct,
                -2.0 * e_ * Vt + 2.0 * e_ * p_ * a * Ct + e_ ** 2 * p_ / B_,
                -e_ * Ct + e_ * p_ * a * R - h_ * Vt,
            ]
        )

    def rebalance(self, full_states: np.ndarray, p: float, d: int, kappa: float) -> np.ndarray:
        """Map full (s, u, R, V, C) rows to reduced coordinates."""
        out = np.asarray(full_states, dtype=float)[:, :5].copy()
        if self.region is LrRegion.NOISE_FLOOR_BELOW:
            return out[:, [0, 2]]
        if self.region is LrRegion.BOUNDARY_E:
            dk = float(d) ** kappa
            out[:, 1] *= dk
            out[:, 3] *= dk * dk
            out[:, 4] *= dk
            return out
        out[:, 1] /= p
        out[:, 3] /= p * p
        out[:, 4] /= p
        return out

    def volterra_rhs(self, tau: float, y: np.ndarray) -> np.ndarray:
        """4D square-root lift (s, ub, x, y) of the above-resonance bulk."""
        if self.region not in (
            LrRegion.CONCENTRATED_ABOVE,
            LrRegion.NOISE_FLOOR_ABOVE,
            LrRegion.BOUNDARY_F,
        ):
            raise ValueError("Volterra lift applies to the above-resonance regions")
        c = self.constants
        e_, h_, p_ = c.eps_star, c.eta_star, c.p_star
        eta_bar = h_ * p_ / e_
        s, ub, x, yv = y
        a = self.alpha(s, x * x)
        return np.array(
            [
                -e_ * eta_bar * ub,
                e_ * (a * (s + self.r) - self.r - ub),
                -h_ * p_ * yv,
                -e_ * yv + e_ * a * x,
            ]
        )

    def evolve(self, initial: np.ndarray, tau_grid: np.ndarray, rtol: float = 1e-9) -> Trajectory:
        tau = np.asarray(tau_grid, dtype=float)
        grid = tau if tau[0] == 0.0 else np.concatenate(([0.0], tau))
        res = rk_adaptive(self.rhs, np.asarray(initial, float), grid, rtol=rtol, atol=1e-13)
        if not res.success:
            raise RuntimeError(f"reduced system integration failed: {res.message}")
        states = res.states if tau[0] == 0.0 else res.states[1:]
        return Trajectory(
            clock=Clock.SLOW, times=tau, states=states, state_names=self.state_names,
            slow_power=self.clock_power,
            metadata={"region": self.region.value, "constants": vars(self.constants)},
        )


def reduced_system(
    region: LrRegion,
    constants: ScalingConstants,
    r: float,
    exponents: ScalingExponents | None = None,
    frozen_alpha: bool = False,
) -> ReducedSystem:
    """Build the per-region reduced ODE object.

    Boundary E defaults to the state-dependent alpha(s, R) coupling (the
    exact leading-order reduction); frozen_alpha=True freezes alpha at
    the floor value, matching the boxed linear form.
    """
    if region is LrRegion.NOISE_FLOOR_BELOW:
        names: tuple[str, ...] = ("s", "R_perp")
        power = (
            1.0 - exponents.sigma + exponents.kappa if exponents is not None else float("nan")
        )
    elif region is LrRegion.BOUNDARY_E:
        names = ("s", "u_t", "R_perp", "V_t", "C_t")
        power = exponents.gamma if exponents is not None else float("nan")
    else:
        names = ("s", "u_b", "R_perp", "V_b", "C_b")
        power = exponents.gamma if exponents is not None else float("nan")
    fa = None
    if frozen_alpha:
        eta_eff = constants.eta_star / constants.B_star
        _, _, fa = equilibrium_slow(r, eta_eff)
    return ReducedSystem(
        region=region, state_names=names, clock_power=power,
        constants=constants, r=r, frozen_alpha=fa,
    )


def prepared_initial_state(s0: float, R0: float, params: LrParams) -> LrState:
    """Five-variable state with the fast block (u, V, C) at its
    quasi-steady values given (s0, R0).

    Used for adiabatic-tracking comparisons below resonance: starting on
    the slow manifold removes the O(1) fast transient that cold-start
    momentum (u = V = C = 0) would inject.
    """
    st = LrState(s0, 0.0, R0, 0.0, 0.0)
    al = st.alpha(params.r)
    p, eps, eta = params.p, params.eps, params.eta
    Nhat = params.d * p / params.B + (params.B - 1) / params.B * (p * al) ** 2 * R0
    f = p * (al * (s0 + params.r) - params.r)
    V0 = eps * Nhat / 2.0
    C0 = p * al * R0 - eta * Nhat / 2.0
    cap = math.sqrt(max(R0 * V0, 0.0))
    if abs(C0) > cap:
        C0 = math.copysign(cap * (1.0 - 1e-12), C0)
    return LrState(s0, f, R0, V0, C0)


def equilibrium_slow(r: float, eta_eff: float) -> tuple[float, float, float]:
    """Slow-manifold equilibrium (s*, R_perp*, alpha*).

    Solves the scalar self-consistency 2 log a = r^2 (1/a^2 - 1)
    + eta_eff / (2a) by Newton from a = 1 (bisection fallback), then
    s* = r (1/a - 1), R* = eta_eff / (2a). Residuals of all three
    equilibrium equations are checked below 1e-10.
    """
    if not 0.0 < eta_eff < 2.0:
        raise ValueError(f"eta_eff must be in (0, 2), got {eta_eff}")

    def g(a):
        return 2.0 * math.log(a) - r ** 2 * (1.0 / a ** 2 - 1.0) - eta_eff / (2.0 * a)

    def dg(a):
        return 2.0 / a + 2.0 * r ** 2 / a ** 3 + eta_eff / (2.0 * a ** 2)

    try:
        alpha = newton_1d(g, dg, 1.0, tol=1e-14)
    except RuntimeError:
        from .numerics import bisect_1d

        alpha = bisect_1d(g, 1.0 - 1e-12, 4.0, tol=1e-14)
    s = r * (1.0 / alpha - 1.0)
    R = eta_eff / (2.0 * alpha)
    resid = (
        abs(alpha * (s + r) - r),
        abs(R - eta_eff / (2.0 * alpha)),
        abs(alpha - math.exp(0.5 * ((s + r) ** 2 + R - r ** 2))),
    )
    if max(resid) > 1e-10:
        raise RuntimeError(f"equilibrium residuals too large: {resid}")
    return s, R, alpha


def jacobian_slow(
    s_star: float, R_star: float, eta_star: float, p_star: float, r: float
) -> tuple[np.ndarray, np.ndarray]:
    """Leading-order Jacobian of the slow manifold at its equilibrium.

    J* = -eta* p* alpha* [[1 + r^2, r/2], [2 r R*, 2 (1 + R*/2)]] with
    alpha* inferred from the equilibrium relation alpha*(s*+r) = r.
    This is the leading-order normalized form: the exact Jacobian of the
    slow-manifold RHS differs by O(eta_eff) factors (alpha* vs 1/alpha*
    inside some entries); the two agree as eta_eff -> 0.
    Both eigenvalues are real and negative (stable node).
    """
    alpha_star = r / (s_star + r)
    J = -eta_star * p_star * alpha_star * np.array(
        [[1.0 + r ** 2, r / 2.0], [2.0 * r * R_star, 2.0 * (1.0 + R_star / 2.0)]]
    )
    tr = J[0, 0] + J[1, 1]
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    disc = tr * tr - 4.0 * det
    sq = math.sqrt(max(disc, 0.0))
    eigs = np.array([(tr - sq) / 2.0, (tr + sq) / 2.0])
    return J, eigs


# ---------------------------------------------------------------------------
# Population KL
# ---------------------------------------------------------------------------


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def kl_pop(s: float, R_perp: float, params: LrParams, order: int = 40, verify: bool = False) -> float:
    """Expected KL from the Bayes conditional to the learned one.

    Tensor Gauss-Hermite over the two independent Gaussian directions
    (xi along mu, zeta along theta_perp); exact zero at the optimum.
    """
    val = _kl_raw(s, R_perp, params, order)
    if verify:
        val2 = _kl_raw(s, R_perp, params, 64)
        if abs(val - val2) > 1e-8 * max(1.0, abs(val)):
            raise RuntimeError(f"KL quadrature disagreement: {val} vs {val2}")
    return val


def _kl_raw(s: float, R_perp: float, params: LrParams, order: int) -> float:
    rule = gauss_hermite(order)
    x = rule.nodes
    w = rule.weights
    r, p, b = params.r, params.p, params.b_star
    theta_par = s + r
    xi = np.sqrt(2.0) * x  # N(0,1) nodes
    zeta = np.sqrt(2.0) * x
    XI, ZETA = np.meshgrid(xi, zeta, indexing="ij")
    W = np.outer(w, w) / np.pi
    sqR = math.sqrt(max(R_perp, 0.0))

    def kl_term(a, c):
        return expit(a) * (a - c) + _softplus(c) - _softplus(a)

    a1 = r * XI + b
    c1 = theta_par * XI + sqR * ZETA + b
    a2 = r ** 2 + r * XI + b
    c2 = theta_par * r + theta_par * XI + sqR * ZETA + b
    val = (1.0 - p) * np.sum(W * kl_term(a1, c1)) + p * np.sum(W * kl_term(a2, c2))
    return float(val)


def kl_normalized(s: float, R_perp: float, r: float) -> float:
    """G(s, R; r) = alpha - 1 - s r, the p -> 0 limit of KL/p."""
    alpha = math.exp(0.5 * ((s + r) ** 2 + R_perp - r ** 2))
    return alpha - 1.0 - s * r


# ---------------------------------------------------------------------------
# Heatmaps
# ---------------------------------------------------------------------------


def lr_heatmaps(
    kappa_grid: np.ndarray,
    gamma_grid: np.ndarray,
    sigma: float,
    constants: ScalingConstants,
    d: int,
    r: float = 2.0,
) -> list[dict]:
    """Limit loss floor and convergence-time exponent over (kappa, gamma).

    Below resonance: constant floor from the slow-manifold equilibrium
    (leading order eta*/(2B*)). Above resonance the floor vanishes
    polynomially; floor_value_or_exponent reports the exponent of the
    exact five-variable fixed point, 1-sigma+kappa-gamma (the direct
    two-term balance would give 1-sigma+kappa-2gamma, carried in
    naive_floor_exponent; the V->C->R noise route makes the true floor
    1/eps larger). Concentrated: exact zero (sentinel 0.0).
    T = max(gamma, 1-sigma+kappa) in all populated cells.
    """
    rows = []
    eta_eff = constants.eta_star / constants.B_star
    for k in np.asarray(kappa_grid, float):
        for g in np.asarray(gamma_grid, float):
            T = max(g, 1.0 - sigma + k)
            try:
                region = classify_lr_region(ScalingExponents(k, sigma, g))
            except ValueError:
                rows.append(
                    {"kappa": k, "gamma": g, "region_tag": "empty",
                     "floor_value_or_exponent": math.nan,
                     "naive_floor_exponent": math.nan, "T_exponent": T}
                )
                continue
            naive = math.nan
            if region in (LrRegion.NOISE_FLOOR_BELOW, LrRegion.BOUNDARY_E):
                _, floor, _ = equilibrium_slow(r, eta_eff)
                value = floor
            elif region is LrRegion.CONCENTRATED_ABOVE:
                value = 0.0
            else:  # above-resonance noise floor (and boundary F)
                value = 1.0 - sigma + k - g
                naive = 1.0 - sigma + k - 2.0 * g
            rows.append(
                {"kappa": k, "gamma": g, "region_tag": region.value,
                 "floor_value_or_exponent": value,
                 "naive_floor_exponent": naive, "T_exponent": T}
            )
    return rows
