"""Co-scaling ansatz and sparse-batching primitives.

Maps exponent points (kappa, sigma, gamma, alpha_eta) and prefactors
(p*, B*, eps*, eta*) to concrete instance parameters (p, B, beta, eta)
at a given dimension d, and provides the closed-form batch scaling
factors, geometric retention/drift coefficients, and the phase-region
classifier of the (kappa, gamma) plane.

All quantities are plain floats in closed form; (1-p)^B is always
evaluated in the log domain so that dense regimes (pB >> 1) never
underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

__all__ = [
    "ScalingExponents",
    "ScalingConstants",
    "InstanceParams",
    "BatchFactors",
    "RetentionDrift",
    "Region",
    "instantiate",
    "batch_factors",
    "retention_drift",
    "classify_region",
    "eta_max_exponent",
    "resonance_gamma",
    "BOUNDARY_TOL",
]

BOUNDARY_TOL = 1e-12


class Region(Enum):
    """Phase regions of the (kappa, gamma) plane at fixed sigma.

    A..F are the six interiors; the remaining tags are the codim-1
    boundary rays meeting the triple point (kappa, gamma) = (sigma, 1),
    plus the noise-character line kappa = sigma - 1.
    """

    A = "concentrated"
    B = "dense_below"
    C = "dense_above"
    D = "memoryless_sparse"
    E = "sparse_below"
    F = "sparse_above"
    RESONANCE_DENSE = "resonance_dense"
    RESONANCE_SPARSE = "resonance_sparse"
    KAPPA_EQ_SIGMA_ABOVE = "kappa_eq_sigma_above"
    KAPPA_EQ_SIGMA_BELOW = "kappa_eq_sigma_below"
    TRIPLE_POINT = "triple_point"
    NOISE_CHARACTER_LINE = "noise_character_line"

    @property
    def is_boundary(self) -> bool:
        return self not in (Region.A, Region.B, Region.C, Region.D, Region.E, Region.F)


@dataclass(frozen=True)
class ScalingExponents:
    """Power-law exponents: p ~ d^-kappa, B ~ d^sigma, eps ~ d^-gamma, eta ~ d^-alpha_eta.

    alpha_eta=None means "derive from the region's binding stability
    constraint" (sigma-1 below resonance, kappa-gamma above).
    """

    kappa: float
    sigma: float
    gamma: float
    alpha_eta: float | None = None

    def __post_init__(self):
        for name in ("kappa", "sigma", "gamma"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.alpha_eta is not None and not math.isfinite(self.alpha_eta):
            raise ValueError(f"alpha_eta must be finite, got {self.alpha_eta}")

    def resolved_alpha_eta(self) -> float:
        if self.alpha_eta is not None:
            return self.alpha_eta
        return -eta_max_exponent(classify_region(self), self)


@dataclass(frozen=True)
class ScalingConstants:
    """O(1) prefactors of the co-scaling ansatz."""

    p_star: float = 1.0
    B_star: float = 1.0
    eps_star: float = 1.0
    eta_star: float = 1.0

    def __post_init__(self):
        for name in ("p_star", "B_star", "eps_star", "eta_star"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")

    def validate_for(self, exponents: ScalingExponents) -> None:
        if exponents.gamma == 0.0 and self.eps_star > 1.0:
            raise ValueError(
                f"eps_star={self.eps_star} > 1 with gamma=0 is not a valid decay rate"
            )


@dataclass(frozen=True)
class InstanceParams:
    """Concrete optimizer/model parameters at one dimension d."""

    d: int
    p: float
    B: int
    beta: float
    eta: float
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def eps(self) -> float:
        return 1.0 - self.beta

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"d must be >= 2, got {self.d}")
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"p must be in (0,1], got {self.p}")
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must be in [0,1), got {self.beta}")
        if not self.eta > 0.0:
            raise ValueError(f"eta must be > 0, got {self.eta}")


def instantiate(
    exponents: ScalingExponents, constants: ScalingConstants, d: int
) -> InstanceParams:
    """Evaluate the ansatz at dimension d.

    p and eps are clamped at 1 with a recorded warning instead of
    erroring so that full-plane sweeps never abort at the gamma=0 /
    kappa=0 corners; B = ceil(B* d^sigma); beta = 1 - eps exactly.
    """
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    constants.validate_for(exponents)
    warnings: list[str] = []
    p_raw = constants.p_star * d ** (-exponents.kappa)
    p = p_raw
    if p_raw > 1.0:
        warnings.append(f"p clamped from {p_raw:.6g} to 1")
        p = 1.0
    B = math.ceil(constants.B_star * d ** exponents.sigma)
    eps_raw = constants.eps_star * d ** (-exponents.gamma)
    eps = eps_raw
    if eps_raw > 1.0:
        warnings.append(f"eps clamped from {eps_raw:.6g} to 1")
        eps = 1.0
    alpha = exponents.resolved_alpha_eta()
    eta = constants.eta_star * d ** (-alpha)
    return InstanceParams(d=d, p=p, B=B, beta=1.0 - eps, eta=eta, warnings=tuple(warnings))


@dataclass(frozen=True)
class BatchFactors:
    """Active-batch moment scalings of the gated minibatch gradient."""

    P_batch: float
    Q_batch: float
    B1: float
    B_diag: float
    B_cross: float
    B2: float


def batch_factors(p: float, B: int, d: int) -> BatchFactors:
    """Closed-form batch factors at (p, B, d).

    Q = (1-p)^B via exp(B log1p(-p)); B1 = p/P; B_diag = B1/B;
    B_cross = p(B-1) B_diag; B2 = (d+2) B_diag + B_cross.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must be in (0,1], got {p}")
    if B < 1:
        raise ValueError(f"B must be >= 1, got {B}")
    if p == 1.0:
        Q = 0.0
    else:
        Q = math.exp(B * math.log1p(-p))
    P = -math.expm1(B * math.log1p(-p)) if p < 1.0 else 1.0
    B1 = p / P
    B_diag = B1 / B
    B_cross = p * (B - 1) * B_diag
    B2 = (d + 2) * B_diag + B_cross
    return BatchFactors(P_batch=P, Q_batch=Q, B1=B1, B_diag=B_diag, B_cross=B_cross, B2=B2)


@dataclass(frozen=True)
class RetentionDrift:
    """Geometric-waiting-time retention factors and drift coefficients.

    All are expectations over K ~ Geom(P_batch) of products of beta^K
    and the geometric drift sums S_K = beta(1-beta^K)/(1-beta),
    S_{K-1} = beta(1-beta^{K-1})/(1-beta).
    """

    beta_bar1: float      # E[beta^K]
    beta_bar2: float      # E[beta^{2K}]
    delta_theta: float    # E[S_K]
    delta_g: float        # E[S_{K-1}]
    delta_theta2: float   # E[S_K^2]
    delta_g2: float       # E[S_{K-1}^2]
    delta_m1_theta: float  # E[beta^K S_K]
    delta_m1_g: float      # E[beta^K S_{K-1}]
    delta_theta_g: float   # E[S_K S_{K-1}]
    rho: float            # eps / (P_batch + eps)
    P_batch: float
    beta: float


def retention_drift(beta: float, P_batch: float) -> RetentionDrift:
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must be in [0,1), got {beta}")
    if not 0.0 < P_batch <= 1.0:
        raise ValueError(f"P_batch must be in (0,1], got {P_batch}")
    P = P_batch
    Q = 1.0 - P
    eps = 1.0 - beta
    den1 = 1.0 - Q * beta
    den2 = 1.0 - Q * beta * beta
    beta_bar1 = P * beta / den1
    beta_bar2 = P * beta * beta / den2
    delta_theta = beta / den1
    delta_g = Q * beta / den1
    delta_theta2 = beta * beta * (1.0 + Q * beta) / (den1 * den2)
    delta_g2 = Q * delta_theta2
    delta_m1_theta = P * beta * beta / (den1 * den2)
    delta_m1_g = P * Q * beta ** 3 / (den1 * den2)
    delta_theta_g = Q * beta * beta * (1.0 + beta) / (den1 * den2)
    rho = eps / (P + eps)
    return RetentionDrift(
        beta_bar1=beta_bar1,
        beta_bar2=beta_bar2,
        delta_theta=delta_theta,
        delta_g=delta_g,
        delta_theta2=delta_theta2,
        delta_g2=delta_g2,
        delta_m1_theta=delta_m1_theta,
        delta_m1_g=delta_m1_g,
        delta_theta_g=delta_theta_g,
        rho=rho,
        P_batch=P,
        beta=beta,
    )


def kappa_eff(exponents: ScalingExponents) -> float:
    return max(0.0, exponents.kappa - exponents.sigma)


def nu_exponent(exponents: ScalingExponents) -> float:
    return max(0.0, exponents.gamma - kappa_eff(exponents))


def resonance_gamma(kappa: float, sigma: float) -> float:
    """gamma on the resonance line at this kappa."""
    return 1.0 - sigma + kappa


def classify_region(exponents: ScalingExponents, tol: float = BOUNDARY_TOL) -> Region:
    """Assign the unique region tag of an exponent point.

    Boundary tags fire only when the defining equality holds within
    tol; interior sweeps therefore land on A..F by construction.
    """
    k, s, g = exponents.kappa, exponents.sigma, exponents.gamma
    res = resonance_gamma(k, s)
    on_res = abs(g - res) <= tol
    on_ks = abs(k - s) <= tol
    on_nc = abs(k - (s - 1.0)) <= tol

    if on_ks and abs(g - 1.0) <= tol:
        return Region.TRIPLE_POINT
    if on_ks:
        return Region.KAPPA_EQ_SIGMA_ABOVE if g > 1.0 else Region.KAPPA_EQ_SIGMA_BELOW
    if on_res:
        return Region.RESONANCE_DENSE if k < s else Region.RESONANCE_SPARSE
    if on_nc:
        return Region.NOISE_CHARACTER_LINE

    if k < s - 1.0:
        return Region.A
    if k < s:
        return Region.B if g < res else Region.C
    # sparse half kappa > sigma
    if g <= k - s + tol:
        return Region.D
    return Region.E if g < res else Region.F


_NOISE_LIMITED = {Region.B, Region.D, Region.E, Region.KAPPA_EQ_SIGMA_BELOW}
_CORR_LIMITED = {
    Region.A,
    Region.C,
    Region.F,
    Region.KAPPA_EQ_SIGMA_ABOVE,
    Region.NOISE_CHARACTER_LINE,
}


def eta_max_exponent(region: Region, exponents: ScalingExponents) -> float:
    """Exponent e with eta_max ~ d^e for the region's binding constraint.

    Noise-limited regions (B, D, E) give sigma-1; correlation-limited
    regions (A, C, F) give kappa-gamma. On the resonance rays and the
    triple point both formulas coincide at sigma-1.
    """
    k, s, g = exponents.kappa, exponents.sigma, exponents.gamma
    if region in _NOISE_LIMITED:
        return s - 1.0
    if region in _CORR_LIMITED:
        return k - g
    # resonance line (either half) and triple point: both ceilings agree
    return s - 1.0
