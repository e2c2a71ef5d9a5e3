"""Routh-Hurwitz stability analysis of the LS main ODE.

Verdicts on the characteristic cubic, numeric eta_max via bisection
with bracket expansion, the companion-cubic spectrum, and the
timescale-ratio (Delta) report used to separate 1D from 3D regimes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ls_ode import DriftMatrix, build_main_matrix, char_poly
from .numerics import cubic_roots
from .scaling import (
    InstanceParams,
    ScalingConstants,
    ScalingExponents,
    instantiate,
)

__all__ = [
    "StabilityVerdict",
    "TimescaleReport",
    "routh_hurwitz",
    "verdict_for",
    "find_eta_max",
    "EtaMaxResult",
    "spectrum_report",
]

_CONDITION_NAMES = ("c1>0", "c2>0", "c3>0", "c1c2>c3")


@dataclass(frozen=True)
class StabilityVerdict:
    """Outcome of the four Routh-Hurwitz conditions on one cubic."""

    stable: bool
    conditions: tuple[bool, bool, bool, bool]
    binding: str | None               # failing condition with least slack, None if stable
    margin: float                     # min over conditions of the signed slack
    slack_values: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def slacks(self) -> dict[str, float]:
        return dict(zip(_CONDITION_NAMES, self.slack_values))


def routh_hurwitz(c1: float, c2: float, c3: float) -> StabilityVerdict:
    """All roots of z^3 + c1 z^2 + c2 z + c3 in the open left half plane
    iff c1 > 0, c2 > 0, c3 > 0 and c1 c2 > c3."""
    for name, v in (("c1", c1), ("c2", c2), ("c3", c3)):
        if not np.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v}")
    slacks = (float(c1), float(c2), float(c3), float(c1 * c2 - c3))
    conditions = tuple(s > 0.0 for s in slacks)
    stable = all(conditions)
    binding = None
    if not stable:
        failing = [(s, n) for s, n, ok in zip(slacks, _CONDITION_NAMES, conditions) if not ok]
        binding = min(failing)[1]
    return StabilityVerdict(
        stable=stable, conditions=conditions, binding=binding,
        margin=float(min(slacks)), slack_values=slacks,
    )


def verdict_for(params: InstanceParams, eta: float | None = None) -> StabilityVerdict:
    return routh_hurwitz(*char_poly(build_main_matrix(params, eta=eta)))


@dataclass
class EtaMaxResult:
    eta_max: float
    binding: str | None           # condition failing just above eta_max
    sign_changes: list[float]     # all verdict flips seen on the sampled bracket
    monotone: bool


def find_eta_max(
    exponents: ScalingExponents,
    constants: ScalingConstants,
    d: int,
    rel_tol: float = 1e-6,
) -> EtaMaxResult:
    """Largest stable learning rate by bisection on eta in [1e-12, 10].

    The upper bracket end doubles until unstable (capped at 10).
    Monotonicity of the verdict in eta is checked empirically on a
    log-spaced sample of the bracket; any extra sign changes are
    reported rather than silently ignored, and eta_max is then the
    first instability.
    """
    exps = ScalingExponents(exponents.kappa, exponents.sigma, exponents.gamma, alpha_eta=0.0)
    params = instantiate(exps, constants, d)  # eta placeholder, swept below

    def stable_at(eta: float) -> bool:
        return verdict_for(params, eta=eta).stable

    lo = 1e-12
    if not stable_at(lo):
        return EtaMaxResult(eta_max=float("nan"), binding=None, sign_changes=[], monotone=True)
    # initial bracket [1e-12, 10]; the upper end keeps doubling until the
    # verdict flips (hard cap 1e6 to guarantee termination)
    hi = 2e-12
    while hi < 1e6 and stable_at(hi):
        lo = hi
        hi = hi * 2.0
    if stable_at(hi):  # stable everywhere up to the hard cap
        return EtaMaxResult(eta_max=hi, binding=None, sign_changes=[], monotone=True)

    # monotonicity scan of the full bracket
    sample = np.geomspace(1e-12, hi, 64)
    flags = [stable_at(e) for e in sample]
    changes = [
        float(sample[i + 1]) for i in range(len(sample) - 1) if flags[i] != flags[i + 1]
    ]
    monotone = len(changes) <= 1
    if not monotone:
        hi = changes[0]  # first instability wins
        lo = min(lo, hi / 2.0)

    while (hi - lo) > rel_tol * hi:
        mid = np.sqrt(lo * hi)
        if stable_at(mid):
            lo = mid
        else:
            hi = mid
    eta_max = 0.5 * (lo + hi)
    binding = verdict_for(params, eta=hi).binding
    return EtaMaxResult(eta_max=eta_max, binding=binding, sign_changes=changes, monotone=monotone)


@dataclass(frozen=True)
class TimescaleReport:
    rho: float
    tau_learn: float              # 1 / (eta B1)
    Delta: float                  # eta B1 / rho = retention / learning timescale ratio
    eigenvalues: tuple[complex, complex, complex]
    spectral_type: str            # "all-at-rho" | "one-slow-two-fast"


def spectrum_report(matrix: DriftMatrix) -> TimescaleReport:
    """Eigenvalues from the companion cubic plus the Delta diagnostics.

    spectral_type is "one-slow-two-fast" when exactly one eigenvalue
    has modulus below 0.1 * rho (finite-d proxy for the o(rho)
    statement; heuristic threshold).
    """
    c1, c2, c3 = char_poly(matrix)
    lam = cubic_roots(c1, c2, c3)
    rho = matrix.drift.rho
    eta = matrix.params.eta
    B1 = matrix.factors.B1
    slow = np.abs(lam) < 0.1 * rho
    spectral_type = "one-slow-two-fast" if int(slow.sum()) == 1 else "all-at-rho"
    return TimescaleReport(
        rho=rho,
        tau_learn=1.0 / (eta * B1),
        Delta=eta * B1 / rho,
        eigenvalues=tuple(lam),
        spectral_type=spectral_type,
    )
