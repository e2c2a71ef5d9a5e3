"""Seeded Monte Carlo ground truth for the rare-class logistic model.

Simulates discrete SGD-with-momentum on the two-class Gaussian mixture
with the bias pinned at the Bayes value, recording the five-variable
state (s, u, R_perp, V_perp, C_perp) against the signal direction.
Every minibatch is active (no gating); the signal sparsity lives in the
rare-class labels, which are sampled first, then the Gaussians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .lr_dynamics import LrParams, LrState, coefficients_exact
from .numerics import RngStream

__all__ = [
    "LrMcConfig",
    "LrMcEnsembleResult",
    "simulate_lr",
    "one_step_lr_delta",
    "gradient_moments_mc",
]

_CH_MU, _CH_LABELS, _CH_Z = 0, 1, 2
_BUDGET = 10 ** 9


@dataclass(frozen=True)
class LrMcConfig:
    lr_params: LrParams
    n_seeds: int
    max_steps: int
    master_seed: int
    record_stride: int = 1

    def __post_init__(self):
        if self.n_seeds < 1 or self.max_steps < 1:
            raise ValueError("need n_seeds >= 1 and max_steps >= 1")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.lr_params.B * self.lr_params.d > _BUDGET:
            raise ValueError("B*d exceeds the per-step budget")


@dataclass
class LrMcEnsembleResult:
    steps: np.ndarray
    mean: np.ndarray   # (T, 5) columns s, u, R_perp, V_perp, C_perp
    se: np.ndarray
    mean_alpha: np.ndarray
    n_seeds: int
    rare_fraction: float
    diverged: list[int] = field(default_factory=list)
    config: LrMcConfig | None = None

    STATE_NAMES = ("s", "u", "R_perp", "V_perp", "C_perp")

    def column(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        j = self.STATE_NAMES.index(name)
        return self.mean[:, j], self.se[:, j]


def _project(theta, m, mu_hat, r):
    tp = theta @ mu_hat
    up = m @ mu_hat
    s = tp - r
    R = theta @ theta - tp * tp
    V = m @ m - up * up
    C = theta @ m - tp * up
    return s, up, max(R, 0.0), max(V, 0.0), C


def _simulate_seed(config: LrMcConfig, seed_idx: int) -> tuple[np.ndarray, float, int, bool]:
    p = config.lr_params
    base = RngStream(config.master_seed, seed_idx)
    mu_hat = base.child(_CH_MU).sphere(p.d)
    mu = p.r * mu_hat
    lstream = base.child(_CH_LABELS)
    zstream = base.child(_CH_Z)
    b = p.b_star
    beta, eps, eta, B, d = p.beta, p.eps, p.eta, p.B, p.d
    theta = np.zeros(d)
    m = np.zeros(d)
    n_rec = config.max_steps // config.record_stride
    out = np.empty((n_rec + 1, 5))
    out[0] = _project(theta, m, mu_hat, p.r)
    rare = 0
    diverged = False
    rec = 0
    for k in range(1, config.max_steps + 1):
        labels = (lstream.uniforms(B) < p.p).astype(float)
        rare += int(labels.sum())
        Z = zstream.gaussians(B * d).reshape(B, d)
        X = Z + labels[:, None] * mu
        resid = expit(X @ theta + b) - labels
        g = (X.T @ resid) / B
        m = beta * m + eps * g
        theta = theta - eta * m
        if k % config.record_stride == 0:
            rec += 1
            out[rec] = _project(theta, m, mu_hat, p.r)
            if not np.isfinite(out[rec]).all() or out[rec, 2] > 1e12:
                out[rec:] = out[rec]
                diverged = True
                break
    return out, rare / (config.max_steps * B), config.max_steps, diverged


def simulate_lr(config: LrMcConfig) -> LrMcEnsembleResult:
    trajs = []
    rare = 0.0
    diverged = []
    for s in range(config.n_seeds):
        traj, rf, _, bad = _simulate_seed(config, s)
        trajs.append(traj)
        rare += rf
        if bad:
            diverged.append(s)
    stack = np.stack(trajs)
    mean = stack.mean(axis=0)
    se = (
        stack.std(axis=0, ddof=1) / math.sqrt(config.n_seeds)
        if config.n_seeds > 1
        else np.zeros_like(mean)
    )
    r = config.lr_params.r
    alpha = np.exp(0.5 * ((stack[:, :, 0] + r) ** 2 + stack[:, :, 2] - r ** 2)).mean(axis=0)
    steps = np.arange(0, config.max_steps + 1, config.record_stride)
    return LrMcEnsembleResult(
        steps=steps[: len(mean)],
        mean=mean,
        se=se,
        mean_alpha=alpha,
        n_seeds=config.n_seeds,
        rare_fraction=rare / config.n_seeds,
        diverged=diverged,
        config=config,
    )


def _realize_state(state: LrState, params: LrParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Concrete (theta, m, mu) on coordinate axes with the prescribed
    five-variable state; mu_hat = e1, the orthogonal block on e2/e3."""
    d, r = params.d, params.r
    theta = np.zeros(d)
    m = np.zeros(d)
    theta[0] = state.s + r
    m[0] = state.u
    sqR = math.sqrt(state.R_perp)
    theta[1] = sqR
    if state.R_perp > 0:
        m[1] = state.C_perp / sqR
        m[2] = math.sqrt(max(state.V_perp - state.C_perp ** 2 / state.R_perp, 0.0))
    else:
        m[1] = math.sqrt(state.V_perp)
    mu = np.zeros(d)
    mu[0] = r
    return theta, m, mu


def one_step_lr_delta(
    params: LrParams,
    state: LrState,
    n_replicates: int,
    seed: int,
    chunk: int = 1 << 13,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo E[Delta(s, u, R, V, C)] over one minibatch step at a
    fixed realized (theta, m); oracle for drift_5var."""
    theta, m, mu = _realize_state(state, params)
    mu_hat = mu / params.r
    b = params.b_star
    beta, eps, eta, B, d = params.beta, params.eps, params.eta, params.B, params.d
    base = RngStream(seed)
    s0 = np.array(_project(theta, m, mu_hat, params.r))
    sums = np.zeros(5)
    sums2 = np.zeros(5)
    done = 0
    ci = 0
    while done < n_replicates:
        n = min(chunk, n_replicates - done)
        stream = base.child(ci)
        ci += 1
        labels = (stream.uniforms(n * B) < params.p).astype(float).reshape(n, B)
        Z = stream.gaussians(n * B * d).reshape(n, B, d)
        X = Z + labels[:, :, None] * mu
        resid = expit(np.einsum("nbd,d->nb", X, theta) + b) - labels
        g = np.einsum("nbd,nb->nd", X, resid) / B
        m_new = beta * m[None, :] + eps * g
        theta_new = theta[None, :] - eta * m_new
        tp = theta_new @ mu_hat
        up = m_new @ mu_hat
        s_new = tp - params.r
        R_new = np.einsum("nd,nd->n", theta_new, theta_new) - tp * tp
        V_new = np.einsum("nd,nd->n", m_new, m_new) - up * up
        C_new = np.einsum("nd,nd->n", theta_new, m_new) - tp * up
        delta = np.column_stack([s_new, up, R_new, V_new, C_new]) - s0[None, :]
        sums += delta.sum(axis=0)
        sums2 += (delta * delta).sum(axis=0)
        done += n
    mean = sums / n_replicates
    var = np.maximum(sums2 / n_replicates - mean ** 2, 0.0)
    return mean, np.sqrt(var / n_replicates)


def gradient_moments_mc(
    params: LrParams,
    state: LrState,
    n_samples: int,
    seed: int,
    chunk: int = 1 << 14,
) -> dict:
    """Empirical per-sample gradient mean and orthogonal second moment.

    Returns projections of E[g] on mu_hat and one fixed orthogonal
    direction, plus E|g_perp|^2, with standard errors; the Stein check
    compares them against A theta + Bcoef mu and (d-1) D0 + R Dtheta.
    """
    theta, m, mu = _realize_state(state, params)
    d = params.d
    mu_hat = mu / params.r
    base = RngStream(seed)
    v_perp = np.zeros(d)
    v_perp[1] = 1.0  # orthogonal direction carrying the theta_perp component
    b = params.b_star
    acc = {
        "g_mu": 0.0, "g_mu2": 0.0,
        "g_perp_dir": 0.0, "g_perp_dir2": 0.0,
        "g_perp_sq": 0.0, "g_perp_sq2": 0.0,
        "rare": 0,
    }
    done = 0
    ci = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        stream = base.child(ci)
        ci += 1
        labels = (stream.uniforms(n) < params.p).astype(float)
        acc["rare"] += int(labels.sum())
        Z = stream.gaussians(n * d).reshape(n, d)
        X = Z + labels[:, None] * mu
        resid = expit(X @ theta + b) - labels
        g = resid[:, None] * X
        g_mu = g @ mu_hat
        g_dir = g @ v_perp
        g_perp = g - g_mu[:, None] * mu_hat[None, :]
        g_perp_sq = np.einsum("nd,nd->n", g_perp, g_perp)
        for key, val in (("g_mu", g_mu), ("g_perp_dir", g_dir), ("g_perp_sq", g_perp_sq)):
            acc[key] += float(val.sum())
            acc[key + "2"] += float((val * val).sum())
        done += n
    out = {}
    for key in ("g_mu", "g_perp_dir", "g_perp_sq"):
        mean = acc[key] / n_samples
        var = max(acc[key + "2"] / n_samples - mean ** 2, 0.0)
        out[key] = mean
        out["se_" + key] = math.sqrt(var / n_samples)
    out["rare_fraction"] = acc["rare"] / n_samples
    out["se_rare"] = math.sqrt(params.p * (1 - params.p) / n_samples)
    co = coefficients_exact(state, params)
    theta_par = state.s + params.r
    out["pred_g_mu"] = co.A * theta_par + co.Bcoef * params.r
    out["pred_g_perp_dir"] = co.A * math.sqrt(state.R_perp)
    out["pred_g_perp_sq"] = (d - 1) * co.D0 + state.R_perp * co.Dtheta
    return out
