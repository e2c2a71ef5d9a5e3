"""Seeded Monte Carlo ground truth for the gated least-squares model.

Simulates the discrete SGD-with-momentum iterates on Bernoulli-gated
isotropic Gaussian data and records the empirical second moments
(R, V, C) after every active update. Two step modes:

* fast-forward: sample the inter-arrival K ~ Geom(P_batch), apply the
  closed-form empty-stretch drift, then one active update (distribution
  identical to explicit stepping, cost independent of sparsity);
* explicit-steps: walk every minibatch, including empty ones.

Each seed owns counter-based substreams (theta*, K, N, features), so
ensembles are bitwise reproducible regardless of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import BinomialTable, RngStream, TruncatedBinomial
from .scaling import InstanceParams, batch_factors

__all__ = [
    "McConfig",
    "McEnsembleResult",
    "simulate",
    "fast_forward_step",
    "one_step_delta_moments",
]

_CH_THETA_STAR, _CH_K, _CH_N, _CH_X = 0, 1, 2, 3
_BUDGET = 10 ** 9


@dataclass(frozen=True)
class McConfig:
    params: InstanceParams
    n_seeds: int
    max_active_updates: int
    master_seed: int
    theta_star_norm: float = 1.0
    mode: str = "fast-forward"  # or "explicit-steps"
    budget_override: bool = False

    def __post_init__(self):
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        if self.max_active_updates < 1:
            raise ValueError("max_active_updates must be >= 1")
        if self.mode not in ("fast-forward", "explicit-steps"):
            raise ValueError(f"unknown mode {self.mode!r}")
        cost = self.params.B * self.params.d
        if cost > _BUDGET and not self.budget_override:
            raise ValueError(
                f"B*d = {cost:.3g} exceeds the per-step budget {_BUDGET:g}; "
                "pass budget_override=True to force"
            )


@dataclass
class McEnsembleResult:
    """Per-active-update ensemble mean and standard error of (R, V, C).

    Row i is active-update index i (row 0 is the initial state).
    per_seed holds the raw (seeds, T, 3) stack when requested.
    """

    index: np.ndarray
    mean: np.ndarray        # (T, 3) columns R, V, C
    se: np.ndarray          # (T, 3)
    n_seeds: int
    diverged: list[int] = field(default_factory=list)
    config: McConfig | None = None
    per_seed: np.ndarray | None = None

    def column(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        j = ("R", "V", "C").index(name)
        return self.mean[:, j], self.se[:, j]


def fast_forward_step(
    theta: np.ndarray,
    m: np.ndarray,
    K: int,
    batch: np.ndarray,
    theta_star: np.ndarray,
    params: InstanceParams,
) -> tuple[np.ndarray, np.ndarray]:
    """One active-to-active update: K-1 empty-step drift + active update.

    batch holds the N >= 1 active feature rows (N, d); the 1/B batch
    normalization uses the full batch size. K = 1 means no drift.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    beta, eps, eta, B = params.beta, params.eps, params.eta, params.B
    if beta == 0.0:
        w_drift = 0.0
        decay = 0.0
    else:
        w_drift = beta * (1.0 - beta ** (K - 1)) / eps
        decay = beta ** K
    theta_minus = theta - eta * w_drift * m
    e = theta_minus - theta_star
    g = batch.T @ (batch @ e) / B
    m_new = decay * m + eps * g
    theta_new = theta_minus - eta * m_new
    return theta_new, m_new


def _record(theta, m, theta_star, out, i):
    e = theta - theta_star
    out[i, 0] = e @ e
    out[i, 1] = m @ m
    out[i, 2] = e @ m


def _simulate_seed_ff(
    config: McConfig, seed_idx: int, rotation: np.ndarray | None = None
) -> tuple[np.ndarray, bool]:
    p = config.params
    base = RngStream(config.master_seed, seed_idx)
    fac = batch_factors(p.p, p.B, p.d)
    trunc = TruncatedBinomial(p.B, p.p)
    theta_star = base.child(_CH_THETA_STAR).sphere(p.d) * config.theta_star_norm
    if rotation is not None:
        theta_star = rotation @ theta_star
    n = config.max_active_updates
    K_all = base.child(_CH_K).geometric(n, fac.P_batch)
    N_all = trunc.sample(base.child(_CH_N), n)
    xstream = base.child(_CH_X)
    theta = np.zeros(p.d)
    m = np.zeros(p.d)
    out = np.empty((n + 1, 3))
    _record(theta, m, theta_star, out, 0)
    diverged = False
    for i in range(n):
        N = int(N_all[i])
        X = xstream.gaussians(N * p.d).reshape(N, p.d)
        theta, m = fast_forward_step(theta, m, int(K_all[i]), X, theta_star, p)
        _record(theta, m, theta_star, out, i + 1)
        if not np.isfinite(out[i + 1]).all() or out[i + 1, 0] > 1e12:
            out[i + 1:] = out[i + 1]
            diverged = True
            break
    return out, diverged


def _simulate_seed_explicit(
    config: McConfig,
    seed_idx: int,
    rotation: np.ndarray | None = None,
    minibatch_trace: list | None = None,
) -> tuple[np.ndarray, bool]:
    p = config.params
    base = RngStream(config.master_seed, seed_idx)
    full = BinomialTable(p.B, p.p, min_k=0)
    theta_star = base.child(_CH_THETA_STAR).sphere(p.d) * config.theta_star_norm
    if rotation is not None:
        theta_star = rotation @ theta_star
    nstream = base.child(_CH_N)
    xstream = base.child(_CH_X)
    beta, eps, eta, B = p.beta, p.eps, p.eta, p.B
    theta = np.zeros(p.d)
    m = np.zeros(p.d)
    n = config.max_active_updates
    out = np.empty((n + 1, 3))
    _record(theta, m, theta_star, out, 0)
    done = 0
    diverged = False
    # draw N in blocks to keep stream usage chunky but deterministic
    block = max(64, int(4.0 / max(batch_factors(p.p, p.B, p.d).P_batch, 1e-12)))
    pending: list[int] = []
    while done < n and not diverged:
        if not pending:
            pending = list(full.sample(nstream, block))
        N = int(pending.pop(0))
        if N == 0:
            m_prev = m
            m = beta * m
            theta = theta - eta * m
            if minibatch_trace is not None:
                minibatch_trace.append(("empty", m_prev.copy(), m.copy()))
        else:
            X = xstream.gaussians(N * p.d).reshape(N, p.d)
            e = theta - theta_star
            g = X.T @ (X @ e) / B
            m = beta * m + eps * g
            theta = theta - eta * m
            done += 1
            _record(theta, m, theta_star, out, done)
            if minibatch_trace is not None:
                minibatch_trace.append(("active", None, m.copy()))
            if not np.isfinite(out[done]).all() or out[done, 0] > 1e12:
                out[done:] = out[done]
                diverged = True
    return out, diverged


def simulate(
    config: McConfig,
    rotation: np.ndarray | None = None,
    minibatch_trace: list | None = None,
    keep_per_seed: bool = False,
) -> McEnsembleResult:
    """Run the seed ensemble and aggregate (R, V, C) moments.

    rotation (d x d orthogonal) optionally rotates theta*; used by the
    isotropy checks. minibatch_trace captures per-minibatch momentum in
    explicit mode (seed 0 only) for the empty-batch law test.
    """
    runner = _simulate_seed_ff if config.mode == "fast-forward" else _simulate_seed_explicit
    trajs = []
    diverged = []
    for s in range(config.n_seeds):
        if config.mode == "explicit-steps":
            trace = minibatch_trace if s == 0 else None
            traj, bad = runner(config, s, rotation, trace)
        else:
            traj, bad = runner(config, s, rotation)
        trajs.append(traj)
        if bad:
            diverged.append(s)
    stack = np.stack(trajs)  # (seeds, T, 3)
    mean = stack.mean(axis=0)
    if config.n_seeds > 1:
        se = stack.std(axis=0, ddof=1) / math.sqrt(config.n_seeds)
    else:
        se = np.zeros_like(mean)
    return McEnsembleResult(
        index=np.arange(config.max_active_updates + 1),
        mean=mean,
        se=se,
        n_seeds=config.n_seeds,
        diverged=diverged,
        config=config,
        per_seed=stack if keep_per_seed else None,
    )


def one_step_delta_moments(
    params: InstanceParams,
    state: tuple[float, float, float],
    n_replicates: int,
    seed: int,
    chunk: int = 1 << 15,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo E[Delta(R, V, C)] over one active-to-active update.

    The pre-update (theta, m) is a fixed pair realized on coordinate
    axes with the prescribed moments (isotropy makes the basis choice
    irrelevant): theta - theta* = sqrt(R) e1, m = (C/sqrt(R)) e1 +
    sqrt(V - C^2/R) e2. Returns (mean, se) of the increments, to be
    compared against DriftMatrix @ (R, V, C).
    """
    R, V, C = state
    if R <= 0:
        raise ValueError("needs R > 0 to realize the correlation")
    if C * C > R * V * (1.0 + 1e-12):
        raise ValueError("C^2 must not exceed R*V")
    d = params.d
    e = np.zeros(d)
    e[0] = math.sqrt(R)
    m = np.zeros(d)
    m[0] = C / math.sqrt(R)
    m[1] = math.sqrt(max(V - C * C / R, 0.0))
    fac = batch_factors(params.p, params.B, params.d)
    trunc = TruncatedBinomial(params.B, params.p)
    base = RngStream(seed)
    beta, eps, eta, B = params.beta, params.eps, params.eta, params.B

    sums = np.zeros(3)
    sums2 = np.zeros(3)
    done = 0
    ci = 0
    while done < n_replicates:
        nrep = min(chunk, n_replicates - done)
        stream = base.child(ci)
        ci += 1
        K = stream.geometric(nrep, fac.P_batch).astype(float)
        N = trunc.sample(stream, nrep)
        if beta == 0.0:
            w_drift = np.zeros(nrep)
            decay = np.zeros(nrep)
        else:
            w_drift = beta * (1.0 - beta ** (K - 1.0)) / eps
            decay = beta ** K
        deltas = np.empty((nrep, 3))
        row = 0
        order = np.argsort(N, kind="stable")
        N_sorted = N[order]
        bounds = np.searchsorted(N_sorted, np.unique(N_sorted), side="left")
        groups = np.split(order, bounds[1:])
        for idx in groups:
            Ng = int(N[idx[0]])
            cnt = len(idx)
            X = stream.gaussians(cnt * Ng * d).reshape(cnt, Ng, d)
            wd = w_drift[idx][:, None]
            dc = decay[idx][:, None]
            e_drift = e[None, :] - eta * wd * m[None, :]
            ge = np.einsum("cnd,cd->cn", X, e_drift)
            g = np.einsum("cnd,cn->cd", X, ge) / B
            m_new = dc * m[None, :] + eps * g
            e_new = e_drift - eta * m_new
            dR = np.einsum("cd,cd->c", e_new, e_new) - R
            dV = np.einsum("cd,cd->c", m_new, m_new) - V
            dC = np.einsum("cd,cd->c", e_new, m_new) - C
            deltas[idx] = np.column_stack([dR, dV, dC])
            row += cnt
        sums += deltas.sum(axis=0)
        sums2 += (deltas * deltas).sum(axis=0)
        done += nrep
    mean = sums / n_replicates
    var = np.maximum(sums2 / n_replicates - mean ** 2, 0.0)
    se = np.sqrt(var / n_replicates)
    return mean, se
