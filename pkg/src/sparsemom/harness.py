"""Experiment orchestration: configs, sweeps, reports, artifact files.

Every run writes CSV tables plus a versioned JSON manifest carrying the
tool version, a hash of the canonical config, wall time, and warnings.
Stochastic runs always require an explicit master seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .ls_limits import compare_to_limit, evolve_limit, select_limit
from .ls_mc import McConfig, simulate
from .ls_ode import build_main_matrix, evolve_linear, MomentState
from .lr_dynamics import (
    LrState,
    classify_lr_region,
    evolve_5var,
    instantiate_lr,
    lr_heatmaps,
    reduced_system,
)
from .lr_mc import LrMcConfig, simulate_lr
from .scaling import (
    Region,
    ScalingConstants,
    ScalingExponents,
    classify_region,
    instantiate,
)
from .stability import find_eta_max, spectrum_report, verdict_for

__all__ = [
    "ExperimentConfig",
    "SpectralConflictReport",
    "spectral_conflict",
    "convergence_report",
    "ls_risk_heatmap",
    "run",
    "write_manifest",
    "config_hash",
]

_MODES = {
    "mc",
    "main-ode",
    "limit-ode",
    "compare",
    "stability",
    "heatmap",
    "spectral-conflict",
}

_KNOWN_KEYS = {
    "model", "mode", "point", "constants", "d", "r", "eta",
    "tau_max", "n_tau", "seeds", "seed", "max_active_updates",
    "max_steps", "record_stride", "grid", "vocab_size",
    "zipf_exponent", "B", "beta", "coeff_mode", "theta_star_norm",
    "budget_factor", "out_dir", "mc_mode",
}

_STOCHASTIC_MODES = {"mc"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated free-form experiment description.

    Unknown keys are rejected with their paths; stochastic modes must
    carry a seed (reproducibility by default).
    """

    raw: dict

    def __post_init__(self):
        cfg = self.raw
        if not isinstance(cfg, dict) or not cfg:
            raise ValueError("empty config; at least model and mode are required")
        unknown = set(cfg) - _KNOWN_KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        model = cfg.get("model")
        if model not in ("ls", "lr"):
            raise ValueError(f"config.model must be 'ls' or 'lr', got {model!r}")
        mode = cfg.get("mode")
        if mode not in _MODES:
            raise ValueError(f"config.mode must be one of {sorted(_MODES)}, got {mode!r}")
        if mode in _STOCHASTIC_MODES and cfg.get("seed") is None:
            raise ValueError("stochastic runs require an explicit seed (config.seed)")
        if "point" in cfg:
            pt = cfg["point"]
            for key in ("kappa", "sigma", "gamma"):
                if key not in pt:
                    raise ValueError(f"config.point.{key} is required")

    def __getitem__(self, key):
        return self.raw[key]

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def exponents(self) -> ScalingExponents:
        pt = self.raw["point"]
        return ScalingExponents(
            kappa=pt["kappa"], sigma=pt["sigma"], gamma=pt["gamma"],
            alpha_eta=pt.get("alpha_eta"),
        )

    def constants(self) -> ScalingConstants:
        return ScalingConstants(**self.raw.get("constants", {}))

    def d_list(self) -> list[int]:
        d = self.raw.get("d", 1000)
        return [int(x) for x in (d if isinstance(d, (list, tuple)) else [d])]


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def write_manifest(
    out_dir: Path, cfg: dict, artifacts: list[str], warnings: list[str], t0: float
) -> Path:
    manifest = {
        "spec_version": 1,
        "tool_version": __version__,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "artifacts": sorted(artifacts),
        "warnings": warnings,
        "wall_time_s": round(time.time() - t0, 3),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # np.float64 is a float subclass; force plain repr
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


# ---------------------------------------------------------------------------
# Spectral conflict (Zipf vocabulary vs one global momentum)
# ---------------------------------------------------------------------------


@dataclass
class SpectralConflictReport:
    """Per-token-rank region assignment for one global (eta, beta).

    Token appearance probabilities follow p_r = r^(-zipf) relative to
    the most common token (p_1 = 1, p_V = V^-zipf), so kappa_r =
    zipf * log_d(r) runs from 0 to kappa_max = zipf * log_d(V). With one
    global gamma, the resonance line gamma = 1 - sigma + kappa_r is
    crossed at most once along the rank axis.
    """

    d: int
    vocab_size: int
    B: int
    beta: float
    zipf_exponent: float
    sigma: float
    gamma: float
    kappa_max: float
    rows: list[dict]
    crossing_rank: int | None
    frac_above: float
    frac_below: float
    frac_concentrated: float

    def write_csv(self, path: Path) -> None:
        _write_csv(
            path,
            ["rank", "p_r", "P_batch_r", "kappa_eff_r", "region", "above_resonance"],
            [
                (r["rank"], r["p_r"], r["P_batch_r"], r["kappa_eff_r"],
                 r["region"], int(r["above_resonance"]))
                for r in self.rows
            ],
        )


def spectral_conflict(
    vocab_size: int,
    d: int,
    B: int,
    beta: float,
    zipf_exponent: float = 1.0,
    max_rows: int | None = None,
) -> SpectralConflictReport:
    if vocab_size < 2:
        raise ValueError("vocab_size must be >= 2")
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must be in [0, 1); beta = 1 is rejected")
    logd = math.log(d)
    sigma = math.log(B) / logd if B > 1 else 0.0
    eps = 1.0 - beta
    gamma = -math.log(eps) / logd
    ranks = np.arange(1, vocab_size + 1)
    p_r = ranks.astype(float) ** (-zipf_exponent)
    kappa_r = zipf_exponent * np.log(ranks) / logd
    kappa_eff = np.maximum(0.0, kappa_r - sigma)
    # log-domain P_batch to survive pB >> 1
    P_batch = -np.expm1(B * np.log1p(-np.minimum(p_r, 1.0 - 1e-16)))
    resonance_kappa = gamma - 1.0 + sigma
    above = kappa_r < resonance_kappa - 1e-12
    on_line = np.abs(kappa_r - resonance_kappa) <= 1e-12
    concentrated = kappa_r < sigma - 1.0

    regions = np.where(
        concentrated, "concentrated",
        np.where(on_line, "on_resonance", np.where(above, "above", "below")),
    )
    kappa_max = zipf_exponent * math.log(vocab_size) / logd
    # crossing rank: the last rank at-or-above resonance, defined only
    # when the sign of (gamma - resonance) actually changes along the
    # rank axis (monotone kappa_r makes it unique when it exists)
    below_mask = kappa_r > resonance_kappa + 1e-12
    if below_mask.any() and not below_mask[0]:
        crossing = int(np.argmax(below_mask))  # 1-based rank of last above-or-on
    else:
        crossing = None
    keep = np.arange(vocab_size)
    if max_rows is not None and vocab_size > max_rows:
        keep = np.unique(np.geomspace(1, vocab_size, max_rows).astype(int)) - 1
    rows = [
        {
            "rank": int(ranks[i]),
            "p_r": float(p_r[i]),
            "P_batch_r": float(P_batch[i]),
            "kappa_eff_r": float(kappa_eff[i]),
            "region": str(regions[i]),
            "above_resonance": bool(above[i]),
        }
        for i in keep
    ]
    return SpectralConflictReport(
        d=d, vocab_size=vocab_size, B=B, beta=beta, zipf_exponent=zipf_exponent,
        sigma=sigma, gamma=gamma, kappa_max=kappa_max, rows=rows,
        crossing_rank=crossing,
        frac_above=float(np.mean(above)),
        frac_below=float(np.mean(~above & ~on_line)),
        frac_concentrated=float(np.mean(concentrated)),
    )


# ---------------------------------------------------------------------------
# Convergence report (main vs limit over d)
# ---------------------------------------------------------------------------


def convergence_report(
    exponents: ScalingExponents,
    constants: ScalingConstants,
    d_list: list[int],
    tau_grid: np.ndarray,
) -> dict:
    """Sup-norm relative errors of the rescaled main ODE against the
    limit, per d, with monotone-nonincrease flags. V and C columns are
    present only where the limit is 2D/3D."""
    per_d = {}
    for d in d_list:
        res = compare_to_limit(exponents, constants, d, tau_grid)
        per_d[d] = res["errors"]
    names = list(per_d[d_list[0]].keys())
    monotone = {
        name: all(
            per_d[d_list[i + 1]][name] <= per_d[d_list[i]][name] * (1 + 1e-9)
            for i in range(len(d_list) - 1)
        )
        for name in names
    }
    return {
        "region": classify_region(exponents).value,
        "errors": per_d,
        "monotone_nonincreasing": monotone,
        "state_names": names,
    }


# ---------------------------------------------------------------------------
# LS last-iterate risk heatmap
# ---------------------------------------------------------------------------


def ls_risk_heatmap(
    sigma: float,
    constants: ScalingConstants,
    d: int,
    kappa_grid: np.ndarray,
    gamma_grid: np.ndarray,
    budget_factor: float = 8.0,
    n_eta: int = 8,
) -> list[dict]:
    """log10 last-iterate risk at per-cell optimal learning rate.

    Each cell runs the main ODE from (1, 0, 0) for a fixed budget of
    nonzero gradients S = budget_factor * d, i.e. t_end = S * P_batch /
    (p B) active updates, minimizing R(t_end) over a grid of
    eta = theta * eta_max(cell). Sample efficiency peaks at pB = O(1),
    the kappa = sigma stripe.
    """
    rows = []
    thetas = np.linspace(0.15, 0.95, n_eta)
    for k in np.asarray(kappa_grid, float):
        for g in np.asarray(gamma_grid, float):
            exps = ScalingExponents(k, sigma, g, alpha_eta=0.0)
            try:
                emax = find_eta_max(exps, constants, d).eta_max
                params = instantiate(exps, constants, d)
                from .scaling import batch_factors

                fac = batch_factors(params.p, params.B, params.d)
                t_end = budget_factor * d * fac.P_batch / (params.p * params.B)
                best = np.inf
                for th in thetas:
                    m = build_main_matrix(params, eta=th * emax)
                    traj = evolve_linear(
                        m, MomentState(1.0, 0.0, 0.0), np.array([t_end])
                    )
                    if len(traj.times):
                        best = min(best, max(traj.states[0, 0], 1e-300))
                rows.append(
                    {"kappa": k, "gamma": g,
                     "log10_R_last": math.log10(best) if np.isfinite(best) else math.nan,
                     "region": classify_region(exps).value}
                )
            except Exception as exc:  # per-cell isolation
                rows.append(
                    {"kappa": k, "gamma": g, "log10_R_last": math.nan,
                     "region": f"error: {exc}"}
                )
    return rows


# ---------------------------------------------------------------------------
# Top-level run dispatch
# ---------------------------------------------------------------------------


def run(config: ExperimentConfig | dict, out_dir: str | Path) -> Path:
    """Execute one experiment config; returns the manifest path."""
    if isinstance(config, dict):
        config = ExperimentConfig(config)
    cfg = config.raw
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    warnings: list[str] = []
    artifacts: list[str] = []

    model, mode = cfg["model"], cfg["mode"]
    handler = _HANDLERS.get((model, mode))
    if handler is None:
        raise ValueError(f"unsupported model/mode combination: {model}/{mode}")
    handler(config, out, artifacts, warnings)
    manifest = write_manifest(out, cfg, artifacts, warnings, t0)
    return manifest


def _tau_grid(config: ExperimentConfig) -> np.ndarray:
    tau_max = float(config.get("tau_max", 5.0))
    n_tau = int(config.get("n_tau", 200))
    return np.linspace(0.0, tau_max, n_tau + 1)[1:]


def _run_ls_main_ode(config, out, artifacts, warnings):
    exps, cons = config.exponents(), config.constants()
    for d in config.d_list():
        params = instantiate(exps, cons, d)
        warnings.extend(params.warnings)
        matrix = build_main_matrix(params, eta=config.get("eta"))
        system = select_limit(exps, cons)
        tau = _tau_grid(config)
        times = tau * float(d) ** system.clock_power
        traj = evolve_linear(matrix, MomentState(1.0, 0.0, 0.0), times)
        name = f"ls_main_ode_d{d}.csv"
        traj.write_csv(out / name, {"d": d, "clock_power_slow": system.clock_power})
        artifacts.append(name)


def _run_ls_limit(config, out, artifacts, warnings):
    exps, cons = config.exponents(), config.constants()
    system = select_limit(exps, cons)
    tau = _tau_grid(config)
    from .ls_limits import HeavyBall2D, Resonance3D

    if isinstance(system, HeavyBall2D):
        initial = (1.0, 0.0)
    elif isinstance(system, Resonance3D):
        initial = (1.0, 0.0, 0.0)
    else:
        initial = 1.0
    traj = evolve_limit(system, initial, tau)
    name = "ls_limit_ode.csv"
    traj.write_csv(out / name, {"limit_kind": type(system).__name__})
    artifacts.append(name)


def _run_ls_mc(config, out, artifacts, warnings):
    exps, cons = config.exponents(), config.constants()
    system = select_limit(exps, cons)
    for d in config.d_list():
        params = instantiate(exps, cons, d)
        warnings.extend(params.warnings)
        n_active = config.get("max_active_updates")
        if n_active is None:
            tau_max = float(config.get("tau_max", 2.0))
            n_active = max(int(tau_max * d ** system.clock_power), 10)
        mc = McConfig(
            params=params,
            n_seeds=int(config.get("seeds", 16)),
            max_active_updates=int(n_active),
            master_seed=int(config["seed"]),
            theta_star_norm=float(config.get("theta_star_norm", 1.0)),
            mode=config.get("mc_mode", "fast-forward"),
        )
        res = simulate(mc, keep_per_seed=True)
        name = f"ls_mc_d{d}.csv"
        _write_csv(
            out / name,
            ["active_update_index", "mean_R", "se_R", "mean_V", "se_V", "mean_C", "se_C"],
            [
                (int(i), res.mean[j, 0], res.se[j, 0], res.mean[j, 1],
                 res.se[j, 1], res.mean[j, 2], res.se[j, 2])
                for j, i in enumerate(res.index)
            ],
        )
        artifacts.append(name)
        # per-seed risk curves for figure overlays (thin companion table)
        seeds_name = f"ls_mc_d{d}_seeds.csv"
        stride = max(1, len(res.index) // 512)
        _write_csv(
            out / seeds_name,
            ["active_update_index"] + [f"R_seed{s}" for s in range(mc.n_seeds)],
            [
                (int(res.index[j]), *res.per_seed[:, j, 0])
                for j in range(0, len(res.index), stride)
            ],
        )
        artifacts.append(seeds_name)
        (out / f"ls_mc_d{d}.manifest.json").write_text(
            json.dumps(
                {
                    "spec_version": 1,
                    "config_hash": config_hash(config.raw),
                    "d": d,
                    "n_seeds": mc.n_seeds,
                    "diverged_seeds": res.diverged,
                    "clock_power_slow": system.clock_power,
                },
                indent=2, sort_keys=True,
            )
            + "\n"
        )


def _run_ls_compare(config, out, artifacts, warnings):
    exps, cons = config.exponents(), config.constants()
    tau = _tau_grid(config)
    report = convergence_report(exps, cons, config.d_list(), tau)
    _run_ls_main_ode(config, out, artifacts, warnings)
    _run_ls_limit(config, out, artifacts, warnings)
    name = "ls_convergence_report.json"
    (out / name).write_text(json.dumps(_json_safe(report), indent=2, sort_keys=True) + "\n")
    artifacts.append(name)


def _run_ls_stability(config, out, artifacts, warnings):
    exps, cons = config.exponents(), config.constants()
    rows = []
    for d in config.d_list():
        res = find_eta_max(exps, cons, d)
        params = instantiate(exps, cons, d)
        eta = config.get("eta")
        verdict = verdict_for(params, eta=eta)
        rep = spectrum_report(build_main_matrix(params, eta=eta))
        rows.append(
            {
                "d": d,
                "eta_max": res.eta_max,
                "binding": res.binding,
                "monotone": res.monotone,
                "stable_at_eta": verdict.stable,
                "Delta": rep.Delta,
                "spectral_type": rep.spectral_type,
                "eigenvalues": [[z.real, z.imag] for z in rep.eigenvalues],
            }
        )
    name = "stability.json"
    (out / name).write_text(json.dumps(_json_safe(rows), indent=2, sort_keys=True) + "\n")
    artifacts.append(name)


def _run_ls_heatmap(config, out, artifacts, warnings):
    cons = config.constants()
    grid = config.get("grid", {})
    kg = np.linspace(*grid.get("kappa", (0.05, 3.0, 40)))
    gg = np.linspace(*grid.get("gamma", (0.05, 3.0, 40)))
    sigma = config["point"]["sigma"] if "point" in config.raw else grid.get("sigma", 1.2)
    rows = ls_risk_heatmap(
        sigma, cons, config.d_list()[0], kg, gg,
        budget_factor=float(config.get("budget_factor", 8.0)),
    )
    name = "ls_risk_heatmap.csv"
    _write_csv(
        out / name,
        ["kappa", "gamma", "log10_R_last", "region"],
        [(r["kappa"], r["gamma"], r["log10_R_last"], r["region"]) for r in rows],
    )
    artifacts.append(name)


def _run_lr_ode(config, out, artifacts, warnings):
    exps, cons = config.exponents(), config.constants()
    r = float(config.get("r", 2.0))
    region = classify_lr_region(exps)
    red = reduced_system(region, cons, r, exponents=exps)
    tau = _tau_grid(config)
    for d in config.d_list():
        params = instantiate_lr(exps, cons, d, r)
        times = tau * float(d) ** red.clock_power
        init = LrState(0.3, 0.0, 0.3, 0.0, 0.0)
        traj = evolve_5var(init, params, times, coeff_mode=config.get("coeff_mode", "tame"),
                           with_kl=True)
        name = f"lr_ode_d{d}.csv"
        traj.write_csv(out / name, {"d": d, "region": region.value,
                                    "clock_power_slow": red.clock_power})
        artifacts.append(name)


def _run_lr_mc(config, out, artifacts, warnings):
    exps, cons = config.exponents(), config.constants()
    r = float(config.get("r", 2.0))
    for d in config.d_list():
        params = instantiate_lr(exps, cons, d, r)
        mc = LrMcConfig(
            lr_params=params,
            n_seeds=int(config.get("seeds", 16)),
            max_steps=int(config.get("max_steps", 2000)),
            master_seed=int(config["seed"]),
            record_stride=int(config.get("record_stride", 1)),
        )
        res = simulate_lr(mc)
        name = f"lr_mc_d{d}.csv"
        _write_csv(
            out / name,
            ["step", "mean_s", "se_s", "mean_u", "se_u", "mean_R_perp", "se_R_perp",
             "mean_V_perp", "se_V_perp", "mean_C_perp", "se_C_perp", "mean_alpha"],
            [
                (int(sstep), *(x for j in range(5) for x in (res.mean[i, j], res.se[i, j])),
                 res.mean_alpha[i])
                for i, sstep in enumerate(res.steps)
            ],
        )
        artifacts.append(name)


def _run_lr_compare(config, out, artifacts, warnings):
    exps, cons = config.exponents(), config.constants()
    r = float(config.get("r", 2.0))
    region = classify_lr_region(exps)
    red = reduced_system(region, cons, r, exponents=exps)
    tau = _tau_grid(config)
    init_full = LrState(0.3, 0.0, 0.3, 0.0, 0.0)
    if region.value == "noise_floor_below":
        init_red = np.array([0.3, 0.3])
    else:
        init_red = np.array([0.3, 0.0, 0.3, 0.0, 0.0])
    red_traj = red.evolve(init_red, tau)
    name = "lr_reduced_ode.csv"
    red_traj.write_csv(out / name, {"region": region.value})
    artifacts.append(name)
    report = {}
    for d in config.d_list():
        params = instantiate_lr(exps, cons, d, r)
        times = tau * float(d) ** red.clock_power
        full = evolve_5var(init_full, params, times, coeff_mode="tame")
        comp = red.rebalance(full.states, params.p, d, exps.kappa)
        errs = {}
        for j, nm in enumerate(red.state_names):
            if nm not in ("s", "R_perp"):
                continue
            lim = red_traj.column(nm)
            scale = max(np.max(np.abs(lim)), 1e-300)
            errs[nm] = float(np.max(np.abs(comp[:, j] - lim)) / scale)
        report[d] = errs
        name = f"lr_full_d{d}.csv"
        full.write_csv(out / name, {"d": d})
        artifacts.append(name)
    name = "lr_convergence_report.json"
    (out / name).write_text(json.dumps(_json_safe(report), indent=2, sort_keys=True) + "\n")
    artifacts.append(name)


def _run_lr_heatmap(config, out, artifacts, warnings):
    cons = config.constants()
    grid = config.get("grid", {})
    sigma = config["point"]["sigma"] if "point" in config.raw else grid.get("sigma", 1.6)
    kg = np.linspace(*grid.get("kappa", (0.7, 2.4, 30)))
    gg = np.linspace(*grid.get("gamma", (0.05, 2.0, 30)))
    rows = lr_heatmaps(kg, gg, sigma, cons, config.d_list()[0], r=float(config.get("r", 2.0)))
    name = "lr_heatmap.csv"
    _write_csv(
        out / name,
        ["kappa", "gamma", "region_tag", "floor_value_or_exponent", "T_exponent"],
        [
            (r_["kappa"], r_["gamma"], r_["region_tag"],
             r_["floor_value_or_exponent"], r_["T_exponent"])
            for r_ in rows
        ],
    )
    artifacts.append(name)


def _run_spectral(config, out, artifacts, warnings):
    rep = spectral_conflict(
        vocab_size=int(config["vocab_size"]),
        d=config.d_list()[0],
        B=int(config["B"]),
        beta=float(config["beta"]),
        zipf_exponent=float(config.get("zipf_exponent", 1.0)),
        max_rows=2000,
    )
    name = "spectral_conflict.csv"
    rep.write_csv(out / name)
    artifacts.append(name)
    summary = {
        "sigma": rep.sigma, "gamma": rep.gamma, "kappa_max": rep.kappa_max,
        "crossing_rank": rep.crossing_rank, "frac_above": rep.frac_above,
        "frac_below": rep.frac_below, "frac_concentrated": rep.frac_concentrated,
    }
    (out / "spectral_conflict_summary.json").write_text(
        json.dumps(_json_safe(summary), indent=2, sort_keys=True) + "\n"
    )
    artifacts.append("spectral_conflict_summary.json")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Region):
        return obj.value
    return obj


_HANDLERS = {
    ("ls", "main-ode"): _run_ls_main_ode,
    ("ls", "limit-ode"): _run_ls_limit,
    ("ls", "mc"): _run_ls_mc,
    ("ls", "compare"): _run_ls_compare,
    ("ls", "stability"): _run_ls_stability,
    ("ls", "heatmap"): _run_ls_heatmap,
    ("ls", "spectral-conflict"): _run_spectral,
    ("lr", "main-ode"): _run_lr_ode,
    ("lr", "mc"): _run_lr_mc,
    ("lr", "compare"): _run_lr_compare,
    ("lr", "heatmap"): _run_lr_heatmap,
    ("lr", "spectral-conflict"): _run_spectral,
}
