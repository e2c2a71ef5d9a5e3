"""Render sparsemom artifacts into paper-style figures.

Thin display layer: reads CSVs (plus their sidecar manifests for clock
powers), draws, writes one image. The four phase boundaries overlaid on
plane figures are kappa = sigma - 1, kappa = sigma, gamma = 1 - sigma
+ kappa and gamma = kappa - sigma.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .spec import FigureSpec, SpecError

BOUNDARY_LINES = ("kappa=sigma-1", "kappa=sigma", "gamma=1-sigma+kappa", "gamma=kappa-sigma")


def _read_csv(path: str | Path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in data]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def _manifest(path: str | Path) -> dict:
    p = Path(str(path) + ".manifest.json")
    if p.exists():
        return json.loads(p.read_text())
    return {}


def _slow_times(path: str | Path, table: dict[str, np.ndarray], time_col: str) -> np.ndarray:
    """Rescale an active-update time axis to the slow clock using the
    clock power and dimension recorded by the producer."""
    man = _manifest(path)
    power = man.get("clock_power_slow")
    d = man.get("d")
    times = table[time_col]
    if power is None or d is None:
        return times
    return times / float(d) ** float(power)


def _overlay_boundaries(ax, sigma: float, kmax: float, gmax: float) -> list[str]:
    drawn = []
    if sigma - 1.0 > 0:
        ax.axvline(sigma - 1.0, color="white", ls=":", lw=1.4)
    drawn.append("kappa=sigma-1")
    ax.axvline(sigma, color="white", ls="--", lw=1.4)
    drawn.append("kappa=sigma")
    ks = np.linspace(0.0, kmax, 64)
    ax.plot(ks, 1.0 - sigma + ks, color="white", ls="-", lw=1.4)
    drawn.append("gamma=1-sigma+kappa")
    ax.plot(ks, ks - sigma, color="white", ls="-.", lw=1.4)
    drawn.append("gamma=kappa-sigma")
    ax.set_xlim(ks[0], kmax)
    ax.set_ylim(0.0, gmax)
    return drawn


def render(spec: FigureSpec) -> dict:
    """Produce the image for one validated FigureSpec.

    Returns a summary dict (output path, kind, overlays drawn). Raises
    SpecError on schema problems; writes nothing on failure.
    """
    spec.validate()
    fig, summary = _RENDERERS[spec.kind](spec)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=110)
    plt.close(fig)
    summary.update({"output": str(out), "kind": spec.kind})
    return summary


def _render_risk_curves(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    palette = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    mains = spec.inputs.get("main_ode", [])
    mains = mains if isinstance(mains, list) else [mains]
    for i, path in enumerate(mains):
        table = _read_csv(path)
        tau = _slow_times(path, table, "time")
        d = _manifest(path).get("d")
        stride = max(1, len(tau) // 40)
        ax.semilogy(
            tau[::stride], table["R"][::stride], "o", ms=3.5,
            color=palette[i % len(palette)],
            label=f"main ODE d={d}" if d else "main ODE",
        )
    if "mc_seeds" in spec.inputs:
        path = spec.inputs["mc_seeds"]
        table = _read_csv(path)
        tau = _slow_times(path, table, "active_update_index")
        for name, col in table.items():
            if name.startswith("R_seed"):
                ax.semilogy(tau, col, color="gray", alpha=0.25, lw=0.6, zorder=0)
    if "mc_ensemble" in spec.inputs:
        path = spec.inputs["mc_ensemble"]
        table = _read_csv(path)
        tau = _slow_times(path, table, "active_update_index")
        ax.semilogy(tau, table["mean_R"], color="black", lw=1.0, label="MC mean")
    if "limit_ode" in spec.inputs:
        table = _read_csv(spec.inputs["limit_ode"])
        ax.semilogy(table["time"], table["R"], "k--", lw=1.6, label="limit ODE")
    ax.set_xlabel(spec.xlabel or "slow time")
    ax.set_ylabel(spec.ylabel or "risk R")
    ax.set_title(spec.title)
    ax.legend(fontsize=8)
    return fig, {"overlays": []}


def _plane_pivot(table, value_col):
    ks = np.unique(table["kappa"])
    gs = np.unique(table["gamma"])
    grid = np.full((len(gs), len(ks)), np.nan)
    ki = {k: i for i, k in enumerate(ks)}
    gi = {g: i for i, g in enumerate(gs)}
    for k, g, v in zip(table["kappa"], table["gamma"], table[value_col]):
        grid[gi[g], ki[k]] = v
    return ks, gs, grid


def _render_heatmap(spec: FigureSpec):
    role = "ls_heatmap" if "ls_heatmap" in spec.inputs else "lr_heatmap"
    table = _read_csv(spec.inputs[role])
    value_col = spec.value_column or (
        "log10_R_last" if role == "ls_heatmap" else "T_exponent"
    )
    ks, gs, grid = _plane_pivot(table, value_col)
    fig, ax = plt.subplots(figsize=(5.6, 4.6))
    pcm = ax.pcolormesh(ks, gs, grid, shading="nearest", cmap="viridis")
    fig.colorbar(pcm, ax=ax, label=value_col)
    overlays = []
    if spec.sigma is not None:
        overlays = _overlay_boundaries(ax, spec.sigma, ks.max(), gs.max())
    ax.set_xlabel(spec.xlabel or "sparsity exponent kappa")
    ax.set_ylabel(spec.ylabel or "momentum exponent gamma")
    ax.set_title(spec.title)
    return fig, {"overlays": overlays}


def _render_phase_diagram(spec: FigureSpec):
    role = "ls_heatmap" if "ls_heatmap" in spec.inputs else "lr_heatmap"
    table = _read_csv(spec.inputs[role])
    region_col = "region" if role == "ls_heatmap" else "region_tag"
    regions = sorted(set(table[region_col]))
    code = {name: i for i, name in enumerate(regions)}
    vals = np.array([code[v] for v in table[region_col]], dtype=float)
    tbl = {"kappa": table["kappa"], "gamma": table["gamma"], "code": vals}
    ks, gs, grid = _plane_pivot(tbl, "code")
    fig, ax = plt.subplots(figsize=(5.6, 4.6))
    ax.pcolormesh(ks, gs, grid, shading="nearest", cmap="Pastel1",
                  vmin=0, vmax=max(len(regions) - 1, 1))
    overlays = []
    if spec.sigma is not None:
        overlays = _overlay_boundaries(ax, spec.sigma, ks.max(), gs.max())
    for name in regions:
        mask = table[region_col] == name
        ax.annotate(
            name,
            (np.median(table["kappa"][mask]), np.median(table["gamma"][mask])),
            fontsize=7, ha="center", color="black",
        )
    ax.set_xlabel(spec.xlabel or "sparsity exponent kappa")
    ax.set_ylabel(spec.ylabel or "momentum exponent gamma")
    ax.set_title(spec.title)
    return fig, {"overlays": overlays}


def _render_lr_equilibrium(spec: FigureSpec):
    path = spec.inputs["lr_trajectory"]
    table = _read_csv(path)
    tau = _slow_times(path, table, "time")
    fig, axes = plt.subplots(2, 2, figsize=(8.0, 5.6))
    panels = [("s", False), ("R_perp", False), ("alpha", False), ("kl", True)]
    for ax, (col, logy) in zip(axes.ravel(), panels):
        if col not in table:
            ax.set_visible(False)
            continue
        (ax.semilogy if logy else ax.plot)(tau, table[col], lw=1.2)
        ax.set_ylabel(col)
        ax.set_xlabel(spec.xlabel or "slow time")
    fig.suptitle(spec.title)
    fig.tight_layout()
    return fig, {"overlays": []}


_RENDERERS = {
    "risk-curves": _render_risk_curves,
    "heatmap": _render_heatmap,
    "phase-diagram": _render_phase_diagram,
    "lr-equilibrium": _render_lr_equilibrium,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sparsemom-figures", description="Render one figure from a JSON FigureSpec."
    )
    parser.add_argument("--spec", required=True, type=Path)
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec.from_json(args.spec)
        summary = render(spec)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
