"""Command-line interface.

Subcommands mirror the harness modes; every flag has a config-file
equivalent and --config FILE overrides flags. Stochastic subcommands
refuse to run without --seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import ExperimentConfig, run

_SUBCOMMANDS = {
    # name: (model, mode, stochastic)
    "ls-ode": ("ls", "main-ode", False),
    "ls-mc": ("ls", "mc", True),
    "ls-limit": ("ls", "limit-ode", False),
    "ls-compare": ("ls", "compare", False),
    "stability": ("ls", "stability", False),
    "phase-map": ("ls", "heatmap", False),
    "lr-ode": ("lr", "main-ode", False),
    "lr-mc": ("lr", "mc", True),
    "lr-compare": ("lr", "compare", False),
    "lr-heatmap": ("lr", "heatmap", False),
    "spectral-conflict": ("ls", "spectral-conflict", False),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsemom",
        description="Sparse-update momentum dynamics: moment ODEs, stability, "
        "limits, Monte Carlo, phase maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run {name}")
        p.add_argument("--config", type=Path, help="JSON config file (overrides flags)")
        p.add_argument("--kappa", type=float)
        p.add_argument("--sigma", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--alpha-eta", type=float, dest="alpha_eta")
        p.add_argument("--p-star", type=float, dest="p_star")
        p.add_argument("--B-star", type=float, dest="B_star")
        p.add_argument("--eps-star", type=float, dest="eps_star")
        p.add_argument("--eta-star", type=float, dest="eta_star")
        p.add_argument("--eta", type=float, help="override the ansatz learning rate")
        p.add_argument("--d", type=int, nargs="+")
        p.add_argument("--r", type=float, help="LR signal norm |mu|")
        p.add_argument("--tau-max", type=float, dest="tau_max")
        p.add_argument("--n-tau", type=int, dest="n_tau")
        p.add_argument("--seeds", type=int, help="ensemble size")
        p.add_argument("--seed", type=int, help="master seed (required for MC)")
        p.add_argument("--max-active-updates", type=int, dest="max_active_updates")
        p.add_argument("--max-steps", type=int, dest="max_steps")
        p.add_argument("--record-stride", type=int, dest="record_stride")
        p.add_argument("--vocab-size", type=int, dest="vocab_size")
        p.add_argument("--zipf-exponent", type=float, dest="zipf_exponent")
        p.add_argument("--B", type=int, help="batch size (spectral-conflict)")
        p.add_argument("--beta", type=float, help="momentum (spectral-conflict)")
        p.add_argument("--coeff-mode", choices=("tame", "exact"), dest="coeff_mode")
        p.add_argument("--out-dir", type=Path, default=Path("out"), dest="out_dir")
    return parser


def _args_to_config(name: str, args: argparse.Namespace) -> dict:
    model, mode, _ = _SUBCOMMANDS[name]
    cfg: dict = {"model": model, "mode": mode}
    point = {}
    for key in ("kappa", "sigma", "gamma", "alpha_eta"):
        v = getattr(args, key, None)
        if v is not None:
            point[key] = v
    if point:
        cfg["point"] = point
    constants = {}
    for key in ("p_star", "B_star", "eps_star", "eta_star"):
        v = getattr(args, key, None)
        if v is not None:
            constants[key] = v
    if constants:
        cfg["constants"] = constants
    for key in (
        "d", "r", "eta", "tau_max", "n_tau", "seeds", "seed",
        "max_active_updates", "max_steps", "record_stride",
        "vocab_size", "zipf_exponent", "B", "beta", "coeff_mode",
    ):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    name = args.command
    cfg = _args_to_config(name, args)
    if args.config is not None:
        file_cfg = json.loads(Path(args.config).read_text())
        cfg.update(file_cfg)  # config file wins over flags
        cfg.setdefault("model", _SUBCOMMANDS[name][0])
        cfg.setdefault("mode", _SUBCOMMANDS[name][1])
    out_dir = cfg.pop("out_dir", None) or args.out_dir
    try:
        config = ExperimentConfig(cfg)
        manifest = run(config, out_dir)
    except (ValueError, KeyError) as exc:
        parser.exit(2, f"error: {exc}\n")
    if name == "stability":  # verdict JSON straight to stdout
        print((Path(out_dir) / "stability.json").read_text().rstrip())
    summary = json.loads(Path(manifest).read_text())
    print(json.dumps({"manifest": str(manifest), "artifacts": summary["artifacts"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
