"""FigureSpec: a JSON description of one figure to render.

Validation is schema-level only: declared inputs must exist and their
CSV headers must match the producing tool's layout. Rendering never
recomputes numbers; every plotted value comes from a CSV cell (axis
rescaling by a clock power recorded in the sidecar manifest is the one
display transformation applied).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

KINDS = ("risk-curves", "phase-diagram", "heatmap", "lr-equilibrium")

# required leading columns per input role
_SCHEMAS = {
    "trajectory": ["clock_name", "time"],
    "mc_ensemble": ["active_update_index", "mean_R", "se_R", "mean_V", "se_V",
                    "mean_C", "se_C"],
    "mc_seeds": ["active_update_index"],
    "ls_heatmap": ["kappa", "gamma", "log10_R_last", "region"],
    "lr_heatmap": ["kappa", "gamma", "region_tag", "floor_value_or_exponent",
                   "T_exponent"],
}


class SpecError(ValueError):
    pass


@dataclass
class FigureSpec:
    kind: str
    inputs: dict            # role -> path (or list of paths for trajectories)
    output: str
    sigma: float | None = None   # boundary overlays need the batch exponent
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    value_column: str | None = None  # heatmap value column

    @classmethod
    def from_json(cls, path: str | Path) -> "FigureSpec":
        raw = json.loads(Path(path).read_text())
        unknown = set(raw) - {
            "kind", "inputs", "output", "sigma", "title", "xlabel", "ylabel",
            "value_column",
        }
        if unknown:
            raise SpecError(f"unknown FigureSpec keys: {sorted(unknown)}")
        spec = cls(**raw)
        spec.validate()
        return spec

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise SpecError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.inputs:
            raise SpecError("inputs must name at least one CSV")
        for role, paths in self.inputs.items():
            for p in paths if isinstance(paths, list) else [paths]:
                path = Path(p)
                if not path.exists():
                    raise SpecError(f"input {role}: {p} does not exist")
                schema = _SCHEMAS.get(_role_schema(role))
                if schema is not None:
                    _check_header(path, schema, role)


def _role_schema(role: str) -> str:
    if role in ("main_ode", "limit_ode", "lr_trajectory"):
        return "trajectory"
    return role


def _check_header(path: Path, required: list[str], role: str) -> None:
    with path.open(newline="") as fh:
        header = next(csv.reader(fh))
    missing = [c for c in required if c not in header]
    if missing:
        raise SpecError(
            f"input {role} ({path.name}): missing columns {missing}; header={header}"
        )
    with path.open(newline="") as fh:
        rows = sum(1 for _ in fh)
    if rows <= 1:
        raise SpecError(f"input {role} ({path.name}): no data rows")
