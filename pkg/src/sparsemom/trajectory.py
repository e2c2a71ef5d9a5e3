"""Trajectory container and its CSV + JSON-manifest serialization.

A Trajectory is a time grid, a state matrix, a clock tag, and free-form
metadata. The CSV layout is (clock_name, time, <state columns...>);
everything that is not a number lives in the JSON sidecar manifest.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["Trajectory", "Clock"]


class Clock:
    ACTIVE = "active"        # t counts active updates (Poisson clock)
    MINIBATCH = "minibatch"  # k counts raw minibatch steps
    SLOW = "slow"            # tau = t / d^power


@dataclass
class Trajectory:
    clock: str
    times: np.ndarray
    states: np.ndarray               # (T, n_vars)
    state_names: tuple[str, ...]
    slow_power: float | None = None  # tau = t / d^slow_power when clock == SLOW
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.clock == Clock.SLOW and self.slow_power is None:
            raise ValueError("slow clock requires slow_power")
        if self.states.shape[1] != len(self.state_names):
            raise ValueError("state_names must match state columns")

    def column(self, name: str) -> np.ndarray:
        return self.states[:, self.state_names.index(name)]

    def write_csv(self, path: str | Path, manifest_extra: dict | None = None) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["clock_name", "time", *self.state_names])
            for t, row in zip(self.times, self.states):
                w.writerow([self.clock, repr(float(t)), *[repr(float(v)) for v in row]])
        manifest = {
            "spec_version": 1,
            "clock": self.clock,
            "slow_power": self.slow_power,
            "state_names": list(self.state_names),
            "metadata": _jsonable(self.metadata),
        }
        if manifest_extra:
            manifest.update(_jsonable(manifest_extra))
        path.with_suffix(path.suffix + ".manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )

    @classmethod
    def read_csv(cls, path: str | Path) -> "Trajectory":
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        state_names = tuple(header[2:])
        clock = rows[1][0]
        times = np.array([float(r[1]) for r in rows[1:]])
        states = np.array([[float(v) for v in r[2:]] for r in rows[1:]])
        manifest_path = path.with_suffix(path.suffix + ".manifest.json")
        slow_power = None
        metadata: dict = {}
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text())
            slow_power = manifest.get("slow_power")
            metadata = manifest.get("metadata", {})
        return cls(
            clock=clock, times=times, states=states, state_names=state_names,
            slow_power=slow_power, metadata=metadata,
        )


def _jsonable(obj):
    """Recursively coerce numpy scalars/arrays for json.dumps."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj
