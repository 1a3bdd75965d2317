"""Parameters of the affine value-function approximation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..instance import ProblemInstance
from ..mdp import State


@dataclass
class AlpParams:
    eta: float
    tau: np.ndarray          # (T, K, L, Jmax), zero off the valid index set
    rho: np.ndarray          # (K, L)
    meta: dict = field(default_factory=dict)

    @staticmethod
    def zeros(inst: ProblemInstance, **meta) -> "AlpParams":
        return AlpParams(0.0, np.zeros((inst.horizon, inst.K, inst.L, inst.jmax)),
                         np.zeros((inst.K, inst.L)), dict(meta))

    def value(self, state: State) -> float:
        return float(self.eta + (self.tau * state.x).sum() + (self.rho * state.y).sum())

    def max_diff(self, other: "AlpParams") -> float:
        return float(max(abs(self.eta - other.eta), np.abs(self.tau - other.tau).max(initial=0),
                         np.abs(self.rho - other.rho).max(initial=0)))

    def same_as(self, other: "AlpParams", tol: float = 1e-6) -> bool:
        return self.max_diff(other) <= tol

    def to_json(self, inst: ProblemInstance | None = None) -> dict:
        if inst is not None:
            idx = np.argwhere(inst.valid_mask())
            tau = [[int(a) for a in i] + [float(self.tau[tuple(i)])] for i in idx]
        else:
            tau = [[int(a) for a in i] + [float(self.tau[tuple(i)])]
                   for i in np.argwhere(self.tau != 0)]
        return {"eta": float(self.eta), "tau_shape": list(self.tau.shape),
                "tau": tau, "rho": self.rho.tolist(), "meta": _plain(self.meta)}

    @staticmethod
    def from_json(d: dict) -> "AlpParams":
        tau = np.zeros(tuple(d["tau_shape"]))
        for *i, v in d["tau"]:
            tau[tuple(int(a) for a in i)] = v
        return AlpParams(float(d["eta"]), tau, np.asarray(d["rho"], dtype=float),
                         dict(d.get("meta", {})))

    def save(self, path, inst=None):
        Path(path).write_text(json.dumps(self.to_json(inst), indent=1))

    @staticmethod
    def load(path) -> "AlpParams":
        return AlpParams.from_json(json.loads(Path(path).read_text()))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj
