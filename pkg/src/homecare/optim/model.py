"""Linear and mixed-integer model containers shared by the solvers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# central tolerances
FEAS_TOL = 1e-7
OPT_TOL = 1e-6
INT_TOL = 1e-6
PIVOT_TOL = 1e-9
DJ_TOL = 1e-10     # reduced-cost threshold inside the simplex


@dataclass
class LinearModel:
    c: np.ndarray
    A: np.ndarray
    rel: list                       # '<=', '>=', '=='
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray             # bool flags
    sense: str = "min"
    names: list = field(default_factory=list)
    row_names: list = field(default_factory=list)
    const: float = 0.0

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return len(self.b)

    def validate(self):
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A))
                and np.all(np.isfinite(self.b))):
            raise ValueError("model coefficients must be finite")
        if np.any(self.lb > self.ub):
            raise ValueError("inconsistent variable bounds")
        if self.A.shape != (len(self.b), len(self.c)):
            raise ValueError("constraint matrix shape mismatch")

    def objective(self, x) -> float:
        return float(self.c @ x) + self.const

    def residuals(self, x) -> float:
        """Largest constraint or bound violation of x."""
        ax = self.A @ x if self.n_rows else np.zeros(0)
        worst = 0.0
        for i, r in enumerate(self.rel):
            if r == "<=":
                worst = max(worst, ax[i] - self.b[i])
            elif r == ">=":
                worst = max(worst, self.b[i] - ax[i])
            else:
                worst = max(worst, abs(ax[i] - self.b[i]))
        worst = max(worst, float(np.max(self.lb - x, initial=0.0)),
                    float(np.max(x - self.ub, initial=0.0)))
        return worst


@dataclass
class SolveResult:
    status: str                     # optimal | infeasible | unbounded | iteration-limit | node-limit
    x: np.ndarray | None = None
    objective: float | None = None
    duals: np.ndarray | None = None  # one per constraint row (LP only)
    iterations: int = 0
    nodes: int = 0
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


class ModelBuilder:
    """Incremental construction of a LinearModel by named variables and sparse rows."""

    def __init__(self, sense: str = "min"):
        self.sense = sense
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.cost: list[float] = []
        self.integer: list[bool] = []
        self.rows: list[dict] = []
        self.rel: list[str] = []
        self.rhs: list[float] = []
        self.row_names: list[str] = []
        self.index: dict[str, int] = {}
        self.const = 0.0

    def var(self, name: str, lb=0.0, ub=np.inf, cost=0.0, integer=False) -> int:
        if name in self.index:
            raise KeyError(f"duplicate variable {name}")
        self.index[name] = len(self.names)
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.cost.append(float(cost))
        self.integer.append(bool(integer))
        return self.index[name]

    def add_cost(self, j: int, c: float):
        self.cost[j] += c

    def row(self, coefs: dict, rel: str, rhs: float, name: str = ""):
        assert rel in ("<=", ">=", "==")
        merged: dict[int, float] = {}
        for j, a in coefs.items() if isinstance(coefs, dict) else coefs:
            merged[j] = merged.get(j, 0.0) + a
        self.rows.append(merged)
        self.rel.append(rel)
        self.rhs.append(float(rhs))
        self.row_names.append(name or f"r{len(self.rows)}")

    def build(self) -> LinearModel:
        n = len(self.names)
        A = np.zeros((len(self.rows), n))
        for i, r in enumerate(self.rows):
            for j, a in r.items():
                A[i, j] = a
        return LinearModel(c=np.array(self.cost, dtype=float), A=A, rel=list(self.rel),
                           b=np.array(self.rhs, dtype=float), lb=np.array(self.lb),
                           ub=np.array(self.ub), integer=np.array(self.integer, dtype=bool),
                           sense=self.sense, names=list(self.names),
                           row_names=list(self.row_names), const=self.const)


def to_lp_text(model: LinearModel) -> str:
    """Render the model in CPLEX LP format for inspection with external tools."""
    def term(a, name):
        sign = "-" if a < 0 else "+"
        return f"{sign} {abs(a):.12g} {name}"

    names = model.names or [f"x{j}" for j in range(model.n_vars)]
    out = ["Minimize" if model.sense == "min" else "Maximize"]
    obj = " ".join(term(a, names[j]) for j, a in enumerate(model.c) if a != 0) or "0 " + names[0]
    out.append(f" obj: {obj}")
    out.append("Subject To")
    relmap = {"<=": "<=", ">=": ">=", "==": "="}
    for i in range(model.n_rows):
        lhs = " ".join(term(a, names[j]) for j, a in enumerate(model.A[i]) if a != 0)
        rname = model.row_names[i] if model.row_names else f"c{i}"
        out.append(f" {rname}: {lhs or '0 ' + names[0]} {relmap[model.rel[i]]} {model.b[i]:.12g}")
    out.append("Bounds")
    for j, nm in enumerate(names):
        lo = "-inf" if np.isneginf(model.lb[j]) else f"{model.lb[j]:.12g}"
        hi = "+inf" if np.isposinf(model.ub[j]) else f"{model.ub[j]:.12g}"
        out.append(f" {lo} <= {nm} <= {hi}")
    ints = [names[j] for j in range(model.n_vars) if model.integer[j]]
    if ints:
        out.append("General")
        out.append(" " + " ".join(ints))
    out.append("End")
    return "\n".join(out) + "\n"
