"""Revised primal simplex with dual prices and Bland's rule against cycling."""
from __future__ import annotations

import numpy as np

from .model import DJ_TOL, FEAS_TOL, PIVOT_TOL, LinearModel, SolveResult

REFACTOR_EVERY = 40
DEGENERATE_SWITCH = 25


class RevisedSimplex:
    """min c'x  s.t.  A x = b, x >= 0  with an explicit basis inverse.

    Columns can be appended between solves; the previous basis stays feasible,
    which is what column generation needs.
    """

    def __init__(self, A, b, c, max_iter: int = 50_000):
        self.A = np.array(A, dtype=float, copy=True)
        self.b = np.array(b, dtype=float)
        self.c = np.array(c, dtype=float)
        self.m = self.A.shape[0]
        self.max_iter = max_iter
        self.basis: list[int] | None = None
        self.Binv: np.ndarray | None = None
        self.xB: np.ndarray | None = None
        self.blocked = np.zeros(self.A.shape[1], dtype=bool)
        self.iterations = 0
        self.status = "unsolved"

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def add_columns(self, cols, costs):
        cols = np.atleast_2d(np.asarray(cols, dtype=float))
        if cols.shape[0] != self.m:
            cols = cols.T
        self.A = np.hstack([self.A, cols])
        self.c = np.concatenate([self.c, np.atleast_1d(np.asarray(costs, dtype=float))])
        self.blocked = np.concatenate([self.blocked, np.zeros(cols.shape[1], dtype=bool)])

    # -- basis handling ------------------------------------------------------
    def set_basis(self, basis) -> bool:
        basis = list(basis)
        B = self.A[:, basis]
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            return False
        xB = Binv @ self.b
        if np.any(xB < -FEAS_TOL):
            return False
        self.basis, self.Binv, self.xB = basis, Binv, np.maximum(xB, 0.0)
        return True

    def _refactor(self):
        self.Binv = np.linalg.inv(self.A[:, self.basis])
        self.xB = np.maximum(self.Binv @ self.b, 0.0)

    def duals(self) -> np.ndarray:
        return self.c[self.basis] @ self.Binv

    def primal(self) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.basis] = self.xB
        return x

    def objective(self) -> float:
        return float(self.c[self.basis] @ self.xB)

    # -- main loop -----------------------------------------------------------
    def _iterate(self, cost: np.ndarray) -> str:
        degenerate = 0
        since_refactor = 0
        start = self.iterations
        in_basis = np.zeros(self.n, dtype=bool)
        in_basis[self.basis] = True
        while True:
            if self.iterations - start >= self.max_iter:
                return "iteration-limit"
            y = cost[self.basis] @ self.Binv
            d = cost - y @ self.A
            d[in_basis] = 0.0
            d[self.blocked] = 0.0
            bland = degenerate >= DEGENERATE_SWITCH
            if bland:
                cand = np.nonzero(d < -DJ_TOL)[0]
                if len(cand) == 0:
                    return "optimal"
                q = int(cand[0])
            else:
                q = int(np.argmin(d))
                if d[q] >= -DJ_TOL:
                    return "optimal"
            u = self.Binv @ self.A[:, q]
            pos = np.nonzero(u > PIVOT_TOL)[0]
            if len(pos) == 0:
                return "unbounded"
            ratios = self.xB[pos] / u[pos]
            tmin = ratios.min()
            ties = pos[ratios <= tmin + 1e-12]
            if bland:
                r = int(min(ties, key=lambda i: self.basis[i]))
            else:
                r = int(ties[np.argmax(u[ties])])
            theta = self.xB[r] / u[r]
            degenerate = degenerate + 1 if theta <= 1e-12 else 0
            # pivot
            self.xB = self.xB - theta * u
            self.xB[r] = theta
            piv = self.Binv[r] / u[r]
            self.Binv -= np.outer(u, piv)
            self.Binv[r] = piv
            in_basis[self.basis[r]] = False
            in_basis[q] = True
            self.basis[r] = q
            self.iterations += 1
            since_refactor += 1
            if since_refactor >= REFACTOR_EVERY:
                self._refactor()
                since_refactor = 0
            else:
                self.xB = np.maximum(self.xB, 0.0)

    def solve(self) -> str:
        if self.basis is None:
            st = self._phase_one()
            if st != "optimal":
                self.status = st
                return st
        self._refactor()
        st = self._iterate(self.c)
        if st == "optimal":
            self._refactor()
        self.status = st
        return st

    def _phase_one(self) -> str:
        m, n0 = self.m, self.n
        sign = np.where(self.b < 0, -1.0, 1.0)
        self.A *= sign[:, None]
        self.b *= sign
        self._row_sign = sign
        self.add_columns(np.eye(m), np.zeros(m))
        art = np.arange(n0, n0 + m)
        cost1 = np.zeros(self.n)
        cost1[art] = 1.0
        self.basis = list(art)
        self.Binv = np.eye(m)
        self.xB = self.b.copy()
        st = self._iterate(cost1)
        if st != "optimal":
            return st
        if cost1[self.basis] @ self.xB > FEAS_TOL * max(1.0, np.abs(self.b).max(initial=0)):
            return "infeasible"
        # drive remaining artificials out of the basis where possible
        for r in range(m):
            if self.basis[r] < n0:
                continue
            row = self.Binv[r] @ self.A[:, :n0]
            in_b = set(self.basis)
            cand = [j for j in np.nonzero(np.abs(row) > 1e-7)[0] if j not in in_b]
            if cand:
                q = max(cand, key=lambda j: abs(row[j]))
                u = self.Binv @ self.A[:, q]
                piv = self.Binv[r] / u[r]
                self.Binv -= np.outer(u, piv)
                self.Binv[r] = piv
                self.basis[r] = q
        self.blocked[art] = True
        self.c[art] = 0.0
        return "optimal"

    def row_duals(self) -> np.ndarray:
        """Duals of the original rows (undoing the phase-one sign normalisation)."""
        y = self.duals()
        return y * getattr(self, "_row_sign", np.ones(self.m))


# ---------------------------------------------------------------------------
# General models
# ---------------------------------------------------------------------------

def _standard_form(model: LinearModel):
    """Map a bounded LinearModel to min c'x', A'x' = b', x' >= 0.

    Returns the standard data and a recovery closure x' -> x.
    """
    n = model.n_vars
    lb, ub = model.lb, model.ub
    cols = []          # list of (orig index, multiplier) per standard column
    shift = np.zeros(n)
    for j in range(n):
        if np.isfinite(lb[j]):
            cols.append((j, 1.0))
            shift[j] = lb[j]
        elif np.isfinite(ub[j]):
            cols.append((j, -1.0))
            shift[j] = ub[j]
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nstd = len(cols)
    sgn = 1.0 if model.sense == "min" else -1.0
    rows_A, rows_b, rel = [], [], []
    base = model.A @ shift if model.n_rows else np.zeros(0)
    for i in range(model.n_rows):
        rows_A.append(np.array([model.A[i, j] * mult for j, mult in cols]))
        rows_b.append(model.b[i] - base[i])
        rel.append(model.rel[i])
    # finite upper bounds on shifted-from-lower variables
    for s, (j, mult) in enumerate(cols):
        if mult > 0 and np.isfinite(lb[j]) and np.isfinite(ub[j]):
            row = np.zeros(nstd)
            row[s] = 1.0
            rows_A.append(row)
            rows_b.append(ub[j] - lb[j])
            rel.append("<=")
    m = len(rows_A)
    n_slack = sum(1 for r in rel if r != "==")
    A = np.zeros((m, nstd + n_slack))
    if m:
        A[:, :nstd] = np.array(rows_A)
    k = nstd
    for i, r in enumerate(rel):
        if r == "<=":
            A[i, k] = 1.0
            k += 1
        elif r == ">=":
            A[i, k] = -1.0
            k += 1
    c = np.zeros(nstd + n_slack)
    for s, (j, mult) in enumerate(cols):
        c[s] = sgn * model.c[j] * mult
    b = np.array(rows_b, dtype=float)

    def recover(xs):
        x = shift.copy()
        for s, (j, mult) in enumerate(cols):
            x[j] += mult * xs[s]
        return x

    return A, b, c, recover


def solve_lp(model: LinearModel, max_iter: int = 50_000) -> SolveResult:
    """Solve an LP (integrality flags ignored) with the bundled revised simplex.

    Duals are reported as d(objective)/d(rhs) for each original row, in the
    model's own sense.
    """
    model.validate()
    A, b, c, recover = _standard_form(model)
    sgn = 1.0 if model.sense == "min" else -1.0
    if A.shape[0] == 0:
        if np.any(c < -DJ_TOL):
            return SolveResult("unbounded")
        x = recover(np.zeros(A.shape[1]))
        return SolveResult("optimal", x=x, objective=model.objective(x), duals=np.zeros(0),
                           info={"reduced_costs": model.c.copy()})
    sx = RevisedSimplex(A, b, c, max_iter=max_iter)
    st = sx.solve()
    if st != "optimal":
        return SolveResult(st, iterations=sx.iterations)
    xs = sx.primal()[: A.shape[1]]
    x = recover(xs)
    y = sx.row_duals()
    duals = sgn * y[: model.n_rows]
    rc = model.c - (model.A.T @ duals if model.n_rows else 0.0)
    return SolveResult("optimal", x=x, objective=model.objective(x), duals=duals,
                       iterations=sx.iterations, info={"reduced_costs": rc})


def dual_objective(model: LinearModel, duals, reduced_costs) -> float:
    """Lagrangian dual value implied by row duals and bound multipliers."""
    val = float(model.b @ duals) if model.n_rows else 0.0
    rc = np.asarray(reduced_costs)
    sgn = 1.0 if model.sense == "min" else -1.0
    for j, r in enumerate(rc):
        if abs(r) <= 1e-12:
            continue
        # a min problem pays r*x at the bound the reduced cost pushes towards
        bound = model.lb[j] if sgn * r > 0 else model.ub[j]
        if not np.isfinite(bound):
            return float("-inf") * sgn
        val += r * bound
    return val + model.const
