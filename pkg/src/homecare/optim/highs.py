"""Adapter onto scipy's HiGHS interface (optional external backend)."""
from __future__ import annotations

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import LinearModel, SolveResult


def _split(model: LinearModel):
    A = model.A
    lo = np.full(model.n_rows, -np.inf)
    hi = np.full(model.n_rows, np.inf)
    for i, r in enumerate(model.rel):
        if r in ("<=", "=="):
            hi[i] = model.b[i]
        if r in (">=", "=="):
            lo[i] = model.b[i]
    return A, lo, hi


def highs_mip(model: LinearModel, time_limit: float | None = None) -> SolveResult:
    sgn = 1.0 if model.sense == "min" else -1.0
    A, lo, hi = _split(model)
    cons = [LinearConstraint(A, lo, hi)] if model.n_rows else []
    opts = {"mip_rel_gap": 0.0, "presolve": True}
    if time_limit:
        opts["time_limit"] = time_limit
    res = milp(sgn * model.c, constraints=cons, integrality=model.integer.astype(int),
               bounds=Bounds(model.lb, model.ub), options=opts)
    if res.status == 0:
        x = res.x.copy()
        x[model.integer] = np.round(x[model.integer])
        return SolveResult("optimal", x=x, objective=model.objective(x))
    if res.status == 2:
        return SolveResult("infeasible")
    if res.status == 3:
        return SolveResult("unbounded")
    return SolveResult("node-limit" if res.x is not None else "iteration-limit",
                       x=res.x, objective=None if res.x is None else model.objective(res.x))


def highs_lp(model: LinearModel) -> SolveResult:
    """LP via linprog; duals reported as d(objective)/d(rhs) in the model's sense."""
    sgn = 1.0 if model.sense == "min" else -1.0
    ub_rows = [i for i, r in enumerate(model.rel) if r != "=="]
    eq_rows = [i for i, r in enumerate(model.rel) if r == "=="]
    A_ub = []
    b_ub = []
    for i in ub_rows:
        s = 1.0 if model.rel[i] == "<=" else -1.0
        A_ub.append(s * model.A[i])
        b_ub.append(s * model.b[i])
    kw = {}
    if ub_rows:
        kw["A_ub"], kw["b_ub"] = np.array(A_ub), np.array(b_ub)
    if eq_rows:
        kw["A_eq"], kw["b_eq"] = model.A[eq_rows], model.b[eq_rows]
    bounds = [(None if np.isneginf(l) else l, None if np.isposinf(u) else u)
              for l, u in zip(model.lb, model.ub)]
    res = linprog(sgn * model.c, bounds=bounds, method="highs", **kw)
    if res.status == 2:
        return SolveResult("infeasible")
    if res.status == 3:
        return SolveResult("unbounded")
    if res.status != 0:
        return SolveResult("iteration-limit")
    duals = np.zeros(model.n_rows)
    for pos, i in enumerate(ub_rows):
        s = 1.0 if model.rel[i] == "<=" else -1.0
        duals[i] = sgn * s * res.ineqlin.marginals[pos]
    for pos, i in enumerate(eq_rows):
        duals[i] = sgn * res.eqlin.marginals[pos]
    return SolveResult("optimal", x=res.x, objective=model.objective(res.x), duals=duals)
