"""Best-first branch and bound over LP relaxations."""
from __future__ import annotations

import heapq
import itertools
from dataclasses import replace

import numpy as np

from .lp import solve_lp
from .model import INT_TOL, OPT_TOL, LinearModel, SolveResult


class BranchAndBound:
    """Best-first search; branching on the most fractional variable (lowest index on ties)."""

    def __init__(self, model: LinearModel, node_limit: int = 20_000, lp_solver=solve_lp):
        model.validate()
        self.model = model
        self.node_limit = node_limit
        self.lp = lp_solver
        self.sgn = 1.0 if model.sense == "min" else -1.0
        self.nodes = 0
        self.incumbent = None
        self.best = np.inf       # in minimisation units

    def _relax(self, lb, ub):
        sub = replace(self.model, lb=lb, ub=ub)
        return self.lp(sub)

    def solve(self) -> SolveResult:
        m = self.model
        ints = np.nonzero(m.integer)[0]
        lb0 = m.lb.copy()
        ub0 = m.ub.copy()
        lb0[ints] = np.ceil(lb0[ints] - INT_TOL)
        ub0[ints] = np.floor(ub0[ints] + INT_TOL)
        if np.any(lb0 > ub0):
            return SolveResult("infeasible")
        counter = itertools.count()
        root = self._relax(lb0, ub0)
        self.nodes = 1
        if root.status == "unbounded":
            return SolveResult("unbounded", nodes=1)
        if root.status != "optimal":
            return SolveResult(root.status if root.status != "optimal" else "infeasible", nodes=1)
        heap = [(self.sgn * root.objective, next(counter), lb0, ub0, root)]
        hit_limit = False
        while heap:
            bound, _, lb, ub, res = heapq.heappop(heap)
            if bound >= self.best - OPT_TOL:
                continue
            x = res.x
            frac = np.abs(x[ints] - np.round(x[ints])) if len(ints) else np.zeros(0)
            if len(ints) == 0 or frac.max() <= INT_TOL:
                xi = x.copy()
                xi[ints] = np.round(xi[ints])
                val = self.sgn * m.objective(xi)
                if val < self.best - 1e-12:
                    self.best, self.incumbent = val, xi
                continue
            if self.nodes >= self.node_limit:
                hit_limit = True
                break
            # most fractional: distance to nearest integer closest to 0.5
            score = -np.abs(frac - 0.5)
            pick = ints[int(np.argmax(score))]
            v = x[pick]
            for side in (0, 1):
                nlb, nub = lb.copy(), ub.copy()
                if side == 0:
                    nub[pick] = np.floor(v)
                else:
                    nlb[pick] = np.ceil(v)
                if nlb[pick] > nub[pick]:
                    continue
                child = self._relax(nlb, nub)
                self.nodes += 1
                if child.status != "optimal":
                    continue
                cb = self.sgn * child.objective
                if cb < self.best - OPT_TOL:
                    heapq.heappush(heap, (cb, next(counter), nlb, nub, child))
        if self.incumbent is None:
            return SolveResult("node-limit" if hit_limit else "infeasible", nodes=self.nodes)
        status = "node-limit" if hit_limit else "optimal"
        return SolveResult(status, x=self.incumbent, objective=m.objective(self.incumbent),
                           nodes=self.nodes,
                           info={"bound": heap[0][0] * self.sgn if (hit_limit and heap) else None})


def solve_mip(model: LinearModel, node_limit: int = 20_000) -> SolveResult:
    """Proven-optimal integer solution (absolute gap <= 1e-6) or a flagged node-limit result."""
    return BranchAndBound(model, node_limit=node_limit).solve()
