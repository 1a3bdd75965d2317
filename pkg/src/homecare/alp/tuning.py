"""Search over the state-relevance weight for the best-performing ALP policy.

The weight is doubled until the parameters change, then bisection isolates each
parameter breakpoint and every distinct parameter set is evaluated by simulation.
Parameter sets that coincide are evaluated once.  The search ends when the policy
rejects every arrival, when the weight passes a ceiling, or when the budget runs out.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

from ..instance import ProblemInstance
from .colgen import column_generation
from .params import AlpParams

log = logging.getLogger(__name__)

CEILING_FACTOR = 1e4
SAME_TOL = 1e-6


@dataclass
class Evaluation:
    mean: float
    se: float
    reject_hours: float = 0.0
    divert_hours: float = 0.0
    accepted: int = 0
    arrivals: int = 0
    reject_se: float = 0.0
    divert_se: float = 0.0

    @property
    def all_reject(self) -> bool:
        return self.arrivals > 0 and self.accepted == 0


@dataclass
class TracePoint:
    eps: float
    policy: int               # index of the distinct parameter set
    evaluation: Evaluation


@dataclass
class TuningResult:
    eps: float
    params: AlpParams
    evaluation: Evaluation
    trace: list = field(default_factory=list)
    reason: str = ""           # all-reject | ceiling | budget
    solves: int = 0
    evaluations: int = 0

    @property
    def flagged(self) -> bool:
        return self.reason != "all-reject"


class _Budget(Exception):
    pass


class _Search:
    def __init__(self, inst, variant, evaluate, max_solves, max_evals, solver):
        self.inst = inst
        self.variant = variant
        self.evaluate = evaluate
        self.max_solves = max_solves
        self.max_evals = max_evals
        self.solver = solver or (lambda e: column_generation(inst, e, variant).params)
        self.params: dict[float, AlpParams] = {}
        self.distinct: list[AlpParams] = []
        self.evals: dict[int, Evaluation] = {}
        self.trace: list[TracePoint] = []

    def policy(self, eps: float) -> int:
        if eps not in self.params:
            if len(self.params) >= self.max_solves:
                raise _Budget()
            self.params[eps] = self.solver(eps)
        p = self.params[eps]
        for i, q in enumerate(self.distinct):
            if p.same_as(q, SAME_TOL):
                return i
        self.distinct.append(p)
        return len(self.distinct) - 1

    def same(self, a: float, b: float) -> bool:
        return self.policy(a) == self.policy(b)

    def cost(self, eps: float) -> Evaluation:
        i = self.policy(eps)
        if i not in self.evals:
            if len(self.evals) >= self.max_evals:
                raise _Budget()
            self.evals[i] = self.evaluate(self.distinct[i])
        ev = self.evals[i]
        self.trace.append(TracePoint(eps, i, ev))
        return ev


def tune_epsilon(inst: ProblemInstance, evaluate: Callable[[AlpParams], Evaluation],
                 variant: str = "1d-2i", max_solves: int = 200, max_evals: int = 40,
                 ceiling: float | None = None, min_width: float = 1e-9,
                 solver: Callable[[float], AlpParams] | None = None) -> TuningResult:
    s = _Search(inst, variant, evaluate, max_solves, max_evals, solver)
    e2_start = float(inst.lam.sum()) / (inst.K * inst.L)
    if e2_start <= 0:
        e2_start = 1.0
    ceiling = CEILING_FACTOR * e2_start if ceiling is None else ceiling
    reason = "budget"
    e1, e2 = 0.0, e2_start
    try:
        while s.same(e1, e2):                                  # step 2
            e1, e2 = e2, 2 * e2
            if e2 > ceiling:
                reason = "ceiling"
                raise StopIteration
        cur = e1                                                # step 3
        ev = s.cost(cur)
        while True:
            while True:                                         # step 4
                mid = (e1 + e2) / 2
                if s.same(mid, e2) or e2 - e1 <= min_width * max(1.0, e2):
                    width = e2 - e1
                    cur = e2
                    break
                if s.same(mid, e1):
                    e1 = mid
                else:
                    e2 = mid
            if s.same(cur, e1):                                 # step 5
                e1, e2 = cur, cur + 2 * width
                if e1 > ceiling:
                    reason = "ceiling"
                    break
                continue
            ev = s.cost(cur)
            if ev.all_reject:                                   # step 6
                reason = "all-reject"
                break
            e1, e2 = cur, cur + width
            if e1 > ceiling:
                reason = "ceiling"
                break
    except StopIteration:
        if not s.trace:
            s.cost(e1)
    except _Budget:
        log.warning("epsilon search stopped: budget exhausted")
        reason = "budget"
    if not s.trace:
        s.cost(0.0)
    best = min(s.trace, key=lambda p: (p.evaluation.mean, p.eps))
    return TuningResult(best.eps, s.distinct[best.policy], best.evaluation, s.trace, reason,
                        len(s.params), len(s.evals))


def breakpoints(result: TuningResult) -> list[TracePoint]:
    """First trace point of every distinct policy, in the order visited."""
    out, seen = [], set()
    for p in result.trace:
        if p.policy not in seen:
            seen.add(p.policy)
            out.append(p)
    return out
