"""Common policy interface and two reference rules."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..dayplan import Offer, TooManyRegions, plan_day
from ..instance import ProblemInstance
from ..mdp import ActionPlan, State, route_length
from ..optim.tour import SubsetTours, best_tour


@dataclass
class PolicyDecision:
    action: ActionPlan
    objective: float = 0.0
    seconds: float = 0.0
    choices: list = field(default_factory=list)   # per referral: (k, l, day) with day 0 = reject
    flags: list = field(default_factory=list)


class Policy:
    """A daily decision rule; subclasses implement ``decide``."""

    name = "policy"

    def decide(self, state: State, inst: ProblemInstance,
               rng: np.random.Generator | None = None) -> PolicyDecision:
        raise NotImplementedError

    def __call__(self, state, inst, rng=None) -> PolicyDecision:
        t0 = time.perf_counter()
        dec = self.decide(state, inst, rng)
        dec.seconds = time.perf_counter() - t0
        return dec


def execute_day_one(state: State, n: np.ndarray, r: np.ndarray, inst: ProblemInstance,
                    tours: SubsetTours | None = None) -> tuple[ActionPlan, list]:
    """Serve or divert the day-1 visits at least cost (diversion vs travel and overtime)."""
    day1 = state.x[0].sum(axis=2) + n[0]
    offers = [Offer(l, inst.services[k].e, float(inst.Z[k]), int(day1[k, l]), (k, l))
              for k in range(inst.K) for l in range(inst.L) if day1[k, l] > 0]
    flags = []
    try:
        choice = plan_day(offers, tours or SubsetTours(inst.dist), inst.chi, inst.chi_prime,
                          inst.U, inst.Q)
        served = np.zeros_like(day1)
        for (k, l), c in choice.served.items():
            served[k, l] = c
        route = choice.route
    except TooManyRegions:
        served, route = greedy_day_one(day1, inst)
        flags.append("heuristic-day-plan")
    z = day1 - served
    q_route = tuple(route)
    hours = float((served.sum(axis=1) * inst.e).sum())
    u = max(0.0, hours + route_length(q_route, inst.dist) - inst.chi)
    return ActionPlan(r=r, n=n, z=z, route=q_route, u=u), flags


def greedy_day_one(day1: np.ndarray, inst: ProblemInstance):
    """Serve regions nearest the depot first, one visit at a time, while serving costs
    less than diverting and the shift plus overtime allows."""
    order = np.argsort(inst.geometry.depot_dist, kind="stable")
    served = np.zeros_like(day1)
    chosen: list[int] = []
    q = hours = 0.0
    limit = inst.chi + inst.chi_prime
    for l in order:
        for k in np.argsort(-inst.Z, kind="stable"):
            e = inst.services[k].e
            for _ in range(int(day1[k, l])):
                locs = chosen if l in chosen else chosen + [int(l)]
                _, q_new, _ = best_tour([c + 1 for c in locs], inst.dist)
                g_old, g_new = hours + q, hours + e + q_new
                if g_new > limit + 1e-9:
                    break
                extra = inst.U * (max(0.0, g_new - inst.chi) - max(0.0, g_old - inst.chi))
                if extra + inst.Q * (q_new - q) >= inst.Z[k]:
                    break
                served[k, l] += 1
                chosen, q, hours = locs, q_new, hours + e
    order_route, _, _ = best_tour([c + 1 for c in chosen], inst.dist)
    return served, tuple(o - 1 for o in order_route)


class RejectAll(Policy):
    """Rejects every referral; serves the existing calendar as well as possible."""

    name = "reject-all"

    def decide(self, state, inst, rng=None):
        n = np.zeros((inst.horizon, inst.K, inst.L), dtype=np.int64)
        if inst.accept_all:
            n[[s.T - 1 for s in inst.services], range(inst.K)] = state.y
            r = np.zeros_like(state.y)
        else:
            r = state.y.copy()
        act, flags = execute_day_one(state, n, r, inst)
        return PolicyDecision(act, flags=flags,
                              choices=[(k, l, 0) for k in range(inst.K) for l in range(inst.L)
                                       for _ in range(int(r[k, l]))])


class AcceptDivertAll(Policy):
    """Accepts every referral for day 1 and diverts every day-1 visit."""

    name = "divert-all"

    def decide(self, state, inst, rng=None):
        n = np.zeros((inst.horizon, inst.K, inst.L), dtype=np.int64)
        n[0] = state.y
        day1 = state.x[0].sum(axis=2) + n[0]
        act = ActionPlan(r=np.zeros_like(state.y), n=n, z=day1, route=(), u=0.0)
        return PolicyDecision(act, choices=[(k, l, 1) for k in range(inst.K)
                                            for l in range(inst.L) for _ in range(int(state.y[k, l]))])
