"""Greedy referral-by-referral scheduling that ignores future arrivals."""
from __future__ import annotations

import numpy as np

from ..instance import ProblemInstance
from ..mdp import State
from ..optim.tour import SubsetTours
from .base import Policy, PolicyDecision, execute_day_one
from .calendar import Calendar, Referral, best_choice, build_calendar, choice_costs


def todays_referrals(state: State, inst: ProblemInstance) -> list[Referral]:
    """Pending referrals, nearest to the depot first (ties by type, then region)."""
    d0 = inst.geometry.depot_dist
    cells = sorted(((float(d0[l]), k, l) for k in range(inst.K) for l in range(inst.L)
                    if state.y[k, l] > 0))
    out = []
    for _, k, l in cells:
        for _ in range(int(state.y[k, l])):
            out.append(Referral(k, l, 1, len(out)))
    return out


def decide_in_order(cal: Calendar, refs: list[Referral]) -> list[tuple[Referral, int]]:
    """Give each referral its cheapest option in list order and book it."""
    out = []
    for ref in refs:
        _, day = best_choice(choice_costs(cal, ref))
        if day:
            cal.assign(day, ref.k, ref.l, cal.inst.services[ref.k].jbar)
        out.append((ref, day))
    return out


def decisions_to_action(state: State, decisions, inst: ProblemInstance,
                        tours: SubsetTours | None = None, flags=()) -> PolicyDecision:
    n = np.zeros((inst.horizon, inst.K, inst.L), dtype=np.int64)
    r = np.zeros((inst.K, inst.L), dtype=np.int64)
    choices = []
    for ref, day in sorted(decisions, key=lambda d: d[0].index):
        if day == 0:
            r[ref.k, ref.l] += 1
        else:
            n[day - 1, ref.k, ref.l] += 1
        choices.append((ref.k, ref.l, day))
    act, more = execute_day_one(state, n, r, inst, tours)
    return PolicyDecision(act, choices=choices, flags=list(flags) + more)


class MyopicPolicy(Policy):
    """Books the expected number of visits for each referral at the cheapest option."""

    name = "myopic"

    def __init__(self):
        self._tours = None

    def decide(self, state, inst, rng=None):
        if self._tours is None or self._tours.dist is not inst.dist:
            self._tours = SubsetTours(inst.dist)
        cal = build_calendar(state, inst)
        decisions = decide_in_order(cal, todays_referrals(state, inst))
        return decisions_to_action(state, decisions, inst, self._tours, cal.flags)


def myopic_action(state: State, inst: ProblemInstance) -> PolicyDecision:
    return MyopicPolicy()(state, inst)
