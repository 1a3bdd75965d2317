"""Multi-day visit calendar shared by the Myopic and scenario-based policies.

Each day keeps a tour over the regions with planned visits and the planned service
hours.  A visit that no longer fits within shift plus overtime is booked as diverted
and does not enter the tour.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..instance import ProblemInstance
from ..mdp import State
from ..optim.tour import best_tour, cheapest_insertion


@dataclass
class Day:
    route: tuple = ()          # distance-matrix indices (region l is l + 1)
    q: float = 0.0
    hours: float = 0.0
    version: int = 0


@dataclass
class Referral:
    k: int
    l: int
    arrival: int = 1           # calendar day the referral appears (1 = today)
    index: int = -1            # position among today's referrals, -1 for simulated ones


@dataclass
class Calendar:
    inst: ProblemInstance
    days: list                 # days[0] unused so that days[t] is calendar day t
    heuristic: bool = False
    flags: list = field(default_factory=list)

    def __post_init__(self):
        self.R = self.inst.R
        self.Z = self.inst.Z
        self.e = self.inst.e

    @property
    def H(self) -> int:
        return len(self.days) - 1

    def copy(self) -> "Calendar":
        return Calendar(self.inst, [Day(d.route, d.q, d.hours, d.version) for d in self.days],
                        self.heuristic, list(self.flags))

    # -- incremental cost ------------------------------------------------------
    def visit_cost(self, t: int, k: int, l: int) -> tuple[float, tuple, float, bool]:
        """Extra cost of one more type-k visit at region l on day t.

        Returns (cost, new route, new travel, fits); ``fits`` is False when the visit
        would push the day past shift plus overtime, in which case it is diverted.
        """
        inst = self.inst
        d = self.days[t]
        e = self.e[k]
        route, dq = cheapest_insertion(d.route, l + 1, inst.dist)
        g_old = d.q + d.hours
        g_new = g_old + dq + e
        if g_new <= inst.chi + 1e-9:
            return inst.Q * dq, route, d.q + dq, True
        if g_new <= inst.chi + inst.chi_prime + 1e-9:
            extra = max(0.0, g_new - inst.chi) - max(0.0, g_old - inst.chi)
            return inst.Q * dq + inst.U * extra, route, d.q + dq, True
        return float(self.Z[k]), d.route, d.q, False

    def book(self, t: int, k: int, l: int):
        _, route, q, fits = self.visit_cost(t, k, l)
        d = self.days[t]
        if fits:
            d.route, d.q, d.hours = route, q, d.hours + self.e[k]
        d.version += 1

    def visit_days(self, first: int, k: int, count: int) -> list[int]:
        h = self.inst.services[k].h
        return [first + i * h for i in range(count) if first + i * h <= self.H]

    def assignment_cost(self, first: int, k: int, l: int, count: int) -> float:
        """Discounted extra cost of booking ``count`` visits starting on day ``first``."""
        g = self.inst.gamma
        return sum(g ** (t - 1) * self.visit_cost(t, k, l)[0]
                   for t in self.visit_days(first, k, count))

    def assign(self, first: int, k: int, l: int, count: int):
        for t in self.visit_days(first, k, count):
            self.book(t, k, l)


def planning_horizon(inst: ProblemInstance) -> int:
    return max(s.T + s.h * (s.jbar - 1) for s in inst.services)


def build_calendar(state: State, inst: ProblemInstance, H: int | None = None,
                   exact_limit: int = 12) -> Calendar:
    """Book the remaining visits of every existing patient up to its expected count
    (at least one), then route each day."""
    H = planning_horizon(inst) if H is None else H
    hours = np.zeros(H + 1)
    locs: list[set] = [set() for _ in range(H + 1)]
    x = state.x
    for t, k, l, j in map(tuple, np.argwhere(x > 0)):
        s = inst.services[k]
        for i in range(max(1, s.jbar - j)):
            day = t + 1 + i * s.h
            if day > H:
                break
            hours[day] += s.e * x[t, k, l, j]
            locs[day].add(l + 1)
    days = [Day()]
    heuristic = False
    for t in range(1, H + 1):
        route, q, exact = best_tour(locs[t], inst.dist, exact_limit)
        heuristic |= not exact
        days.append(Day(tuple(route), q, float(hours[t])))
    cal = Calendar(inst, days, heuristic)
    if heuristic:
        cal.flags.append("heuristic-tour")
    return cal


def choice_costs(cal: Calendar, ref: Referral, allow_reject: bool = True) -> list[tuple[float, int]]:
    """(cost, day) for rejection (day 0) and each admissible first-visit day."""
    inst = cal.inst
    k, l = ref.k, ref.l
    s = inst.services[k]
    g = inst.gamma
    out = []
    if allow_reject and not inst.accept_all:
        out.append((g ** (ref.arrival - 1) * float(cal.R[k]), 0))
    for t in range(ref.arrival, ref.arrival + s.T):
        if t > cal.H:
            break
        out.append((cal.assignment_cost(t, k, l, s.jbar), t))
    return out


def best_choice(costs) -> tuple[float, int]:
    """Lowest cost; ties go to the earliest option (rejection counts as day 0)."""
    best = None
    for c in sorted(costs, key=lambda c: c[1]):
        if best is None or c[0] < best[0] - 1e-12:
            best = c
    return best
