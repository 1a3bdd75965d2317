"""Scenario-based policy: vote over sampled futures of referral arrivals."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..instance import ProblemInstance
from ..mdp import State
from ..optim.tour import SubsetTours
from .base import Policy, PolicyDecision
from .calendar import Calendar, Referral, best_choice, build_calendar, choice_costs, planning_horizon
from .myopic import decisions_to_action, todays_referrals

SB_THRESHOLDS = tuple(range(0, 101, 10))


@dataclass(frozen=True)
class SbConfig:
    n_scenarios: int = 100
    threshold: int = 50

    def lookahead(self, inst: ProblemInstance) -> int:
        return max(max(s.h for s in inst.services), max(s.T for s in inst.services), 5)

    def horizon(self, inst: ProblemInstance) -> int:
        return self.lookahead(inst) + planning_horizon(inst)


def sample_future(inst: ProblemInstance, days: int, rng: np.random.Generator) -> list[Referral]:
    """Simulated referrals arriving on calendar days 2 .. days + 1."""
    out = []
    for d in range(2, days + 2):
        arr = np.minimum(rng.poisson(inst.lam), inst.y_max)
        for k, l in zip(*np.nonzero(arr)):
            out += [Referral(int(k), int(l), d)] * int(arr[k, l])
    return out


def greedy_schedule(cal: Calendar, refs: list[Referral]) -> dict[int, int]:
    """Repeatedly book the referral whose best option is cheapest.

    Returns the chosen day (0 = reject) for each of today's referrals.  Option costs are
    cached and recomputed only when a day they depend on has changed.
    """
    inst = cal.inst
    pending = list(range(len(refs)))
    cache: dict[int, tuple] = {}
    out = {}

    def span(ref):
        s = inst.services[ref.k]
        last = min(cal.H, ref.arrival + s.T - 1 + s.h * (s.jbar - 1))
        return range(ref.arrival, last + 1)

    while pending:
        best = None
        for i in pending:
            ref = refs[i]
            key = tuple(cal.days[t].version for t in span(ref))
            hit = cache.get(i)
            if hit is None or hit[0] != key:
                hit = (key, best_choice(choice_costs(cal, ref)))
                cache[i] = hit
            cost, day = hit[1]
            if best is None or cost < best[0] - 1e-12:
                best = (cost, day, i)
        _, day, i = best
        ref = refs[i]
        if day:
            cal.assign(day, ref.k, ref.l, inst.services[ref.k].jbar)
        if ref.index >= 0:
            out[ref.index] = day
        pending.remove(i)
    return out


class SbPolicy(Policy):
    name = "sb"

    def __init__(self, config: SbConfig | None = None):
        self.config = config or SbConfig()
        self._tours = None

    def decide(self, state, inst, rng=None):
        cfg = self.config
        if self._tours is None or self._tours.dist is not inst.dist:
            self._tours = SubsetTours(inst.dist)
        rng = rng if rng is not None else np.random.default_rng(0)
        today = todays_referrals(state, inst)
        base = build_calendar(state, inst, cfg.horizon(inst))
        if not today:
            return decisions_to_action(state, [], inst, self._tours, base.flags)
        accepted = Counter()
        days = {r.index: Counter() for r in today}
        for child in rng.spawn(cfg.n_scenarios):
            refs = today + sample_future(inst, cfg.lookahead(inst), child)
            for idx, day in greedy_schedule(base.copy(), refs).items():
                if day:
                    accepted[idx] += 1
                    days[idx][day] += 1
        decisions = []
        for ref in today:
            if accepted[ref.index] < cfg.threshold and not inst.accept_all:
                decisions.append((ref, 0))
            elif days[ref.index]:
                top = max(days[ref.index].values())
                decisions.append((ref, min(d for d, c in days[ref.index].items() if c == top)))
            else:
                # never accepted in any scenario but the threshold does not bind
                costs = choice_costs(base, ref, allow_reject=False)
                decisions.append((ref, best_choice(costs)[1]))
        return decisions_to_action(state, decisions, inst, self._tours, base.flags)


@dataclass
class SbTuning:
    threshold: int
    means: dict              # candidate -> mean simulated value
    runs: int


def tune_sb_threshold(inst: ProblemInstance, config, candidates=SB_THRESHOLDS,
                      n_scenarios: int = 100, states: list | None = None) -> SbTuning:
    """Threshold with the lowest mean simulated value over a fixed set of start states.

    ``config`` is a sim.SimConfig; each candidate is simulated once from every start
    state with the same random streams.  Ties go to the smaller threshold.
    """
    from ..sim import Streams, estimate_value, initial_states
    states = states if states is not None else initial_states(inst, config)
    means, runs = {}, 0
    for cand in sorted(candidates):
        pol = SbPolicy(SbConfig(n_scenarios, int(cand)))
        vals = []
        for i, s in enumerate(states):
            vals.append(estimate_value(s, pol, inst, config.days,
                                       Streams(config.seed, i, "sb", True)).value)
            runs += 1
        means[int(cand)] = float(np.mean(vals))
    best = None
    for cand, m in means.items():
        if best is None or m < means[best] - 1e-9 * max(1.0, abs(m)):
            best = cand
    return SbTuning(best, means, runs)
