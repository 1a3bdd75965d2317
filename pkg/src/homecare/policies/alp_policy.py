"""Greedy policy with respect to the affine value-function approximation.

Today's action minimises the immediate cost plus the discounted approximate value of
the expected next state.  With the state fixed, only the new referrals' placement and
the day-1 serve/divert/route choice remain, and these separate the same way as in the
most-violated-pair search: each referral unit has a best non-day-1 option, and day-1
units compete for the nurse's shift.
"""
from __future__ import annotations

import numpy as np

from ..alp.params import AlpParams
from ..alp.pricing import (referral_options, build_subproblem, decode_subproblem,
                           transition_coefficients)
from ..dayplan import Offer, TooManyRegions, plan_day
from ..instance import ProblemInstance
from ..mdp import ActionPlan, State, expected_next_x, immediate_cost
from ..optim.tour import SubsetTours
from .base import Policy, PolicyDecision


def alp_action(state: State, params: AlpParams, inst: ProblemInstance,
               tours: SubsetTours | None = None, mip_fallback: bool = True) -> PolicyDecision:
    tours = tours or SubsetTours(inst.dist)
    _, cn = transition_coefficients(inst, params.tau)
    K, L, T = inst.K, inst.L, inst.horizon
    x1 = state.x[0].sum(axis=2)
    y = state.y
    offers = []
    plans = {}
    for k in range(K):
        Zk = float(inst.Z[k])
        for l in range(L):
            if x1[k, l] > 0:
                offers.append(Offer(l, inst.services[k].e, Zk, int(x1[k, l]), ("x", k, l)))
            if y[k, l] == 0:
                continue
            a1 = float(cn[0, k, l])
            alt = referral_options(inst, cn, k, l)
            # a later day or rejection wins ties against a diverted day-1 booking
            if alt is not None and alt[0] <= a1 + Zk + 1e-12:
                b0 = (alt[0], alt[2])
            else:
                b0 = (a1 + Zk, 1)
            plans[k, l] = b0
            if b0[0] - a1 > 1e-12:
                offers.append(Offer(l, inst.services[k].e, b0[0] - a1, int(y[k, l]), ("n", k, l)))
    try:
        choice = plan_day(offers, tours, inst.chi, inst.chi_prime, inst.U, inst.Q)
    except TooManyRegions:
        if not mip_fallback:
            raise
        return _alp_action_mip(state, params, inst)
    n = np.zeros((T, K, L), dtype=np.int64)
    r = np.zeros((K, L), dtype=np.int64)
    z = np.zeros((K, L), dtype=np.int64)
    choices = []
    for k in range(K):
        for l in range(L):
            z[k, l] += x1[k, l] - choice.served.get(("x", k, l), 0)
            if y[k, l] == 0:
                continue
            served = choice.served.get(("n", k, l), 0)
            rest = int(y[k, l]) - served
            n[0, k, l] += served
            choices += [(k, l, 1)] * served
            cost, day = plans[k, l]
            if day == 0:
                r[k, l] += rest
            else:
                n[day - 1, k, l] += rest
                if day == 1:
                    z[k, l] += rest
            choices += [(k, l, day)] * rest
    act = ActionPlan(r=r, n=n, z=z, route=choice.route, u=choice.overtime)
    return PolicyDecision(act, objective=approximate_q(state, act, params, inst), choices=choices)


def approximate_q(state: State, action: ActionPlan, params: AlpParams,
                  inst: ProblemInstance) -> float:
    """c(s,a) + gamma * (eta + tau.E[X'] + rho.lambda)."""
    ex = expected_next_x(state.x, action.n, inst)
    future = params.eta + float((params.tau * ex).sum() + (params.rho * inst.lam).sum())
    return immediate_cost(state, action, inst) + inst.gamma * future


def _alp_action_mip(state: State, params: AlpParams, inst: ProblemInstance) -> PolicyDecision:
    from ..optim.highs import highs_mip
    sp = build_subproblem(inst, params.eta, params.tau, params.rho, fixed_state=state)
    res = highs_mip(sp.model)
    if not res.ok:
        raise RuntimeError(f"policy MIP failed: {res.status}")
    _, act = decode_subproblem(sp, res.x)
    flags = ["mip"]
    choices = []
    for k in range(inst.K):
        for l in range(inst.L):
            choices += [(k, l, 0)] * int(act.r[k, l])
            for t in range(inst.horizon):
                choices += [(k, l, t + 1)] * int(act.n[t, k, l])
    return PolicyDecision(act, objective=approximate_q(state, act, params, inst),
                          choices=choices, flags=flags)


class AlpPolicy(Policy):
    name = "alp"

    def __init__(self, params: AlpParams):
        self.params = params
        self._tours = None

    def decide(self, state, inst, rng=None):
        if self._tours is None or self._tours.dist is not inst.dist:
            self._tours = SubsetTours(inst.dist)
        return alp_action(state, self.params, inst, self._tours)


ACCEPT, MAYBE, REJECT = "always-accept", "maybe", "always-reject"


def classify_regions(params: AlpParams, inst: ProblemInstance) -> np.ndarray:
    """(K, L) labels from the sufficient acceptance and rejection conditions.

    Assigning to a later day costs min_t gamma*tau[t,k,l,0] over t <= T_k - 1, and a
    day-1 assignment costs at least gamma*tau[h_k,k,l,1]*p_{k,2}; comparing both with R_k
    gives regions that never depend on the state.
    """
    g = inst.gamma
    out = np.full((inst.K, inst.L), MAYBE, dtype=object)
    for k, s in enumerate(inst.services):
        Rk = float(inst.R[k])
        for l in range(inst.L):
            later = min((g * params.tau[t - 1, k, l, 0] for t in range(1, s.T)), default=np.inf)
            first = g * params.tau[s.h - 1, k, l, 1] * s.cont(2) if s.J >= 2 else 0.0
            if later < Rk:
                out[k, l] = ACCEPT
            elif min(first, later) > Rk:
                out[k, l] = REJECT
    return out
