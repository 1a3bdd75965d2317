"""State-action columns of the dual ALP and the starting column."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..instance import ProblemInstance
from ..mdp import ActionPlan, State, expected_next_x, immediate_cost


@dataclass
class Column:
    state: State
    action: ActionPlan
    cost: float
    xcoef: np.ndarray      # (T, K, L, Jmax): x - gamma * E[X']
    ycoef: np.ndarray      # (K, L): y - gamma * lambda


def make_column(state: State, action: ActionPlan, inst: ProblemInstance,
                check: bool = True) -> Column:
    ex = expected_next_x(state.x, action.n, inst)
    xc = state.x - inst.gamma * ex
    xc[~inst.valid_mask()] = 0.0
    yc = state.y - inst.gamma * inst.lam
    return Column(state, action, immediate_cost(state, action, inst, check=check), xc, yc)


def constraint_slack(col: Column, eta: float, tau: np.ndarray, rho: np.ndarray,
                     gamma: float) -> float:
    """c(s,a) minus the ALP left-hand side; negative means the constraint is violated."""
    return float(col.cost - (1 - gamma) * eta - (tau * col.xcoef).sum() - (rho * col.ycoef).sum())


class InitialColumnError(RuntimeError):
    pass


def initial_column(inst: ProblemInstance, eps_weight: np.ndarray) -> Column:
    """Smallest-count state in which all referrals are accepted and every day-1 visit is
    diverted, such that the single column with weight 1/(1-gamma) satisfies every dual
    row (x - gamma E[X'] >= (1-gamma) * eps, y >= lambda)."""
    g = inst.gamma
    T, K, L, J = inst.horizon, inst.K, inst.L, inst.jmax
    x = np.zeros((T, K, L, J), dtype=np.int64)
    n = np.zeros((T, K, L), dtype=np.int64)
    y = np.ceil(inst.lam - 1e-12).astype(np.int64)
    need = (1 - g) * eps_weight

    def up(v):
        return max(0, int(math.ceil(v - 1e-9)))

    for k, s in enumerate(inst.services):
        # accepted referrals go to the last admissible day
        n[s.T - 1, k] = y[k]
        for l in range(L):
            for t in range(s.T - 1, 0, -1):          # j = 0 chain, t = T_k-1 .. 1
                nxt = x[t, k, l, 0] + n[t, k, l]
                x[t - 1, k, l, 0] = up(need[t - 1, k, l, 0] + g * nxt)
            for j in range(1, s.J):
                feed = x[0, k, l, j - 1] + (n[0, k, l] if j == 1 else 0)
                x[s.h - 1, k, l, j] = up(need[s.h - 1, k, l, j] + g * s.cont(j + 1) * feed)
                for t in range(s.h - 1, 0, -1):
                    x[t - 1, k, l, j] = up(need[t - 1, k, l, j] + g * x[t, k, l, j])
    x[~inst.valid_mask()] = 0
    if x.max(initial=0) > inst.x_max or y.max(initial=0) > inst.y_max:
        raise InitialColumnError("state caps too small for a feasible starting column")
    day1 = x[0].sum(axis=2) + n[0]
    act = ActionPlan(r=np.zeros((K, L), dtype=np.int64), n=n, z=day1.copy(), route=(), u=0.0)
    return make_column(State(x, y), act, inst)


def extreme_columns(inst: ProblemInstance) -> list[Column]:
    """Pairs whose state has a single nonzero coordinate at an extreme value.

    Later-day counts and pending referrals sit at their caps with nothing done today;
    day-1 counts hold as many visits as one trip to the region can serve.
    """
    T, K, L, J = inst.horizon, inst.K, inst.L, inst.jmax
    vm = inst.valid_mask()
    cols = []

    def empty():
        return (np.zeros((T, K, L, J), dtype=np.int64), np.zeros((K, L), dtype=np.int64),
                ActionPlan.empty(inst))

    for t, k, l, j in map(tuple, np.argwhere(vm)):
        if t == 0:
            continue
        x, y, a = empty()
        x[t, k, l, j] = inst.x_max
        cols.append(make_column(State(x, y), a, inst))
    d0 = inst.geometry.depot_dist
    for k, s in enumerate(inst.services):
        for l in range(L):
            trip = 2 * d0[l]
            full = [int(np.floor((inst.chi - trip) / s.e + 1e-9))]
            if inst.chi_prime > 0:
                full.append(int(np.floor((inst.chi + inst.chi_prime - trip) / s.e + 1e-9)))
            for m in sorted(set(min(f, inst.x_max if s.T > 1 else inst.y_max) for f in full)):
                if m <= 0:
                    continue
                u = max(0.0, m * s.e + trip - inst.chi)
                for j in range(s.J):
                    if not vm[0, k, l, j]:
                        continue
                    x, y, a = empty()
                    x[0, k, l, j] = m
                    a = replace(a, route=(l,), u=u)
                    cols.append(make_column(State(x, y), a, inst))
                if s.T == 1:
                    x, y, a = empty()
                    y[k, l] = m
                    a.n[0, k, l] = m
                    a = replace(a, route=(l,), u=u)
                    cols.append(make_column(State(x, y), a, inst))
            if s.T > 1:
                x, y, a = empty()
                y[k, l] = inst.y_max
                a.n[s.T - 1, k, l] = inst.y_max
                cols.append(make_column(State(x, y), a, inst))
            if not inst.accept_all:
                x, y, a = empty()
                y[k, l] = inst.y_max
                a.r[k, l] = inst.y_max
                cols.append(make_column(State(x, y), a, inst))
    return cols
