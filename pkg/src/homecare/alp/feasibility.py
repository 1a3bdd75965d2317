"""Checks that a parameter set satisfies the approximate-LP constraints."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..dayplan import TooManyRegions
from ..instance import ProblemInstance
from ..mdp import ActionPlan, State
from ..optim.tour import cheapest_insertion, optimal_tour
from .columns import Column, constraint_slack, extreme_columns, make_column
from .params import AlpParams
from .pricing import price_exact

ENUMERATION_LIMIT = 10 ** 7


class EnumerationTooLarge(ValueError):
    pass


@dataclass
class FeasibilityReport:
    mode: str
    max_violation: float          # max over checked pairs of -(slack), floored at 0
    checked: int
    worst: Column | None
    exact_min_slack: float | None = None   # from the exact pricing search, when available

    @property
    def feasible(self) -> bool:
        return self.max_violation <= 1e-6


def _referral_splits(y: int, days: int, allow_reject: bool):
    """All ways to spread y referrals over rejection and days 1..days."""
    slots = days + (1 if allow_reject else 0)
    for bars in itertools.combinations(range(y + slots - 1), slots - 1):
        parts, prev = [], -1
        for b in bars + (y + slots - 1,):
            parts.append(b - prev - 1)
            prev = b
        yield parts


def enumeration_size(inst: ProblemInstance) -> int:
    vm = inst.valid_mask()
    states = (inst.x_max + 1) ** int(vm.sum())
    per_kl = 0
    for s in inst.services:
        slots = s.T + (0 if inst.accept_all else 1)
        per_kl_k = sum(math.comb(y + slots - 1, slots - 1) * (y + 1) for y in range(inst.y_max + 1))
        per_kl = max(per_kl, per_kl_k)
    return states * per_kl ** (inst.K * inst.L) * (inst.x_max * int(vm[0].sum()) + 1)


def _best_completion(state: State, n: np.ndarray, r: np.ndarray, z: np.ndarray,
                     inst: ProblemInstance):
    served = state.x[0].sum(axis=2) + n[0] - z
    regions = [l for l in range(inst.L) if served[:, l].sum() > 0]
    order, q = optimal_tour([l + 1 for l in regions], inst.dist)
    hours = q + float((served.sum(axis=1) * inst.e).sum())
    u = max(0.0, hours - inst.chi)
    if u > inst.chi_prime + 1e-9:
        return None
    return ActionPlan(r=r, n=n, z=z, route=tuple(o - 1 for o in order), u=u)


def _exhaustive(params: AlpParams, inst: ProblemInstance) -> FeasibilityReport:
    size = enumeration_size(inst)
    if size > ENUMERATION_LIMIT:
        raise EnumerationTooLarge(f"about {size:.3g} state-action pairs exceed {ENUMERATION_LIMIT:g}")
    vm = inst.valid_mask()
    idx = [tuple(i) for i in np.argwhere(vm)]
    K, L, T = inst.K, inst.L, inst.horizon
    kl = [(k, l) for k in range(K) for l in range(L)]
    worst, worst_v, count = None, 0.0, 0
    for xs in itertools.product(range(inst.x_max + 1), repeat=len(idx)):
        x = np.zeros(vm.shape, dtype=np.int64)
        for i, v in zip(idx, xs):
            x[i] = v
        for ys in itertools.product(range(inst.y_max + 1), repeat=len(kl)):
            y = np.array(ys, dtype=np.int64).reshape(K, L)
            state = State(x, y)
            choices = [list(_referral_splits(y[k, l], inst.services[k].T, not inst.accept_all))
                       for k, l in kl]
            for split in itertools.product(*choices):
                n = np.zeros((T, K, L), dtype=np.int64)
                r = np.zeros((K, L), dtype=np.int64)
                for (k, l), parts in zip(kl, split):
                    if not inst.accept_all:
                        r[k, l] = parts[-1]
                    n[: inst.services[k].T, k, l] = parts[: inst.services[k].T]
                day1 = x[0].sum(axis=2) + n[0]
                for zs in itertools.product(*(range(d + 1) for d in day1.ravel())):
                    z = np.array(zs, dtype=np.int64).reshape(K, L)
                    act = _best_completion(state, n, r, z, inst)
                    if act is None:
                        continue
                    col = make_column(state, act, inst, check=False)
                    v = -constraint_slack(col, params.eta, params.tau, params.rho, inst.gamma)
                    count += 1
                    if v > worst_v:
                        worst, worst_v = col, v
    return FeasibilityReport("exhaustive", worst_v, count, worst)


def random_pair(inst: ProblemInstance, rng: np.random.Generator) -> Column:
    """A random admissible pair: random counts, random referral placement, and a day-1
    plan that serves visits in random order while the shift allows, diverting the rest."""
    vm = inst.valid_mask()
    K, L, T = inst.K, inst.L, inst.horizon
    dense = rng.random() < 0.5
    x = rng.integers(0, inst.x_max + 1, size=vm.shape)
    if not dense:
        x = x * (rng.random(vm.shape) < 0.1)
    x = (x * vm).astype(np.int64)
    y = rng.integers(0, inst.y_max + 1, size=(K, L))
    if not dense:
        y = y * (rng.random((K, L)) < 0.3)
    n = np.zeros((T, K, L), dtype=np.int64)
    r = np.zeros((K, L), dtype=np.int64)
    for k, s in enumerate(inst.services):
        slots = s.T + (0 if inst.accept_all else 1)
        for l in range(L):
            if y[k, l] == 0:
                continue
            counts = rng.multinomial(y[k, l], np.full(slots, 1.0 / slots))
            n[: s.T, k, l] = counts[: s.T]
            if not inst.accept_all:
                r[k, l] = counts[-1]
    day1 = x[0].sum(axis=2) + n[0]
    units = [(k, l) for k in range(K) for l in range(L) for _ in range(int(day1[k, l]))]
    rng.shuffle(units)
    route, travel, work = (), 0.0, 0.0
    served = np.zeros((K, L), dtype=np.int64)
    limit = inst.chi + inst.chi_prime
    for k, l in units:
        new_route, delta = cheapest_insertion(route, l + 1, inst.dist)
        e = inst.services[k].e
        if travel + delta + work + e <= limit + 1e-9 and rng.random() < 0.9:
            route, travel, work = new_route, travel + delta, work + e
            served[k, l] += 1
    z = day1 - served
    u = max(0.0, travel + work - inst.chi)
    act = ActionPlan(r=r, n=n, z=z, route=tuple(o - 1 for o in route), u=u)
    return make_column(State(x, y), act, inst)


def check_feasibility(params: AlpParams, inst: ProblemInstance, mode: str = "sampled",
                      samples: int = 100_000, rng: np.random.Generator | None = None,
                      use_search: bool = True) -> FeasibilityReport:
    """Largest constraint violation over enumerated or sampled state-action pairs.

    ``sampled`` checks random pairs plus every single-coordinate extreme pair; with
    ``use_search`` the exact most-violated-pair search is also run and reported.
    """
    if mode == "exhaustive":
        return _exhaustive(params, inst)
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    rng = rng or np.random.default_rng(0)
    g = inst.gamma
    worst, worst_v, count = None, 0.0, 0

    def consider(col):
        nonlocal worst, worst_v, count
        count += 1
        v = -constraint_slack(col, params.eta, params.tau, params.rho, g)
        if v > worst_v:
            worst, worst_v = col, v

    for col in extreme_columns(inst):
        consider(col)
    for _ in range(samples):
        consider(random_pair(inst, rng))
    exact = None
    if use_search:
        try:
            res = price_exact(inst, params.eta, params.tau, params.rho)
            exact = res.value
            consider(res.column)
        except TooManyRegions:
            pass
    return FeasibilityReport("sampled", worst_v, count, worst, exact)
