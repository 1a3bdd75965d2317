"""Most-violated-constraint search over state-action pairs.

Two independent routes are provided.  ``price_exact`` exploits the separable structure
of the objective (only day-1 counts interact, through the route and the shift) and is
used by default.  ``build_subproblem`` writes the same problem as a big-M mixed-integer
model that any MIP backend can solve.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dayplan import Offer, TooManyRegions, plan_day
from ..instance import ProblemInstance
from ..mdp import ActionPlan, State
from ..optim.model import LinearModel, ModelBuilder
from ..optim.tour import SubsetTours, optimal_tour
from .columns import Column, constraint_slack, make_column


@dataclass
class PricingResult:
    value: float          # reduced cost of the best pair (negative => violated constraint)
    column: Column
    method: str


def transition_coefficients(inst: ProblemInstance, tau: np.ndarray):
    """Per-unit objective terms of x and n coming from -tau*(x - gamma E[X'])."""
    g = inst.gamma
    vm = inst.valid_mask()
    cx = np.zeros_like(tau)
    cn = np.zeros((inst.horizon, inst.K, inst.L))
    cx[1:] = -tau[1:] + g * tau[:-1]
    for k, s in enumerate(inst.services):
        cx[0, k] = -tau[0, k]
        for j in range(s.J - 1):
            cx[0, k, :, j] += g * s.cont(j + 2) * tau[s.h - 1, k, :, j + 1]
        if s.J >= 2:
            cn[0, k] = g * s.cont(2) * tau[s.h - 1, k, :, 1]
        for t in range(2, s.T + 1):
            cn[t - 1, k] = g * tau[t - 2, k, :, 0]
    cx[~vm] = 0.0
    return cx, cn


def referral_options(inst: ProblemInstance, cn: np.ndarray, k: int, l: int):
    """Cheapest way to place a referral without using day 1: (cost, kind, day)."""
    s = inst.services[k]
    opts = []
    for t in range(s.T, 1, -1):            # later days first on ties
        opts.append((float(cn[t - 1, k, l]), "assign", t))
    if not inst.accept_all:
        opts.append((float(inst.R[k]), "reject", 0))
    if not opts:
        return None
    return min(opts, key=lambda o: o[0])


def price_exact(inst: ProblemInstance, eta: float, tau: np.ndarray, rho: np.ndarray,
                tours: SubsetTours | None = None) -> PricingResult:
    g = inst.gamma
    tours = tours or SubsetTours(inst.dist)
    vm = inst.valid_mask()
    cx, cn = transition_coefficients(inst, tau)
    T, K, L, J = tau.shape
    xmax, ymax = inst.x_max, inst.y_max
    value = -eta * (1 - g) + g * float((rho * inst.lam).sum())

    x = np.zeros((T, K, L, J), dtype=np.int64)
    y = np.zeros((K, L), dtype=np.int64)
    n = np.zeros((T, K, L), dtype=np.int64)
    r = np.zeros((K, L), dtype=np.int64)
    z = np.zeros((K, L), dtype=np.int64)

    later = vm.copy()
    later[0] = False
    pick = later & (cx < 0)
    x[pick] = xmax
    value += float(cx[pick].sum()) * xmax

    offers = []
    plans = {}
    Z = inst.Z
    for k, s in enumerate(inst.services):
        for l in range(L):
            for j in range(s.J):
                if not vm[0, k, l, j]:
                    continue
                c = float(cx[0, k, l, j])
                divert = c + Z[k]
                base = min(0.0, divert)
                value += base * xmax
                plans[("x", k, l, j)] = ("divert" if divert < 0 else "none", c)
                if base - c > 0:
                    offers.append(Offer(l, s.e, base - c, xmax, ("x", k, l, j)))
            a1 = float(cn[0, k, l]) - rho[k, l]
            alt = referral_options(inst, cn, k, l)
            choices = [(0.0, "none", 0)]
            if alt is not None:
                choices.append((alt[0] - rho[k, l], alt[1], alt[2]))
            choices.append((a1 + Z[k], "divert", 1))
            base = min(choices, key=lambda c: c[0])
            value += base[0] * ymax
            plans[("n", k, l)] = base
            if base[0] - a1 > 0:
                offers.append(Offer(l, s.e, base[0] - a1, ymax, ("n", k, l)))

    choice = plan_day(offers, tours, inst.chi, inst.chi_prime, inst.U, inst.Q)
    value -= choice.gain

    for key, plan in plans.items():
        served = choice.served.get(key, 0)
        if key[0] == "x":
            _, k, l, j = key
            rest = xmax - served if plan[0] == "divert" else 0
            x[0, k, l, j] = served + rest
            z[k, l] += rest
        else:
            _, k, l = key
            rest = ymax - served
            n[0, k, l] += served
            kind, day = plan[1], plan[2]
            if kind == "none":
                rest = 0
            elif kind == "divert":
                n[0, k, l] += rest
                z[k, l] += rest
            elif kind == "reject":
                r[k, l] += rest
            else:
                n[day - 1, k, l] += rest
            y[k, l] = served + rest
    state = State(x, y)
    action = ActionPlan(r=r, n=n, z=z, route=choice.route, u=choice.overtime)
    col = make_column(state, action, inst)
    check = constraint_slack(col, eta, tau, rho, g)
    if abs(check - value) > 1e-6 * max(1.0, abs(value)):
        raise AssertionError(f"pricing reconstruction mismatch: {value} vs {check}")
    return PricingResult(check, col, "exact")


# ---------------------------------------------------------------------------
# Mixed-integer formulation
# ---------------------------------------------------------------------------

@dataclass
class SubproblemModel:
    model: LinearModel
    index: dict
    inst: ProblemInstance


def build_subproblem(inst: ProblemInstance, eta: float, tau: np.ndarray, rho: np.ndarray,
                     fixed_state: State | None = None) -> SubproblemModel:
    """Big-M model of min c(s,a) - eta(1-g) - tau.(x - g E[X']) - rho.(y - g lambda).

    With ``fixed_state`` the state variables are pinned, which gives the action model
    used by the approximate policy.
    """
    g = inst.gamma
    vm = inst.valid_mask()
    cx, cn = transition_coefficients(inst, tau)
    T, K, L, J = tau.shape
    D = inst.dist
    mb = ModelBuilder("min")
    mb.const = -eta * (1 - g) + g * float((rho * inst.lam).sum())
    X, N, Y, Rv, Zv = {}, {}, {}, {}, {}
    for idx in map(tuple, np.argwhere(vm)):
        t, k, l, j = idx
        lo = hi = None
        if fixed_state is not None:
            lo = hi = float(fixed_state.x[idx])
        X[idx] = mb.var(f"x_{t+1}_{k}_{l}_{j}", lb=lo if lo is not None else 0,
                        ub=hi if hi is not None else inst.x_max, cost=cx[idx], integer=True)
    for k, s in enumerate(inst.services):
        for l in range(L):
            yv = None if fixed_state is None else float(fixed_state.y[k, l])
            Y[k, l] = mb.var(f"y_{k}_{l}", lb=yv if yv is not None else 0,
                             ub=yv if yv is not None else inst.y_max, cost=-rho[k, l],
                             integer=True)
            for t in range(1, s.T + 1):
                N[t, k, l] = mb.var(f"n_{t}_{k}_{l}", 0, inst.y_max, cn[t - 1, k, l], True)
            Rv[k, l] = mb.var(f"r_{k}_{l}", 0, 0 if inst.accept_all else inst.y_max,
                              inst.R[k], True)
            Zv[k, l] = mb.var(f"z_{k}_{l}", 0, np.inf, inst.Z[k], True)
    u = mb.var("u", 0, inst.chi_prime, inst.U)
    q = mb.var("q", 0, np.inf, inst.Q)
    W = {l: mb.var(f"w_{l}", 0, 1, 0, True) for l in range(L)}
    F = {}
    big_route = inst.chi + inst.chi_prime + float(D.sum())
    for l in range(L):
        F[l] = mb.var(f"f_{l}", 0, big_route)
    O = {(a, b): mb.var(f"o_{a}_{b}", 0, 1, 0, True)
         for a in range(L) for b in range(L) if a != b}
    count_cap = sum(s.J * inst.x_max + inst.y_max for s in inst.services)

    for k, s in enumerate(inst.services):
        for l in range(L):
            row = {Rv[k, l]: 1.0, Y[k, l]: -1.0}
            for t in range(1, s.T + 1):
                row[N[t, k, l]] = 1.0
            mb.row(row, "==", 0.0, f"reject_{k}_{l}")
            row = {Zv[k, l]: 1.0, N[1, k, l]: -1.0}
            for j in range(s.J):
                if (0, k, l, j) in X:
                    row[X[0, k, l, j]] = -1.0
            mb.row(row, "<=", 0.0, f"divert_{k}_{l}")

    def served_terms(l, weight):
        out = {}
        for k, s in enumerate(inst.services):
            w = weight(s)
            for j in range(s.J):
                if (0, k, l, j) in X:
                    out[X[0, k, l, j]] = w
            out[N[1, k, l]] = w
            out[Zv[k, l]] = -w
        return out

    for l in range(L):
        row = served_terms(l, lambda s: 1.0)
        row[W[l]] = -float(count_cap)
        mb.row(row, "<=", 0.0, f"visit_{l}")
        mb.row({F[l]: 1.0}, ">=", D[0, l + 1], f"first_{l}")
        mb.row({F[l]: 1.0, q: -1.0, W[l]: big_route}, "<=", big_route - D[l + 1, 0],
               f"return_{l}")
    for a in range(L):
        for b in range(L):
            if a == b:
                continue
            # f_a + M(2 + o_ab - w_a - w_b) >= f_b + d_ba
            mb.row({F[a]: 1.0, F[b]: -1.0, O[a, b]: big_route, W[a]: -big_route,
                    W[b]: -big_route}, ">=", D[b + 1, a + 1] - 2 * big_route, f"order_{a}_{b}")
            if a < b:
                mb.row({O[a, b]: 1.0, O[b, a]: 1.0}, "==", 1.0, f"prec_{a}_{b}")
    row = {q: 1.0, u: -1.0}
    for l in range(L):
        row.update(served_terms(l, lambda s: s.e))
    mb.row(row, "<=", inst.chi, "shift")
    idx = {"x": X, "n": N, "y": Y, "r": Rv, "z": Zv, "u": u, "q": q, "w": W}
    return SubproblemModel(mb.build(), idx, inst)


def decode_subproblem(sp: SubproblemModel, sol: np.ndarray) -> tuple[State, ActionPlan]:
    inst = sp.inst
    ix = sp.index
    T, K, L, J = inst.horizon, inst.K, inst.L, inst.jmax
    x = np.zeros((T, K, L, J), dtype=np.int64)
    for idx, v in ix["x"].items():
        x[idx] = int(round(sol[v]))
    y = np.zeros((K, L), dtype=np.int64)
    r = np.zeros((K, L), dtype=np.int64)
    z = np.zeros((K, L), dtype=np.int64)
    n = np.zeros((T, K, L), dtype=np.int64)
    for (k, l), v in ix["y"].items():
        y[k, l] = int(round(sol[v]))
        r[k, l] = int(round(sol[ix["r"][k, l]]))
        z[k, l] = int(round(sol[ix["z"][k, l]]))
    for (t, k, l), v in ix["n"].items():
        n[t - 1, k, l] = int(round(sol[v]))
    served = x[0].sum(axis=2) + n[0] - z
    regions = [l + 1 for l in range(L) if served[:, l].sum() > 0]
    order, q = optimal_tour(regions, inst.dist)
    hours = q + float((served.sum(axis=1) * inst.e).sum())
    u = max(0.0, hours - inst.chi)
    return State(x, y), ActionPlan(r=r, n=n, z=z, route=tuple(o - 1 for o in order), u=u)


def price_mip(inst: ProblemInstance, eta: float, tau: np.ndarray, rho: np.ndarray,
              backend: str = "highs") -> PricingResult:
    sp = build_subproblem(inst, eta, tau, rho)
    if backend == "highs":
        from ..optim.highs import highs_mip
        res = highs_mip(sp.model)
    else:
        from ..optim.mip import solve_mip
        res = solve_mip(sp.model)
    if not res.ok:
        raise RuntimeError(f"pricing MIP failed: {res.status}")
    state, action = decode_subproblem(sp, res.x)
    col = make_column(state, action, inst)
    val = constraint_slack(col, eta, tau, rho, inst.gamma)
    return PricingResult(val, col, f"mip-{backend}")


def price(inst, eta, tau, rho, method: str = "exact", tours=None) -> PricingResult:
    if method == "exact":
        try:
            return price_exact(inst, eta, tau, rho, tours)
        except TooManyRegions:
            return price_mip(inst, eta, tau, rho, "highs")
    if method.startswith("mip"):
        backend = method.split("-", 1)[1] if "-" in method else "highs"
        return price_mip(inst, eta, tau, rho, backend)
    raise ValueError(f"unknown pricing method {method!r}")
