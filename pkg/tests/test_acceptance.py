"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line at the end.

Run on its own with ``pytest tests/test_acceptance.py -v`` (about ten minutes on one core).
"""
from __future__ import annotations

import itertools
import math
import time

import numpy as np
import pytest

from homecare.alp import (AlpParams, breakpoints, closed_form_params, column_generation,
                          dual_certificate, make_column, tune_epsilon)
from homecare.alp.colgen import relevance_weights
from homecare.alp.feasibility import random_pair
from homecare.bounds import estimate_gap, path_seed, perfect_info_value, replay_policy, sample_path
from homecare.instance import (build_geometry, default_instance, line_geometry, make_instance,
                               make_service)
from homecare.mdp import ActionPlan, State, expected_next_x, sample_transition
from homecare.optim import LinearModel, ModelBuilder, dual_objective, optimal_tour, solve_lp, solve_mip
from homecare.optim.highs import highs_lp
from homecare.policies import ACCEPT, REJECT, AlpPolicy, MyopicPolicy, classify_regions
from homecare.sim import SimConfig, Streams, alp_evaluator, compare_policies, estimate_value, initial_states

pytestmark = pytest.mark.slow


# -- 1 --------------------------------------------------------------------------
def special_case_instances(n: int, seed: int = 1):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        i = len(out)
        if i % 3 == 0:
            g = build_geometry("rectangular", rows=2, cols=3, diameter=float(rng.uniform(0.4, 0.8)))
        else:
            g = build_geometry("circular", rings=1 + i % 2, diameter=float(rng.uniform(0.4, 0.8)))
        mean = int(rng.integers(2, 5))
        s = make_service(int(rng.integers(1, 3)), float(rng.choice([0.5, 1.0])),
                         int(rng.integers(1, 4)), "poisson", mean, 2 * mean)
        zq = float(rng.uniform(0.05, 0.2))
        inst = make_instance(g, [s], rng.uniform(0.5, 1.5, (1, g.n_regions)),
                             target_demand=float(rng.uniform(3, 7)), chi_prime=0.0,
                             weights=(5.0, float(rng.uniform(100, 200)) * zq, 2.0, zq),
                             gamma=0.95, accept_all=True, x_max=30, y_max=30)
        if dual_certificate(inst).valid:
            out.append(inst)
    return out


@pytest.mark.criterion(1)
def test_closed_form_equivalence(criterion):
    t0 = time.perf_counter()
    insts = special_case_instances(12)
    diffs = []
    for inst in insts:
        cg = column_generation(inst, 0.0, "full")
        diffs.append(cg.params.max_diff(closed_form_params(inst)))
    worst = max(diffs)
    secs = time.perf_counter() - t0
    criterion.check(worst <= 1e-6 and secs < 600,
                    f"{len(insts)} certified instances, max |diff| {worst:.2e}, {secs:.1f}s")


# -- 2 --------------------------------------------------------------------------
def reduction_instances(n: int = 25, seed: int = 2):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        g = build_geometry("rectangular", rows=2, cols=3, diameter=float(rng.uniform(0.3, 0.8)))
        mean = int(rng.integers(3, 6))
        s = make_service(int(rng.integers(1, 3)), float(rng.choice([0.5, 1.0])),
                         int(rng.integers(2, 4)), "poisson", mean, 2 * mean)
        inst = make_instance(g, [s], rng.uniform(0.5, 1.5, (1, 6)),
                             target_demand=float(rng.uniform(5, 10)),
                             chi_prime=float(rng.choice([0.0, 1.0])), gamma=0.95,
                             x_max=30, y_max=30)
        yield inst, float(rng.uniform(0.0, 2.0))


def best_time(fn, repeats=3):
    best, out = math.inf, None
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


@pytest.mark.criterion(2)
def test_reduction_equivalence(criterion):
    wins, worst, count = 0, 0.0, 0
    for inst, eps in reduction_instances():
        times, params = {}, {}
        for v in ("full", "2i", "1d", "1d-2i"):
            times[v], res = best_time(lambda: column_generation(inst, eps, v))
            params[v] = res.params
        worst = max(worst, max(params[v].max_diff(params["full"]) for v in params))
        wins += min(times, key=times.get) == "1d-2i"
        count += 1
    criterion.check(worst <= 1e-6 and wins >= 20,
                    f"max |diff| {worst:.2e} over {count} instances; 1D-2I fastest on {wins}/{count}")


# -- 3 --------------------------------------------------------------------------
def toy_instance(J: int, cap: int) -> object:
    kind, mean = ("deterministic", 1.0) if J == 1 else ("uniform", (J + 1) / 2)
    return make_instance(line_geometry([1.0]), [make_service(1, 1.0, 1, kind, mean, J)],
                         [[1.5]], chi=4.0, gamma=0.9, x_max=cap, y_max=cap)


def enumerate_pairs(inst):
    """Every state and every action of a one-region, one-type instance."""
    vm = inst.valid_mask()
    idx = [tuple(i) for i in np.argwhere(vm)]
    d = inst.dist[0, 1]
    for xs in itertools.product(range(inst.x_max + 1), repeat=len(idx)):
        x = np.zeros(vm.shape, dtype=np.int64)
        for i, v in zip(idx, xs):
            x[i] = v
        for y in range(inst.y_max + 1):
            for r in range(y + 1):
                n = np.full((1, 1, 1), y - r, dtype=np.int64)
                day1 = int(x[0].sum()) + y - r
                for z in range(day1 + 1):
                    served = day1 - z
                    hours = served * inst.e[0] + (2 * d if served else 0.0)
                    u = max(0.0, hours - inst.chi)
                    if u > inst.chi_prime + 1e-9:
                        continue
                    a = ActionPlan(np.array([[r]]), n, np.array([[z]]), (0,) if served else (), u)
                    yield make_column(State(x, np.array([[y]])), a, inst)


def enumerated_alp(inst, eps):
    w = relevance_weights(inst, eps)
    idx = [tuple(i) for i in np.argwhere(inst.valid_mask())]
    b = ModelBuilder("max")
    ie = b.var("eta", -np.inf, np.inf, 1.0)
    it = [b.var(f"tau{i}", -np.inf, np.inf, w[i]) for i in idx]
    ir = b.var("rho", -np.inf, np.inf, inst.lam[0, 0])
    for col in enumerate_pairs(inst):
        row = {ie: 1 - inst.gamma, ir: float(col.ycoef[0, 0])}
        for j, i in zip(it, idx):
            row[j] = float(col.xcoef[i])
        b.row(row, "<=", col.cost)
    return b.build(), idx


@pytest.mark.criterion(3)
def test_exhaustive_lp_oracle(criterion):
    worst, cases = 0.0, 0
    for J, cap, eps in [(1, 4, 0.0), (1, 4, 1.0), (2, 4, 0.5), (3, 4, 2.0), (3, 3, 0.0)]:
        inst = toy_instance(J, cap)
        model, idx = enumerated_alp(inst, eps)
        direct = highs_lp(model)
        assert direct.ok
        p = column_generation(inst, eps, "full").params
        mine = np.array([p.eta] + [p.tau[i] for i in idx] + [p.rho[0, 0]])
        worst = max(worst, float(np.abs(mine - direct.x).max()))
        cases += 1
    criterion.check(worst <= 1e-6, f"{cases} toy cases (J=1..3, caps<=4), max |diff| {worst:.2e}")


# -- 4 --------------------------------------------------------------------------
class Recording:
    """Wraps a policy and keeps every (type, region, day) decision it makes."""

    name = "alp"

    def __init__(self, inner):
        self.inner = inner
        self.choices = []

    def __call__(self, state, inst, rng=None):
        dec = self.inner(state, inst, rng)
        self.choices.extend(dec.choices)
        return dec


def law_instances():
    g = build_geometry("rectangular", rows=2, cols=3, diameter=0.6)
    yield make_instance(g, [make_service(1, 0.5, 3, "poisson", 6, 12)], target_demand=9.0,
                        chi_prime=1.0, gamma=0.95, x_max=20, y_max=20)
    g = build_geometry("circular", rings=1, diameter=0.8)
    yield make_instance(g, [make_service(2, 1.0, 2, "poisson", 3, 6)], target_demand=8.5,
                        gamma=0.95, x_max=20, y_max=20)
    g = build_geometry("circular", rings=1, diameter=0.6)
    yield make_instance(g, [make_service(1, 0.5, 4, "poisson", 4, 8),
                            make_service(2, 0.5, 2, "poisson", 3, 6)],
                        target_demand=9.0, gamma=0.95, x_max=15, y_max=15)


def geometric_params(inst, scale):
    """Parameters whose first-visit prices fall geometrically with the day."""
    base = closed_form_params(inst.with_(accept_all=True, chi_prime=0.0))
    return AlpParams(scale * base.eta, scale * base.tau, scale * base.rho)


@pytest.mark.criterion(4)
def test_policy_structure_laws(criterion):
    v1 = v2 = decisions = 0
    labels_seen = set()
    cfg = SimConfig(3, 20, 365, seed=3)
    for inst in law_instances():
        tau = geometric_params(inst, 1.0).tau
        for k, svc in enumerate(inst.services):
            days = np.arange(svc.T - 1)
            assert np.allclose(tau[days, k, :, 0],
                               inst.gamma ** days[:, None] * tau[0, k, :, 0][None, :])
        sets = [("colgen", column_generation(inst, 1.0, "1d-2i").params, False),
                ("geometric", geometric_params(inst, 150.0), True),
                ("geometric", geometric_params(inst, 1000.0), True)]
        starts = initial_states(inst, cfg)
        for _, params, geometric in sets:
            labels = classify_regions(params, inst)
            labels_seen.update(labels.ravel().tolist())
            rec = Recording(AlpPolicy(params))
            for i, s in enumerate(starts):
                estimate_value(s, rec, inst, cfg.days, Streams(cfg.seed, i, "alp", True))
            for k, l, day in rec.choices:
                decisions += 1
                if (labels[k, l] == ACCEPT and day == 0) or (labels[k, l] == REJECT and day != 0):
                    v1 += 1
                if geometric and day not in (0, 1, inst.services[k].T):
                    v2 += 1
    criterion.check(v1 == 0 and v2 == 0 and {ACCEPT, REJECT} <= labels_seen,
                    f"{decisions} referral decisions on 3 instances; classification violations "
                    f"{v1}, day-1-or-last-day violations {v2}; labels seen {sorted(labels_seen)}")


# -- 5 and 6 --------------------------------------------------------------------
@pytest.fixture(scope="module")
def tuned(desk_instance):
    evaluate = alp_evaluator(desk_instance, SimConfig(4, 20, 100, seed=1))
    return tune_epsilon(desk_instance, evaluate, "1d-2i")


@pytest.mark.criterion(5)
def test_directional_gap(criterion, desk_instance, tuned):
    inst = desk_instance
    cfg = SimConfig(10, 20, 200, seed=0)
    rep = compare_policies(inst, {"alp": AlpPolicy(tuned.params), "myopic": MyopicPolicy()},
                           "myopic", cfg)
    gap, sd, pv = rep.gap_mean("alp"), rep.gap_sd("alp"), rep.gap_pvalue("alp")
    criterion.check(gap > 0 and rep.significant("alp"),
                    f"L={inst.L}, demand {inst.daily_demand:.2f}h, eps {tuned.eps:.4f}: "
                    f"ALP gap vs Myopic {gap:.2f}% (SD {sd:.2f}%), p={pv:.2e}")


@pytest.mark.criterion(6)
def test_epsilon_tradeoff(criterion, tuned):
    pts = breakpoints(tuned)
    rej = [p.evaluation.reject_hours for p in pts]
    div = [p.evaluation.divert_hours for p in pts]
    bad = []
    for a, b in zip(pts, pts[1:]):
        ea, eb = a.evaluation, b.evaluation
        if eb.reject_hours < ea.reject_hours - max(ea.reject_se, eb.reject_se):
            bad.append(f"rejection drops at eps {b.eps:.4f}")
        if eb.divert_hours > ea.divert_hours + max(ea.divert_se, eb.divert_se):
            bad.append(f"diversion rises at eps {b.eps:.4f}")
    last = pts[-1].evaluation.all_reject
    criterion.check(not bad and last and len(pts) >= 2,
                    f"{len(pts)} breakpoints, rejection h {np.round(rej, 3).tolist()}, "
                    f"diversion h {np.round(div, 3).tolist()}, final all-reject {last}"
                    + (f"; {bad}" if bad else ""))


# -- 7 --------------------------------------------------------------------------
def tiny_instance():
    return default_instance(
        geometry={"shape": "circular", "rings": 1, "diameter_h": 0.5},
        services=[{"h": 1, "e": 1.0, "T": 1, "dist": {"kind": "poisson", "mean": 4, "max": 8}}],
        arrivals={"mode": "fixed", "target_daily_demand_h": 7.5}, gamma=0.95)


@pytest.mark.criterion(7)
def test_bound_dominance(criterion):
    inst = tiny_instance()
    policy = AlpPolicy(column_generation(inst, 0.5, "1d-2i").params)
    starts = initial_states(inst, SimConfig(5, 20, 1, seed=0))
    lows, ups = [], []
    for i, s in enumerate(starts):
        for p in range(20):
            path = sample_path(inst, path_seed(0, i, p), s)
            ups.append(replay_policy(s, path, policy, inst))
            lows.append(perfect_info_value(s, path, inst))      # no policy cost handed in
    lows, ups = np.array(lows), np.array(ups)
    held = int((lows <= ups).sum())
    gaps = 100 * (ups - lows) / ups
    criterion.check(held == len(ups),
                    f"LB <= UB on {held}/{len(ups)} (state, path) pairs; "
                    f"mean gap {gaps.mean():.2f}% (SD {gaps.std(ddof=1):.2f}%)")


# -- 8 --------------------------------------------------------------------------
def random_lp(rng):
    n, m = int(rng.integers(2, 9)), int(rng.integers(1, 8))
    A = rng.normal(size=(m, n)).round(2)
    x0 = rng.uniform(0, 3, n)
    rel = list(rng.choice(["<=", ">=", "=="], size=m, p=[0.5, 0.3, 0.2]))
    ax = A @ x0
    b = np.array([ax[i] + (rng.uniform(0, 2) if r == "<=" else -rng.uniform(0, 2) if r == ">="
                           else 0.0) for i, r in enumerate(rel)])
    lb = np.where(rng.random(n) < 0.2, -np.inf, 0.0)
    ub = np.where(rng.random(n) < 0.6, x0 + rng.uniform(0.5, 3, n), np.inf)
    # box rows keep every direction bounded, free variables included
    box_rows = np.eye(n)
    A = np.vstack([A, np.ones((1, n)), -np.ones((1, n))])
    b = np.concatenate([b, [x0.sum() + 5.0], [-(x0.sum() - 5.0)]])
    rel += ["<=", "<="]
    A = np.vstack([A, box_rows, -box_rows])
    b = np.concatenate([b, x0 + 10, -(x0 - 10)])
    rel += ["<="] * (2 * n)
    sense = "min" if rng.random() < 0.5 else "max"
    return LinearModel(c=rng.normal(size=n).round(2), A=A, rel=rel, b=b, lb=lb, ub=ub,
                       integer=np.zeros(n, dtype=bool), sense=sense)


def lp_residual(model, res):
    """Largest of primal infeasibility, dual sign violation and duality gap."""
    primal = model.residuals(res.x)
    sgn = 1.0 if model.sense == "min" else -1.0
    sign_bad = 0.0
    for i, r in enumerate(model.rel):
        d = sgn * res.duals[i]
        if r == "<=":
            sign_bad = max(sign_bad, d)
        elif r == ">=":
            sign_bad = max(sign_bad, -d)
    dual = dual_objective(model, res.duals, res.info["reduced_costs"])
    return max(primal, sign_bad, abs(dual - res.objective))


def random_binary_model(rng):
    n, m = int(rng.integers(3, 13)), int(rng.integers(1, 5))
    A = rng.integers(-3, 6, size=(m, n)).astype(float)
    b = np.round(A.clip(0).sum(axis=1) * rng.uniform(0.2, 0.7, m))
    return LinearModel(c=rng.integers(-9, 10, n).astype(float), A=A, rel=["<="] * m, b=b,
                       lb=np.zeros(n), ub=np.ones(n), integer=np.ones(n, dtype=bool),
                       sense="max" if rng.random() < 0.5 else "min")


def enumerate_binary(model):
    best = None
    for bits in itertools.product((0.0, 1.0), repeat=model.n_vars):
        x = np.array(bits)
        if model.residuals(x) <= 1e-9:
            v = model.objective(x)
            if best is None or (v > best if model.sense == "max" else v < best):
                best = v
    return best


def brute_tour(locs, dist):
    return min(sum(dist[a, b] for a, b in zip((0,) + p, p + (0,)))
               for p in itertools.permutations(locs))


@pytest.mark.criterion(8)
def test_solver_oracles(criterion):
    rng = np.random.default_rng(8)
    lp_worst, lp_vs_highs = 0.0, 0.0
    for _ in range(100):
        model = random_lp(rng)
        res = solve_lp(model)
        assert res.ok, res.status
        lp_worst = max(lp_worst, lp_residual(model, res))
        lp_vs_highs = max(lp_vs_highs, abs(res.objective - highs_lp(model).objective))
    mip_bad = 0
    for _ in range(50):
        model = random_binary_model(rng)
        res, ref = solve_mip(model), enumerate_binary(model)
        if ref is None:
            mip_bad += res.status != "infeasible"
        else:
            mip_bad += not (res.ok and abs(res.objective - ref) <= 1e-6)
    tour_worst, subsets = 0.0, 0
    for g in range(10):
        shape = ["rectangular", "circular"][g % 2]
        geo = (build_geometry(shape, rows=2 + g % 3, cols=3, diameter=float(rng.uniform(0.3, 1)))
               if shape == "rectangular" else
               build_geometry(shape, rings=1 + g % 2, diameter=float(rng.uniform(0.3, 1))))
        dist = geo.dist
        pool = rng.choice(np.arange(1, dist.shape[0]), size=min(8, dist.shape[0] - 1),
                          replace=False)
        for size in range(1, 8):
            for sub in itertools.combinations(sorted(int(p) for p in pool), size):
                _, q = optimal_tour(sub, dist)
                tour_worst = max(tour_worst, abs(q - brute_tour(sub, dist)))
                subsets += 1
    ok = lp_worst <= 1e-6 and lp_vs_highs <= 1e-6 and mip_bad == 0 and tour_worst <= 1e-9
    criterion.check(ok, f"LP: max duality residual {lp_worst:.1e}, max |obj - HiGHS| "
                        f"{lp_vs_highs:.1e} (100 LPs); MIP mismatches {mip_bad}/50; "
                        f"Held-Karp max |diff| {tour_worst:.1e} over {subsets} subsets")


# -- 9 --------------------------------------------------------------------------
@pytest.mark.criterion(9)
def test_transition_fidelity(criterion, small_instance, two_type_instance):
    rng = np.random.default_rng(9)
    n = 10_000
    worst_z, coords, bad, pairs = 0.0, 0, 0, 0
    for inst in (small_instance, two_type_instance):
        # pairs are drawn within the caps; every next count is then at most x_max + y_max,
        # so doubling the caps rules out clamping and the uncapped expectation applies
        roomy = inst.with_(x_max=2 * max(inst.x_max, inst.y_max))
        for _ in range(10):
            col = random_pair(inst, rng)
            state, action = col.state, col.action
            ex = expected_next_x(state.x, action.n, roomy)
            samples = [sample_transition(state, action, roomy, rng) for _ in range(n)]
            clamped = sum(t.overflow - int(np.maximum(t.arrivals - roomy.y_max, 0).sum())
                          for t in samples)
            assert clamped == 0
            draws = np.stack([t.next_state.x for t in samples]).astype(float)
            mean, sd = draws.mean(axis=0), draws.std(axis=0, ddof=1)
            se = sd / math.sqrt(n)
            fixed = sd == 0
            bad += int((np.abs(mean - ex)[fixed] > 1e-12).sum())
            z = np.abs(mean - ex)[~fixed] / se[~fixed]
            worst_z = max(worst_z, float(z.max(initial=0)))
            bad += int((z > 3).sum())
            coords += int((~fixed).sum())
            pairs += 1
    criterion.check(bad == 0, f"{pairs} pairs x {n} draws; {coords} random coordinates, "
                              f"max |z| {worst_z:.2f}, outside 3 SE: {bad}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v"]))
