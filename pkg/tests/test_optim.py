"""Bundled LP, branch and bound and tour routines against independent oracles."""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homecare.instance import build_geometry
from homecare.optim import (LinearModel, ModelBuilder, RevisedSimplex, best_tour, cheapest_insertion,
                            dual_objective, nearest_neighbour_two_opt, optimal_tour, solve_lp,
                            solve_mip, tour_length)
from homecare.optim.highs import highs_lp, highs_mip
from homecare.optim.tour import SubsetTours


def box_lp(rng, n, m, sense="min"):
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(0, 2, n)
    return LinearModel(c=rng.normal(size=n), A=A, rel=["<="] * m, b=A @ x0 + rng.uniform(0, 1, m),
                       lb=np.zeros(n), ub=np.full(n, 4.0), integer=np.zeros(n, dtype=bool),
                       sense=sense)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 7), m=st.integers(1, 6),
       sense=st.sampled_from(["min", "max"]))
def test_lp_matches_highs_and_closes_duality_gap(seed, n, m, sense):
    model = box_lp(np.random.default_rng(seed), n, m, sense)
    mine, ref = solve_lp(model), highs_lp(model)
    assert mine.ok and ref.ok
    assert mine.objective == pytest.approx(ref.objective, abs=1e-7)
    assert model.residuals(mine.x) <= 1e-8
    dual = dual_objective(model, mine.duals, mine.info["reduced_costs"])
    assert dual == pytest.approx(mine.objective, abs=1e-7)


def test_lp_reports_infeasible_and_unbounded():
    infeasible = LinearModel(c=np.array([1.0]), A=np.array([[1.0], [1.0]]), rel=["<=", ">="],
                             b=np.array([1.0, 2.0]), lb=np.zeros(1), ub=np.full(1, np.inf),
                             integer=np.zeros(1, dtype=bool))
    assert solve_lp(infeasible).status == "infeasible"
    unbounded = LinearModel(c=np.array([-1.0, 0.0]), A=np.array([[0.0, 1.0]]), rel=["<="],
                            b=np.array([1.0]), lb=np.zeros(2), ub=np.full(2, np.inf),
                            integer=np.zeros(2, dtype=bool))
    assert solve_lp(unbounded).status == "unbounded"


def test_degenerate_lp_terminates():
    # Beale's classic cycling example
    c = np.array([-0.75, 150, -0.02, 6, 0, 0, 0])
    A = np.array([[0.25, -60, -0.04, 9, 1, 0, 0],
                  [0.5, -90, -0.02, 3, 0, 1, 0],
                  [0, 0, 1, 0, 0, 0, 1]])
    lp = RevisedSimplex(A, np.array([0.0, 0.0, 1.0]), c)
    assert lp.set_basis([4, 5, 6])
    assert lp.solve() == "optimal"
    assert lp.objective() == pytest.approx(-0.05)


def test_duals_are_rhs_sensitivities():
    b = ModelBuilder("max")
    x, y = b.var("x"), b.var("y")
    b.add_cost(x, 3.0)
    b.add_cost(y, 2.0)
    b.row({x: 1, y: 1}, "<=", 4)
    b.row({x: 1, y: 3}, "<=", 6)
    b.row({x: 1}, "<=", 3.5)
    model = b.build()
    base = solve_lp(model)
    for i in range(model.n_rows):
        bumped = LinearModel(**{**model.__dict__, "b": model.b + 1e-4 * (np.arange(3) == i)})
        assert (solve_lp(bumped).objective - base.objective) / 1e-4 == pytest.approx(
            base.duals[i], abs=1e-6)


def knapsack(rng, n):
    w = rng.integers(1, 10, n).astype(float)
    return LinearModel(c=rng.integers(1, 20, n).astype(float), A=w[None, :], rel=["<="],
                       b=np.array([w.sum() // 2]), lb=np.zeros(n), ub=np.ones(n),
                       integer=np.ones(n, dtype=bool), sense="max")


@pytest.mark.parametrize("seed", range(10))
def test_branch_and_bound_matches_enumeration_and_highs(seed):
    model = knapsack(np.random.default_rng(seed), 10)
    best = max(model.objective(np.array(b)) for b in itertools.product((0.0, 1.0), repeat=10)
               if model.residuals(np.array(b)) <= 1e-9)
    assert solve_mip(model).objective == pytest.approx(best)
    assert highs_mip(model).objective == pytest.approx(best)


def test_general_integer_model():
    b = ModelBuilder("min")
    x = b.var("x", 0, 10, 1.0, integer=True)
    y = b.var("y", 0, 10, 1.0, integer=True)
    b.row({x: 2, y: 2}, ">=", 7)
    b.row({x: 1, y: -1}, "<=", 0.5)
    res = solve_mip(b.build())
    assert res.ok and res.objective == pytest.approx(4.0)


def brute(locs, dist):
    if not locs:
        return 0.0
    return min(tour_length(p, dist) for p in itertools.permutations(locs))


@pytest.mark.parametrize("geo", [dict(shape="circular", rings=2, diameter=0.7),
                                 dict(shape="rectangular", rows=3, cols=3, diameter=0.5)])
def test_held_karp_and_subset_table_against_brute_force(geo, rng):
    dist = build_geometry(**geo).dist
    pool = sorted(rng.choice(np.arange(1, dist.shape[0]), 6, replace=False).tolist())
    table = SubsetTours(dist).table(tuple(pool))
    for mask in range(1 << len(pool)):
        sub = [p for i, p in enumerate(pool) if mask >> i & 1]
        ref = brute(sub, dist)
        order, q = optimal_tour(sub, dist)
        assert q == pytest.approx(ref, abs=1e-12)
        assert tour_length(order, dist) == pytest.approx(q, abs=1e-12)
        assert table[mask] == pytest.approx(ref, abs=1e-12)


def test_optimal_tour_tie_break_is_lexicographic():
    dist = build_geometry("circular", rings=1, diameter=1.0).dist
    order, _ = optimal_tour([1, 2, 3, 4], dist)
    best = min(p for p in itertools.permutations([1, 2, 3, 4])
               if abs(tour_length(p, dist) - tour_length(order, dist)) < 1e-12)
    assert order == best


def test_heuristic_and_insertion_bounds(rng):
    dist = build_geometry("circular", rings=3, diameter=0.8).dist
    locs = rng.choice(np.arange(1, dist.shape[0]), 8, replace=False).tolist()
    _, q_opt = optimal_tour(locs, dist)
    _, q_h = nearest_neighbour_two_opt(locs, dist)
    assert q_h >= q_opt - 1e-12
    _, q_b, exact = best_tour(locs, dist, exact_limit=5)
    assert not exact and q_b == pytest.approx(q_h)
    route, _ = optimal_tour(locs[:5], dist)
    new, delta = cheapest_insertion(route, locs[5], dist)
    assert sorted(new) == sorted(list(route) + [locs[5]])
    assert tour_length(new, dist) == pytest.approx(tour_length(route, dist) + delta)
    positions = [route[:i] + (locs[5],) + route[i:] for i in range(len(route) + 1)]
    assert delta == pytest.approx(min(tour_length(p, dist) for p in positions)
                                  - tour_length(route, dist))
