import itertools
import json

import numpy as np
import pytest

from homecare.bounds import (LayerCapExceeded, SamplePath, UnsupportedInstance, estimate_gap,
                             perfect_info_value, replay_policy, sample_path)
from homecare.instance import build_geometry, make_instance, make_service
from homecare.mdp import State
from homecare.optim import optimal_tour
from homecare.policies import AcceptDivertAll, MyopicPolicy, RejectAll
from homecare.sim import SimConfig, initial_states


@pytest.fixture(scope="module")
def tiny():
    g = build_geometry("circular", rings=1, diameter=0.5)
    return make_instance(g, [make_service(1, 1.0, 1, "poisson", 2, 3)], target_demand=5.0,
                         gamma=0.8, x_max=12, y_max=12)


def brute_day_cost(visits, inst):
    """Cheapest way to serve or divert a day's visits, by enumerating served counts."""
    keys = sorted(visits)
    best = np.inf
    for served in itertools.product(*(range(visits[kl] + 1) for kl in keys)):
        regions = [l + 1 for (k, l), s in zip(keys, served) if s]
        _, q = optimal_tour(regions, inst.dist)
        hours = q + sum(inst.services[k].e * s for (k, l), s in zip(keys, served))
        if hours > inst.chi + inst.chi_prime + 1e-9:
            continue
        cost = sum(inst.Z[k] * (visits[k, l] - s) for (k, l), s in zip(keys, served))
        best = min(best, cost + inst.U * max(0.0, hours - inst.chi) + inst.Q * q)
    return best


def brute_relaxation(path, inst):
    """Try every accept/reject vector over the path's referrals."""
    refs = [(0, r) for r in path.pending] + [(d + 1, r) for d, day in enumerate(path.arrivals)
                                             for r in day]
    h = inst.services[0].h
    base = [dict() for _ in range(path.horizon)]
    for t, k, l, j, total in path.initial:
        day = t
        for _ in range(total - j):
            if day < path.horizon:
                base[day][k, l] = base[day].get((k, l), 0) + 1
            day += h
    best = np.inf
    for accept in itertools.product((0, 1), repeat=len(refs)):
        visits = [dict(v) for v in base]
        cost = 0.0
        for a, (d, (k, l, total)) in zip(accept, refs):
            if not a:
                cost += inst.R[k]
                continue
            for i in range(total):
                if d + i * h < path.horizon:
                    visits[d + i * h][k, l] = visits[d + i * h].get((k, l), 0) + 1
        cost += sum(brute_day_cost(v, inst) for v in visits if v)
        best = min(best, cost)
    return best


def make_path(rng, inst, horizon):
    arrivals = []
    for _ in range(horizon - 1):
        arrivals.append([(0, int(rng.integers(inst.L)), int(rng.integers(1, 4)))
                         for _ in range(int(rng.integers(0, 4)))])
    initial = [(0, 0, int(rng.integers(inst.L)), 0, int(rng.integers(1, 4)))
               for _ in range(int(rng.integers(0, 5)))]
    pending = [(0, int(rng.integers(inst.L)), int(rng.integers(1, 4)))
               for _ in range(int(rng.integers(0, 4)))]
    return SamplePath(0, horizon, initial, pending, arrivals)


@pytest.mark.parametrize("seed", range(8))
def test_relaxed_dp_matches_brute_force(tiny, seed):
    rng = np.random.default_rng(seed)
    path = make_path(rng, tiny, int(rng.integers(1, 5)))
    n_refs = len(path.pending) + sum(len(d) for d in path.arrivals)
    if n_refs > 11:
        pytest.skip("too many referrals for enumeration")
    ref = brute_relaxation(path, tiny)
    for beam, prune in ((None, False), (None, True), (8, True)):
        assert perfect_info_value(start_state(tiny, path), path, tiny, beam=beam,
                                  prune_dominated=prune) == pytest.approx(ref, abs=1e-9)


def start_state(inst, path):
    s = State.empty(inst)
    x, y = s.x.copy(), s.y.copy()
    for t, k, l, j, _ in path.initial:
        x[t, k, l, j] += 1
    for k, l, _ in path.pending:
        y[k, l] += 1
    return State(x, y)


def test_bound_below_every_policy(tiny):
    states = initial_states(tiny, SimConfig(2, 5, 1, seed=4))
    for i, s in enumerate(states):
        for p in range(4):
            path = sample_path(tiny, 1000 * i + p, s)
            lb = perfect_info_value(s, path, tiny)
            for pol in (RejectAll(), AcceptDivertAll(), MyopicPolicy()):
                assert lb <= replay_policy(s, path, pol, tiny)


def test_gap_report(tiny):
    states = initial_states(tiny, SimConfig(2, 5, 1, seed=5))
    rep = estimate_gap(tiny, states, 3, MyopicPolicy(), seed=1)
    assert rep.dominance_holds
    assert rep.gaps.shape == (2, 3)
    assert rep.to_csv().splitlines()[0].startswith("state")


def test_path_round_trip_and_horizon_law(tiny):
    path = sample_path(tiny, 42)
    assert SamplePath.from_json(json.loads(path.dumps())) == path
    g = np.random.default_rng(0)
    hz = np.array([sample_path(tiny, int(s)).horizon for s in g.integers(0, 2**62, 3000)])
    se = hz.std(ddof=1) / np.sqrt(len(hz))
    assert abs(hz.mean() - 1 / (1 - tiny.gamma)) < 3 * se


def test_layer_cap_and_unsupported(tiny):
    s = initial_states(tiny, SimConfig(1, 10, 1, seed=2))[0]
    path = sample_path(tiny, 7, s)
    while path.horizon < 4:
        path = sample_path(tiny, path.seed + 1, s)
    with pytest.raises(LayerCapExceeded):
        perfect_info_value(s, path, tiny, layer_cap=1, beam=None, prune_dominated=False)
    with pytest.raises(UnsupportedInstance):
        perfect_info_value(s, path, tiny.with_(services=(make_service(1, 1.0, 2, "poisson", 2, 3),)))
