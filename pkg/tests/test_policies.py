import numpy as np
import pytest

from homecare.alp import AlpParams, column_generation
from homecare.alp.feasibility import random_pair
from homecare.mdp import State, check_action
from homecare.policies import (AcceptDivertAll, AlpPolicy, MyopicPolicy, RejectAll, SbConfig,
                               SbPolicy, alp_action, approximate_q, classify_regions)
from homecare.policies.alp_policy import _alp_action_mip
from homecare.policies.calendar import (Referral, best_choice, build_calendar, choice_costs,
                                        planning_horizon)


@pytest.fixture(scope="module")
def params(small_instance):
    return column_generation(small_instance, 0.5, "1d-2i").params


def sample_states(inst, rng, n):
    return [random_pair(inst, rng).state for _ in range(n)]


def test_alp_action_equals_fixed_state_mip(small_instance, params, rng):
    for state in sample_states(small_instance, rng, 15):
        dec = alp_action(state, params, small_instance, mip_fallback=False)
        assert check_action(state, dec.action, small_instance) == []
        assert dec.objective == pytest.approx(
            approximate_q(state, dec.action, params, small_instance), abs=1e-9)
        ref = _alp_action_mip(state, params, small_instance)
        assert dec.objective == pytest.approx(ref.objective, abs=1e-6)


@pytest.mark.parametrize("make", [lambda p: AlpPolicy(p), lambda p: MyopicPolicy(),
                                  lambda p: SbPolicy(SbConfig(n_scenarios=8, threshold=4)),
                                  lambda p: RejectAll(), lambda p: AcceptDivertAll()])
def test_policies_return_admissible_actions(small_instance, two_type_instance, make, rng):
    for inst in (small_instance, two_type_instance):
        p = column_generation(inst, 0.5, "1d-2i").params
        pol = make(p)
        for state in sample_states(inst, rng, 6):
            dec = pol(state, inst, np.random.default_rng(1))
            assert check_action(state, dec.action, inst) == []
            assert len(dec.choices) == int(state.y.sum())


def test_reference_rules(small_instance, rng):
    state = sample_states(small_instance, rng, 1)[0]
    rej = RejectAll()(state, small_instance).action
    assert np.array_equal(rej.r, state.y) and rej.n.sum() == 0
    div = AcceptDivertAll()(state, small_instance).action
    assert div.r.sum() == 0 and div.route == ()


def test_sb_is_reproducible_given_its_stream(small_instance, rng):
    state = sample_states(small_instance, rng, 1)[0]
    pol = SbPolicy(SbConfig(n_scenarios=10, threshold=5))
    a = pol(state, small_instance, np.random.default_rng(7)).action
    b = pol(state, small_instance, np.random.default_rng(7)).action
    assert np.array_equal(a.n, b.n) and np.array_equal(a.r, b.r)


def test_sb_threshold_extremes(small_instance, rng):
    state = sample_states(small_instance, rng, 1)[0]
    if state.y.sum() == 0:
        state = State(state.x, np.ones_like(state.y))
    never = SbPolicy(SbConfig(n_scenarios=5, threshold=6))(state, small_instance).action
    assert np.array_equal(never.r, state.y)
    always = SbPolicy(SbConfig(n_scenarios=5, threshold=0))(state, small_instance).action
    assert always.r.sum() == 0


def test_classification_thresholds(small_instance):
    inst = small_instance
    p = AlpParams.zeros(inst)
    R = float(inst.R[0])
    p.tau[:, 0, 0, 0] = 0.5 * R / inst.gamma          # cheap later day: accept
    p.tau[:, 0, 1, 0] = 2.0 * R / inst.gamma          # costly everywhere: reject
    p.tau[:, 0, 1, 1] = 2.0 * R / (inst.gamma * inst.services[0].cont(2))
    p.tau[:, 0, 2, 0] = 2.0 * R / inst.gamma          # cheap day 1: maybe
    labels = classify_regions(p, inst)
    assert labels[0, 0] == "always-accept"
    assert labels[0, 1] == "always-reject"
    assert labels[0, 2] == "maybe"


def test_best_choice_prefers_earliest_on_ties():
    assert best_choice([(1.0, 3), (1.0, 0), (2.0, 1)]) == (1.0, 0)
    assert best_choice([(1.0, 3), (0.5, 2), (0.5, 1)]) == (0.5, 1)


def test_calendar_books_expected_visits(small_instance):
    inst = small_instance
    state = State.empty(inst)
    x = state.x.copy()
    x[0, 0, 2, 1] = 2                     # two patients with one visit done, due tomorrow
    cal = build_calendar(State(x, state.y), inst)
    s = inst.services[0]
    booked = [t for t in range(1, cal.H + 1) if cal.days[t].hours > 0]
    assert booked == [1 + i * s.h for i in range(s.jbar - 1) if 1 + i * s.h <= cal.H]
    assert all(cal.days[t].hours == pytest.approx(2 * s.e) for t in booked)
    assert cal.H == planning_horizon(inst)
    costs = choice_costs(cal, Referral(0, 2))
    assert [d for _, d in costs] == [0] + list(range(1, s.T + 1))
