"""Discounted-cost simulation of policies and paired comparison between them."""
from __future__ import annotations

import csv
import io
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .instance import ProblemInstance
from .mdp import State, day_record, sample_transition
from .policies import MyopicPolicy, Policy

METRICS = ("rejection_hours", "diversion_hours", "overtime_hours", "travel_time", "tour_length")


@dataclass(frozen=True)
class SimConfig:
    states: int = 25
    warmup_days: int = 20
    days: int = 365
    seed: int = 0
    crn: bool = True

    def __post_init__(self):
        if self.states < 1 or self.warmup_days < 0 or self.days < 1:
            raise ValueError("simulation sizes must be positive")


class PolicyFailure(RuntimeError):
    def __init__(self, day: int, policy: str, cause: Exception):
        super().__init__(f"policy {policy!r} failed on day {day}: {cause}")
        self.day = day
        self.policy = policy


def policy_key(name: str) -> int:
    return zlib.crc32(name.encode())


class Streams:
    """Independent generators for arrivals, visit continuations and the policy itself.

    Keys are (seed, state index, policy key, crn flag, purpose); with common random
    numbers the policy key is 0, so every policy sees the same exogenous draws.
    """

    def __init__(self, seed: int, state_index: int, policy: str, crn: bool):
        pk = 0 if crn else policy_key(policy)
        base = [int(seed), int(state_index), pk, int(crn)]
        self.arrivals = np.random.default_rng(np.random.SeedSequence(base + [1]))
        self.continuation = np.random.default_rng(np.random.SeedSequence(base + [2]))
        self.policy = np.random.default_rng(np.random.SeedSequence(base + [3]))


def step(state: State, policy: Policy, inst: ProblemInstance, streams: Streams):
    dec = policy(state, inst, streams.policy)
    arrivals = streams.arrivals.poisson(inst.lam)
    tr = sample_transition(state, dec.action, inst, streams.continuation, arrivals=arrivals)
    return dec, tr


def warmup(inst: ProblemInstance, policy: Policy | None = None, days: int = 20,
           rng: np.random.Generator | int | None = None) -> State:
    """State reached from the empty state after ``days`` simulated days."""
    policy = policy or MyopicPolicy()
    seed = rng if isinstance(rng, (int, np.integer)) else None
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(seed)
    s = State.empty(inst)
    for _ in range(days):
        dec = policy(s, inst, gen)
        s = sample_transition(s, dec.action, inst, gen).next_state
    return s


@dataclass
class ValueEstimate:
    value: float
    costs: np.ndarray                   # undiscounted daily costs
    metrics: dict                       # name -> daily series
    seconds: float = 0.0
    flags: list = field(default_factory=list)
    referrals: int = 0                  # referral decisions taken
    accepted: int = 0

    def mean_metrics(self) -> dict:
        return {m: float(np.mean(v)) for m, v in self.metrics.items()}


def rejection_hours(inst: ProblemInstance, r: np.ndarray) -> float:
    return float(sum(r[k].sum() * s.jbar * s.e for k, s in enumerate(inst.services)))


def diversion_hours(inst: ProblemInstance, z: np.ndarray) -> float:
    return float((z.sum(axis=1) * inst.e).sum())


def estimate_value(state: State, policy: Policy, inst: ProblemInstance, days: int,
                   streams: Streams | None = None, gamma: float | None = None,
                   arrivals=None) -> ValueEstimate:
    """Discounted cost of following ``policy`` for ``days`` days from ``state``.

    ``arrivals`` optionally replays a fixed (days, K, L) arrival sequence.
    """
    g = inst.gamma if gamma is None else gamma
    streams = streams or Streams(0, 0, policy.name, True)
    costs = np.zeros(days)
    met = {m: np.zeros(days) for m in METRICS}
    flags = set()
    seconds = 0.0
    referrals = accepted = 0
    s = state
    for i in range(days):
        try:
            dec = policy(s, inst, streams.policy)
        except Exception as exc:            # noqa: BLE001 - reported with the day index
            raise PolicyFailure(i, policy.name, exc) from exc
        seconds += dec.seconds
        flags.update(dec.flags)
        referrals += int(s.y.sum())
        accepted += int(dec.action.n.sum())
        rec = day_record(s, dec.action, inst)
        costs[i] = rec.cost
        met["rejection_hours"][i] = rejection_hours(inst, rec.rejected)
        met["diversion_hours"][i] = diversion_hours(inst, rec.diverted)
        met["overtime_hours"][i] = rec.overtime
        met["travel_time"][i] = rec.travel
        met["tour_length"][i] = rec.tour
        arr = streams.arrivals.poisson(inst.lam) if arrivals is None else arrivals[i]
        s = sample_transition(s, dec.action, inst, streams.continuation, arrivals=arr).next_state
    value = float((g ** np.arange(days) * costs).sum())
    return ValueEstimate(value, costs, met, seconds, sorted(flags), referrals, accepted)


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------

@dataclass
class SimReport:
    policies: list
    reference: str
    config: SimConfig
    values: dict             # policy -> per-state values
    metrics: dict            # policy -> mean daily metrics
    gaps: dict               # policy -> per-state gap% vs reference
    seconds: dict            # policy -> mean decision time per day
    pairwise: dict = field(default_factory=dict)   # (a, b) -> p-value of paired t-test
    flags: dict = field(default_factory=dict)

    def gap_mean(self, p) -> float:
        return float(np.mean(self.gaps[p]))

    def gap_sd(self, p) -> float:
        g = self.gaps[p]
        return float(np.std(g, ddof=1)) if len(g) > 1 else 0.0

    def gap_pvalue(self, p) -> float:
        """Two-sided p-value of the mean gap against zero (paired test on the values)."""
        g = np.asarray(self.gaps[p])
        if len(g) < 2 or np.allclose(g, g[0]):
            return 0.0 if len(g) and g[0] != 0 else 1.0
        return float(stats.ttest_1samp(g, 0.0).pvalue)

    def significant(self, p, level: float = 0.05) -> bool:
        return p != self.reference and self.gap_pvalue(p) < level

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state", "policy", "value", "gap_pct"])
        for i in range(self.config.states):
            for p in self.policies:
                w.writerow([i, p, f"{self.values[p][i]:.6f}", f"{self.gaps[p][i]:.6f}"])
        return buf.getvalue()

    def to_markdown(self) -> str:
        head = ["Policy", "Gap% (SD)", "Rejection hours", "Diversion hours", "Overtime (h)",
                "Travel time (h)", "Tour length (h)", "Significant"]
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        for p in self.policies:
            m = self.metrics[p]
            gap = "ref" if p == self.reference else f"{self.gap_mean(p):.2f}% ({self.gap_sd(p):.2f}%)"
            sig = "" if p == self.reference else ("yes" if self.significant(p) else "no")
            lines.append("| " + " | ".join([p, gap] + [f"{m[k]:.2f}" for k in METRICS] + [sig]) + " |")
        if self.pairwise:
            lines.append("")
            lines.append("| Pair | p-value (paired t-test on gaps) |")
            lines.append("|---|---|")
            for (a, b), pv in self.pairwise.items():
                lines.append(f"| {a} vs {b} | {pv:.4f} |")
        return "\n".join(lines) + "\n"


def initial_states(inst: ProblemInstance, config: SimConfig, policy: Policy | None = None):
    return [warmup(inst, policy, config.warmup_days,
                   np.random.default_rng(np.random.SeedSequence([config.seed, i, 0, 0, 0])))
            for i in range(config.states)]


def _cell(args):
    inst, state, policy, name, idx, config = args
    est = estimate_value(state, policy, inst, config.days, Streams(config.seed, idx, name, config.crn))
    return est.value, est.mean_metrics(), est.seconds / config.days, est.flags


def compare_policies(inst: ProblemInstance, policies: dict, reference: str,
                     config: SimConfig = SimConfig(), jobs: int = 1,
                     states: list | None = None) -> SimReport:
    """Evaluate every policy from the same warmed-up initial states.

    ``policies`` maps names to Policy objects.  Gap% of policy p in state s is
    100 * (v_ref(s) - v_p(s)) / v_ref(s), so positive means better than the reference.
    """
    if len(policies) < 2:
        raise ValueError("need at least two policies")
    if reference not in policies:
        raise ValueError(f"reference {reference!r} is not among the policies")
    states = states if states is not None else initial_states(inst, config)
    if len(states) != config.states:
        raise ValueError("number of initial states does not match the configuration")
    names = list(policies)
    tasks = [(inst, s, policies[p], p, i, config) for i, s in enumerate(states) for p in names]
    if jobs == 1:
        out = [_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(_cell, tasks))
    values = {p: np.zeros(config.states) for p in names}
    mets = {p: {m: 0.0 for m in METRICS} for p in names}
    secs = {p: 0.0 for p in names}
    flags = {p: set() for p in names}
    for (_, _, _, p, i, _), (v, m, sec, fl) in zip(tasks, out):
        values[p][i] = v
        for k in METRICS:
            mets[p][k] += m[k] / config.states
        secs[p] += sec / config.states
        flags[p].update(fl)
    ref = values[reference]
    with np.errstate(divide="ignore", invalid="ignore"):
        gaps = {p: np.where(ref != 0, 100.0 * (ref - values[p]) / ref, 0.0) for p in names}
    pair = {}
    others = [p for p in names if p != reference]
    for a_i, a in enumerate(others):
        for b in others[a_i + 1:]:
            d = gaps[a] - gaps[b]
            if len(d) < 2 or np.allclose(d, d[0]):
                pv = 1.0 if len(d) == 0 or d[0] == 0 else 0.0
            else:
                pv = float(stats.ttest_rel(gaps[a], gaps[b]).pvalue)
            pair[a, b] = pv
    return SimReport(names, reference, config, values, mets, gaps, secs, pair,
                     {p: sorted(f) for p, f in flags.items()})


def alp_evaluator(inst: ProblemInstance, config: SimConfig, states: list | None = None):
    """Simulation-based cost of ALP parameters for the weight search.

    Every call replays the same initial states and random streams, so parameter sets
    are compared under common random numbers.
    """
    from .alp.tuning import Evaluation
    from .policies import AlpPolicy
    states = states if states is not None else initial_states(inst, config)

    def evaluate(params) -> Evaluation:
        vals, rej, div = [], [], []
        acc = refs = 0
        for i, s in enumerate(states):
            est = estimate_value(s, AlpPolicy(params), inst, config.days,
                                 Streams(config.seed, i, "alp", True))
            vals.append(est.value)
            rej.append(est.metrics["rejection_hours"].mean())
            div.append(est.metrics["diversion_hours"].mean())
            acc += est.accepted
            refs += est.referrals

        def se(a):
            return float(np.std(a, ddof=1) / np.sqrt(len(a))) if len(a) > 1 else 0.0

        return Evaluation(float(np.mean(vals)), se(vals), float(np.mean(rej)), float(np.mean(div)),
                          acc, refs, se(rej), se(div))

    return evaluate


def discounted_sum(costs, gamma: float) -> float:
    return float(sum(c * gamma ** i for i, c in enumerate(costs)))


def expected_reject_all_value(inst: ProblemInstance, days: int, state: State | None = None) -> float:
    """Expected discounted cost of rejecting every referral for ``days`` days.

    Pending referrals of the start state are rejected on day 0; each later day rejects
    min(Poisson(lambda), y_max) referrals per type and region.
    """
    y0 = 0.0 if state is None else float((state.y.sum(axis=1) * inst.R).sum())
    capped = np.vectorize(lambda m: stats.poisson.sf(np.arange(inst.y_max), m).sum())(inst.lam)
    per_day = float((capped.sum(axis=1) * inst.R).sum())
    g = inst.gamma
    return y0 + per_day * (g - g ** days) / (1 - g)


__all__ = ["METRICS", "PolicyFailure", "SimConfig", "SimReport", "Streams", "ValueEstimate",
           "alp_evaluator", "compare_policies", "discounted_sum", "estimate_value", "expected_reject_all_value",
           "initial_states", "warmup"]
