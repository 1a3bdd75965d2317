"""Perfect-information lower bound on the optimal discounted cost.

Discounting is replaced by absorption: after a Geometric(1 - gamma) number of days the
system stops at no further cost.  A sample path reveals the absorption day, every
referral arrival and every patient's total number of visits, so the remaining problem
is deterministic and is solved by a forward dynamic program.  Any non-anticipative
policy replayed on the same path costs at least as much.

Only instances whose wait-time targets are all one day are supported: an accepted
referral is then first visited on the day of the decision and its whole calendar is
fixed by its visit count and care pattern.
"""
from __future__ import annotations

import json
import zlib
from collections import Counter
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from .dayplan import Offer, plan_day
from .instance import ProblemInstance
from .mdp import ActionPlan, State, check_action, exact_cost, sample_transition
from .optim.tour import SubsetTours

LAYER_CAP = 200_000


class LayerCapExceeded(RuntimeError):
    def __init__(self, day: int, size: int, cap: int):
        super().__init__(f"day {day}: {size} relaxed states exceed the cap of {cap}")
        self.day, self.size, self.cap = day, size, cap


class UnsupportedInstance(ValueError):
    pass


def check_supported(inst: ProblemInstance):
    if any(s.T != 1 for s in inst.services):
        raise UnsupportedInstance("the perfect-information bound needs wait targets of one day")


@dataclass
class SamplePath:
    seed: int
    horizon: int                       # absorption day T-bar >= 1
    initial: list                      # (t, k, l, j, total) per booked patient of the start state
    pending: list                      # (k, l, total) per referral waiting in the start state
    arrivals: list                     # arrivals[d-1]: (k, l, total) referrals pending on day d

    def arrival_counts(self, inst: ProblemInstance, day: int) -> np.ndarray:
        out = np.zeros((inst.K, inst.L), dtype=np.int64)
        for k, l, _ in self.arrivals[day - 1]:
            out[k, l] += 1
        return out

    def to_json(self) -> dict:
        return {"seed": self.seed, "horizon": self.horizon, "initial": self.initial,
                "pending": self.pending, "arrivals": self.arrivals}

    @staticmethod
    def from_json(d: dict) -> "SamplePath":
        tup = lambda rows: [tuple(int(v) for v in r) for r in rows]   # noqa: E731
        return SamplePath(int(d["seed"]), int(d["horizon"]), tup(d["initial"]), tup(d["pending"]),
                          [tup(day) for day in d["arrivals"]])

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _draw_total(pmf: np.ndarray, done: int, rng: np.random.Generator) -> int:
    """Total visit count given that at least ``done + 1`` visits happen."""
    tail = pmf[done:]
    if tail.sum() <= 0:
        return done + 1
    return done + 1 + int(rng.choice(len(tail), p=tail / tail.sum()))


def sample_path(inst: ProblemInstance, rng: np.random.Generator | int,
                state: State | None = None) -> SamplePath:
    """Absorption day, capped Poisson arrivals and visit counts (drawn up front)."""
    seed = int(rng) if isinstance(rng, (int, np.integer)) else int(rng.integers(2**63))
    g = np.random.default_rng(seed)
    horizon = int(g.geometric(1 - inst.gamma))
    initial, pending = [], []
    if state is not None:
        for t, k, l, j in map(tuple, np.argwhere(state.x > 0)):
            for _ in range(int(state.x[t, k, l, j])):
                initial.append((int(t), int(k), int(l), int(j),
                                _draw_total(inst.services[k].pmf, int(j), g)))
        for k, l in map(tuple, np.argwhere(state.y > 0)):
            for _ in range(int(state.y[k, l])):
                pending.append((int(k), int(l), _draw_total(inst.services[k].pmf, 0, g)))
    arrivals = []
    for _ in range(1, horizon):
        arr = np.minimum(g.poisson(inst.lam), inst.y_max)
        day = []
        for k, l in zip(*np.nonzero(arr)):
            for _ in range(int(arr[k, l])):
                day.append((int(k), int(l), _draw_total(inst.services[k].pmf, 0, g)))
        arrivals.append(day)
    return SamplePath(seed, horizon, initial, pending, arrivals)


# ---------------------------------------------------------------------------
# Relaxed dynamic program
# ---------------------------------------------------------------------------

class _DayCost:
    """Least cost of one day's visits (serve or divert, route, overtime), memoised.

    Costs are exact rationals so that the bound and a replayed policy are compared
    without rounding noise.
    """

    def __init__(self, inst: ProblemInstance):
        self.inst = inst
        self.tours = SubsetTours(inst.dist)
        self.memo: dict = {}

    def __call__(self, visits: tuple) -> float:
        if visits not in self.memo:
            inst = self.inst
            offers = [Offer(l, inst.services[k].e, float(inst.Z[k]), c, (k, l))
                      for (k, l), c in visits]
            ch = plan_day(offers, self.tours, inst.chi, inst.chi_prime, inst.U, inst.Q)
            K, L = inst.K, inst.L
            z = np.zeros((K, L), dtype=np.int64)
            n = np.zeros((inst.horizon, K, L), dtype=np.int64)
            for (k, l), c in visits:
                n[0, k, l] = c
                z[k, l] = c - ch.served.get((k, l), 0)
            act = ActionPlan(np.zeros((K, L), dtype=np.int64), n, z, ch.route)
            self.memo[visits] = exact_cost(State.empty(inst), act, inst)
        return self.memo[visits]


def _start_patients(path: SamplePath) -> Counter:
    # patient = (k, l, offset to the next visit, visits left)
    return Counter((k, l, t, total - j) for t, k, l, j, total in path.initial)


def _advance(patients: Counter, h: list) -> Counter:
    nxt = Counter()
    for (k, l, off, left), c in patients.items():
        if off > 0:
            nxt[k, l, off - 1, left] += c
        elif left > 1:
            nxt[k, l, h[k] - 1, left - 1] += c
    return nxt


def _key(patients: Counter) -> tuple:
    return tuple(sorted((p, c) for p, c in patients.items() if c))


@dataclass
class RelaxedSolution:
    value: float
    layer_sizes: list = field(default_factory=list)
    decisions: list = field(default_factory=list)      # per day: accepted counts per group


def perfect_info_value(state: State, path: SamplePath, inst: ProblemInstance,
                       layer_cap: int = LAYER_CAP, upper: float | None = None,
                       prune_dominated: bool = True, detail: bool = False,
                       beam: int | None = 64):
    """Optimal undiscounted cost of the path with every future outcome known.

    ``upper`` (the cost of any feasible plan on the path) lets states be dropped once
    their cost so far plus the cost of their already-booked visits exceeds it; this is
    exact because later costs only grow.  A quick beam search first tightens ``upper``
    with a feasible relaxed plan.
    """
    check_supported(inst)
    if beam:
        heur = _forward(state, path, inst, layer_cap, upper, False, False, beam)[0]
        upper = heur if upper is None else min(upper, heur)
    value, sizes, hist = _forward(state, path, inst, layer_cap, upper, prune_dominated,
                                  detail, None)
    if detail:
        return RelaxedSolution(float(value), sizes, hist)
    return float(value)


def _forward(state, path, inst, layer_cap, upper, prune_dominated, detail, beam):
    h = [s.h for s in inst.services]
    R = inst.R
    day_cost = _DayCost(inst)
    R = [Fraction(r) for r in R]
    layer = {_key(_start_patients(path)): (Fraction(0), [])}
    sizes = []
    for day in range(path.horizon):
        refs = path.pending if day == 0 else path.arrivals[day - 1]
        groups = sorted(Counter(refs).items())
        nxt: dict = {}
        bound_memo: dict = {}
        for key, (cost, hist) in layer.items():
            patients = Counter(dict(key))
            today = Counter()
            for (k, l, off, left), c in patients.items():
                if off == 0:
                    today[k, l] += c
            for choice in _choices(groups):
                visits = today.copy()
                add = Counter()
                rejected = Fraction(0)
                for ((k, l, total), cnt), a in zip(groups, choice):
                    if a:
                        visits[k, l] += a
                        add[k, l, 0, total] += a
                    rejected += R[k] * (cnt - a)
                c = cost + rejected + day_cost(tuple(sorted(visits.items())))
                if upper is not None and c > upper + 1e-9:
                    continue
                after = _advance(patients + add, h)
                nk = _key(after)
                if upper is not None or beam:
                    if nk not in bound_memo:
                        bound_memo[nk] = _committed_cost(after, h, day_cost,
                                                         path.horizon - day - 1)
                    if upper is not None and c + bound_memo[nk] > upper + 1e-9:
                        continue
                if nk not in nxt or c < nxt[nk][0] - 1e-12:
                    nxt[nk] = (c, hist + [choice] if detail else hist)
        if prune_dominated and len(nxt) > 1:
            nxt = _prune(nxt)
        if beam and len(nxt) > beam:
            top = sorted(nxt, key=lambda k: (nxt[k][0] + bound_memo[k], k))[:beam]
            nxt = {k: nxt[k] for k in top}
        if len(nxt) > layer_cap:
            raise LayerCapExceeded(day, len(nxt), layer_cap)
        sizes.append(len(nxt))
        layer = nxt
        if not layer:
            raise RuntimeError("upper bound below the relaxed optimum")
    best = min(layer.values(), key=lambda v: v[0])
    return best[0], sizes, best[1]


def _choices(groups):
    if not groups:
        yield ()
        return
    ranges = [range(c + 1) for _, c in groups]
    idx = [0] * len(ranges)
    while True:
        yield tuple(idx)
        i = 0
        while i < len(idx):
            idx[i] += 1
            if idx[i] < len(ranges[i]):
                break
            idx[i] = 0
            i += 1
        if i == len(idx):
            return


def _prune(layer: dict) -> dict:
    """Drop states whose patient multiset contains another state's at no lower cost.

    Extra patients never make later days cheaper (any plan for the larger set restricts
    to the smaller one at no higher cost), so such states cannot lead to the optimum.
    """
    keys = list(layer)
    dims = sorted({p for key in keys for p, _ in key})
    pos = {p: i for i, p in enumerate(dims)}
    M = np.zeros((len(keys), len(dims)))
    for i, key in enumerate(keys):
        for p, c in key:
            M[i, pos[p]] = c
    size = M.sum(axis=1)
    order = sorted(range(len(keys)), key=lambda i: (layer[keys[i]][0], size[i]))
    kept = np.zeros_like(M)
    kept_idx: list[int] = []
    for i in order:
        # kept rows cost no more than row i (ascending order)
        n = len(kept_idx)
        if n and np.any(np.all(kept[:n] <= M[i], axis=1)):
            continue
        kept[n] = M[i]
        kept_idx.append(int(i))
    return {keys[i]: layer[keys[i]] for i in sorted(kept_idx)}


def _committed_cost(patients: Counter, h: list, day_cost, days_left: int) -> float:
    """Cost of the visits already booked for the remaining days, ignoring newcomers.

    Later visit sets only grow with new acceptances, and day costs are monotone in the
    visit set, so this bounds the cost to go from below.
    """
    total = Fraction(0)
    cur = patients
    for _ in range(days_left):
        if not cur:
            break
        today = Counter()
        for (k, l, off, left), c in cur.items():
            if off == 0:
                today[k, l] += c
        if today:
            total += day_cost(tuple(sorted(today.items())))
        cur = _advance(cur, h)
    return total


# ---------------------------------------------------------------------------
# Policy replay on a path
# ---------------------------------------------------------------------------

def replay_policy(state: State, path: SamplePath, policy, inst: ProblemInstance,
                  rng: np.random.Generator | None = None) -> float:
    """Undiscounted cost of ``policy`` over the path's days, with its arrivals and visit
    counts.  Among referrals of the same type and region the policy cannot tell apart,
    the earliest-listed ones are the ones accepted."""
    check_supported(inst)
    h = [s.h for s in inst.services]
    patients = Counter((k, l, t, j, total) for t, k, l, j, total in path.initial)
    pending = list(path.pending)
    s = state
    rng = rng or np.random.default_rng(path.seed)
    total_cost = Fraction(0)
    for day in range(path.horizon):
        if _mdp_state(patients, pending, inst).key() != s.key():
            raise RuntimeError("replayed state diverged from the path bookkeeping")
        act: ActionPlan = policy(s, inst, rng).action
        check = check_action(s, act, inst)
        if check:
            raise ValueError(f"policy returned an infeasible action: {check}")
        total_cost += exact_cost(s, act, inst)
        nxt = Counter()
        xi = np.zeros((inst.K, inst.L, inst.jmax), dtype=np.int64)
        acc = act.n[0].copy()
        for k, l, tot in pending:
            if acc[k, l] > 0:
                acc[k, l] -= 1
                patients[k, l, 0, 0, tot] += 1
        for (k, l, off, j, tot), c in patients.items():
            if off > 0:
                nxt[k, l, off - 1, j, tot] += c
            elif tot > j + 1:
                nxt[k, l, h[k] - 1, j + 1, tot] += c
                xi[k, l, j + 1] += c
        patients = nxt
        pending = path.arrivals[day] if day + 1 < path.horizon else []
        if day + 1 < path.horizon:
            arr = path.arrival_counts(inst, day + 1)
            tr = sample_transition(s, act, inst, rng, arrivals=arr, xi=xi)
            if tr.overflow:
                raise RuntimeError("state caps exceeded while replaying a path")
            s = tr.next_state
    return float(total_cost)


def _mdp_state(patients: Counter, pending, inst: ProblemInstance) -> State:
    s = State.empty(inst)
    for (k, l, off, j, _), c in patients.items():
        s.x[off, k, l, j] += c
    for k, l, _ in pending:
        s.y[k, l] += 1
    return s


# ---------------------------------------------------------------------------
# Gap estimate
# ---------------------------------------------------------------------------

@dataclass
class GapReport:
    lower: np.ndarray            # (states, paths)
    upper: np.ndarray
    horizons: np.ndarray

    @property
    def gaps(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.upper > 0, 100 * (self.upper - self.lower) / self.upper, 0.0)

    @property
    def mean_gap(self) -> float:
        return float(self.gaps.mean())

    @property
    def sd_gap(self) -> float:
        """Standard deviation of the per-state mean gaps."""
        per_state = self.gaps.mean(axis=1)
        return float(np.std(per_state, ddof=1)) if len(per_state) > 1 else 0.0

    @property
    def dominance_holds(self) -> bool:
        return bool(np.all(self.lower <= self.upper + 1e-9 * np.maximum(1, np.abs(self.upper))))

    def to_csv(self) -> str:
        rows = ["state,path,horizon,lower,upper,gap_pct"]
        for i in range(self.lower.shape[0]):
            for p in range(self.lower.shape[1]):
                rows.append(f"{i},{p},{self.horizons[i, p]},{self.lower[i, p]:.6f},"
                            f"{self.upper[i, p]:.6f},{self.gaps[i, p]:.6f}")
        return "\n".join(rows) + "\n"


def path_seed(seed: int, state_index: int, path_index: int) -> int:
    ss = np.random.SeedSequence([int(seed), int(state_index), int(path_index),
                                 zlib.crc32(b"path")])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def estimate_gap(inst: ProblemInstance, states: list, paths: int, policy, seed: int = 0,
                 layer_cap: int = LAYER_CAP) -> GapReport:
    """Lower bound versus the policy's cost on each of ``paths`` paths per start state."""
    check_supported(inst)
    lo = np.zeros((len(states), paths))
    up = np.zeros((len(states), paths))
    hz = np.zeros((len(states), paths), dtype=np.int64)
    for i, s in enumerate(states):
        for p in range(paths):
            path = sample_path(inst, path_seed(seed, i, p), s)
            up[i, p] = replay_policy(s, path, policy, inst)
            lo[i, p] = perfect_info_value(s, path, inst, layer_cap, upper=up[i, p])
            hz[i, p] = path.horizon
    return GapReport(lo, up, hz)
