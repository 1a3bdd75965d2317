"""States, actions, costs and transitions of the daily scheduling MDP."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .instance import ProblemInstance


@dataclass(frozen=True)
class State:
    x: np.ndarray   # (T, K, L, Jmax) booked patients: next visit on day t, j visits done
    y: np.ndarray   # (K, L) referrals waiting for a decision

    @staticmethod
    def empty(inst: ProblemInstance) -> "State":
        return State(np.zeros((inst.horizon, inst.K, inst.L, inst.jmax), dtype=np.int64),
                     np.zeros((inst.K, inst.L), dtype=np.int64))

    def to_json(self) -> dict:
        return {"x": self.x.tolist(), "y": self.y.tolist()}

    @staticmethod
    def from_json(d: dict) -> "State":
        return State(np.asarray(d["x"], dtype=np.int64), np.asarray(d["y"], dtype=np.int64))

    def key(self) -> tuple:
        return (self.x.tobytes(), self.y.tobytes())


@dataclass(frozen=True)
class ActionPlan:
    r: np.ndarray          # (K, L) rejections
    n: np.ndarray          # (T, K, L) accepted referrals by first-visit day
    z: np.ndarray          # (K, L) diverted day-1 visits
    route: tuple           # day-1 visiting order (region indices, 0-based)
    u: float = 0.0         # overtime hours

    @staticmethod
    def empty(inst: ProblemInstance) -> "ActionPlan":
        return ActionPlan(np.zeros((inst.K, inst.L), dtype=np.int64),
                          np.zeros((inst.horizon, inst.K, inst.L), dtype=np.int64),
                          np.zeros((inst.K, inst.L), dtype=np.int64), ())

    def travel(self, inst: ProblemInstance) -> float:
        return route_length(self.route, inst.dist)

    def arrival_times(self, inst: ProblemInstance) -> dict:
        """f_l: travel time at which each routed region is reached."""
        out, t, prev = {}, 0.0, 0
        for l in self.route:
            t += inst.dist[prev, l + 1]
            out[l] = t
            prev = l + 1
        return out

    def served(self, state: State) -> np.ndarray:
        """(K, L) visits the nurse performs on day 1."""
        return state.x[0].sum(axis=2) + self.n[0] - self.z

    def tour_length(self, state: State, inst: ProblemInstance) -> float:
        return self.travel(inst) + float((self.served(state).sum(axis=1) * inst.e).sum())

    def to_json(self) -> dict:
        return {"r": self.r.tolist(), "n": self.n.tolist(), "z": self.z.tolist(),
                "route": list(self.route), "u": self.u}


def route_length(route, dist: np.ndarray) -> float:
    if not route:
        return 0.0
    idx = [0] + [l + 1 for l in route] + [0]
    return float(sum(dist[a, b] for a, b in zip(idx[:-1], idx[1:])))


# ---------------------------------------------------------------------------
# Feasibility and cost
# ---------------------------------------------------------------------------

def check_action(state: State, action: ActionPlan, inst: ProblemInstance,
                 tol: float = 1e-7) -> list[str]:
    """Return the list of violated constraints; empty means the action is admissible."""
    v = []
    x, y = state.x, state.y
    vm = inst.valid_mask()
    if x.shape != vm.shape or y.shape != (inst.K, inst.L):
        return ["shape mismatch"]
    if np.any(x < 0) or np.any(x > inst.x_max) or np.any(y < 0) or np.any(y > inst.y_max):
        v.append("state bounds")
    if np.any(x[~vm] != 0):
        v.append("structural zeros")
    am = inst.assign_mask()
    if np.any(action.n < 0) or np.any(action.r < 0) or np.any(action.z < 0):
        v.append("nonnegativity")
    if np.any(action.n[~am] != 0):
        v.append("wait-time target")
    if not np.array_equal(action.r, y - action.n.sum(axis=0)):
        v.append("rejection identity")
    if inst.accept_all and np.any(action.r != 0):
        v.append("rejections forbidden")
    day1 = x[0].sum(axis=2) + action.n[0]
    if np.any(action.z > day1):
        v.append("diversion bound")
    served = day1 - action.z
    need = set(np.nonzero(served.sum(axis=0) > 0)[0].tolist())
    if len(set(action.route)) != len(action.route) or set(action.route) != need:
        v.append("route coverage")
    q = route_length(action.route, inst.dist)
    g = q + float((served.sum(axis=1) * inst.e).sum())
    if g > inst.chi + action.u + tol:
        v.append("shift length")
    if action.u < -tol or action.u > inst.chi_prime + tol:
        v.append("overtime cap")
    return v


def immediate_cost(state: State, action: ActionPlan, inst: ProblemInstance,
                   check: bool = True) -> float:
    if check:
        bad = check_action(state, action, inst)
        if bad:
            raise ValueError(f"infeasible action: {bad}")
    return float((inst.R[:, None] * action.r).sum() + (inst.Z[:, None] * action.z).sum()
                 + inst.U * action.u + inst.Q * action.travel(inst))


def exact_cost(state: State, action: ActionPlan, inst: ProblemInstance) -> Fraction:
    """Immediate cost in exact rational arithmetic on the float inputs.

    Overtime is recomputed from the served hours and the route, so two plans with the
    same rejections, diversions and route cost exactly the same whatever the order of
    summation.
    """
    F = Fraction
    served = action.served(state)
    hours = sum((F(inst.services[k].e) * int(served[k].sum()) for k in range(inst.K)), F(0))
    seq = [0, *(l + 1 for l in action.route), 0] if action.route else []
    travel = sum((F(inst.dist[a, b]) for a, b in zip(seq[:-1], seq[1:])), F(0))
    u = max(F(0), hours + travel - F(inst.chi))
    R, Z = inst.R, inst.Z
    fixed = sum((F(R[k]) * int(action.r[k].sum()) + F(Z[k]) * int(action.z[k].sum())
                 for k in range(inst.K)), F(0))
    return fixed + F(inst.U) * u + F(inst.Q) * travel


# ---------------------------------------------------------------------------
# Transitions
# ---------------------------------------------------------------------------

def expected_next_x(x: np.ndarray, n: np.ndarray, inst: ProblemInstance) -> np.ndarray:
    """Expected booked-visit counts after one day, given counts x and assignments n."""
    ex = np.zeros_like(x, dtype=float)
    for k, s in enumerate(inst.services):
        h, J, Tk = s.h, s.J, s.T
        if J >= 2:
            ex[h - 1, k, :, 1] = (x[0, k, :, 0] + n[0, k, :]) * s.cont(2)
        for j in range(2, J):
            ex[h - 1, k, :, j] = x[0, k, :, j - 1] * s.cont(j + 1)
        for t in range(1, h):
            ex[t - 1, k, :, 1:J] = x[t, k, :, 1:J]
        for t in range(1, Tk):
            ex[t - 1, k, :, 0] = x[t, k, :, 0] + n[t, k, :]
    return ex


@dataclass
class TransitionSample:
    xi: np.ndarray          # (K, L, Jmax) patients served on day 1 that need another visit
    arrivals: np.ndarray    # (K, L)
    next_state: State
    overflow: int = 0       # units removed by clamping at the caps


def sample_transition(state: State, action: ActionPlan, inst: ProblemInstance,
                      rng: np.random.Generator, arrivals: np.ndarray | None = None,
                      xi: np.ndarray | None = None) -> TransitionSample:
    """Draw the next state.  ``arrivals``/``xi`` may be supplied to replay a path."""
    x, n = state.x, action.n
    nx = np.zeros_like(x)
    if xi is None:
        xi = np.zeros((inst.K, inst.L, inst.jmax), dtype=np.int64)
        for k, s in enumerate(inst.services):
            if s.J >= 2:
                xi[k, :, 1] = rng.binomial(x[0, k, :, 0] + n[0, k, :], s.cont(2))
            for j in range(2, s.J):
                xi[k, :, j] = rng.binomial(x[0, k, :, j - 1], s.cont(j + 1))
    for k, s in enumerate(inst.services):
        h, J, Tk = s.h, s.J, s.T
        nx[h - 1, k, :, 1:J] = xi[k, :, 1:J]
        for t in range(1, h):
            nx[t - 1, k, :, 1:J] = x[t, k, :, 1:J]
        for t in range(1, Tk):
            nx[t - 1, k, :, 0] = x[t, k, :, 0] + n[t, k, :]
    if arrivals is None:
        arrivals = rng.poisson(inst.lam)
    arrivals = np.asarray(arrivals, dtype=np.int64)
    over = int(np.maximum(nx - inst.x_max, 0).sum() + np.maximum(arrivals - inst.y_max, 0).sum())
    nxt = State(np.minimum(nx, inst.x_max), np.minimum(arrivals, inst.y_max))
    return TransitionSample(xi=xi, arrivals=arrivals, next_state=nxt, overflow=over)


@dataclass
class DayRecord:
    """Operational quantities of one simulated day."""
    cost: float
    rejected: np.ndarray
    diverted: np.ndarray
    overtime: float
    travel: float
    tour: float
    accepted_days: np.ndarray = field(default=None)   # (T, K, L) copy of n


def day_record(state: State, action: ActionPlan, inst: ProblemInstance) -> DayRecord:
    travel = action.travel(inst)
    return DayRecord(cost=immediate_cost(state, action, inst, check=False),
                     rejected=action.r.copy(), diverted=action.z.copy(), overtime=action.u,
                     travel=travel, tour=action.tour_length(state, inst),
                     accepted_days=action.n.copy())
