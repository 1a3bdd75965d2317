"""Column generation on the dual of the approximate linear program."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..instance import ProblemInstance
from ..optim.lp import RevisedSimplex
from ..optim.tour import SubsetTours
from ..mdp import State
from .columns import Column, constraint_slack, extreme_columns, initial_column, make_column
from .params import AlpParams
from .pricing import price
from .reductions import lift, project_to_1d

log = logging.getLogger(__name__)

VARIANTS = ("full", "2i", "1d", "1d-2i")
COLUMN_CAP = 10_000
REDUCED_COST_TOL = 1e-6


class ColumnLimitError(RuntimeError):
    pass


class MasterInfeasible(RuntimeError):
    pass


def remaining_visit_factor(inst: ProblemInstance, k: int) -> np.ndarray:
    """f[j]: expected discounted number of remaining visits of a type-k patient whose
    (j+1)-th visit is due today."""
    s = inst.services[k]
    g = inst.gamma
    f = np.zeros(inst.jmax)
    for j in range(s.J):
        total, prob = 0.0, 1.0
        for i in range(s.J - j):
            if i > 0:
                prob *= s.cont(j + 1 + i)
            total += g ** (i * s.h) * prob
        f[j] = total
    return f


def delta_coefficients(inst: ProblemInstance, k: int) -> np.ndarray:
    """delta[t-1, j] = gamma^(t-1) * f[j]; zero on structural zeros."""
    f = remaining_visit_factor(inst, k)
    d = inst.gamma ** np.arange(inst.horizon)[:, None] * f[None, :]
    return d * inst.valid_mask()[:, k, 0, :]


def relevance_weights(inst: ProblemInstance, eps: float) -> np.ndarray:
    """State-relevance weights for booked-visit counts: eps per region (times the number
    of merged regions) on every admissible index."""
    w = eps * inst.region_weight[None, None, :, None] * np.ones(inst.valid_mask().shape)
    return w * inst.valid_mask()


@dataclass
class ColgenResult:
    params: AlpParams
    objective: float
    history: list = field(default_factory=list)
    columns: list = field(default_factory=list)
    iterations: int = 0
    seconds: float = 0.0


class _Master:
    """Restricted dual LP over state-action pairs.

    Rows: (1-g) sum beta = 1, then beta-weighted x and y coefficients at least their
    relevance weights.  Booked-visit counts for day 2 onwards do not interact with the
    rest of a pair (no cost, no shared constraint), so a pair is stored as its day-1
    part plus an aggregate mass ``mu_i`` per later count held at its cap; ``mu_i`` is
    the total weight of pairs carrying that count, hence 0 <= mu_i <= sum beta.  Any
    such mass vector splits back into explicit pairs, so the LP is the dual ALP itself,
    only without having to enumerate every combination of later counts.
    """

    def __init__(self, inst: ProblemInstance, eps_w: np.ndarray, two_index: bool):
        self.inst = inst
        vm = inst.valid_mask()
        self.vm = vm
        self.two_index = two_index
        if two_index:
            self.delta = np.stack([delta_coefficients(inst, k) for k in range(inst.K)], axis=1)
            self.n_x = inst.K * inst.L
            rhs_x = np.einsum("tkj,tklj->kl", self.delta, eps_w).ravel()
        else:
            self.idx = np.argwhere(vm)
            self.n_x = len(self.idx)
            rhs_x = eps_w[vm]
        self.n_y = inst.K * inst.L
        pieces, vecs = [], []
        for t, k, l, j in map(tuple, np.argwhere(vm)):
            if t == 0:
                continue
            x = np.zeros(vm.shape)
            x[t, k, l, j] = inst.x_max
            x[t - 1, k, l, j] = -inst.gamma * inst.x_max
            v = self._project(x)
            if np.abs(v).max() > 1e-12:
                pieces.append((t, k, l, j))
                vecs.append(v)
        self.pieces = pieces
        nb = len(pieces)
        self.nb = nb
        self.m = 1 + self.n_x + self.n_y + nb
        cap = 1 / (1 - inst.gamma)
        rhs = np.concatenate([[1.0], rhs_x, inst.lam.ravel(), np.full(nb, cap)])
        ns = self.n_x + self.n_y
        A = np.zeros((self.m, ns + 2 * nb))
        A[1:1 + ns, :ns] = -np.eye(ns)                        # surplus
        A[1 + ns:, ns:ns + nb] = np.eye(nb)                   # slack of mu_i <= cap
        for i, v in enumerate(vecs):                          # mu_i
            A[1:1 + self.n_x, ns + nb + i] = v
            A[1 + ns + i, ns + nb + i] = 1.0
        self.lp = RevisedSimplex(A, rhs, np.zeros(A.shape[1]))
        self.n_slack = ns + nb

    def _project(self, x: np.ndarray) -> np.ndarray:
        if self.two_index:
            return np.einsum("tkj,tklj->kl", self.delta, x).ravel()
        return x[self.vm]

    def vector(self, col: Column) -> np.ndarray:
        return np.concatenate([[1 - self.inst.gamma], self._project(col.xcoef),
                               col.ycoef.ravel(), np.zeros(self.nb)])

    def add(self, col: Column):
        self.lp.add_columns(self.vector(col)[:, None], [col.cost])

    def start(self, col: Column):
        self.add(col)
        first = self.lp.n - 1
        if not self.lp.set_basis([first] + list(range(self.n_slack))):
            raise MasterInfeasible("starting column does not give a feasible basis")

    def solve(self):
        st = self.lp.solve()
        if st != "optimal":
            raise MasterInfeasible(f"master LP ended with status {st}")
        return self.lp.objective()

    def prices(self):
        """(eta, tau, rho) of the dual ALP rows.

        The row-0 dual prices the day-1 parts only; the later-count terms
        sum_i min(0, x_max * (gamma tau_pred - tau_i)) are folded back into eta.
        """
        y = self.lp.duals()
        inst = self.inst
        tau = np.zeros(self.vm.shape)
        if self.two_index:
            tp = y[1:1 + self.n_x].reshape(inst.K, inst.L)
            tau = np.einsum("tkj,kl->tklj", self.delta, tp)
        else:
            tau[tuple(self.idx.T)] = y[1:1 + self.n_x]
        rho = y[1 + self.n_x:1 + self.n_x + self.n_y].reshape(inst.K, inst.L)
        eta = float(y[0])
        g = inst.gamma
        for t, k, l, j in self.pieces:
            red = inst.x_max * (g * tau[t - 1, k, l, j] - tau[t, k, l, j])
            eta += min(0.0, red) / (1 - g)
        return eta, tau, rho


def strip_later(col: Column, inst: ProblemInstance) -> Column:
    """Same pair with every booked-visit count beyond day 1 set to zero."""
    x = col.state.x.copy()
    x[1:] = 0
    return make_column(State(x, col.state.y), col.action, inst)


def _col_key(col: Column):
    return col.state.key() + (repr(col.action.to_json()),)


def _run(inst: ProblemInstance, eps: float, two_index: bool, pricing: str,
         tol: float, column_cap: int, seed: bool = True,
         smoothing: float = 0.8) -> ColgenResult:
    t0 = time.perf_counter()
    eps_w = relevance_weights(inst, eps)
    master = _Master(inst, eps_w, two_index)
    first = initial_column(inst, eps_w)
    master.start(first)
    cols = [first]
    seen = {_col_key(first)}
    if seed:
        for c in extreme_columns(inst):
            if master.nb:
                c = strip_later(c, inst)
            if _col_key(c) not in seen:
                seen.add(_col_key(c))
                cols.append(c)
                master.add(c)
    tours = SubsetTours(inst.dist)
    history = []
    g = inst.gamma

    def bound(eta, tau, rho, rc):
        # ALP objective of the prices with eta lowered until every constraint holds
        return eta + float((eps_w * tau).sum() + (inst.lam * rho).sum()) + min(rc, 0.0) / (1 - g)

    center, best_lb = None, -np.inf
    while True:
        obj = master.solve()
        history.append(obj)
        eta, tau, rho = master.prices()
        alpha = smoothing if center is not None else 0.0
        while True:
            if alpha > 0:
                ce, ct, cr = center
                p_eta = alpha * ce + (1 - alpha) * eta
                p_tau = alpha * ct + (1 - alpha) * tau
                p_rho = alpha * cr + (1 - alpha) * rho
            else:
                p_eta, p_tau, p_rho = eta, tau, rho
            res = price(inst, p_eta, p_tau, p_rho, pricing, tours)
            lb = bound(p_eta, p_tau, p_rho, res.value)
            if lb > best_lb:
                best_lb, center = lb, (p_eta, p_tau, p_rho)
            value = constraint_slack(res.column, eta, tau, rho, g)
            if value < -tol or alpha == 0:
                break
            alpha = 0.0          # mispricing: fall back to the master prices
        if value >= -tol:
            break
        new = strip_later(res.column, inst) if master.nb else res.column
        key = _col_key(new)
        if key in seen:
            log.warning("pricing returned a column already in the master (%.3g)", value)
            break
        if len(cols) >= column_cap:
            raise ColumnLimitError(f"more than {column_cap} columns generated")
        seen.add(key)
        cols.append(new)
        master.add(new)
    params = AlpParams(eta, tau * inst.valid_mask(), rho,
                       {"eps": eps, "iterations": len(history), "objective": obj})
    return ColgenResult(params, obj, history, cols, len(history), time.perf_counter() - t0)


def column_generation(inst: ProblemInstance, eps: float, variant: str = "full",
                      pricing: str = "exact", tol: float = REDUCED_COST_TOL,
                      column_cap: int = COLUMN_CAP) -> ColgenResult:
    """Solve the approximate LP by column generation and return its optimal parameters.

    ``variant`` picks the two-index price factorization ("2i"), the distance-class
    projection ("1d"), both ("1d-2i"), or neither ("full").
    """
    variant = variant.lower()
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    t0 = time.perf_counter()
    two_index = variant.endswith("2i")
    if variant.startswith("1d"):
        proj = project_to_1d(inst)
        res = _run(proj.proxy, eps, two_index, pricing, tol, column_cap)
        res.params = lift(res.params, proj, inst)
    else:
        res = _run(inst, eps, two_index, pricing, tol, column_cap)
    res.seconds = time.perf_counter() - t0
    res.params.meta.update(variant=variant, seconds=res.seconds)
    return res


def max_violation(params: AlpParams, cols, inst: ProblemInstance) -> float:
    """Largest amount by which any given column's constraint is violated."""
    worst = 0.0
    for c in cols:
        worst = max(worst, -constraint_slack(c, params.eta, params.tau, params.rho, inst.gamma))
    return worst
