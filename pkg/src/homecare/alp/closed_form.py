"""Analytic parameters for the accept-all, no-overtime special case and the dual
solution that certifies them."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..instance import ProblemInstance
from .colgen import delta_coefficients, remaining_visit_factor
from .params import AlpParams

DIVERSION_TRAVEL_RATIO = 100.0


class PreconditionError(ValueError):
    pass


def special_case_problems(inst: ProblemInstance) -> list[str]:
    bad = []
    if not inst.accept_all:
        bad.append("rejections must be forbidden")
    if inst.chi_prime != 0:
        bad.append("overtime must be zero")
    zr, zz, zu, zq = inst.weights
    if zz < DIVERSION_TRAVEL_RATIO * zq:
        bad.append(f"diversion weight {zz} < {DIVERSION_TRAVEL_RATIO:g} x travel weight {zq}")
    if len({s.e for s in inst.services}) != 1:
        bad.append("service times differ across types")
    if not np.allclose(inst.dist, inst.dist.T):
        bad.append("travel times are not symmetric")
    return bad


def full_day_visits(inst: ProblemInstance) -> np.ndarray:
    """Visits that fit in one shift when only region l is visited."""
    e = inst.services[0].e
    d0 = inst.geometry.depot_dist
    return np.floor((inst.chi - 2 * d0) / e + 1e-9).astype(int)


def closed_form_params(inst: ProblemInstance) -> AlpParams:
    bad = special_case_problems(inst)
    if bad:
        raise PreconditionError("; ".join(bad))
    g = inst.gamma
    d0 = inst.geometry.depot_dist
    last = inst.Q * 2 * d0 / full_day_visits(inst)          # price of the last visit, per region
    tau = np.zeros((inst.horizon, inst.K, inst.L, inst.jmax))
    rho = np.zeros((inst.K, inst.L))
    for k, s in enumerate(inst.services):
        tau[:, k] = delta_coefficients(inst, k)[:, None, :] * last[None, :, None]
        rho[k] = g ** (s.T - 1) * remaining_visit_factor(inst, k)[0] * last
    eta = g / (1 - g) * float((rho * inst.lam).sum())
    return AlpParams(eta, tau, rho, {"variant": "closed-form"})


@dataclass
class DualCertificate:
    beta_x: np.ndarray      # (T, K, L, J) dual mass per booked-visit index, at the given caps
    beta_n: np.ndarray      # (K, L) mass of day-1 assignment columns
    beta_y: np.ndarray      # (K, L) mass of pending-referral columns
    beta0: float            # weight on the empty pair at the given caps
    beta0_limit: float      # same as the caps grow without bound
    lhs: float              # day-1 dual mass compared against 1/(1-gamma)
    bound: float

    @property
    def valid(self) -> bool:
        return self.lhs < self.bound and self.beta0_limit >= 0

    @property
    def valid_at_caps(self) -> bool:
        return self.valid and self.beta0 >= -1e-12


def dual_certificate(inst: ProblemInstance, eps: float = 0.0) -> DualCertificate:
    """Build the dual solution supported on single-coordinate extreme pairs.

    Day-1 columns hold ``full_day_visits`` units; later-day columns hold ``x_max`` and
    pending-referral columns ``y_max`` units.  The mass equations are solved in the
    order in which they depend on each other.
    """
    g = inst.gamma
    xm = full_day_visits(inst)
    if np.any(xm <= 0):
        raise ZeroDivisionError("a region cannot be served within one shift")
    vm = inst.valid_mask()
    T, K, L, J = vm.shape
    mass = np.zeros((T, K, L, J))          # sum of beta * x over the support
    beta_n = np.zeros((K, L))
    beta_y = np.zeros((K, L))
    lam_mass = inst.lam / (1 - g)          # required sum of beta * y
    for k, s in enumerate(inst.services):
        n1 = lam_mass[k] if s.T == 1 else np.zeros(L)
        if s.T == 1:
            beta_n[k] = lam_mass[k] / xm
            beta_y[k] = beta_n[k]
        else:
            beta_y[k] = lam_mass[k] / inst.y_max
        # first-visit chain: mass_t = eps + g*(mass_{t+1} + referrals assigned to t+1)
        for t in range(s.T - 1, 0, -1):
            inflow = lam_mass[k] if t + 1 == s.T else 0.0
            mass[t - 1, k, :, 0] = eps + g * (mass[t, k, :, 0] + inflow)
        for j in range(1, s.J):
            feed = mass[0, k, :, j - 1] + (n1 if j == 1 else 0.0)
            mass[s.h - 1, k, :, j] = eps + g * s.cont(j + 1) * feed
            for t in range(s.h - 1, 0, -1):
                mass[t - 1, k, :, j] = eps + g * mass[t, k, :, j]
    mass *= vm
    size = np.full((T, 1, L, 1), float(inst.x_max))
    size[0, 0, :, 0] = xm
    beta_x = mass / size
    bound = 1 / (1 - g)
    lhs = float(beta_x[0].sum() + beta_n.sum())
    ysum = float(sum(beta_y[k].sum() for k, s in enumerate(inst.services) if s.T >= 2))
    nsum = float(sum(beta_n[k].sum() for k, s in enumerate(inst.services) if s.T == 1))
    beta0 = bound - (float(beta_x.sum()) + nsum + ysum)
    beta0_limit = bound - (float(beta_x[0].sum()) + nsum)
    return DualCertificate(beta_x, beta_n, beta_y, beta0, beta0_limit, lhs, bound)
