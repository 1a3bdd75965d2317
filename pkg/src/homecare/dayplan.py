"""Exact day-1 service selection: which visits to serve, in what tour, with how much overtime.

Every visit unit either gets served by the nurse (earning its ``benefit`` relative to
its best alternative) or not.  Serving uses service time plus the tour over the served
regions; hours beyond the shift cost ``U`` each up to the overtime cap.  The search
enumerates subsets of candidate regions (tour length from a subset Held-Karp table) and,
per subset, the number of units served per service-time class.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .optim.tour import SubsetTours, optimal_tour

EXACT_REGION_LIMIT = 14


@dataclass(frozen=True)
class Offer:
    region: int        # 0-based region
    e: float           # service hours per unit
    benefit: float     # gain per served unit
    count: int
    tag: object        # caller key, reported back in ``served``


@dataclass
class DayChoice:
    served: dict       # tag -> units served
    route: tuple       # 0-based regions in visiting order
    travel: float
    overtime: float
    gain: float        # sum(benefit * served) - U*overtime - Q*travel


class TooManyRegions(RuntimeError):
    pass


def _single_class(rows, table, e, cap, chi, cap_hours, U, Q, chunk_cells=2_000_000):
    """Best (gain, mask, (count,)) when all offers share one service time.

    All subsets are scored at once: unit benefits of the member regions are merged,
    sorted, and every prefix length is priced with its overtime and travel.
    """
    C = len(rows)
    B = np.zeros((C, cap))
    for i, r in enumerate(rows):
        B[i, : len(r)] = r
    masks = np.arange(1, 1 << C)
    q_all = np.asarray(table, dtype=float)[masks]
    keep = q_all <= cap_hours + 1e-12
    masks, q_all = masks[keep], q_all[keep]
    bits = (masks[:, None] >> np.arange(C)[None, :]) & 1
    hours = np.arange(cap + 1) * e
    best = None
    step = max(1, chunk_cells // max(1, C * cap))
    for a in range(0, len(masks), step):
        m, q = bits[a:a + step].astype(bool), q_all[a:a + step]
        vals = np.where(m[:, :, None], B[None], 0.0).reshape(len(m), -1)
        vals = -np.sort(-vals, axis=1)[:, :cap]
        pref = np.concatenate([np.zeros((len(m), 1)), np.cumsum(vals, axis=1)], axis=1)
        score = (pref - U * np.maximum(0.0, hours[None, :] - (chi - q)[:, None])
                 - Q * q[:, None])
        score[hours[None, :] > (cap_hours - q)[:, None] + 1e-9] = -np.inf
        n = np.argmax(score, axis=1)
        v = score[np.arange(len(m)), n]
        i = int(np.argmax(v))
        if best is None or v[i] > best[0] + 1e-12:
            best = (float(v[i]), int(masks[a + i]), (int(n[i]),))
    if best is None or best[0] <= 1e-12:
        return None
    return best


def plan_day(offers, tours: SubsetTours, chi: float, chi_prime: float, U: float, Q: float,
             region_limit: int = EXACT_REGION_LIMIT) -> DayChoice:
    offers = [o for o in offers if o.count > 0 and o.benefit > 1e-12]
    if len({o.tag for o in offers}) != len(offers):
        raise ValueError("offer tags must be unique")
    if not offers:
        return DayChoice({}, (), 0.0, 0.0, 0.0)
    cands = sorted({o.region for o in offers})
    if len(cands) > region_limit:
        raise TooManyRegions(f"{len(cands)} candidate regions")
    pos = {l: i for i, l in enumerate(cands)}
    es = sorted({o.e for o in offers})
    cap_hours = chi + chi_prime
    caps = [int(np.floor(cap_hours / e + 1e-9)) for e in es]
    # per group and region: benefits of the best units (descending), with tie order
    units: list[list[list]] = [[[] for _ in cands] for _ in es]
    for rank, o in enumerate(sorted(enumerate(offers), key=lambda t: (-t[1].benefit, t[0]))):
        idx, off = o
        g = es.index(off.e)
        lst = units[g][pos[off.region]]
        room = caps[g] - len(lst)
        for _ in range(min(off.count, room)):
            lst.append((off.benefit, rank, idx))
    benefit_rows = [[np.array([u[0] for u in lst]) for lst in grp] for grp in units]
    table = tours.table(tuple(l + 1 for l in cands))

    best = (0.0, 0, (0,) * len(es))   # gain, mask, counts
    if len(es) == 1:
        best = _single_class(benefit_rows[0], table, es[0], caps[0], chi, cap_hours, U, Q) or best
    else:
        for mask in range(1, 1 << len(cands)):
            q = float(table[mask])
            if q > cap_hours + 1e-12:
                continue
            members = [i for i in range(len(cands)) if mask >> i & 1]
            prefixes = []
            for g in range(len(es)):
                arr = np.concatenate([benefit_rows[g][i] for i in members])
                arr = -np.sort(-arr)[: caps[g]]
                prefixes.append(np.concatenate([[0.0], np.cumsum(arr)]))
            free = chi - q
            for counts in itertools.product(*(range(len(p)) for p in prefixes)):
                hours = sum(c * e for c, e in zip(counts, es))
                if hours > cap_hours - q + 1e-9:
                    continue
                val = sum(p[c] for p, c in zip(prefixes, counts)) - U * max(0.0, hours - free) - Q * q
                if val > best[0] + 1e-12:
                    best = (val, mask, counts)

    gain, mask, counts = best
    served: dict = {}
    if mask:
        members = {cands[i] for i in range(len(cands)) if mask >> i & 1}
        for g, cnt in enumerate(counts):
            pool = sorted((u for i, l in enumerate(cands) if l in members
                           for u in units[g][i]), key=lambda u: (-u[0], u[1]))
            for _, _, idx in pool[:cnt]:
                tag = offers[idx].tag
                served[tag] = served.get(tag, 0) + 1
    by_tag = {o.tag: o for o in offers}
    regions = sorted({by_tag[t].region for t in served})
    order, q = optimal_tour([l + 1 for l in regions], tours.dist)
    route = tuple(l - 1 for l in order)
    hours = sum(by_tag[t].e * c for t, c in served.items())
    u = max(0.0, hours + q - chi)
    total = sum(by_tag[t].benefit * c for t, c in served.items()) - U * u - Q * q
    return DayChoice(served, route, q, u, total)
