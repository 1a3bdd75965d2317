"""Problem instances: service area geometry, service types and cost data."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

MAX_REGIONS = 400


class InstanceError(ValueError):
    """Raised when an instance document or its derived data is invalid."""

    def __init__(self, message: str, errors: list[str] | None = None):
        super().__init__(message)
        self.errors = errors or [message]


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Geometry:
    shape: str
    cell_length: float
    centers: np.ndarray          # (L, 2) in cell units
    dist: np.ndarray             # (L+1, L+1) hours, index 0 is the depot
    rings: int | None = None
    rows: int | None = None
    cols: int | None = None

    @property
    def n_regions(self) -> int:
        return len(self.centers)

    @property
    def depot_dist(self) -> np.ndarray:
        return self.dist[0, 1:]


def _manhattan_matrix(points: np.ndarray, scale: float) -> np.ndarray:
    pts = np.vstack([np.zeros((1, 2)), points])
    d = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2)
    return d * scale


def build_geometry(shape: str, rings: int | None = None, rows: int | None = None,
                   cols: int | None = None, diameter: float | None = None,
                   cell_length: float | None = None) -> Geometry:
    """Build a gridded service area with Manhattan travel times.

    Circular areas are diamonds of unit cells around a depot vertex; ring ``a+b+1``
    holds the cells centred at ``(+-(a+.5), +-(b+.5))``.  Rectangular areas have the
    depot on the corner vertex ``(0, 0)``.  The cell length defaults to the diameter
    divided by the Manhattan width of the area in cells.
    """
    if shape == "circular":
        if rings is None or rings < 1:
            raise InstanceError("circular geometry needs rings >= 1")
        if 2 * rings * (rings + 1) > MAX_REGIONS:
            raise InstanceError(f"region count exceeds cap {MAX_REGIONS}")
        width = 2 * rings
        pts = []
        # ring by ring so that region indices grow with the depot distance
        for ring in range(1, rings + 1):
            for a in range(ring):
                b = ring - 1 - a
                for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
                    pts.append((sx * (a + 0.5), sy * (b + 0.5)))
    elif shape == "rectangular":
        if not rows or not cols or rows < 1 or cols < 1:
            raise InstanceError("rectangular geometry needs rows, cols >= 1")
        if rows * cols > MAX_REGIONS:
            raise InstanceError(f"region count exceeds cap {MAX_REGIONS}")
        width = rows + cols
        pts = [(c + 0.5, r + 0.5) for r in range(rows) for c in range(cols)]
    else:
        raise InstanceError(f"unknown geometry shape {shape!r}")

    if cell_length is None:
        if diameter is None or not diameter > 0:
            raise InstanceError("diameter must be positive")
        cell_length = diameter / width
    elif not cell_length > 0:
        raise InstanceError("cell length must be positive")
    centers = np.array(pts, dtype=float)
    return Geometry(shape=shape, cell_length=float(cell_length), centers=centers,
                    dist=_manhattan_matrix(centers, cell_length), rings=rings,
                    rows=rows, cols=cols)


def line_geometry(depot_distances, cell_length: float = 1.0) -> Geometry:
    """Regions laid on a line from the depot (used by the distance-class projection)."""
    dd = np.asarray(depot_distances, dtype=float)
    pos = np.concatenate([[0.0], dd])
    dist = np.abs(pos[:, None] - pos[None, :])
    centers = np.stack([dd / cell_length, np.zeros_like(dd)], axis=1)
    return Geometry(shape="line", cell_length=cell_length, centers=centers, dist=dist)


# ---------------------------------------------------------------------------
# Visit-count distributions
# ---------------------------------------------------------------------------

def _poisson_trunc_pmf(rate: float, jmax: int) -> np.ndarray:
    ks = np.arange(1, jmax + 1)
    logp = ks * math.log(rate) - rate - np.array([math.lgamma(k + 1) for k in ks])
    logp -= logp.max()
    p = np.exp(logp)
    return p / p.sum()


def visit_count_pmf(kind: str, mean: float, jmax: int | None = None) -> np.ndarray:
    """Probability mass over 1..J (index 0 is one visit)."""
    if kind == "deterministic":
        jb = int(round(mean))
        if abs(jb - mean) > 1e-12 or jb < 1:
            raise InstanceError("deterministic visit count must be a positive integer")
        jmax = jmax or jb
        if jmax < jb:
            raise InstanceError("maximum below deterministic count")
        pmf = np.zeros(jmax)
        pmf[jb - 1] = 1.0
        return pmf
    if kind == "uniform":
        jmax = jmax or 2 * int(round(mean)) - 1
        if abs((jmax + 1) / 2 - mean) > 1e-9:
            raise InstanceError(f"uniform on 1..{jmax} cannot have mean {mean}")
        return np.full(jmax, 1.0 / jmax)
    if kind == "poisson":
        jmax = jmax or 3 * int(round(mean))
        if not 1.0 < mean < jmax:
            raise InstanceError(f"truncated Poisson mean {mean} outside (1, {jmax})")
        lo, hi = 1e-9, 10.0 * jmax + 10.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            m = float(np.dot(np.arange(1, jmax + 1), _poisson_trunc_pmf(mid, jmax)))
            if m < mean:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-13:
                break
        pmf = _poisson_trunc_pmf(0.5 * (lo + hi), jmax)
        got = float(np.dot(np.arange(1, jmax + 1), pmf))
        if abs(got - mean) > 1e-6:
            raise InstanceError(f"could not calibrate truncated Poisson to mean {mean}")
        return pmf
    raise InstanceError(f"unknown visit distribution {kind!r}")


def continuation_probabilities(pmf) -> np.ndarray:
    """Return p with p[j] = P(J >= j | J >= j-1) for j = 0..J+1 (p[0] unused, p[1] = 1)."""
    pmf = np.asarray(pmf, dtype=float)
    jmax = len(pmf)
    surv = np.concatenate([[1.0], 1.0 - np.cumsum(pmf)[:-1]])  # P(J >= j), j = 1..J
    surv = np.clip(surv, 0.0, 1.0)
    p = np.zeros(jmax + 2)
    p[0] = np.nan
    p[1] = 1.0
    for j in range(2, jmax + 1):
        p[j] = surv[j - 1] / surv[j - 2] if surv[j - 2] > 0 else 0.0
    p[jmax + 1] = 0.0
    return p


def pmf_from_continuation(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    jmax = len(p) - 2
    out = np.zeros(jmax)
    alive = 1.0
    for j in range(1, jmax + 1):
        alive *= p[j]
        out[j - 1] = alive * (1.0 - p[j + 1])
    return out


@dataclass(frozen=True)
class ServiceType:
    h: int                 # days between consecutive visits
    e: float               # service time per visit (hours)
    T: int                 # latest day for the first visit
    kind: str
    mean: float
    pmf: np.ndarray        # over 1..J
    p: np.ndarray          # continuation probabilities, index 0..J+1

    @property
    def J(self) -> int:
        return len(self.pmf)

    @property
    def jbar(self) -> int:
        return int(round(self.mean))

    @property
    def expected_visits(self) -> float:
        return float(np.dot(np.arange(1, self.J + 1), self.pmf))

    def cont(self, j: int) -> float:
        """p_{k,j}; zero beyond J+1."""
        return float(self.p[j]) if j <= self.J + 1 else 0.0


def make_service(h: int, e: float, T: int, kind: str = "poisson", mean: float = 8.0,
                 jmax: int | None = None) -> ServiceType:
    if not 1 <= h <= 7:
        raise InstanceError(f"care pattern h={h} outside 1..7")
    if T < 1:
        raise InstanceError("wait target must be >= 1")
    if not e > 0:
        raise InstanceError("service time must be positive")
    pmf = visit_count_pmf(kind, mean, jmax)
    return ServiceType(h=int(h), e=float(e), T=int(T), kind=kind, mean=float(mean),
                       pmf=pmf, p=continuation_probabilities(pmf))


# ---------------------------------------------------------------------------
# Problem instance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemInstance:
    geometry: Geometry
    services: tuple[ServiceType, ...]
    lam: np.ndarray                      # (K, L) referral rates per day
    chi: float = 8.0
    chi_prime: float = 0.0
    weights: tuple[float, float, float, float] = (5.0, 10.0, 2.0, 0.1)
    gamma: float = 0.99
    x_max: int = 30
    y_max: int = 30
    accept_all: bool = False             # forbid rejections (special-case model)
    multiplicity: np.ndarray | None = None   # regions merged into each region (1D proxy)
    name: str = ""
    meta: dict = field(default_factory=dict)

    # -- sizes ---------------------------------------------------------------
    @property
    def K(self) -> int:
        return len(self.services)

    @property
    def L(self) -> int:
        return self.geometry.n_regions

    @property
    def horizon(self) -> int:
        return max(max(s.h for s in self.services), max(s.T for s in self.services))

    @property
    def jmax(self) -> int:
        return max(s.J for s in self.services)

    @property
    def dist(self) -> np.ndarray:
        return self.geometry.dist

    # -- costs ---------------------------------------------------------------
    @property
    def R(self) -> np.ndarray:
        zr = self.weights[0]
        return np.array([zr * s.expected_visits * s.e for s in self.services])

    @property
    def Z(self) -> np.ndarray:
        return np.array([self.weights[1] * s.e for s in self.services])

    @property
    def U(self) -> float:
        return float(self.weights[2])

    @property
    def Q(self) -> float:
        return float(self.weights[3])

    @property
    def e(self) -> np.ndarray:
        return np.array([s.e for s in self.services])

    @property
    def daily_demand(self) -> float:
        return float(sum(self.lam[k].sum() * s.e * s.jbar for k, s in enumerate(self.services)))

    @property
    def region_weight(self) -> np.ndarray:
        if self.multiplicity is None:
            return np.ones(self.L)
        return np.asarray(self.multiplicity, dtype=float)

    # -- state index structure -------------------------------------------
    def valid_mask(self) -> np.ndarray:
        """Boolean (T, K, L, Jmax) mask of booked-visit counts that may be nonzero."""
        T, K, L, J = self.horizon, self.K, self.L, self.jmax
        m = np.zeros((T, K, L, J), dtype=bool)
        for k, s in enumerate(self.services):
            for t in range(1, T + 1):
                for j in range(s.J):
                    if j >= 1 and t >= s.h + 1:
                        continue
                    if j == 0 and s.T <= t:
                        continue
                    m[t - 1, k, :, j] = True
        return m

    def assign_mask(self) -> np.ndarray:
        """Boolean (T, K, L) mask of admissible assignment days t <= T_k."""
        m = np.zeros((self.horizon, self.K, self.L), dtype=bool)
        for k, s in enumerate(self.services):
            m[: s.T, k, :] = True
        return m

    def with_(self, **kw) -> "ProblemInstance":
        return replace(self, **kw)

    def validate(self) -> list[str]:
        errs = []
        if not 0.0 < self.gamma < 1.0:
            errs.append("gamma must lie in (0, 1)")
        if self.chi <= 0 or self.chi_prime < 0:
            errs.append("shift length must be positive and overtime nonnegative")
        if any(w < 0 for w in self.weights):
            errs.append("cost weights must be nonnegative")
        lam = np.asarray(self.lam)
        if lam.shape != (self.K, self.L):
            errs.append(f"arrival matrix shape {lam.shape} != {(self.K, self.L)}")
        elif not np.all(np.isfinite(lam)) or np.any(lam < 0):
            errs.append("arrival rates must be finite and nonnegative")
        if self.x_max < 1 or self.y_max < 0:
            errs.append("state caps must be positive")
        d0 = self.geometry.depot_dist
        far = d0 + self.e.max() + self.dist[1:, 0]
        bad = np.nonzero(far > self.chi + 1e-12)[0]
        if len(bad):
            errs.append(f"reachability violated for regions {bad.tolist()}: "
                        f"round trip plus longest visit {far.max():.4f} > shift {self.chi}")
        return errs


def scale_rates(lam: np.ndarray, services, target: float) -> np.ndarray:
    per_unit = sum(lam[k].sum() * s.e * s.jbar for k, s in enumerate(services))
    if per_unit <= 0:
        return lam * 0.0
    return lam * (target / per_unit)


def make_instance(geometry: Geometry, services, lam=None, target_demand: float | None = None,
                  **kw) -> ProblemInstance:
    services = tuple(services)
    if lam is None:
        lam = np.ones((len(services), geometry.n_regions))
    lam = np.asarray(lam, dtype=float)
    if target_demand is not None:
        lam = scale_rates(lam, services, target_demand)
    inst = ProblemInstance(geometry=geometry, services=services, lam=lam, **kw)
    errs = inst.validate()
    if errs:
        raise InstanceError("; ".join(errs), errs)
    return inst


# ---------------------------------------------------------------------------
# Instance documents
# ---------------------------------------------------------------------------

DEFAULT_DOCUMENT: dict[str, Any] = {
    "geometry": {"shape": "circular", "rings": 3, "diameter_h": 0.5},
    "services": [{"h": 1, "e": 0.5, "T": 5, "dist": {"kind": "poisson", "mean": 8}}],
    "arrivals": {"mode": "fixed", "target_daily_demand_h": 8.5},
    "shift": {"chi": 8.0, "chi_prime": 0.0},
    "weights": {"r": 5, "z": 10, "u": 2, "q": 0.1},
    "gamma": 0.99,
    "caps": {"x_max": 30, "y_max": 30},
}


def _need(doc: dict, key: str, where: str, errors: list[str]):
    if not isinstance(doc, dict) or key not in doc:
        errors.append(f"{where}: missing field '{key}'")
        return None
    return doc[key]


def _num(value, where: str, errors: list[str], positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append(f"{where}: expected a number, got {value!r}")
        return None
    if integer and int(value) != value:
        errors.append(f"{where}: expected an integer, got {value!r}")
        return None
    if value < 0 or (positive and value == 0):
        errors.append(f"{where}: must be {'positive' if positive else 'nonnegative'}")
        return None
    return int(value) if integer else float(value)


def load_instance(doc: dict | str | Path) -> ProblemInstance:
    """Parse and validate an instance document (dict, JSON text or file path)."""
    if isinstance(doc, Path) or (isinstance(doc, str) and not doc.lstrip().startswith("{")):
        try:
            doc = json.loads(Path(doc).read_text())
        except json.JSONDecodeError as exc:
            raise InstanceError(f"malformed JSON: {exc}") from exc
    elif isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise InstanceError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InstanceError("instance document must be a JSON object")

    errors: list[str] = []
    g = _need(doc, "geometry", "$", errors) or {}
    services_doc = _need(doc, "services", "$", errors)
    arr = _need(doc, "arrivals", "$", errors) or {}
    shift = _need(doc, "shift", "$", errors) or {}
    w = _need(doc, "weights", "$", errors) or {}
    gamma = _need(doc, "gamma", "$", errors)
    caps = doc.get("caps", {"x_max": 30, "y_max": 30})
    if errors:
        raise InstanceError("schema violation", errors)

    shape = g.get("shape")
    geom = None
    try:
        if shape == "circular":
            rings = _num(g.get("rings"), "geometry.rings", errors, positive=True, integer=True)
            if rings is not None:
                geom = build_geometry("circular", rings=rings, diameter=g.get("diameter_h"),
                                      cell_length=g.get("cell_length_h"))
        elif shape == "rectangular":
            rows = _num(g.get("rows"), "geometry.rows", errors, positive=True, integer=True)
            cols = _num(g.get("cols"), "geometry.cols", errors, positive=True, integer=True)
            if rows is not None and cols is not None:
                geom = build_geometry("rectangular", rows=rows, cols=cols,
                                      diameter=g.get("diameter_h"),
                                      cell_length=g.get("cell_length_h"))
        else:
            errors.append(f"geometry.shape: expected 'circular' or 'rectangular', got {shape!r}")
    except (InstanceError, TypeError) as exc:
        errors.append(f"geometry: {exc}")

    services = []
    if not isinstance(services_doc, list) or not services_doc:
        errors.append("services: expected a nonempty list")
        services_doc = []
    for i, sd in enumerate(services_doc):
        where = f"services[{i}]"
        if not isinstance(sd, dict):
            errors.append(f"{where}: expected an object")
            continue
        h = _num(sd.get("h"), f"{where}.h", errors, positive=True, integer=True)
        e = _num(sd.get("e"), f"{where}.e", errors, positive=True)
        T = _num(sd.get("T"), f"{where}.T", errors, positive=True, integer=True)
        dd = sd.get("dist", {})
        if not isinstance(dd, dict) or "kind" not in dd or "mean" not in dd:
            errors.append(f"{where}.dist: needs 'kind' and 'mean'")
            continue
        if None in (h, e, T):
            continue
        try:
            services.append(make_service(h, e, T, dd["kind"], float(dd["mean"]), dd.get("max")))
        except (InstanceError, TypeError, ValueError) as exc:
            errors.append(f"{where}: {exc}")

    chi = _num(shift.get("chi"), "shift.chi", errors, positive=True)
    chi_p = _num(shift.get("chi_prime", 0.0), "shift.chi_prime", errors)
    weights = tuple(_num(w.get(key), f"weights.{key}", errors) for key in "rzuq")
    gamma_v = _num(gamma, "gamma", errors)
    if gamma_v is not None and not 0 < gamma_v < 1:
        errors.append("gamma: must lie in (0, 1)")
    x_max = _num(caps.get("x_max", 30), "caps.x_max", errors, positive=True, integer=True)
    y_max = _num(caps.get("y_max", 30), "caps.y_max", errors, positive=True, integer=True)
    if errors or geom is None:
        raise InstanceError("schema violation", errors)

    K, L = len(services), geom.n_regions
    mode = arr.get("mode", "fixed")
    target = arr.get("target_daily_demand_h")
    if target is not None:
        target = _num(target, "arrivals.target_daily_demand_h", errors)
    if mode == "fixed":
        lam = np.ones((K, L))
    elif mode == "random":
        rng = np.random.default_rng(int(arr.get("seed", 0)))
        lam = rng.uniform(0.0, 2.0, size=(K, L))
    elif mode == "explicit":
        try:
            lam = np.asarray(arr.get("matrix"), dtype=float)
        except (TypeError, ValueError):
            lam = None
        if lam is None or lam.shape != (K, L):
            errors.append(f"arrivals.matrix: expected a {K}x{L} numeric matrix")
    else:
        errors.append(f"arrivals.mode: unknown mode {mode!r}")
    if errors:
        raise InstanceError("schema violation", errors)
    if target is None and mode != "explicit":
        errors.append("arrivals.target_daily_demand_h: required for fixed/random modes")
        raise InstanceError("schema violation", errors)

    return make_instance(geom, services, lam, target_demand=target, chi=chi, chi_prime=chi_p,
                         weights=weights, gamma=gamma_v, x_max=x_max, y_max=y_max,
                         accept_all=bool(doc.get("accept_all", False)),
                         name=str(doc.get("name", "")))


def default_instance(**overrides) -> ProblemInstance:
    doc = json.loads(json.dumps(DEFAULT_DOCUMENT))
    for key, val in overrides.items():
        doc[key] = val
    return load_instance(doc)


def instance_to_document(inst: ProblemInstance) -> dict:
    g = inst.geometry
    if g.shape == "circular":
        geo = {"shape": "circular", "rings": g.rings, "cell_length_h": g.cell_length}
    elif g.shape == "rectangular":
        geo = {"shape": "rectangular", "rows": g.rows, "cols": g.cols,
               "cell_length_h": g.cell_length}
    else:
        raise InstanceError("only circular/rectangular geometries are serialisable")
    return {
        "name": inst.name,
        "geometry": geo,
        "services": [{"h": s.h, "e": s.e, "T": s.T,
                      "dist": {"kind": s.kind, "mean": s.mean, "max": s.J}}
                     for s in inst.services],
        "arrivals": {"mode": "explicit", "matrix": inst.lam.tolist()},
        "shift": {"chi": inst.chi, "chi_prime": inst.chi_prime},
        "weights": dict(zip("rzuq", inst.weights)),
        "gamma": inst.gamma,
        "caps": {"x_max": inst.x_max, "y_max": inst.y_max},
        "accept_all": inst.accept_all,
    }
