"""Distance-class projection of a 2D service area onto a line of depot distances."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..instance import ProblemInstance, line_geometry
from .params import AlpParams

DIST_DECIMALS = 9


@dataclass
class Projection:
    proxy: ProblemInstance
    classes: list          # classes[c] = array of original regions (0-based)
    class_of: np.ndarray   # original region -> class index


def project_to_1d(inst: ProblemInstance) -> Projection:
    """Merge regions with equal depot distance into one point on a line.

    Rates and relevance weights add up over each class.  The count caps grow with the
    class size so that every full-area state maps onto an admissible proxy state.
    """
    d0 = np.round(inst.geometry.depot_dist, DIST_DECIMALS)
    levels = np.unique(d0)
    class_of = np.searchsorted(levels, d0)
    classes = [np.nonzero(class_of == c)[0] for c in range(len(levels))]
    weight = inst.region_weight
    lam = np.stack([inst.lam[:, cl].sum(axis=1) for cl in classes], axis=1)
    mult = np.array([weight[cl].sum() for cl in classes])
    size = max(len(cl) for cl in classes)
    geo = line_geometry(levels, inst.geometry.cell_length)
    proxy = inst.with_(geometry=geo, lam=lam, multiplicity=mult,
                       x_max=inst.x_max * size, y_max=inst.y_max * size,
                       name=(inst.name + "-1d") if inst.name else "1d",
                       meta={**inst.meta, "projected_from": inst.L})
    return Projection(proxy, classes, class_of)


def lift(params: AlpParams, proj: Projection, inst: ProblemInstance) -> AlpParams:
    """Copy each class's parameters to all of its regions."""
    tau = params.tau[:, :, proj.class_of, :].copy()
    rho = params.rho[:, proj.class_of].copy()
    tau[~inst.valid_mask()] = 0.0
    return AlpParams(params.eta, tau, rho, dict(params.meta))
