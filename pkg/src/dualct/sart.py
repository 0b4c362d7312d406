"""SART baseline on the same ray-driven system matrices used for simulation."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .geometry import ProjectionSet, RayProjector, Volume

EPS = 1e-8


def sart_reconstruct(proj: ProjectionSet, iterations: int = 30, relaxation: float = 0.5,
                     projector: Optional[RayProjector] = None, history: Optional[list] = None) -> Volume:
    """Ordered-subsets SART, one subset per view, non-negativity after every update.

    ``history`` (if given) receives the projection-space residual norm after
    each full iteration.
    """
    if not 0.0 < relaxation < 2.0:
        raise ValueError(f"relaxation must lie in (0, 2), got {relaxation}")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    g = proj.geometry
    projector = projector or RayProjector(g)
    h, w, d = g.vol_shape
    mats = projector.matrices
    row_sums = [np.asarray(a.sum(axis=1)).ravel() for a in mats]
    col_sums = [np.asarray(a.sum(axis=0)).ravel() for a in mats]
    b = [np.asarray(img, dtype=np.float64).ravel() for img in proj.images]
    x = np.zeros(projector.num_voxels)
    for _ in range(iterations):
        for a, rs, cs, bk in zip(mats, row_sums, col_sums, b):
            resid = (bk - a @ x) / np.maximum(rs, EPS)
            x += relaxation * (a.T @ resid) / np.maximum(cs, EPS)
            np.maximum(x, 0.0, out=x)
        if history is not None:
            history.append(float(np.sqrt(sum(np.sum((bk - a @ x) ** 2) for a, bk in zip(mats, b)))))
    return Volume(x.reshape(d, h, w), g.vol_spacing_mm)
