"""Simulated datasets: phantoms, their cone-beam projections, and the on-disk layout.

A dataset directory holds ``case_XXX_proj.raw`` / ``case_XXX_vol.raw`` pairs,
each with a JSON sidecar of the same stem.
"""

from __future__ import annotations

from pathlib import Path

from .geometry import (ConeBeamGeometry, RayProjector, forward_project, make_phantom, save_projections,
                       save_volume, uniform_angles)


def simulate_dataset(out_dir, geometry: ConeBeamGeometry, phantom: str = "random_ellipsoids",
                     size: int = None, views: int = None, count: int = 1, seed: int = 0) -> list:
    """Write ``count`` phantoms (seeds ``seed .. seed+count-1``) and their projections.

    ``views`` replaces the geometry's angles with ``views`` angles spread over 180 degrees.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if views is not None:
        geometry = geometry.with_angles(uniform_angles(views))
    h, w, d = geometry.vol_shape
    size = size or h
    if (size, size, size) != (h, w, d):
        raise ValueError(f"phantom size {size} does not match geometry volume {geometry.vol_shape}")
    geometry.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    projector = RayProjector(geometry)
    written = []
    for i in range(count):
        cid = f"case_{i:03d}"
        vol = make_phantom(phantom, size, seed + i, geometry.vol_spacing_mm)
        proj = forward_project(vol, geometry, projector)
        save_projections(proj, out_dir / f"{cid}_proj.raw")
        save_volume(vol, out_dir / f"{cid}_vol.raw")
        written.append(cid)
    return written
