"""Shape measures used to compare optimized surfaces with their start."""

from __future__ import annotations

import numpy as np

from .isosurface import ShellMesh


def radius_profile(mesh: ShellMesh, z_lo: float, z_hi: float, bins: int = 6, axis=(0.0, 0.0)) -> np.ndarray:
    """Area-weighted mean distance from a vertical axis in ``bins`` slabs of z.

    Triangles are assigned to slabs by centroid; empty slabs give NaN.
    """
    v, t = mesh.vertices, mesh.triangles
    cen = v[t].mean(axis=1)
    area = mesh.areas()
    r = np.hypot(cen[:, 0] - axis[0], cen[:, 1] - axis[1])
    edges = np.linspace(z_lo, z_hi, bins + 1)
    k = np.clip(np.searchsorted(edges, cen[:, 2], side="right") - 1, 0, bins - 1)
    w = np.bincount(k, area, minlength=bins)
    s = np.bincount(k, area * r, minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        return s / w


def radius_profile_variance(mesh: ShellMesh, z_lo: float, z_hi: float, bins: int = 6, axis=(0.0, 0.0)) -> float:
    """Spread of the mean radius across height: 0 for a vertical cylinder."""
    prof = radius_profile(mesh, z_lo, z_hi, bins, axis)
    return float(np.nanvar(prof))


def z_range(mesh: ShellMesh) -> float:
    return float(np.ptp(mesh.vertices[:, 2]))
