"""Regular design grid, Kuhn tetrahedral split, boundary tagging and initial designs."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError

# Kuhn subdivision of the unit cube: one tet per axis permutation, all sharing
# the 000-111 diagonal, so neighbouring cells triangulate shared faces alike.
_CORNERS = np.array(list(itertools.product((0, 1), repeat=3)), dtype=np.int64)


def _kuhn_tets():
    tets = []
    for perm in itertools.permutations(range(3)):
        v = np.zeros(3, dtype=np.int64)
        path = [v.copy()]
        for ax in perm:
            v[ax] = 1
            path.append(v.copy())
        ids = [int(p[0] * 4 + p[1] * 2 + p[2]) for p in path]
        corners = _CORNERS[ids]
        if np.linalg.det(corners[1:] - corners[0]) < 0:
            ids[1], ids[2] = ids[2], ids[1]
        tets.append(ids)
    return np.array(tets, dtype=np.int64)


KUHN_TETS = _kuhn_tets()


@dataclass(frozen=True)
class RegularGrid:
    """Axis-aligned node lattice over the design box.

    Nodes are indexed in C order over ``(nx, ny, nz)``.
    """

    origin: np.ndarray
    extents: np.ndarray
    spacing: float
    shape: tuple

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_cells(self) -> int:
        return int(np.prod([n - 1 for n in self.shape]))

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.extents

    def index(self, ijk) -> np.ndarray:
        ijk = np.asarray(ijk, dtype=np.int64)
        return np.ravel_multi_index(tuple(np.moveaxis(ijk, -1, 0)), self.shape)

    def ijk(self, index) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(index), self.shape), axis=-1)

    def coords(self, index=None) -> np.ndarray:
        if index is None:
            index = np.arange(self.n_nodes)
        return self.origin + self.spacing * self.ijk(index).astype(float)

    def axes(self):
        return [self.origin[a] + self.spacing * np.arange(self.shape[a]) for a in range(3)]

    def nodal_volumes(self) -> np.ndarray:
        """Dual-cell volume of every node (halved per boundary axis)."""
        w = np.ones(self.shape)
        for a in range(3):
            sl = [slice(None)] * 3
            sl[a] = 0
            w[tuple(sl)] *= 0.5
            sl[a] = -1
            w[tuple(sl)] *= 0.5
        return (w * self.spacing**3).ravel()

    def boundary_mask(self) -> np.ndarray:
        ijk = self.ijk(np.arange(self.n_nodes))
        shp = np.array(self.shape)
        return np.any((ijk == 0) | (ijk == shp - 1), axis=1)

    def cell_corner_nodes(self) -> np.ndarray:
        """(n_cells, 8) node ids, corner order ``dx*4 + dy*2 + dz``."""
        nx, ny, nz = self.shape
        i, j, k = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), np.arange(nz - 1), indexing="ij")
        base = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1)
        corners = base[:, None, :] + _CORNERS[None, :, :]
        return self.index(corners)

    def tets(self) -> np.ndarray:
        """(6 * n_cells, 4) node ids of the Kuhn tetrahedra."""
        cells = self.cell_corner_nodes()
        return cells[:, KUHN_TETS].reshape(-1, 4)

    def locate(self, points: np.ndarray):
        """Cell lower-corner indices and local coordinates in [0, 1] for points."""
        rel = (np.atleast_2d(points) - self.origin) / self.spacing
        base = np.clip(np.floor(rel).astype(np.int64), 0, np.array(self.shape) - 2)
        return base, rel - base

    def sample(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Trilinear interpolation of a nodal field."""
        base, loc = self.locate(points)
        vals = values.reshape(self.shape)
        out = np.zeros(len(base))
        for c in _CORNERS:
            wgt = np.prod(np.where(c == 1, loc, 1.0 - loc), axis=1)
            idx = base + c
            out += wgt * vals[idx[:, 0], idx[:, 1], idx[:, 2]]
        return out

    def nodal_gradient(self, values: np.ndarray) -> np.ndarray:
        """Central-difference gradient at the nodes; zero wall-normal slope on the box faces."""
        f = np.asarray(values, dtype=float).reshape(self.shape)
        out = np.zeros(self.shape + (3,))
        for a in range(3):
            g = np.zeros(self.shape)
            lo = [slice(None)] * 3
            mid = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[a], mid[a], hi[a] = slice(0, -2), slice(1, -1), slice(2, None)
            g[tuple(mid)] = (f[tuple(hi)] - f[tuple(lo)]) / (2.0 * self.spacing)
            out[..., a] = g
        return out.reshape(-1, 3)

    def smooth_gradient_at(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Trilinear interpolation of the nodal central-difference gradient."""
        g = self.nodal_gradient(values)
        return np.stack([self.sample(g[:, a], points) for a in range(3)], axis=1)

    def gradient_at(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Gradient of the trilinear interpolant, evaluated at points."""
        base, loc = self.locate(points)
        vals = values.reshape(self.shape)
        grad = np.zeros((len(base), 3))
        for c in _CORNERS:
            idx = base + c
            v = vals[idx[:, 0], idx[:, 1], idx[:, 2]]
            f = np.where(c == 1, loc, 1.0 - loc)
            df = np.where(c == 1, 1.0, -1.0)
            for a in range(3):
                others = [b for b in range(3) if b != a]
                grad[:, a] += v * df[a] * f[:, others[0]] * f[:, others[1]]
        return grad / self.spacing


def build_grid(extents: Sequence[float], h_grid: float, origin: Sequence[float] = (0.0, 0.0, 0.0)) -> RegularGrid:
    extents = np.asarray(extents, dtype=float)
    if extents.shape != (3,):
        raise ConfigError("domain extents must have 3 components")
    if h_grid <= 0:
        raise ConfigError(f"h_grid must be positive, got {h_grid}")
    counts = []
    for axis, ext in zip("xyz", extents):
        if ext <= 0:
            raise ConfigError(f"domain extent along {axis} must be positive, got {ext}")
        n = round(ext / h_grid)
        if n < 1 or abs(n * h_grid - ext) > 1e-9 * ext:
            raise ConfigError(f"domain extent along {axis} ({ext}) is not an integer multiple of h_grid={h_grid}")
        counts.append(n + 1)
    return RegularGrid(np.asarray(origin, dtype=float), extents, float(h_grid), tuple(counts))


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def from_bounds(cls, bounds) -> "Box":
        b = np.asarray(bounds, dtype=float)
        if b.shape != (3, 2):
            raise ConfigError(f"box must be [[xmin,xmax],[ymin,ymax],[zmin,zmax]], got {bounds!r}")
        if np.any(b[:, 0] > b[:, 1]):
            raise ConfigError(f"box has min > max: {bounds!r}")
        return cls(b[:, 0].copy(), b[:, 1].copy())

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.all((p >= self.lo - tol) & (p <= self.hi + tol), axis=1)


@dataclass(frozen=True)
class BoundaryTag:
    """Per-node flags for the domain boundary and the pinned region."""

    on_domain_boundary: np.ndarray
    on_dirichlet: np.ndarray
    regions: tuple = field(default_factory=tuple)


def tag_boundary(grid: RegularGrid, dirichlet_boxes: Sequence[Box] = ()) -> BoundaryTag:
    on_bd = grid.boundary_mask()
    pinned = np.zeros(grid.n_nodes, dtype=bool)
    if dirichlet_boxes:
        xyz = grid.coords()
        tol = 1e-9 * grid.spacing
        for box in dirichlet_boxes:
            pinned |= box.contains(xyz, tol)
        pinned &= on_bd
    return BoundaryTag(on_bd, pinned, tuple(dirichlet_boxes))


# -- initial designs -------------------------------------------------------

def plane_distance(z0: float, axis: int = 2, bump: float = 0.0, lo=None, hi=None) -> Callable:
    """Signed distance to the plane ``x[axis] = z0``, positive below it.

    A nonzero ``bump`` raises the plane by a half-sine hump over the box
    ``[lo, hi]`` spanned by the two remaining axes, breaking the mirror
    symmetry of a perfectly flat start.
    """
    others = [a for a in range(3) if a != axis]

    def sdf(x):
        height = np.full(len(x), float(z0))
        slope = np.zeros((len(x), 2))
        if bump:
            s = [(x[:, a] - lo[a]) / (hi[a] - lo[a]) for a in others]
            height = height + bump * np.sin(np.pi * s[0]) * np.sin(np.pi * s[1])
            slope[:, 0] = bump * np.pi / (hi[others[0]] - lo[others[0]]) * np.cos(np.pi * s[0]) * np.sin(np.pi * s[1])
            slope[:, 1] = bump * np.pi / (hi[others[1]] - lo[others[1]]) * np.sin(np.pi * s[0]) * np.cos(np.pi * s[1])
        return (height - x[:, axis]) / np.sqrt(1.0 + np.sum(slope**2, axis=1))

    return sdf


def sphere_distance(center, radius: float) -> Callable:
    """Signed distance, positive inside the sphere."""
    c = np.asarray(center, dtype=float)
    return lambda x: radius - np.linalg.norm(x - c, axis=1)


def cylinder_distance(point, axis, radius: float) -> Callable:
    """Signed distance, positive inside the infinite cylinder."""
    p = np.asarray(point, dtype=float)
    d = np.asarray(axis, dtype=float)
    d = d / np.linalg.norm(d)

    def sdf(x):
        r = x - p
        r = r - np.outer(r @ d, d)
        return radius - np.linalg.norm(r, axis=1)

    return sdf


def distance_from_preset(grid: RegularGrid, preset: dict) -> Callable:
    kind = preset.get("kind")
    if kind == "plane":
        return plane_distance(
            preset["z0"], preset.get("axis", 2), preset.get("bump", 0.0), grid.origin, grid.upper
        )
    if kind in ("sphere", "dome"):
        return sphere_distance(preset["center"], preset["radius"])
    if kind == "cylinder":
        return cylinder_distance(preset["point"], preset["axis"], preset["radius"])
    if kind == "sdf":
        return preset["function"]
    raise ConfigError(f"unknown initial shape kind {kind!r}")


def init_design(grid: RegularGrid, preset: dict, d_norm: float, pipeline=None):
    """Initial design variable and pinned level set values.

    The design variable is the signed distance to the preset surface scaled by
    ``d_norm`` and clamped to [-1, 1]; it is negative on the side the shell
    normal points to. The pinned values are the unpinned pipeline output when
    a pipeline is given, otherwise the design variable itself.
    """
    if d_norm <= 0:
        raise ConfigError(f"d_norm must be positive, got {d_norm}")
    sdf = distance_from_preset(grid, preset)
    dist = np.asarray(sdf(grid.coords()), dtype=float)
    if np.all(dist > 0) or np.all(dist < 0):
        raise ConfigError(f"initial surface {preset.get('kind')!r} does not intersect the design domain")
    psi = np.clip(dist / d_norm, -1.0, 1.0)
    if pipeline is None:
        phi_init = psi.copy()
    else:
        phi_init = pipeline.run(psi, pinned=False).phi
    return psi, phi_init
