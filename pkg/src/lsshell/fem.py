"""Linear shell model on an extracted midsurface mesh.

Every vertex carries 5 DoFs: three global translations and two rotations
``theta``, ``phi_rot`` about the director-frame tangents ``V1``, ``V2``. The
rotation vector of a node is therefore ``theta*V1 + phi_rot*V2``; rotation
about the director (drilling) is not a DoF.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .errors import ConfigError, ElementError, NumericalError, SingularSystemError
from .grid import Box
from .isosurface import ShellMesh

log = logging.getLogger(__name__)

NDOF = 5
KAPPA = 5.0 / 6.0


@dataclass(frozen=True)
class Material:
    E: float
    nu: float
    thickness: float
    kappa: float = KAPPA

    def __post_init__(self):
        if self.E <= 0:
            raise ConfigError(f"Young's modulus must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise ConfigError(f"Poisson ratio must lie in (-1, 0.5), got {self.nu}")
        if self.thickness <= 0:
            raise ConfigError(f"thickness must be positive, got {self.thickness}")


def director_frames(normals: np.ndarray):
    """Orthonormal tangents ``V1, V2`` with ``V1 x V2 = Vn``.

    ``V1`` is built from the global axis along which ``Vn`` has its smallest
    component, which keeps the cross product well conditioned.
    """
    Vn = np.asarray(normals, dtype=float)
    k = np.argmin(np.abs(Vn), axis=1)
    e = np.zeros_like(Vn)
    e[np.arange(len(Vn)), k] = 1.0
    V1 = np.cross(Vn, e)
    V1 /= np.linalg.norm(V1, axis=1, keepdims=True)
    V2 = np.cross(Vn, V1)
    return V1, V2


def rigid_modes(X: np.ndarray, Vn: np.ndarray, V1: np.ndarray, V2: np.ndarray) -> np.ndarray:
    """(5 n, 6) rigid translations and infinitesimal rotations about the origin."""
    n = len(X)
    modes = np.zeros((n, NDOF, 6))
    for a in range(3):
        modes[:, a, a] = 1.0
        axis = np.zeros(3)
        axis[a] = 1.0
        modes[:, :3, 3 + a] = np.cross(axis, X)
        modes[:, 3, 3 + a] = V1 @ axis
        modes[:, 4, 3 + a] = V2 @ axis
    return modes.reshape(n * NDOF, 6)


def _triangle_area_gradient(P: np.ndarray) -> np.ndarray:
    """d(area)/d(vertex position) for triangles ``P`` of shape (nt, 3, 3)."""
    n = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
    nhat = n / np.linalg.norm(n, axis=1, keepdims=True)
    out = np.empty_like(P)
    for j in range(3):
        a, b = P[:, (j + 1) % 3], P[:, (j + 2) % 3]
        out[:, j] = 0.5 * np.cross(nhat, b - a)
    return out


@dataclass
class LineLoad:
    box: Box
    total: np.ndarray


@dataclass
class Solution:
    u: np.ndarray
    compliance: float
    element_energy: np.ndarray
    reactions: np.ndarray

    def nodal(self) -> np.ndarray:
        return self.u.reshape(-1, NDOF)


class ShellModel:
    """Assembled 5-DoF shell model of one mesh.

    Parameters
    ----------
    mesh : ShellMesh
        Midsurface mesh; ``mesh.normals`` supplies the directors when set,
        otherwise area-weighted face normals are used.
    material : Material
    mitc : bool
        Assumed transverse shear field on (default) or off.
    """

    def __init__(self, mesh: ShellMesh, material: Material, normals: Optional[np.ndarray] = None,
                 mitc: bool = True):
        if mesh.empty:
            raise ConfigError("cannot build a shell model on an empty mesh")
        self.mesh = mesh
        self.material = material
        self.mitc = mitc
        self.X = np.asarray(mesh.vertices, dtype=float)
        self.tris = np.asarray(mesh.triangles, dtype=np.int64)
        if normals is None:
            normals = mesh.normals if mesh.normals is not None else _face_average_normals(mesh)
        Vn = np.asarray(normals, dtype=float)
        self.Vn = Vn / np.linalg.norm(Vn, axis=1, keepdims=True)
        self.V1, self.V2 = director_frames(self.Vn)
        self.n_dofs = NDOF * len(self.X)
        self.fixed = np.zeros(self.n_dofs, dtype=bool)
        self.prescribed = np.zeros(self.n_dofs)
        self._rot_axes = [[] for _ in range(len(self.X))]
        self._frames_final = False
        self.area_loads: list = []
        self.line_loads: list = []
        self.point_loads = np.zeros((len(self.X), 3))
        self._K = None
        self._check_geometry()

    # -- geometry ------------------------------------------------------------
    def _check_geometry(self):
        P = self.X[self.tris]
        areas = 0.5 * np.linalg.norm(np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]), axis=1)
        scale = max(np.ptp(self.X, axis=0).max(), 1e-300)
        bad = np.flatnonzero(areas <= 1e-14 * scale * scale)
        if len(bad):
            raise ElementError(f"degenerate triangle {int(bad[0])} (area {areas[bad[0]]:.3e})", int(bad[0]))

    def element_arrays(self, X: Optional[np.ndarray] = None):
        X = self.X if X is None else X
        t = self.tris
        return X[t], self.Vn[t], self.V1[t], self.V2[t]

    def element_dofs(self) -> np.ndarray:
        return (NDOF * self.tris[:, :, None] + np.arange(NDOF)).reshape(-1, 3 * NDOF)

    # -- constraints ---------------------------------------------------------
    def _select(self, where) -> np.ndarray:
        if isinstance(where, Box):
            return np.flatnonzero(where.contains(self.X, 0.0))
        where = np.asarray(where)
        return np.flatnonzero(where) if where.dtype == bool else where.astype(np.int64)

    def clamp(self, where) -> np.ndarray:
        """Fix all 5 DoFs of the selected vertices."""
        v = self._select(where)
        for k in range(NDOF):
            self.fixed[NDOF * v + k] = True
        return v

    def fix_translation(self, where, axis: int) -> np.ndarray:
        v = self._select(where)
        self.fixed[NDOF * v + axis] = True
        return v

    def fix_rotation_about(self, where, axis) -> np.ndarray:
        """Constrain the rotation component about a global direction."""
        if self._frames_final:
            raise RuntimeError("rotation constraints must be added before assembly")
        v = self._select(where)
        a = np.asarray(axis, dtype=float)
        for i in v:
            self._rot_axes[i].append(a / np.linalg.norm(a))
        return v

    def apply_symmetry(self, axis: int, value: float, tol: float) -> np.ndarray:
        """Mirror-symmetry plane ``x[axis] = value``.

        Vertices on the plane keep only the rotation about the plane normal.
        """
        v = np.flatnonzero(np.abs(self.X[:, axis] - value) <= tol)
        if len(v) == 0:
            return v
        self.fix_translation(v, axis)
        for b in range(3):
            if b != axis:
                e = np.zeros(3)
                e[b] = 1.0
                self.fix_rotation_about(v, e)
        return v

    def prescribe(self, vertices, values: np.ndarray) -> None:
        """Prescribe all 5 DoFs of ``vertices`` to ``values`` (n, 5)."""
        v = np.asarray(vertices, dtype=np.int64)
        idx = (NDOF * v[:, None] + np.arange(NDOF)).ravel()
        self.fixed[idx] = True
        self.prescribed[idx] = np.asarray(values, dtype=float).ravel()

    def _resolve_rotation_constraints(self):
        """Turn rotation-about-axis constraints into fixed frame DoFs.

        The constrained axes are projected onto each vertex's tangent plane.
        Two independent projections fix both rotations; a single direction
        becomes ``V1`` and fixes ``theta``; projections along the director
        constrain the absent drilling rotation and are dropped.
        """
        if self._frames_final:
            return
        for i, axes in enumerate(self._rot_axes):
            if not axes:
                continue
            n = self.Vn[i]
            P = np.array([a - (a @ n) * n for a in axes])
            _, s, vt = np.linalg.svd(P)
            rank = int(np.sum(s > 1e-8))
            if rank >= 2:
                self.fixed[NDOF * i + 3] = self.fixed[NDOF * i + 4] = True
            elif rank == 1:
                v1 = vt[0] - (vt[0] @ n) * n
                v1 /= np.linalg.norm(v1)
                self.V1[i] = v1
                self.V2[i] = np.cross(n, v1)
                self.fixed[NDOF * i + 3] = True
        self._frames_final = True

    # -- loads ---------------------------------------------------------------
    def add_area_load(self, q, triangles=None) -> None:
        """Uniform load per unit midsurface area (force/area vector)."""
        self.area_loads.append((np.asarray(q, dtype=float), triangles))

    def add_line_load(self, box: Box, total) -> None:
        """Total force spread over boundary edges inside ``box`` by length."""
        self.line_loads.append(LineLoad(box, np.asarray(total, dtype=float)))

    def add_point_load(self, vertex: int, force) -> None:
        self.point_loads[vertex] += np.asarray(force, dtype=float)

    def _boundary_edges(self) -> np.ndarray:
        e = np.sort(np.concatenate([self.tris[:, [0, 1]], self.tris[:, [1, 2]], self.tris[:, [2, 0]]]), axis=1)
        uniq, cnt = np.unique(e, axis=0, return_counts=True)
        return uniq[cnt == 1]

    def line_load_forces(self, X: Optional[np.ndarray] = None) -> np.ndarray:
        X = self.X if X is None else X
        out = np.zeros((len(X), 3))
        if not self.line_loads:
            return out
        bnd = self._boundary_edges()
        for ll in self.line_loads:
            inside = ll.box.contains(self.X, 0.0)
            edges = bnd[inside[bnd[:, 0]] & inside[bnd[:, 1]]]
            if len(edges):
                L = np.linalg.norm(X[edges[:, 1]] - X[edges[:, 0]], axis=1)
                share = 0.5 * L / L.sum()
                np.add.at(out, edges[:, 0], share[:, None] * ll.total)
                np.add.at(out, edges[:, 1], share[:, None] * ll.total)
            else:
                v = np.flatnonzero(inside)
                if len(v) == 0:
                    raise ConfigError("line load box contains no mesh vertex")
                out[v] += ll.total / len(v)
        return out

    def area_load_forces(self, X: Optional[np.ndarray] = None) -> np.ndarray:
        X = self.X if X is None else X
        out = np.zeros((len(X), 3))
        P = X[self.tris]
        A = 0.5 * np.linalg.norm(np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]), axis=1)
        for q, sel in self.area_loads:
            m = np.ones(len(A), dtype=bool) if sel is None else np.asarray(sel)
            contrib = (A[m] / 3.0)[:, None] * q
            for j in range(3):
                np.add.at(out, self.tris[m, j], contrib)
        return out

    def load_vector(self, X: Optional[np.ndarray] = None) -> np.ndarray:
        f = np.zeros((len(self.X), NDOF))
        f[:, :3] = self.area_load_forces(X) + self.line_load_forces(X) + self.point_loads
        return f.ravel()

    # -- assembly and solution ----------------------------------------------
    def element_matrices(self, X: Optional[np.ndarray] = None) -> np.ndarray:
        self._resolve_rotation_constraints()
        m = self.material
        Xe, Vn, V1, V2 = self.element_arrays(X)
        return kernels.element_stiffness(Xe, Vn, V1, V2, m.thickness, m.E, m.nu, m.kappa, self.mitc)

    def assemble(self, X: Optional[np.ndarray] = None) -> sp.csr_matrix:
        Ke = self.element_matrices(X)
        dofs = self.element_dofs()
        rows = np.repeat(dofs, 3 * NDOF, axis=1).ravel()
        cols = np.tile(dofs, (1, 3 * NDOF)).ravel()
        # coo -> csr sums duplicates in a fixed order: bit-reproducible
        K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(self.n_dofs, self.n_dofs)).tocsr()
        K = 0.5 * (K + K.T)
        if X is None:
            self._K, self._Ke = K, Ke
        return K

    @property
    def K(self) -> sp.csr_matrix:
        if self._K is None:
            self.assemble()
        return self._K

    def components(self) -> np.ndarray:
        """Edge-connected component label per vertex."""
        from scipy.sparse.csgraph import connected_components

        t = self.tris
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        n = len(self.X)
        g = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        return connected_components(g, directed=False)[1]

    def null_dimension(self) -> int:
        """Rigid modes left unrestrained by the constraints, summed over components."""
        self._resolve_rotation_constraints()
        labels = self.components()
        fixed = self.fixed.reshape(-1, NDOF)
        total = 0
        for c in np.unique(labels):
            v = np.flatnonzero(labels == c)
            R = rigid_modes(self.X[v], self.Vn[v], self.V1[v], self.V2[v])
            rows = R[fixed[v].ravel()]
            rank = np.linalg.matrix_rank(rows, tol=1e-9 * max(1.0, np.abs(self.X).max())) if len(rows) else 0
            total += 6 - rank
        return total

    def solve(self) -> Solution:
        K = self.K
        f = self.load_vector()
        null = self.null_dimension()
        if null:
            raise SingularSystemError(f"shell model is insufficiently constrained: "
                                      f"{null} rigid mode(s) left free", null)
        free = np.flatnonzero(~self.fixed)
        fixed = np.flatnonzero(self.fixed)
        u = self.prescribed.copy()
        if len(free):
            Kff = K[free][:, free].tocsc()
            rhs = f[free] - K[free][:, fixed] @ u[fixed]
            try:
                lu = spla.splu(Kff)
            except RuntimeError as exc:
                raise SingularSystemError(f"stiffness factorization failed: {exc}") from exc
            piv = np.abs(lu.U.diagonal())
            small = int(np.sum(piv < 1e-13 * piv.max()))
            if small:
                raise SingularSystemError(f"stiffness matrix has {small} near-zero pivot(s) "
                                          f"(min/max {piv.min() / piv.max():.2e}): mechanism", small)
            u[free] = lu.solve(rhs)
            self._lu, self._free = lu, free
        ue = u[self.element_dofs()]
        We = 0.5 * np.einsum("ek,ekl,el->e", ue, self._Ke, ue)
        F = 0.5 * float(u @ (K @ u))
        reactions = K @ u - f
        reactions[free] = 0.0
        self.solution = Solution(u, F, We, reactions)
        return self.solution


def _face_average_normals(mesh: ShellMesh) -> np.ndarray:
    n = np.zeros_like(mesh.vertices)
    fn = mesh.face_normals(unit=False)
    for j in range(3):
        np.add.at(n, mesh.triangles[:, j], fn)
    return n / np.linalg.norm(n, axis=1, keepdims=True)


@dataclass
class Supports:
    """Boundary condition description shared by presets and tests."""

    clamp_boxes: Sequence[Box] = ()
    symmetry: Sequence[tuple] = ()  # (axis, value)
    line_loads: Sequence[LineLoad] = ()
    area_load: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)


def build_model(mesh: ShellMesh, material: Material, supports: Supports, tol: float,
                mitc: bool = True) -> ShellModel:
    """Model with clamps, symmetry planes and loads applied.

    ``tol`` is the distance under which a vertex counts as lying on a clamp
    box or a symmetry plane.
    """
    model = ShellModel(mesh, material, mitc=mitc)
    for axis, value in supports.symmetry:
        model.apply_symmetry(axis, value, tol)
    for box in supports.clamp_boxes:
        model.clamp(np.flatnonzero(box.contains(model.X, tol)))
    if supports.area_load is not None:
        model.add_area_load(supports.area_load)
    for ll in supports.line_loads:
        model.add_line_load(Box(ll.box.lo - tol, ll.box.hi + tol), ll.total)
    return model


def constrained_vertices(model: ShellModel, supports: Supports, tol: float) -> np.ndarray:
    """Vertices that touch any clamp box (used to discard floating islands)."""
    hit = np.zeros(len(model.X), dtype=bool)
    for box in supports.clamp_boxes:
        hit |= box.contains(model.X, tol)
    return hit
