"""Zero-isosurface extraction on the Kuhn tetrahedra, mesh cleanup and normals.

Node values that are zero after snapping are treated as positive, so every
tetrahedron falls into one of the 16 strict sign cases. A cut edge whose
positive end is a zero node produces a vertex exactly on that node; vertices
are welded by edge (or node) key, collapsed triangles are dropped, and a pair
of coincident triangles with opposite orientation (a zero sheet with the
same sign on both sides) cancels.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .grid import Box, RegularGrid

log = logging.getLogger(__name__)

def _case_table():
    table = {}
    for code in range(1, 15):
        pos = [i for i in range(4) if code >> i & 1]
        neg = [i for i in range(4) if not code >> i & 1]
        if len(pos) == 1 or len(neg) == 1:
            lone, rest = (pos[0], neg) if len(pos) == 1 else (neg[0], pos)
            tris = [[(lone, r) for r in rest]]
        else:
            (a, b), (c, d) = pos, neg
            ac, ad, bd, bc = (a, c), (a, d), (b, d), (b, c)
            tris = [[ac, ad, bd], [ac, bd, bc]]
        table[code] = np.array(tris, dtype=np.int64)
    return table


CASES = _case_table()


@dataclass
class ShellMesh:
    """Triangulated midsurface with grid back-references.

    Attributes
    ----------
    vertices : (nv, 3) float
    triangles : (nt, 3) int, oriented so the geometric normal points toward
        decreasing level set values.
    embed_nodes, embed_weights : (nv, 4)
        Parent tetrahedron nodes and barycentric weights of every vertex.
    embed_tet : (nv,) int
        Parent tetrahedron index.
    normals : (nv, 3) float or None
    """

    vertices: np.ndarray
    triangles: np.ndarray
    embed_nodes: np.ndarray
    embed_weights: np.ndarray
    embed_tet: np.ndarray
    normals: Optional[np.ndarray] = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def empty(self) -> bool:
        return len(self.triangles) == 0

    def face_normals(self, unit: bool = True) -> np.ndarray:
        p = self.vertices[self.triangles]
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        if unit:
            n /= np.linalg.norm(n, axis=1, keepdims=True)
        return n

    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals(unit=False), axis=1)

    def area(self) -> float:
        return float(self.areas().sum())

    def vertex_areas(self) -> np.ndarray:
        """Lumped area: one third of every incident triangle."""
        out = np.zeros(self.n_vertices)
        np.add.at(out, self.triangles.ravel(), np.repeat(self.areas() / 3.0, 3))
        return out

    def edges(self):
        """Unique undirected edges and the number of triangles on each."""
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0, return_counts=True)

    def boundary_edges(self) -> np.ndarray:
        e, c = self.edges()
        return e[c == 1]

    def min_angles(self) -> np.ndarray:
        return np.degrees(triangle_angles(self.vertices[self.triangles]).min(axis=1))

    def reconstruct(self, grid: RegularGrid) -> np.ndarray:
        """Vertex positions rebuilt from the embedding weights."""
        return np.einsum("vk,vkd->vd", self.embed_weights, grid.coords()[self.embed_nodes])


def triangle_angles(p: np.ndarray) -> np.ndarray:
    """Interior angles (radians) of triangles given as (n, 3, 3) corner arrays."""
    out = np.empty(p.shape[:2])
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        v = p[:, (i + 2) % 3] - p[:, i]
        c = np.einsum("ij,ij->i", u, v)
        s = np.linalg.norm(np.cross(u, v), axis=1)
        out[:, i] = np.arctan2(s, c)
    return out


def snap_values(phi: np.ndarray, grid: RegularGrid, snap_eps: float) -> np.ndarray:
    """Zero out node values within ``snap_eps`` of the local one-cell range."""
    f = np.asarray(phi, dtype=float).reshape(grid.shape)
    rng = np.zeros_like(f)
    for a in range(3):
        d = np.abs(np.diff(f, axis=a))
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        rng[tuple(lo)] = np.maximum(rng[tuple(lo)], d)
        rng[tuple(hi)] = np.maximum(rng[tuple(hi)], d)
    return np.where(np.abs(f) < snap_eps * rng, 0.0, f).ravel()


def march_tets(values: np.ndarray, tets: np.ndarray, coords: np.ndarray):
    """Marching tetrahedra on explicit tets.

    Returns vertices, oriented triangles and, per vertex, the parent tet with
    the two (possibly equal) nodes and interpolation parameter that place it.
    """
    vals = values[tets]
    code = (vals >= 0) @ np.array([1, 2, 4, 8])
    n_nodes = len(values)
    keys, lo_all, hi_all, t_all, tet_all, tri_keys, tri_tet = [], [], [], [], [], [], []
    n_tri = 0
    for c, tris in CASES.items():
        sel = np.flatnonzero(code == c)
        if not sel.size:
            continue
        tt = tets[sel]
        for tri in tris:
            corner_keys = []
            for i, j in tri:
                a, b = tt[:, i], tt[:, j]
                lo, hi = np.minimum(a, b), np.maximum(a, b)
                vlo, vhi = values[lo], values[hi]
                t = vlo / (vlo - vhi)
                lo = np.where(t == 1.0, hi, lo)
                hi = np.where(t == 0.0, lo, hi)
                t = np.where((t == 0.0) | (t == 1.0), 0.0, t)
                k = lo * n_nodes + hi
                corner_keys.append(k)
                keys.append(k)
                lo_all.append(lo)
                hi_all.append(hi)
                t_all.append(t)
                tet_all.append(sel)
            tri_keys.append(np.stack(corner_keys, axis=1))
            tri_tet.append(sel)
            n_tri += len(sel)
    if n_tri == 0:
        return None
    keys = np.concatenate(keys)
    uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    lo = np.concatenate(lo_all)[first]
    hi = np.concatenate(hi_all)[first]
    t = np.concatenate(t_all)[first]
    vtet = np.concatenate(tet_all)[first]
    verts = (1.0 - t)[:, None] * coords[lo] + t[:, None] * coords[hi]
    tri_keys = np.concatenate(tri_keys)
    tri_tet = np.concatenate(tri_tet)
    tris = np.searchsorted(uniq, tri_keys)

    keep = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
    tris, tri_tet = tris[keep], tri_tet[keep]

    # orient against the tet-wise linear gradient
    x = coords[tets[tri_tet]]
    v = values[tets[tri_tet]]
    grad = np.linalg.solve(x[:, 1:] - x[:, :1], (v[:, 1:] - v[:, :1])[..., None])[..., 0]
    p = verts[tris]
    nrm = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = np.einsum("ij,ij->i", nrm, grad) > 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    # coincident opposite pairs cancel
    srt = np.sort(tris, axis=1)
    _, sinv, scount = np.unique(srt, axis=0, return_inverse=True, return_counts=True)
    tris = tris[scount[sinv.ravel()] == 1]
    return verts, tris, vtet, lo, hi, t


def extract(phi: np.ndarray, grid: RegularGrid, snap_eps: float = 0.05) -> ShellMesh:
    """Triangle mesh of the zero isosurface of a nodal field."""
    phi = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(phi)):
        raise ValueError("level set has non-finite values")
    values = snap_values(phi, grid, snap_eps) if snap_eps > 0 else phi.copy()
    tets = grid.tets()
    res = march_tets(values, tets, grid.coords())
    if res is None:
        return empty_mesh()
    verts, tris, vtet, lo, hi, t = res
    # barycentric embedding over the parent tet
    tn = tets[vtet]
    w = np.zeros(tn.shape)
    w += (tn == lo[:, None]) * (1.0 - t)[:, None]
    w += (tn == hi[:, None]) * t[:, None]
    mesh = ShellMesh(verts, tris, tn, w, vtet)
    return compact(mesh)


def empty_mesh() -> ShellMesh:
    return ShellMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros((0, 4), dtype=np.int64),
                     np.zeros((0, 4)), np.zeros(0, dtype=np.int64))


def compact(mesh: ShellMesh) -> ShellMesh:
    """Drop vertices no triangle references and renumber."""
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[mesh.triangles.ravel()] = True
    remap = np.cumsum(used) - 1
    return ShellMesh(
        mesh.vertices[used], remap[mesh.triangles], mesh.embed_nodes[used], mesh.embed_weights[used],
        mesh.embed_tet[used], None if mesh.normals is None else mesh.normals[used],
    )


def vertex_normals(mesh: ShellMesh, phi: np.ndarray, grid: RegularGrid, max_angle: float = 45.0) -> np.ndarray:
    """Unit normals pointing toward decreasing level set values.

    The direction is the interpolated central-difference gradient. Where it
    vanishes, or deviates from the area-weighted average of the incident
    face normals by more than ``max_angle`` degrees, the face average is used
    instead. The gradient can be far off at a box wall, where its wall-normal
    component is zero, and a director lying nearly in the element plane
    makes the shell element degenerate.
    """
    if mesh.empty:
        return np.zeros((0, 3))
    g = -grid.smooth_gradient_at(phi, mesh.vertices)
    mag = np.linalg.norm(g, axis=1)
    acc = np.zeros_like(g)
    fn = mesh.face_normals(unit=False)
    for i in range(3):
        np.add.at(acc, mesh.triangles[:, i], fn)
    amag = np.linalg.norm(acc, axis=1)
    acc /= np.maximum(amag, 1e-300)[:, None]
    weak = mag < 1e-12
    cos = np.einsum("ij,ij->i", g, acc) / np.maximum(mag, 1e-300)
    bad = (weak | (cos < np.cos(np.radians(max_angle)))) & (amag > 0)
    g[bad] = acc[bad]
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def inverse_gradient_median(mesh: ShellMesh, phi: np.ndarray, grid: RegularGrid) -> float:
    """Median of 1/|grad phi| over the mesh vertices."""
    if mesh.empty:
        return float("nan")
    mag = np.linalg.norm(grid.smooth_gradient_at(phi, mesh.vertices), axis=1)
    return float(np.median(1.0 / np.maximum(mag, 1e-300)))


# -- cleanup ---------------------------------------------------------------

def face_bits(points: np.ndarray, grid: RegularGrid, tol: Optional[float] = None) -> np.ndarray:
    """Bitmask of domain faces each point lies on (bit 2a: low, 2a+1: high)."""
    tol = 1e-6 * grid.spacing if tol is None else tol
    bits = np.zeros(len(points), dtype=np.int64)
    for a in range(3):
        bits |= (np.abs(points[:, a] - grid.origin[a]) <= tol).astype(np.int64) << (2 * a)
        bits |= (np.abs(points[:, a] - grid.upper[a]) <= tol).astype(np.int64) << (2 * a + 1)
    return bits


def _sub(p, q):
    return (p[0] - q[0], p[1] - q[1], p[2] - q[2])


def _cross(u, v):
    return (u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0])


def _dot(u, v):
    return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]


def _angles(p0, p1, p2):
    out = []
    for a, b, c in ((p0, p1, p2), (p1, p2, p0), (p2, p0, p1)):
        u, v = _sub(b, a), _sub(c, a)
        n = _cross(u, v)
        out.append(math.atan2(math.sqrt(_dot(n, n)), _dot(u, v)))
    return out


class _Editor:
    """Mutable triangle soup with vertex-to-triangle incidence for local edits."""

    def __init__(self, mesh: ShellMesh, bits: np.ndarray, on_node: np.ndarray, floor: float):
        self.x = [tuple(p) for p in mesh.vertices.tolist()]
        self.tris = [list(t) for t in mesh.triangles.tolist()]
        self.alive = [True] * len(self.tris)
        self.vt = [set() for _ in range(mesh.n_vertices)]
        for i, t in enumerate(self.tris):
            for v in t:
                self.vt[v].add(i)
        self.bits = bits.tolist()
        self.on_node = on_node.tolist()
        self.floor = floor

    def normal(self, t):
        x = self.x
        return _cross(_sub(x[t[1]], x[t[0]]), _sub(x[t[2]], x[t[0]]))

    def angles(self, t):
        return _angles(self.x[t[0]], self.x[t[1]], self.x[t[2]])

    def min_angle(self, t) -> float:
        return min(self.angles(t))

    def neighbours(self, v):
        out = set()
        for t in self.vt[v]:
            out.update(self.tris[t])
        out.discard(v)
        return out

    def on_boundary(self, v) -> bool:
        for w in self.neighbours(v):
            if len(self.vt[v] & self.vt[w]) == 1:
                return True
        return False

    def priority(self, v):
        return (bin(self.bits[v]).count("1"), self.on_node[v], -v)

    def try_collapse(self, a, b) -> bool:
        keep, drop = (a, b) if self.priority(a) >= self.priority(b) else (b, a)
        for k, r in ((keep, drop), (drop, keep)):
            if self._collapse(k, r):
                return True
        return False

    def _collapse(self, k, r) -> bool:
        if self.bits[r] & ~self.bits[k]:
            return False
        shared = self.vt[r] & self.vt[k]
        if not shared:
            return False
        opp = {v for t in shared for v in self.tris[t] if v not in (k, r)}
        if self.neighbours(r) & self.neighbours(k) != opp:
            return False
        r_bnd, k_bnd = self.on_boundary(r), self.on_boundary(k)
        if r_bnd and not k_bnd:
            return False
        if r_bnd and k_bnd and len(shared) != 1:
            return False
        moved = self.vt[r] - shared
        old_worst = min((self.min_angle(self.tris[t]) for t in self.vt[r]), default=math.pi)
        new_worst = math.pi
        for t in moved:
            old = self.tris[t]
            new = [k if v == r else v for v in old]
            n_old, n_new = self.normal(old), self.normal(new)
            l_old, l_new = math.sqrt(_dot(n_old, n_old)), math.sqrt(_dot(n_new, n_new))
            if l_new <= 0 or _dot(n_old, n_new) < 0.5 * l_old * l_new:
                return False
            new_worst = min(new_worst, self.min_angle(new))
        if new_worst < min(old_worst, self.floor):
            return False
        for t in shared:
            self.alive[t] = False
            for v in self.tris[t]:
                self.vt[v].discard(t)
        for t in moved:
            self.tris[t] = [k if v == r else v for v in self.tris[t]]
            self.vt[k].add(t)
        self.vt[r] = set()
        return True

    def try_flip(self, a, b) -> bool:
        shared = list(self.vt[a] & self.vt[b])
        if len(shared) != 2:
            return False
        t1, t2 = shared
        tri1 = self.tris[t1]
        i = tri1.index(a)
        if tri1[(i + 1) % 3] != b:
            t1, t2 = t2, t1
            tri1 = self.tris[t1]
            i = tri1.index(a)
            if tri1[(i + 1) % 3] != b:
                return False
        c = tri1[(i + 2) % 3]
        d = next(v for v in self.tris[t2] if v not in (a, b))
        if d in self.neighbours(c):
            return False
        n1, n2 = self.normal(tri1), self.normal(self.tris[t2])
        l1, l2 = math.sqrt(_dot(n1, n1)), math.sqrt(_dot(n2, n2))
        if _dot(n1, n2) < math.cos(math.radians(20.0)) * l1 * l2:
            return False
        new1, new2 = [a, d, c], [d, b, c]
        avg = tuple(p / l1 + q / l2 for p, q in zip(n1, n2))
        if _dot(self.normal(new1), avg) <= 0 or _dot(self.normal(new2), avg) <= 0:
            return False
        old_q = min(self.min_angle(tri1), self.min_angle(self.tris[t2]))
        new_q = min(self.min_angle(new1), self.min_angle(new2))
        if new_q <= old_q + 1e-12:
            return False
        for t, new in ((t1, new1), (t2, new2)):
            for v in self.tris[t]:
                self.vt[v].discard(t)
            self.tris[t] = new
            for v in new:
                self.vt[v].add(t)
        return True

    def live_triangles(self) -> np.ndarray:
        return np.array([t for t, ok in zip(self.tris, self.alive) if ok], dtype=np.int64).reshape(-1, 3)


def cleanup(mesh: ShellMesh, grid: RegularGrid, min_angle: float = 10.0, hmin: float = 0.025,
            max_passes: int = 8) -> ShellMesh:
    """Collapse short edges and repair slivers by collapse or edge flip.

    Vertices are only ever merged into an existing neighbour, so every
    surviving vertex keeps its exact isosurface position and embedding.
    Edits that would break manifoldness, fold a triangle, move a vertex off
    a domain face, or worsen the worst angle below the floor are skipped.
    """
    if mesh.empty:
        return mesh
    bits = face_bits(mesh.vertices, grid)
    on_node = np.isclose(mesh.embed_weights.max(axis=1), 1.0, rtol=0, atol=1e-12)
    ed = _Editor(mesh, bits, on_node, math.radians(min_angle))
    xyz = mesh.vertices
    skipped = 0
    for _ in range(max_passes):
        changed = False
        tris = ed.live_triangles()
        e = np.unique(np.sort(tris[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1), axis=0)
        length = np.linalg.norm(xyz[e[:, 0]] - xyz[e[:, 1]], axis=1)
        for idx in np.argsort(length, kind="stable"):
            if length[idx] >= hmin:
                break
            a, b = int(e[idx, 0]), int(e[idx, 1])
            if not (ed.vt[a] & ed.vt[b]):
                continue
            if ed.try_collapse(a, b):
                changed = True
            else:
                skipped += 1
        live = np.flatnonzero(ed.alive)
        worst = triangle_angles(xyz[np.asarray(ed.tris)[live]]).min(axis=1)
        for t in live[worst < ed.floor].tolist():
            if not ed.alive[t]:
                continue
            tri = ed.tris[t]
            ang = ed.angles(tri)
            if min(ang) >= ed.floor:
                continue
            big = int(np.argmax(ang))
            a, b = tri[(big + 1) % 3], tri[(big + 2) % 3]
            if ed.try_flip(a, b):
                changed = True
                continue
            small = int(np.argmin(ang))
            a, b = tri[(small + 1) % 3], tri[(small + 2) % 3]
            if ed.try_collapse(a, b):
                changed = True
        if not changed:
            break
    if skipped:
        log.debug("cleanup skipped %d short-edge collapses", skipped)
    out = ShellMesh(mesh.vertices, ed.live_triangles(), mesh.embed_nodes, mesh.embed_weights,
                    mesh.embed_tet, mesh.normals)
    return compact(out)


# -- topology --------------------------------------------------------------

@dataclass(frozen=True)
class Topology:
    components: int
    boundary_loops: int
    euler: int
    genus: int

    def signature(self):
        return (self.components, self.boundary_loops, self.genus)


def topology(mesh: ShellMesh) -> Topology:
    if mesh.empty:
        return Topology(0, 0, 0, 0)
    edges, counts = mesh.edges()
    nv = mesh.n_vertices
    adj = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(nv, nv))
    ncomp, labels = connected_components(adj, directed=False)
    bnd = edges[counts == 1]
    loops = 0
    loops_per = np.zeros(ncomp, dtype=np.int64)
    if len(bnd):
        badj = sp.coo_matrix((np.ones(len(bnd)), (bnd[:, 0], bnd[:, 1])), shape=(nv, nv))
        _, blab = connected_components(badj, directed=False)
        bverts = np.unique(bnd)
        loop_ids, first = np.unique(blab[bverts], return_index=True)
        loops = len(loop_ids)
        np.add.at(loops_per, labels[bverts[first]], 1)
    chi = nv - len(edges) + mesh.n_triangles
    # per-component genus from chi_c = 2 - 2 g_c - b_c
    v_c = np.bincount(labels, minlength=ncomp)
    e_c = np.bincount(labels[edges[:, 0]], minlength=ncomp)
    f_c = np.bincount(labels[mesh.triangles[:, 0]], minlength=ncomp)
    genus = int(np.sum(np.maximum(0, (2 - (v_c - e_c + f_c) - loops_per) // 2)))
    return Topology(int(ncomp), int(loops), int(chi), genus)


def vertex_face_tags(mesh: ShellMesh, grid: RegularGrid, boxes: Sequence[Box] = (), tol: Optional[float] = None):
    """Boolean mask of mesh vertices within ``tol`` of any of the boxes."""
    tol = 1e-6 * grid.spacing if tol is None else tol
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    for b in boxes:
        mask |= b.contains(mesh.vertices, tol)
    return mask
