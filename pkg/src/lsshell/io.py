"""Writers for VTK legacy ASCII, OBJ and per-iteration dumps.

All floats are written with 9 significant digits so repeated runs diff
cleanly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def fmt(x: float) -> str:
    return f"{x:.9g}"


def _rows(a: np.ndarray) -> str:
    a = np.atleast_2d(a)
    return "\n".join(" ".join(fmt(v) for v in row) for row in a) + "\n"


def write_obj(path, vertices: np.ndarray, triangles: np.ndarray) -> None:
    lines = [f"v {fmt(x)} {fmt(y)} {fmt(z)}" for x, y, z in vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path):
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(p) for p in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def write_vtk_volume(path, grid, fields: dict, title: str = "level set fields") -> None:
    """Structured-points dataset with one scalar array per field.

    VTK expects x to vary fastest, so C-ordered (nx, ny, nz) arrays are
    written transposed.
    """
    nx, ny, nz = grid.shape
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET STRUCTURED_POINTS",
           f"DIMENSIONS {nx} {ny} {nz}",
           "ORIGIN " + " ".join(fmt(v) for v in grid.origin),
           "SPACING " + " ".join(fmt(grid.spacing) for _ in range(3)),
           f"POINT_DATA {grid.n_nodes}"]
    for name, values in fields.items():
        v = np.asarray(values, dtype=float).reshape(grid.shape).transpose(2, 1, 0).ravel()
        out.append(f"SCALARS {name} double 1")
        out.append("LOOKUP_TABLE default")
        out.append("\n".join(fmt(x) for x in v))
    Path(path).write_text("\n".join(out) + "\n")


def write_vtk_surface(path, vertices: np.ndarray, triangles: np.ndarray, point_data: dict = None,
                      cell_data: dict = None, title: str = "shell midsurface") -> None:
    """Polydata with scalar or 3-vector arrays on points and cells."""
    nv, nt = len(vertices), len(triangles)
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET POLYDATA", f"POINTS {nv} double",
           _rows(vertices).rstrip("\n"), f"POLYGONS {nt} {4 * nt}"]
    out += [f"3 {a} {b} {c}" for a, b, c in triangles]

    def block(data):
        for name, values in data.items():
            v = np.asarray(values, dtype=float)
            if v.ndim == 2:
                out.append(f"VECTORS {name} double")
                out.append(_rows(v).rstrip("\n"))
            else:
                out.append(f"SCALARS {name} double 1")
                out.append("LOOKUP_TABLE default")
                out.append("\n".join(fmt(x) for x in v))

    if point_data:
        out.append(f"POINT_DATA {nv}")
        block(point_data)
    if cell_data:
        out.append(f"CELL_DATA {nt}")
        block(cell_data)
    Path(path).write_text("\n".join(out) + "\n")


def dump_iteration(directory, grid, ev, vtk: bool = True, obj: bool = True, fields: bool = True) -> None:
    """Surface mesh, displacements, strain energy and grid fields of one iterate."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    mesh = ev.mesh
    if obj:
        write_obj(d / "surface.obj", mesh.vertices, mesh.triangles)
    if vtk:
        point, cell = {"normal": mesh.normals}, {}
        if ev.model is not None and getattr(ev.model, "solution", None) is not None:
            u = ev.model.solution.nodal()
            point["displacement"] = u[:, :3]
            cell["strain_energy"] = ev.model.solution.element_energy
        if ev.sens is not None:
            point["dF_dz"] = ev.sens.nodal
        write_vtk_surface(d / "surface.vtk", mesh.vertices, mesh.triangles, point, cell)
    if fields:
        f = ev.fields
        data = {"psi": f.psi, "psi_tilde": f.psi_tilde, "phi_hat": f.phi_hat, "phi": f.phi,
                "dF_raw": ev.raw, "dF_dpsi": ev.dF}
        if ev.dG is not None:
            data["dG_dpsi"] = ev.dG
        write_vtk_volume(d / "fields.vtk", grid, data)
