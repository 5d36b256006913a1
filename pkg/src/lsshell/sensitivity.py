"""Shape sensitivity of the compliance and its transfer to the design grid."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .filters import HelmholtzOperator, LevelSetPipeline, project, project_derivative
from .fem import NDOF, ShellModel, _triangle_area_gradient
from .grid import BoundaryTag, RegularGrid
from .isosurface import ShellMesh


@dataclass
class SurfaceSensitivity:
    """Derivative of F with respect to normal offsets of the mesh vertices.

    ``nodal[I]`` is dF/dz^I for a unit offset of vertex I alone; ``density``
    divides it by the vertex's lumped area, giving a per-area quantity that
    does not depend on the mesh size.
    """

    nodal: np.ndarray
    vertex_area: np.ndarray

    @property
    def density(self) -> np.ndarray:
        return self.nodal / self.vertex_area


def shape_sensitivity(model: ShellModel, delta: float) -> SurfaceSensitivity:
    """Semi-analytic dF/dz for every vertex of a solved model.

    ``dF/dz = -1/2 u^T dK/dz u + u^T df/dz``; the element stiffness
    derivative is a central difference over the moved vertex (directors held
    fixed), the area-load derivative uses the exact area gradient and the
    line-load derivative a central difference of the load vector.
    """
    sol = model.solution
    m = model.material
    Xe, Vn, V1, V2 = model.element_arrays()
    ue = sol.u[model.element_dofs()]
    nv = len(model.X)
    dk = kernels.offset_energy_derivatives(Xe, Vn, V1, V2, ue, m.thickness, m.E, m.nu, m.kappa,
                                           model.mitc, delta)
    out = np.zeros(nv)
    kernels.scatter_add(out, model.tris.ravel(), dk.ravel())

    utr = sol.nodal()[:, :3]
    if model.area_loads:
        dA = _triangle_area_gradient(Xe)  # (nt, 3, 3)
        dAdz = np.einsum("ejd,ejd->ej", dA, Vn)
        for q, sel in model.area_loads:
            mask = np.ones(len(model.tris), dtype=bool) if sel is None else np.asarray(sel)
            work = (utr[model.tris] @ q).sum(axis=1) / 3.0  # u.q summed over the 3 nodes / 3
            contrib = np.where(mask[:, None], work[:, None] * dAdz, 0.0)
            np.add.at(out, model.tris.ravel(), contrib.ravel())
    if model.line_loads:
        movable = np.zeros(nv, dtype=bool)
        for ll in model.line_loads:
            movable |= ll.box.contains(model.X, 0.0)
        for i in np.flatnonzero(movable):
            Xp = model.X.copy()
            Xm = model.X.copy()
            Xp[i] += delta * model.Vn[i]
            Xm[i] -= delta * model.Vn[i]
            df = (model.line_load_forces(Xp) - model.line_load_forces(Xm)) / (2.0 * delta)
            out[i] += float(np.sum(df * utr))
    all_fixed = model.fixed.reshape(-1, NDOF).all(axis=1)
    out[all_fixed] = 0.0
    return SurfaceSensitivity(out, model.mesh.vertex_areas())


def embed(sens: SurfaceSensitivity, mesh: ShellMesh, c: float, grid: RegularGrid) -> np.ndarray:
    """Deposit ``c * density * A_v`` of every vertex onto its parent tet nodes.

    The director points toward decreasing level set values, so raising the
    level set by ``d`` moves the surface by ``+d/|grad phi| ~ c*d`` along it;
    hence the positive sign. Deposits are split by the vertex's barycentric
    weights; grid nodes that no vertex touches stay zero.
    """
    raw = np.zeros(grid.n_nodes)
    amount = c * sens.density * sens.vertex_area
    kernels.scatter_add(raw, mesh.embed_nodes.ravel(), (mesh.embed_weights * amount[:, None]).ravel())
    return raw


def filter_sensitivity(raw: np.ndarray, op: HelmholtzOperator) -> np.ndarray:
    """Smooth the embedded sensitivity; pinned nodes of ``op`` are held at 0."""
    return op.apply(raw, np.zeros(len(op.fixed)) if len(op.fixed) else None)


def enclosed_volume_constraint(psi_tilde: np.ndarray, bandwidth: float, weights: np.ndarray,
                               g_max: float) -> float:
    return float(weights @ (0.5 * (project(psi_tilde, bandwidth) + 1.0))) - g_max


def constraint_sensitivity(psi_tilde: np.ndarray, pipeline: LevelSetPipeline) -> np.ndarray:
    """dG/dpsi for ``G = sum_n W_n (phi_hat_n + 1)/2 - G_max``.

    The local term ``W * H'(psi_tilde)`` is pulled back through the first
    filter with its adjoint.
    """
    w = pipeline.first.weights
    local = 0.5 * w * project_derivative(psi_tilde, pipeline.bandwidth)
    return pipeline.first.adjoint(local)


def sensitivity_operator(grid: RegularGrid, radius: float, tags: Optional[BoundaryTag],
                         method: str = "direct") -> HelmholtzOperator:
    pinned = tags.on_dirichlet if tags is not None else None
    return HelmholtzOperator(grid, radius, pinned=pinned, method=method)
