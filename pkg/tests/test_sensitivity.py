import time

import numpy as np
import pytest

from conftest import flat_mesh
from lsshell.fem import NDOF, Material, ShellModel, _face_average_normals
from lsshell.filters import LevelSetPipeline
from lsshell.grid import Box, build_grid, init_design, plane_distance, tag_boundary
from lsshell.isosurface import ShellMesh, extract
from lsshell.sensitivity import (SurfaceSensitivity, constraint_sensitivity, embed, enclosed_volume_constraint,
                                 filter_sensitivity, sensitivity_operator, shape_sensitivity)

H_GRID = 0.05
DELTA = 1e-4 * H_GRID  # default optimizer step


def curved_patch():
    """20-vertex curved strip with jittered in-plane positions and fixed directors."""
    base = flat_mesh(4, 3, 1.0, 0.6)
    rng = np.random.default_rng(1)
    V = base.vertices.copy()
    V[:, 2] = 0.3 * np.sin(np.pi * V[:, 0]) * (1 + 0.3 * V[:, 1])
    V[:, :2] += 0.02 * rng.normal(size=(len(V), 2))
    mesh = ShellMesh(V, base.triangles, base.embed_nodes, base.embed_weights, base.embed_tet, None)
    mesh.normals = _face_average_normals(mesh)
    return base, V, mesh.normals


def build(base, V, N, line):
    mesh = ShellMesh(V, base.triangles, base.embed_nodes, base.embed_weights, base.embed_tet, N)
    model = ShellModel(mesh, Material(1e5, 0.3, 0.01))
    model.clamp(base.vertices[:, 0] < 1e-9)
    if line:
        model.add_line_load(Box(np.array([0.99, -1, -1]), np.array([2, 2, 2.0])), [0, 0, -1.0])
    else:
        model.add_area_load([0, 0.3, -1.0])
    return model


def global_fd(base, V, N, line, free):
    """Richardson-extrapolated central differences of full re-solves."""
    def fd(eps):
        out = np.zeros(len(V))
        for i in np.flatnonzero(free):
            Vp, Vm = V.copy(), V.copy()
            Vp[i] += eps * N[i]
            Vm[i] -= eps * N[i]
            out[i] = (build(base, Vp, N, line).solve().compliance
                      - build(base, Vm, N, line).solve().compliance) / (2 * eps)
        return out

    return (4 * fd(5e-5) - fd(1e-4)) / 3


@pytest.mark.parametrize("line", [False, True], ids=["area_load", "line_load"])
def test_shape_sensitivity_matches_global_finite_differences(line):
    start = time.perf_counter()
    base, V, N = curved_patch()
    assert len(V) <= 20
    model = build(base, V, N, line)
    model.solve()
    free = ~model.fixed.reshape(-1, NDOF).all(axis=1)
    s = shape_sensitivity(model, DELTA).nodal
    ref = global_fd(base, V, N, line, free)
    rel = np.abs(s - ref)[free] / np.abs(ref[free])
    assert rel.max() < 1e-3
    assert s @ ref / (np.linalg.norm(s) * np.linalg.norm(ref)) > 0.999
    assert np.all(s[~free] == 0.0)
    assert time.perf_counter() - start < 60


def test_shape_sensitivity_deterministic():
    base, V, N = curved_patch()
    a = build(base, V, N, True)
    a.solve()
    b = build(base, V, N, True)
    b.solve()
    assert np.array_equal(shape_sensitivity(a, DELTA).nodal, shape_sensitivity(b, DELTA).nodal)


@pytest.fixture(scope="module")
def plate_setup():
    grid = build_grid((0.5, 0.5, 0.3), H_GRID)
    tags = tag_boundary(grid, [Box(np.array([0.5, 0, 0]), np.array([0.5, 0.5, 0.3]))])
    phi = plane_distance(0.15, bump=0.02, lo=grid.origin, hi=grid.upper)(grid.coords())
    mesh = extract(phi, grid)
    return grid, tags, mesh


def test_embed_conserves_and_is_linear_in_c(plate_setup):
    grid, _, mesh = plate_setup
    rng = np.random.default_rng(0)
    sens = SurfaceSensitivity(rng.normal(size=mesh.n_vertices), mesh.vertex_areas())
    raw = embed(sens, mesh, 15.0, grid)
    assert raw.sum() == pytest.approx(15.0 * sens.nodal.sum(), rel=1e-12)
    assert np.allclose(embed(sens, mesh, 30.0, grid), 2 * raw, rtol=0, atol=1e-14 * np.abs(raw).max())
    # only nodes of tets cut by the surface receive anything
    assert set(np.flatnonzero(raw)) <= set(mesh.embed_nodes[mesh.embed_weights > 0].ravel())


def test_zero_sensitivity_embeds_to_zero(plate_setup):
    grid, tags, mesh = plate_setup
    sens = SurfaceSensitivity(np.zeros(mesh.n_vertices), mesh.vertex_areas())
    raw = embed(sens, mesh, 15.0, grid)
    assert not raw.any()
    assert not filter_sensitivity(raw, sensitivity_operator(grid, 0.05, tags)).any()


def test_filtered_sensitivity_is_zero_on_dirichlet_nodes(plate_setup):
    grid, tags, mesh = plate_setup
    rng = np.random.default_rng(2)
    sens = SurfaceSensitivity(rng.normal(size=mesh.n_vertices), mesh.vertex_areas())
    out = filter_sensitivity(embed(sens, mesh, 15.0, grid), sensitivity_operator(grid, 0.05, tags))
    assert np.all(out[tags.on_dirichlet] == 0.0)
    assert np.abs(out[~tags.on_dirichlet]).max() > 0


def test_constraint_sensitivity_matches_finite_differences():
    grid = build_grid((0.5, 0.5, 0.3), H_GRID)
    pipe = LevelSetPipeline(grid, 0.05, 0.5)
    psi, _ = init_design(grid, {"kind": "plane", "z0": 0.15, "bump": 0.02}, 0.1)
    w = pipe.first.weights

    def G(p):
        return enclosed_volume_constraint(pipe.first.apply(p), pipe.bandwidth, w, 0.01)

    dG = constraint_sensitivity(pipe.first.apply(psi), pipe)
    rng = np.random.default_rng(3)
    d = pipe.first.apply(rng.normal(size=grid.n_nodes))  # smooth direction
    eps = 1e-4
    fd = (G(psi + eps * d) - G(psi - eps * d)) / (2 * eps)
    assert dG @ d == pytest.approx(fd, rel=1e-5)
    # single-node perturbations in the band
    for i in np.argsort(-np.abs(dG))[:5]:
        e = np.zeros(grid.n_nodes)
        e[i] = 1.0
        fd = (G(psi + eps * e) - G(psi - eps * e)) / (2 * eps)
        assert dG[i] == pytest.approx(fd, rel=1e-5)
