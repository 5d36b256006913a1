import time

import numpy as np
import pytest

from conftest import flat_mesh, mirror_mesh, navier_center_deflection
from lsshell.errors import ElementError, SingularSystemError
from lsshell.fem import NDOF, Material, ShellModel, director_frames, rigid_modes
from lsshell.grid import build_grid, sphere_distance
from lsshell.isosurface import ShellMesh, cleanup, extract
from lsshell.kernels import element_stiffness

E, NU, T = 1.0e5, 0.3, 0.01


def single_element(X, normals=None):
    X = np.asarray(X, dtype=float)
    if normals is None:
        n = np.cross(X[1] - X[0], X[2] - X[0])
        normals = np.tile(n / np.linalg.norm(n), (3, 1))
    V1, V2 = director_frames(normals)
    K = element_stiffness(X[None], normals[None], V1[None], V2[None], T, E, NU)[0]
    return K, normals, V1, V2


def test_rigid_modes_zero_energy_curved_directors():
    rng = np.random.default_rng(3)
    X = np.array([[0.0, 0, 0], [0.7, 0.1, 0.05], [0.2, 0.6, -0.04]])
    Vn = np.array([[0.0, 0, 1]]) + 0.1 * rng.normal(size=(3, 3))
    Vn /= np.linalg.norm(Vn, axis=1, keepdims=True)
    K, Vn, V1, V2 = single_element(X, Vn)
    area = 0.5 * np.linalg.norm(np.cross(X[1] - X[0], X[2] - X[0]))
    R = rigid_modes(X, Vn, V1, V2)
    for k in range(6):
        r = R[:, k] / np.abs(R[:, k]).max()
        assert abs(r @ K @ r) < 1e-12 * E * T * area


def test_flat_element_spectrum():
    K, *_ = single_element([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
    lam = np.sort(np.linalg.eigvalsh(K))
    assert lam[5] / lam[-1] < 1e-8
    assert lam[6] / lam[-1] > 1e-10
    assert np.abs(K - K.T).max() < 1e-12 * np.abs(K).max()


def test_uniaxial_membrane_energy_closed_form():
    X = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
    K, *_ = single_element(X)
    eps = 1e-3
    u = np.zeros(15)
    u[0::5] = eps * X[:, 0]
    energy = 0.5 * u @ K @ u
    exact = 0.5 * E / (1 - NU**2) * eps**2 * T * 0.5
    assert energy == pytest.approx(exact, rel=1e-10)


def test_degenerate_triangle_raises():
    mesh = flat_mesh(1, 1)
    mesh.vertices[2] = 0.5 * (mesh.vertices[0] + mesh.vertices[3])  # collinear
    with pytest.raises(ElementError):
        ShellModel(mesh, Material(E, NU, T))


def test_two_elements_symmetric_assembly():
    model = ShellModel(flat_mesh(1, 1), Material(E, NU, T))
    K = model.K.toarray()
    assert K.shape == (4 * NDOF, 4 * NDOF)
    assert np.abs(K - K.T).max() < 1e-12 * np.abs(K).max()


@pytest.mark.parametrize("strain", [(1e-3, 0, 0), (0, -2e-3, 0), (4e-4, 3e-4, 1e-3)])
def test_membrane_patch_test(strain):
    exx, eyy, gxy = strain
    mesh = flat_mesh(5, 4, 1.0, 0.8, jitter=0.3, seed=7)
    model = ShellModel(mesh, Material(E, NU, T))
    X = model.X
    field = np.zeros((len(X), NDOF))
    field[:, 0] = exx * X[:, 0] + 0.5 * gxy * X[:, 1]
    field[:, 1] = eyy * X[:, 1] + 0.5 * gxy * X[:, 0]
    bnd = (X[:, 0] < 1e-12) | (X[:, 0] > 1 - 1e-12) | (X[:, 1] < 1e-12) | (X[:, 1] > 0.8 - 1e-12)
    model.prescribe(np.flatnonzero(bnd), field[bnd])
    u = model.solve().nodal()
    scale = np.abs(field).max()
    assert np.abs(u - field).max() < 1e-8 * scale
    # per-element constant strain recovered from the linear displacement field
    for tri in model.tris[:10]:
        P, U = X[tri, :2], u[tri, :2]
        A = np.c_[np.ones(3), P]
        cx, cy = np.linalg.solve(A, U[:, 0]), np.linalg.solve(A, U[:, 1])
        assert np.allclose([cx[1], cy[2], cx[2] + cy[1]], [exx, eyy, gxy], atol=1e-8 * scale)


def simply_supported_plate(n, t, mitc=True, q=1.0):
    model = ShellModel(flat_mesh(n, n), Material(E, NU, t), mitc=mitc)
    X = model.X
    ex = (X[:, 0] < 1e-9) | (X[:, 0] > 1 - 1e-9)
    ey = (X[:, 1] < 1e-9) | (X[:, 1] > 1 - 1e-9)
    for a in range(3):
        model.fix_translation(ex | ey, a)
    # hard support: the twist rotation about the edge normal is held too
    model.fix_rotation_about(ex, [1, 0, 0])
    model.fix_rotation_about(ey, [0, 1, 0])
    model.add_area_load([0, 0, -q])
    sol = model.solve()
    c = np.argmin(np.linalg.norm(X - [0.5, 0.5, 0], axis=1))
    return model, sol, -sol.nodal()[c, 2]


def test_navier_plate_center_deflection():
    start = time.perf_counter()
    model, sol, w = simply_supported_plate(40, T)
    ref = navier_center_deflection(1.0, 1.0, T, E, NU)
    assert w == pytest.approx(ref, rel=0.05)
    f = model.load_vector()
    assert sol.compliance == pytest.approx(0.5 * f @ sol.u, rel=1e-8)
    assert time.perf_counter() - start < 30


def test_shear_locking_guard():
    err = {}
    for t in (1e-2, 1e-3):
        for mitc in (True, False):
            _, _, w = simply_supported_plate(16, t, mitc)
            err[t, mitc] = abs(w / navier_center_deflection(1.0, 1.0, t, E, NU) - 1)
    assert err[1e-2, True] < 0.10
    assert err[1e-3, True] < 0.10
    assert err[1e-3, False] > 10 * err[1e-3, True]


def cantilever_strip(nx=40, ny=4, b=0.1, P=1e-3):
    model = ShellModel(flat_mesh(nx, ny, 1.0, b), Material(E, NU, T))
    X = model.X
    model.clamp(X[:, 0] < 1e-9)
    tip = np.flatnonzero(X[:, 0] > 1 - 1e-9)
    y = X[tip, 1]
    order = np.argsort(y)
    w = np.zeros(len(tip))
    seg = np.diff(y[order])
    w[order[:-1]] += seg / 2
    w[order[1:]] += seg / 2
    for i, wi in zip(tip, w / w.sum()):
        model.add_point_load(i, [0, 0, -P * wi])
    return model, model.solve(), tip


def test_timoshenko_cantilever_strip():
    b, P = 0.1, 1e-3
    start = time.perf_counter()
    model, sol, tip = cantilever_strip(b=b, P=P)
    d = -sol.nodal()[tip, 2].mean()
    inertia = b * T**3 / 12
    G = E / (2 * (1 + NU))
    ref = P / (3 * E * inertia) + P / (5 / 6 * G * b * T)
    assert d == pytest.approx(ref, rel=0.05)
    assert time.perf_counter() - start < 30


def test_total_reaction_balances_area_load():
    model = ShellModel(flat_mesh(8, 8), Material(E, NU, T))
    X = model.X
    model.clamp((X[:, 0] < 1e-9) | (X[:, 0] > 1 - 1e-9))
    model.add_area_load([0, 0, -0.01])
    sol = model.solve()
    assert sol.reactions.reshape(-1, NDOF)[:, 2].sum() == pytest.approx(0.01 * 1.0, rel=1e-8)


def test_zero_load_zero_response():
    model = ShellModel(flat_mesh(4, 4), Material(E, NU, T))
    model.clamp(model.X[:, 0] < 1e-9)
    sol = model.solve()
    assert np.all(sol.u == 0) and sol.compliance == 0


def test_insufficient_constraints_report_null_dimension():
    model = ShellModel(flat_mesh(4, 4), Material(E, NU, T))
    model.add_area_load([0, 0, -1])
    with pytest.raises(SingularSystemError) as info:
        model.solve()
    assert info.value.null_dim == 6
    model = ShellModel(flat_mesh(4, 4), Material(E, NU, T))
    model.fix_translation(model.X[:, 0] < 1e-9, 2)
    model.add_area_load([0, 0, -1])
    with pytest.raises(SingularSystemError) as info:
        model.solve()
    assert info.value.null_dim == 4  # in-plane motion plus rotation about the hinge line


def quarter_dome(h=0.05):
    grid = build_grid((0.5, 0.5, 0.4), h)
    centre = np.array([0.0, 0.0, -0.1])
    mesh = cleanup(extract(sphere_distance(centre, 0.45)(grid.coords()), grid), grid)
    normals = mesh.vertices - centre
    return mesh.vertices, mesh.triangles, normals / np.linalg.norm(normals, axis=1, keepdims=True)


def dome_model(v, t, n, symmetric):
    k = len(v)
    mesh = ShellMesh(v, t, np.zeros((k, 4), dtype=np.int64), np.zeros((k, 4)), np.zeros(k, dtype=np.int64), n)
    model = ShellModel(mesh, Material(E, NU, T))
    if symmetric:
        model.apply_symmetry(0, 0.0, 1e-9)
        model.apply_symmetry(1, 0.0, 1e-9)
    model.clamp(np.abs(model.X[:, 2]) < 1e-9)
    model.add_area_load([0, 0, -1.0])
    return model


def test_symmetry_planes_match_full_model():
    v, t, n = quarter_dome()
    quarter = dome_model(v, t, n, True)
    uq = quarter.solve().nodal()
    fv, ft, fn = mirror_mesh(*mirror_mesh(v, t, n, 0), 1)
    full = dome_model(fv, ft, fn, False)
    uf = full.solve().nodal()
    apex = np.argmax(v[:, 2])
    assert np.hypot(*v[apex, :2]) < 1e-9
    apex_full = np.argmin(np.linalg.norm(fv - v[apex], axis=1))
    assert uq[apex, 2] == pytest.approx(uf[apex_full, 2], rel=0.01)
    assert full.solution.compliance == pytest.approx(4 * quarter.solution.compliance, rel=0.01)


def test_symmetry_plane_missing_vertices_is_noop():
    model = ShellModel(flat_mesh(2, 2), Material(E, NU, T))
    before = model.fixed.copy()
    assert len(model.apply_symmetry(2, 5.0, 1e-9)) == 0
    assert np.array_equal(before, model.fixed)


def test_quarter_dome_missing_vertical_support_is_singular():
    v, t, n = quarter_dome()
    k = len(v)
    mesh = ShellMesh(v, t, np.zeros((k, 4), dtype=np.int64), np.zeros((k, 4)), np.zeros(k, dtype=np.int64), n)
    model = ShellModel(mesh, Material(E, NU, T))
    model.apply_symmetry(0, 0.0, 1e-9)
    model.apply_symmetry(1, 0.0, 1e-9)
    model.add_area_load([0, 0, -1.0])
    with pytest.raises(SingularSystemError) as info:
        model.solve()
    assert info.value.null_dim == 1


def test_symmetric_load_gives_mirror_symmetric_plate():
    model, sol, _ = simply_supported_plate(10, T)
    u = sol.nodal()
    X = model.X
    mirror = np.array([np.argmin(np.linalg.norm(X - [1 - x, y, z], axis=1)) for x, y, z in X])
    assert np.allclose(u[:, 2], u[mirror, 2], atol=1e-10 * np.abs(u[:, 2]).max())


def test_plate_preset_reaction_equals_total_load():
    from lsshell.config import parse_config
    from lsshell.optimizer import Problem

    prob = Problem(parse_config("plate"))
    ev = prob.evaluate(prob.psi0, with_sensitivity=False)
    reaction = ev.model.solution.reactions.reshape(-1, NDOF)[:, 2].sum()
    assert reaction == pytest.approx(0.01 * ev.mesh.area(), rel=1e-8)
