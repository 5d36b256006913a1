"""Vectorized numpy versions of the shell element kernels (batch over elements)."""

import numpy as np

# 3-point in-plane rule on the unit triangle (weights sum to 1/2), 2-point Gauss through thickness
GAUSS_RS = np.array([[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]])
GAUSS_W = np.full(3, 1.0 / 6.0)
GAUSS_Z = np.array([-1.0, 1.0]) / np.sqrt(3.0)

_HR = np.array([-1.0, 1.0, 0.0])
_HS = np.array([-1.0, 0.0, 1.0])


def _covariant_rows(X, Vn, Q, t, r, s, z):
    """Base vectors and covariant strain rows (e_rr, e_ss, e_rs, e_rt, e_st) at one point."""
    ne = X.shape[0]
    h = np.array([1.0 - r - s, r, s])
    gr = np.einsum("i,eid->ed", _HR, X) + 0.5 * z * t * np.einsum("i,eid->ed", _HR, Vn)
    gs = np.einsum("i,eid->ed", _HS, X) + 0.5 * z * t * np.einsum("i,eid->ed", _HS, Vn)
    g3 = 0.5 * t * np.einsum("i,eid->ed", h, Vn)
    Dr = np.zeros((ne, 3, 15))
    Ds = np.zeros((ne, 3, 15))
    D3 = np.zeros((ne, 3, 15))
    eye = np.eye(3)
    for i in range(3):
        Dr[:, :, 5 * i:5 * i + 3] = _HR[i] * eye
        Ds[:, :, 5 * i:5 * i + 3] = _HS[i] * eye
        Dr[:, :, 5 * i + 3:5 * i + 5] = 0.5 * z * t * _HR[i] * Q[:, i]
        Ds[:, :, 5 * i + 3:5 * i + 5] = 0.5 * z * t * _HS[i] * Q[:, i]
        D3[:, :, 5 * i + 3:5 * i + 5] = 0.5 * t * h[i] * Q[:, i]
    dot = lambda g, D: np.einsum("ed,edk->ek", g, D)
    rows = np.stack([
        dot(gr, Dr),
        dot(gs, Ds),
        0.5 * (dot(gr, Ds) + dot(gs, Dr)),
        0.5 * (dot(gr, D3) + dot(g3, Dr)),
        0.5 * (dot(gs, D3) + dot(g3, Ds)),
    ], axis=1)
    return gr, gs, g3, rows


def element_stiffness(X, Vn, V1, V2, t, E, nu, kappa=5.0 / 6.0, mitc=True):
    """Stiffness matrices of a batch of 3-node shell elements.

    Parameters
    ----------
    X, Vn, V1, V2 : (ne, 3, 3)
        Node positions, directors and the two director-frame tangents.
    t, E, nu, kappa : float
        Thickness, Young's modulus, Poisson ratio, shear correction.
    mitc : bool
        Use the assumed transverse shear field; ``False`` integrates the
        displacement-based shear strains directly (locks for thin shells).

    Returns
    -------
    (ne, 15, 15) ndarray, DoFs per node ``(ux, uy, uz, theta, phi)``.
    """
    X = np.asarray(X, dtype=float)
    ne = X.shape[0]
    Q = np.stack([-np.asarray(V2, float), np.asarray(V1, float)], axis=-1)  # (ne, 3 nodes, 3, 2)
    Vn = np.asarray(Vn, dtype=float)
    c11 = E / (1.0 - nu * nu)
    G = E / (2.0 * (1.0 + nu))
    D = np.diag([c11, c11, G, kappa * G, kappa * G])
    D[0, 1] = D[1, 0] = nu * c11
    K = np.zeros((ne, 15, 15))
    for z in GAUSS_Z:
        if mitc:
            _, _, _, ra = _covariant_rows(X, Vn, Q, t, 0.5, 0.0, z)
            _, _, _, rb = _covariant_rows(X, Vn, Q, t, 0.0, 0.5, z)
            _, _, _, rc = _covariant_rows(X, Vn, Q, t, 0.5, 0.5, z)
            e_rt_a, e_st_b = ra[:, 3], rb[:, 4]
            c = (e_st_b - e_rt_a) - (rc[:, 4] - rc[:, 3])
        for (r, s), w in zip(GAUSS_RS, GAUSS_W):
            gr, gs, g3, rows = _covariant_rows(X, Vn, Q, t, r, s, z)
            if mitc:
                rows[:, 3] = e_rt_a + c * s
                rows[:, 4] = e_st_b - c * r
            J = np.stack([gr, gs, g3], axis=2)
            det = np.linalg.det(J)
            contra = np.linalg.inv(J)  # row i is g^i
            e3 = g3 / np.linalg.norm(g3, axis=1, keepdims=True)
            e1 = gr - np.einsum("ed,ed->e", gr, e3)[:, None] * e3
            e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
            e2 = np.cross(e3, e1)
            frame = np.stack([e1, e2, e3], axis=2)
            A = np.einsum("eid,eda->eia", contra, frame)
            T = _strain_transform(A)
            B = np.einsum("epq,eqk->epk", T, rows)
            K += np.einsum("epk,pq,eql->ekl", B, D, B) * (det * w)[:, None, None]
    return K


def _strain_transform(A):
    """Map covariant (e_rr, e_ss, e_rs, e_rt, e_st) to (e11, e22, g12, g13, g23)."""
    pairs = [(0, 0, 1.0), (1, 1, 1.0), (0, 1, 2.0), (0, 2, 2.0), (1, 2, 2.0)]
    ne = A.shape[0]
    T = np.zeros((ne, 5, 5))
    for p, (a, b, f) in enumerate(pairs):
        T[:, p, 0] = A[:, 0, a] * A[:, 0, b]
        T[:, p, 1] = A[:, 1, a] * A[:, 1, b]
        T[:, p, 2] = A[:, 0, a] * A[:, 1, b] + A[:, 1, a] * A[:, 0, b]
        T[:, p, 3] = A[:, 0, a] * A[:, 2, b] + A[:, 2, a] * A[:, 0, b]
        T[:, p, 4] = A[:, 1, a] * A[:, 2, b] + A[:, 2, a] * A[:, 1, b]
        T[:, p] *= f
    return T


def offset_energy_derivatives(X, Vn, V1, V2, ue, t, E, nu, kappa, mitc, delta):
    """``-1/2 u^T dK/dz u`` for each element and each of its vertices.

    The derivative is a central difference of the element stiffness with the
    vertex moved by ``+-delta`` along its own director.
    """
    X = np.asarray(X, dtype=float)
    ne = X.shape[0]
    out = np.zeros((ne, 3))
    for j in range(3):
        Xp = X.copy()
        Xm = X.copy()
        Xp[:, j] += delta * Vn[:, j]
        Xm[:, j] -= delta * Vn[:, j]
        dK = (element_stiffness(Xp, Vn, V1, V2, t, E, nu, kappa, mitc)
              - element_stiffness(Xm, Vn, V1, V2, t, E, nu, kappa, mitc)) / (2.0 * delta)
        out[:, j] = -0.5 * np.einsum("ek,ekl,el->e", ue, dK, ue)
    return out


def scatter_add(out, index, values):
    np.add.at(out, index, values)
    return out
