"""Numba-compiled shell element kernels; same contracts as ``_numpy``."""

import os

import numba
import numpy as np
from numba import njit, prange

# the bundled TBB is often too old; prefer OpenMP/workqueue unless the user chose
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

_GR = np.array([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0])
_GS = np.array([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0])
_GZ = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_HR = np.array([-1.0, 1.0, 0.0])
_HS = np.array([-1.0, 0.0, 1.0])


@njit(cache=True)
def _rows(X, Vn, Q, t, r, s, z, gr, gs, g3, rows):
    h0, h1, h2 = 1.0 - r - s, r, s
    for d in range(3):
        gr[d] = 0.0
        gs[d] = 0.0
        g3[d] = 0.5 * t * (h0 * Vn[0, d] + h1 * Vn[1, d] + h2 * Vn[2, d])
        for i in range(3):
            gr[d] += _HR[i] * (X[i, d] + 0.5 * z * t * Vn[i, d])
            gs[d] += _HS[i] * (X[i, d] + 0.5 * z * t * Vn[i, d])
    hh = (h0, h1, h2)
    for k in range(15):
        for p in range(5):
            rows[p, k] = 0.0
    for i in range(3):
        # translations: du/dr = hr * I, du/dxi3 = 0
        for d in range(3):
            c = 5 * i + d
            rows[0, c] = _HR[i] * gr[d]
            rows[1, c] = _HS[i] * gs[d]
            rows[2, c] = 0.5 * (_HR[i] * gs[d] + _HS[i] * gr[d])
            rows[3, c] = 0.5 * _HR[i] * g3[d]
            rows[4, c] = 0.5 * _HS[i] * g3[d]
        for a in range(2):
            c = 5 * i + 3 + a
            qr = 0.0
            qs = 0.0
            q3 = 0.0
            for d in range(3):
                qr += gr[d] * Q[i, d, a]
                qs += gs[d] * Q[i, d, a]
                q3 += g3[d] * Q[i, d, a]
            fz = 0.5 * z * t
            f3 = 0.5 * t * hh[i]
            rows[0, c] = fz * _HR[i] * qr
            rows[1, c] = fz * _HS[i] * qs
            rows[2, c] = 0.5 * fz * (_HS[i] * qr + _HR[i] * qs)
            rows[3, c] = 0.5 * (f3 * qr + fz * _HR[i] * q3)
            rows[4, c] = 0.5 * (f3 * qs + fz * _HS[i] * q3)


@njit(cache=True)
def _single(X, Vn, V1, V2, t, E, nu, kappa, mitc, K):
    Q = np.empty((3, 3, 2))
    for i in range(3):
        for d in range(3):
            Q[i, d, 0] = -V2[i, d]
            Q[i, d, 1] = V1[i, d]
    c11 = E / (1.0 - nu * nu)
    G = E / (2.0 * (1.0 + nu))
    D = np.zeros((5, 5))
    D[0, 0] = c11
    D[1, 1] = c11
    D[0, 1] = nu * c11
    D[1, 0] = nu * c11
    D[2, 2] = G
    D[3, 3] = kappa * G
    D[4, 4] = kappa * G
    gr = np.empty(3)
    gs = np.empty(3)
    g3 = np.empty(3)
    rows = np.empty((5, 15))
    ra = np.empty((5, 15))
    rb = np.empty((5, 15))
    rc = np.empty((5, 15))
    ert = np.empty(15)
    est = np.empty(15)
    cc = np.empty(15)
    J = np.empty((3, 3))
    A = np.empty((3, 3))
    T = np.empty((5, 5))
    B = np.empty((5, 15))
    DB = np.empty((5, 15))
    for k in range(15):
        for l in range(15):
            K[k, l] = 0.0
    for iz in range(2):
        z = _GZ[iz]
        if mitc:
            _rows(X, Vn, Q, t, 0.5, 0.0, z, gr, gs, g3, ra)
            _rows(X, Vn, Q, t, 0.0, 0.5, z, gr, gs, g3, rb)
            _rows(X, Vn, Q, t, 0.5, 0.5, z, gr, gs, g3, rc)
            for k in range(15):
                ert[k] = ra[3, k]
                est[k] = rb[4, k]
                cc[k] = (rb[4, k] - ra[3, k]) - (rc[4, k] - rc[3, k])
        for ip in range(3):
            r = _GR[ip]
            s = _GS[ip]
            _rows(X, Vn, Q, t, r, s, z, gr, gs, g3, rows)
            if mitc:
                for k in range(15):
                    rows[3, k] = ert[k] + cc[k] * s
                    rows[4, k] = est[k] - cc[k] * r
            for d in range(3):
                J[d, 0] = gr[d]
                J[d, 1] = gs[d]
                J[d, 2] = g3[d]
            det = np.linalg.det(J)
            inv = np.linalg.inv(J)
            n3 = np.sqrt(g3[0] ** 2 + g3[1] ** 2 + g3[2] ** 2)
            e3 = g3 / n3
            p = gr[0] * e3[0] + gr[1] * e3[1] + gr[2] * e3[2]
            e1 = gr - p * e3
            e1 = e1 / np.sqrt(e1[0] ** 2 + e1[1] ** 2 + e1[2] ** 2)
            e2 = np.empty(3)
            e2[0] = e3[1] * e1[2] - e3[2] * e1[1]
            e2[1] = e3[2] * e1[0] - e3[0] * e1[2]
            e2[2] = e3[0] * e1[1] - e3[1] * e1[0]
            for i in range(3):
                A[i, 0] = inv[i, 0] * e1[0] + inv[i, 1] * e1[1] + inv[i, 2] * e1[2]
                A[i, 1] = inv[i, 0] * e2[0] + inv[i, 1] * e2[1] + inv[i, 2] * e2[2]
                A[i, 2] = inv[i, 0] * e3[0] + inv[i, 1] * e3[1] + inv[i, 2] * e3[2]
            for pp in range(5):
                if pp == 0:
                    a, b, f = 0, 0, 1.0
                elif pp == 1:
                    a, b, f = 1, 1, 1.0
                elif pp == 2:
                    a, b, f = 0, 1, 2.0
                elif pp == 3:
                    a, b, f = 0, 2, 2.0
                else:
                    a, b, f = 1, 2, 2.0
                T[pp, 0] = f * A[0, a] * A[0, b]
                T[pp, 1] = f * A[1, a] * A[1, b]
                T[pp, 2] = f * (A[0, a] * A[1, b] + A[1, a] * A[0, b])
                T[pp, 3] = f * (A[0, a] * A[2, b] + A[2, a] * A[0, b])
                T[pp, 4] = f * (A[1, a] * A[2, b] + A[2, a] * A[1, b])
            for pp in range(5):
                for k in range(15):
                    acc = 0.0
                    for q in range(5):
                        acc += T[pp, q] * rows[q, k]
                    B[pp, k] = acc
            for pp in range(5):
                for k in range(15):
                    acc = 0.0
                    for q in range(5):
                        acc += D[pp, q] * B[q, k]
                    DB[pp, k] = acc
            wgt = det / 6.0
            for k in range(15):
                for l in range(15):
                    acc = 0.0
                    for pp in range(5):
                        acc += B[pp, k] * DB[pp, l]
                    K[k, l] += acc * wgt


@njit(cache=True, parallel=True)
def _batch(X, Vn, V1, V2, t, E, nu, kappa, mitc, K):
    for e in prange(X.shape[0]):
        _single(X[e], Vn[e], V1[e], V2[e], t, E, nu, kappa, mitc, K[e])


def element_stiffness(X, Vn, V1, V2, t, E, nu, kappa=5.0 / 6.0, mitc=True):
    X = np.ascontiguousarray(X, dtype=np.float64)
    K = np.empty((X.shape[0], 15, 15))
    _batch(X, np.ascontiguousarray(Vn, dtype=np.float64), np.ascontiguousarray(V1, dtype=np.float64),
           np.ascontiguousarray(V2, dtype=np.float64), float(t), float(E), float(nu), float(kappa),
           bool(mitc), K)
    return K


@njit(cache=True, parallel=True)
def _offset(X, Vn, V1, V2, ue, t, E, nu, kappa, mitc, delta, out):
    for e in prange(X.shape[0]):
        Kp = np.empty((15, 15))
        Km = np.empty((15, 15))
        Xp = np.empty((3, 3))
        Xm = np.empty((3, 3))
        for j in range(3):
            for i in range(3):
                for d in range(3):
                    Xp[i, d] = X[e, i, d]
                    Xm[i, d] = X[e, i, d]
            for d in range(3):
                Xp[j, d] += delta * Vn[e, j, d]
                Xm[j, d] -= delta * Vn[e, j, d]
            _single(Xp, Vn[e], V1[e], V2[e], t, E, nu, kappa, mitc, Kp)
            _single(Xm, Vn[e], V1[e], V2[e], t, E, nu, kappa, mitc, Km)
            acc = 0.0
            for k in range(15):
                for l in range(15):
                    acc += ue[e, k] * (Kp[k, l] - Km[k, l]) * ue[e, l]
            out[e, j] = -0.25 * acc / delta


def offset_energy_derivatives(X, Vn, V1, V2, ue, t, E, nu, kappa, mitc, delta):
    X = np.ascontiguousarray(X, dtype=np.float64)
    out = np.empty((X.shape[0], 3))
    _offset(X, np.ascontiguousarray(Vn, dtype=np.float64), np.ascontiguousarray(V1, dtype=np.float64),
            np.ascontiguousarray(V2, dtype=np.float64), np.ascontiguousarray(ue, dtype=np.float64),
            float(t), float(E), float(nu), float(kappa), bool(mitc), float(delta), out)
    return out


@njit(cache=True)
def _scatter(out, index, values):
    for i in range(index.shape[0]):
        out[index[i]] += values[i]


def scatter_add(out, index, values):
    _scatter(out, np.ascontiguousarray(index, dtype=np.int64).ravel(),
             np.ascontiguousarray(values, dtype=np.float64).ravel())
    return out
