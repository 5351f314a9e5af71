"""Compiled RK4 inner loops.

Operators are passed in COO form (``rows, cols, vals, term``) so that the
per-step cost is proportional to the number of non-zeros; the Hamiltonian
terms of this model have O(d) non-zeros each.
"""
from __future__ import annotations

import numpy as np
from numba import njit


def to_coo(mats: np.ndarray, tol: float = 0.0):
    """Flatten a stack of (k, D, D) matrices into one COO table tagged by term index."""
    rows, cols, vals, term = [], [], [], []
    for k, m in enumerate(mats):
        r, c = np.nonzero(np.abs(m) > tol)
        rows.append(r)
        cols.append(c)
        vals.append(m[r, c])
        term.append(np.full(r.size, k))
    return (
        np.concatenate(rows).astype(np.int64),
        np.concatenate(cols).astype(np.int64),
        np.concatenate(vals).astype(np.complex128),
        np.concatenate(term).astype(np.int64),
    )


@njit(cache=True)
def _apply(c, rows, cols, vals, term, v, out):
    out[:] = 0.0
    for q in range(rows.size):
        out[rows[q]] += -1j * c[term[q]] * vals[q] * v[cols[q]]


@njit(cache=True)
def rk4_pure(psi, coef, rows, cols, vals, term, h, i0, i1, renorm):
    """Advance ``psi`` over steps ``i0..i1-1``; ``coef`` holds real term coefficients
    on the half-step grid. Returns the largest norm drift seen."""
    D = psi.size
    k1 = np.empty(D, np.complex128)
    k2 = np.empty(D, np.complex128)
    k3 = np.empty(D, np.complex128)
    k4 = np.empty(D, np.complex128)
    tmp = np.empty(D, np.complex128)
    drift = 0.0
    for i in range(i0, i1):
        c0 = coef[2 * i]
        cm = coef[2 * i + 1]
        c1 = coef[2 * i + 2]
        _apply(c0, rows, cols, vals, term, psi, k1)
        for j in range(D):
            tmp[j] = psi[j] + 0.5 * h * k1[j]
        _apply(cm, rows, cols, vals, term, tmp, k2)
        for j in range(D):
            tmp[j] = psi[j] + 0.5 * h * k2[j]
        _apply(cm, rows, cols, vals, term, tmp, k3)
        for j in range(D):
            tmp[j] = psi[j] + h * k3[j]
        _apply(c1, rows, cols, vals, term, tmp, k4)
        nrm = 0.0
        for j in range(D):
            psi[j] += (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            nrm += psi[j].real ** 2 + psi[j].imag ** 2
        nrm = np.sqrt(nrm)
        if abs(nrm - 1.0) > drift:
            drift = abs(nrm - 1.0)
        if renorm:
            for j in range(D):
                psi[j] /= nrm
    return drift


@njit(cache=True)
def _lind(c, rows, cols, vals, term, damp, jr, jc, jv, jid, rho, out):
    D = rho.shape[0]
    out[:, :] = 0.0
    # -i (H rho - rho H), H Hermitian
    for q in range(rows.size):
        hv = c[term[q]] * vals[q]
        r = rows[q]
        s = cols[q]
        for j in range(D):
            out[r, j] += -1j * hv * rho[s, j]
            out[j, s] += 1j * hv * rho[j, r]
    # -(damp rho + rho damp)/2 with damp = sum_k G_k A_k+ A_k (diagonal)
    for i in range(D):
        for j in range(D):
            out[i, j] -= 0.5 * (damp[i] + damp[j]) * rho[i, j]
    # sum_k (sqrt(G_k) A_k) rho (sqrt(G_k) A_k)+
    for p in range(jr.size):
        for q in range(jr.size):
            if jid[p] == jid[q]:
                out[jr[p], jr[q]] += jv[p] * np.conj(jv[q]) * rho[jc[p], jc[q]]


@njit(cache=True)
def rk4_lindblad(rho, coef, rows, cols, vals, term, damp, jr, jc, jv, jid, h, i0, i1):
    D = rho.shape[0]
    k1 = np.empty((D, D), np.complex128)
    k2 = np.empty((D, D), np.complex128)
    k3 = np.empty((D, D), np.complex128)
    k4 = np.empty((D, D), np.complex128)
    tmp = np.empty((D, D), np.complex128)
    for i in range(i0, i1):
        c0 = coef[2 * i]
        cm = coef[2 * i + 1]
        c1 = coef[2 * i + 2]
        _lind(c0, rows, cols, vals, term, damp, jr, jc, jv, jid, rho, k1)
        tmp[:, :] = rho + 0.5 * h * k1
        _lind(cm, rows, cols, vals, term, damp, jr, jc, jv, jid, tmp, k2)
        tmp[:, :] = rho + 0.5 * h * k2
        _lind(cm, rows, cols, vals, term, damp, jr, jc, jv, jid, tmp, k3)
        tmp[:, :] = rho + h * k3
        _lind(c1, rows, cols, vals, term, damp, jr, jc, jv, jid, tmp, k4)
        rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for a in range(D):
            for b in range(a, D):
                m = 0.5 * (rho[a, b] + np.conj(rho[b, a]))
                rho[a, b] = m
                rho[b, a] = np.conj(m)
