# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of _pykern.transe_epoch; keep semantics identical."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

cdef double _EPS = 1e-12

BACKEND_NAME = "compiled"


def transe_epoch(
    cnp.ndarray[cnp.float64_t, ndim=2] ent_arr,
    cnp.ndarray[cnp.float64_t, ndim=2] rel_arr,
    cnp.ndarray[cnp.int64_t, ndim=1] heads,
    cnp.ndarray[cnp.int64_t, ndim=1] rels,
    cnp.ndarray[cnp.int64_t, ndim=1] tails,
    cnp.ndarray[cnp.int64_t, ndim=1] corrupt_entity,
    cnp.ndarray[cnp.int64_t, ndim=1] corrupt_head,
    cnp.ndarray[cnp.int64_t, ndim=1] order,
    double lr,
    double margin,
):
    cdef double[:, ::1] ent = ent_arr
    cdef double[:, ::1] rel = rel_arr
    cdef long[:] hs = heads
    cdef long[:] rs = rels
    cdef long[:] ts = tails
    cdef long[:] ce_arr = corrupt_entity
    cdef long[:] ch = corrupt_head
    cdef long[:] od = order
    cdef Py_ssize_t n = od.shape[0]
    cdef Py_ssize_t m = ent.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gp_arr = np.zeros(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gn_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] gp = gp_arr
    cdef double[::1] gn = gn_arr
    cdef double total = 0.0
    cdef double d_pos, d_neg, loss, v, norm
    cdef Py_ssize_t i, j, t, h, r, tl, ce, h2, t2
    cdef long[4] touched

    for i in range(n):
        t = od[i]
        h = hs[t]
        r = rs[t]
        tl = ts[t]
        ce = ce_arr[t]
        if ch[t]:
            h2 = ce
            t2 = tl
        else:
            h2 = h
            t2 = ce
        d_pos = 0.0
        d_neg = 0.0
        for j in range(m):
            v = ent[h, j] + rel[r, j] - ent[tl, j]
            gp[j] = v
            d_pos += v * v
            v = ent[h2, j] + rel[r, j] - ent[t2, j]
            gn[j] = v
            d_neg += v * v
        d_pos = sqrt(d_pos)
        d_neg = sqrt(d_neg)
        loss = margin + d_pos - d_neg
        if loss <= 0.0:
            continue
        total += loss
        if d_pos > _EPS:
            for j in range(m):
                gp[j] /= d_pos
        else:
            for j in range(m):
                gp[j] = 0.0
        if d_neg > _EPS:
            for j in range(m):
                gn[j] /= d_neg
        else:
            for j in range(m):
                gn[j] = 0.0
        for j in range(m):
            ent[h, j] -= lr * gp[j]
        for j in range(m):
            ent[tl, j] += lr * gp[j]
        for j in range(m):
            rel[r, j] -= lr * (gp[j] - gn[j])
        for j in range(m):
            ent[h2, j] += lr * gn[j]
        for j in range(m):
            ent[t2, j] -= lr * gn[j]
        touched[0] = h
        touched[1] = tl
        touched[2] = h2
        touched[3] = t2
        for i2 in range(4):
            norm = 0.0
            for j in range(m):
                v = ent[touched[i2], j]
                norm += v * v
            norm = sqrt(norm)
            if norm > _EPS:
                for j in range(m):
                    ent[touched[i2], j] /= norm
    return total
