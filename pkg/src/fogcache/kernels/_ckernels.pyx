# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.

Semantics match :mod:`fogcache.kernels.numpy_backend` (the reference
implementation); see its docstrings. The similarity kernel walks the CSR
rows with a sorted-index merge instead of dense matmuls, so agreement
between the two backends is a meaningful cross-check of both.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, sqrt

cnp.import_array()


def pair_similarity(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
                    double[::1] data, double[::1] col_weights):
    """Weighted rating-distance similarity between all row pairs of a CSR matrix."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    out = np.zeros((n, n))
    cdef double[:, ::1] sim = out
    cdef Py_ssize_t a, b, ia, ib, ea, eb
    cdef double d2, diff
    cdef long common
    for a in range(n):
        ea = indptr[a + 1]
        for b in range(a + 1, n):
            ia = indptr[a]
            ib = indptr[b]
            eb = indptr[b + 1]
            d2 = 0.0
            common = 0
            while ia < ea and ib < eb:
                if indices[ia] < indices[ib]:
                    ia += 1
                elif indices[ia] > indices[ib]:
                    ib += 1
                else:
                    diff = data[ia] - data[ib]
                    d2 += col_weights[indices[ia]] * diff * diff
                    common += 1
                    ia += 1
                    ib += 1
            if common > 0:
                sim[a, b] = sim[b, a] = 1.0 / (1.0 + sqrt(d2 / common))
    return out


def ftrl_fit(double[::1] z, double[::1] n_acc, double[:, ::1] X, double[::1] y,
             cnp.int64_t[::1] order, double alpha, double beta,
             double l1, double l2):
    """Run the per-coordinate proximal updates over samples in ``order``.

    ``z`` and ``n_acc`` are mutated in place; returns the pre-update
    probability for each visited sample.
    """
    cdef Py_ssize_t n_samples = order.shape[0]
    cdef Py_ssize_t dim = X.shape[1]
    preds_arr = np.empty(n_samples)
    wbuf_arr = np.zeros(dim)
    cdef double[::1] preds = preds_arr
    cdef double[::1] wbuf = wbuf_arr
    cdef Py_ssize_t t, i, k
    cdef double x, zk, w, dot, p, g, sigma, sign
    for t in range(n_samples):
        i = order[t]
        dot = 0.0
        for k in range(dim):
            x = X[i, k]
            if x != 0.0:
                zk = z[k]
                if fabs(zk) <= l1:
                    w = 0.0
                else:
                    sign = 1.0 if zk > 0.0 else -1.0
                    w = -(zk - sign * l1) / ((beta + sqrt(n_acc[k])) / alpha + l2)
                wbuf[k] = w
                dot += w * x
        if dot >= 0.0:
            p = 1.0 / (1.0 + exp(-dot))
        else:
            p = exp(dot)
            p = p / (1.0 + p)
        preds[t] = p
        for k in range(dim):
            x = X[i, k]
            if x != 0.0:
                g = (p - y[i]) * x
                sigma = (sqrt(n_acc[k] + g * g) - sqrt(n_acc[k])) / alpha
                z[k] += g - sigma * wbuf[k]
                n_acc[k] += g * g
    return preds_arr
