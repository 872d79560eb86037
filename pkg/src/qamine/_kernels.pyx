# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: tree split scans and sparse mini-batch SGD.

Must stay numerically interchangeable with ``_kernels_py``; the split scans
accumulate in the same sequential order so both backends pick identical
splits.
"""

from libc.math cimport exp, INFINITY, NAN

BACKEND = "cython"


cdef inline double _midpoint(double a, double b) nogil:
    cdef double m = 0.5 * (a + b)
    if m <= a:
        m = b
    return m


def best_split_gini(const double[::1] x, const double[::1] w, const double[::1] p, double min_leaf):
    """Scan a sorted feature column for the lowest weighted child Gini sum.

    ``p`` holds the positive weight of each sample. Returns
    ``(child_impurity, threshold)`` or ``(inf, nan)`` when no split is legal.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, best_i = -1
    cdef double tw = 0.0, tp = 0.0, nl = 0.0, pl = 0.0, nr, pr, imp
    cdef double best = INFINITY
    with nogil:
        for i in range(n):
            tw += w[i]
            tp += p[i]
        for i in range(n - 1):
            nl += w[i]
            pl += p[i]
            if x[i] == x[i + 1]:
                continue
            nr = tw - nl
            pr = tp - pl
            if nl < min_leaf or nr < min_leaf or nl <= 0.0 or nr <= 0.0:
                continue
            imp = 2.0 * pl * (nl - pl) / nl + 2.0 * pr * (nr - pr) / nr
            if imp < best:
                best = imp
                best_i = i
    if best_i < 0:
        return INFINITY, NAN
    return best, _midpoint(x[best_i], x[best_i + 1])


def best_split_sse(const double[::1] x, const double[::1] w, const double[::1] g, double min_leaf):
    """Scan a sorted feature column for the largest ``GL^2/nL + GR^2/nR``.

    ``g`` holds the weighted regression target of each sample. Returns
    ``(score, threshold)`` or ``(-inf, nan)`` when no split is legal.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, best_i = -1
    cdef double tw = 0.0, tg = 0.0, nl = 0.0, gl = 0.0, nr, gr, score
    cdef double best = -INFINITY
    with nogil:
        for i in range(n):
            tw += w[i]
            tg += g[i]
        for i in range(n - 1):
            nl += w[i]
            gl += g[i]
            if x[i] == x[i + 1]:
                continue
            nr = tw - nl
            gr = tg - gl
            if nl < min_leaf or nr < min_leaf or nl <= 0.0 or nr <= 0.0:
                continue
            score = gl * gl / nl + gr * gr / nr
            if score > best:
                best = score
                best_i = i
    if best_i < 0:
        return -INFINITY, NAN
    return best, _midpoint(x[best_i], x[best_i + 1])


cdef inline double _sigmoid(double z) nogil:
    cdef double e
    if z > 30.0:
        z = 30.0
    elif z < -30.0:
        z = -30.0
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def sgd_epoch(
    const long long[::1] indptr,
    const int[::1] indices,
    const double[::1] values,
    const double[:, ::1] scalars,
    const double[::1] targets,
    const long long[::1] order,
    Py_ssize_t batch_size,
    double lr,
    double l2,
    int loss_kind,
    double[::1] w,
    double[::1] v,
    double[::1] bias,
    double[::1] resid,
):
    """One pass of mini-batch SGD over ``order`` (in place on w, v, bias).

    loss_kind 0 is cross-entropy, 1 is squared error on the sigmoid output.
    ``resid`` is scratch space of length >= batch_size.
    """
    cdef Py_ssize_t n = order.shape[0]
    cdef Py_ssize_t d = w.shape[0]
    cdef Py_ssize_t ns = v.shape[0]
    cdef Py_ssize_t start, stop, k, r, j, q
    cdef double z, y, t, m, decay, step
    with nogil:
        start = 0
        while start < n:
            stop = start + batch_size
            if stop > n:
                stop = n
            m = <double>(stop - start)
            for k in range(start, stop):
                r = order[k]
                z = bias[0]
                for q in range(indptr[r], indptr[r + 1]):
                    z = z + w[indices[q]] * values[q]
                for j in range(ns):
                    z = z + v[j] * scalars[r, j]
                y = _sigmoid(z)
                t = targets[r]
                if loss_kind == 0:
                    resid[k - start] = y - t
                else:
                    resid[k - start] = 2.0 * (y - t) * y * (1.0 - y)
            if l2 != 0.0:
                decay = 1.0 - lr * l2
                for q in range(d):
                    w[q] = w[q] * decay
                for j in range(ns):
                    v[j] = v[j] * decay
            for k in range(start, stop):
                r = order[k]
                step = lr * resid[k - start] / m
                for q in range(indptr[r], indptr[r + 1]):
                    w[indices[q]] = w[indices[q]] - step * values[q]
                for j in range(ns):
                    v[j] = v[j] - step * scalars[r, j]
                bias[0] = bias[0] - step
            start = stop
