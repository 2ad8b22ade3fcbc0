# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled bundle kernels: per-node one-epoch value and derivative sums.

Mirrors mmdiv.kernels.fallback exactly; the record minima are strictly
decreasing per path, so the first record below each grid level advances
monotonically and the double loop is a linear sweep.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline double _interp_ext(double z, const double* row, Py_ssize_t n,
                               double h, double x_max, double slope_hi) nogil:
    cdef Py_ssize_t i
    cdef double frac
    if z >= x_max:
        return row[n - 1] + slope_hi * (z - x_max)
    if z <= 0.0:
        return row[0]
    frac = z / h
    i = <Py_ssize_t> frac
    if i >= n - 1:
        i = n - 2
    frac = frac - i
    return row[i] * (1.0 - frac) + row[i + 1] * frac


def value_terms(const long long[::1] offsets,
                const double[::1] rec_m,
                const double[::1] rec_disc,
                const double[::1] xi_end,
                const double[::1] disc_end,
                const long long[::1] y_end,
                const double[::1] x_nodes,
                const double[:, ::1] F,
                const double[::1] slope_hi,
                double beta):
    cdef Py_ssize_t n_nodes = x_nodes.shape[0]
    cdef Py_ssize_t n_paths = offsets.shape[0] - 1
    cdef cnp.ndarray out_arr = np.zeros(n_nodes)
    cdef double[::1] out = out_arr
    cdef double h = x_nodes[1] - x_nodes[0]
    cdef double x_max = x_nodes[n_nodes - 1]

    # suffix scratch sized to the longest record run
    cdef Py_ssize_t max_rec = 0
    cdef Py_ssize_t p, i, j, J, k, y
    for p in range(n_paths):
        if offsets[p + 1] - offsets[p] > max_rec:
            max_rec = offsets[p + 1] - offsets[p]
    cdef cnp.ndarray suf_arr = np.zeros(max_rec + 2)
    cdef double[::1] suffix = suf_arr

    cdef const double* m
    cdef const double* disc
    cdef const double* frow
    cdef double x, inj, endpoint, dT, xiT, mJ, slope
    with nogil:
        for p in range(n_paths):
            J = offsets[p + 1] - offsets[p] - 1
            m = &rec_m[offsets[p]]
            disc = &rec_disc[offsets[p]]
            y = y_end[p]
            frow = &F[y, 0]
            slope = slope_hi[y]
            dT = disc_end[p]
            xiT = xi_end[p]
            mJ = m[J]
            suffix[J + 1] = 0.0
            for j in range(J, 0, -1):
                suffix[j] = suffix[j + 1] + disc[j] * (m[j - 1] - m[j])
            k = 1
            for i in range(n_nodes):
                x = x_nodes[i]
                while k <= J and m[k] >= -x:
                    k += 1
                if k <= J:
                    inj = disc[k] * (-x - m[k]) + suffix[k + 1]
                else:
                    inj = 0.0
                if x >= -mJ:
                    endpoint = x + xiT
                else:
                    endpoint = xiT - mJ
                out[i] += -beta * inj + dT * _interp_ext(
                    endpoint, frow, n_nodes, h, x_max, slope)
    return out_arr


def deriv_terms(const long long[::1] offsets,
                const double[::1] rec_m,
                const double[::1] rec_disc,
                const double[::1] xi_end,
                const double[::1] disc_end,
                const long long[::1] y_end,
                const double[::1] x_nodes,
                const double[:, ::1] D,
                double beta):
    cdef Py_ssize_t n_nodes = x_nodes.shape[0]
    cdef Py_ssize_t n_paths = offsets.shape[0] - 1
    cdef cnp.ndarray out_arr = np.zeros(n_nodes)
    cdef double[::1] out = out_arr
    cdef double h = x_nodes[1] - x_nodes[0]
    cdef double x_max = x_nodes[n_nodes - 1]

    cdef const double* m
    cdef const double* disc
    cdef const double* drow
    cdef Py_ssize_t p, i, J, k, y
    cdef double x, dT, xiT
    with nogil:
        for p in range(n_paths):
            J = offsets[p + 1] - offsets[p] - 1
            m = &rec_m[offsets[p]]
            disc = &rec_disc[offsets[p]]
            y = y_end[p]
            drow = &D[y, 0]
            dT = disc_end[p]
            xiT = xi_end[p]
            k = 1
            for i in range(n_nodes):
                x = x_nodes[i]
                while k <= J and m[k] >= -x:
                    k += 1
                if k <= J:
                    out[i] += beta * disc[k]
                else:
                    out[i] += dT * _interp_ext(
                        x + xiT, drow, n_nodes, h, x_max, 0.0)
    return out_arr
