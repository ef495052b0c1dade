# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled backward step of the lattice BSDE scheme.

Same contract as ``_pykernels.backward_step``; slices are passed flattened in
C order.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fmin

cnp.import_array()

cdef enum:
    MAXDIM = 8
    MAXBRANCH = 256


cdef inline double _driver(int code, const double* z, int d, const double* theta_bar,
                           const double* kernel, int q, double radius, double bound,
                           double gamma) noexcept nogil:
    # kernel is d x q, row-major
    cdef int i, c
    cdef double lin = 0.0, nrm = 0.0, acc, qn, s, best
    if code == 1 or code == 2:
        for i in range(d):
            nrm += z[i] * z[i]
        return bound * sqrt(nrm) if code == 1 else -bound * sqrt(nrm)
    for i in range(d):
        lin += z[i] * theta_bar[i]
    if code == 0:
        return lin
    for c in range(q):
        acc = 0.0
        for i in range(d):
            acc += z[i] * kernel[i * q + c]
        nrm += acc * acc
    qn = sqrt(nrm)
    if code == 3 or code == 4:
        best = radius * qn
    else:
        s = fmin(gamma * qn, radius)
        best = qn * s - s * s / (2.0 * gamma)
    return lin + best if (code == 3 or code == 5) else lin - best


def backward_step_flat(const double[::1] y_next, int m, int d, double dt, int code,
                       const double[::1] theta_bar, const double[::1] kernel,
                       double radius, double bound, double gamma):
    """Returns flat ``(y, z)`` for slice ``m`` given slice ``m+1``; ``code = -1`` skips the driver.

    ``kernel`` is the flattened ``d x q`` kernel basis.
    """
    if d < 1 or d > MAXDIM:
        raise ValueError("dimension outside 1..8 for the compiled kernel")
    cdef Py_ssize_t nodes = (m + 1) ** d
    cdef int nb = 1 << d
    cdef int q = kernel.shape[0] // d
    y_arr = np.empty(nodes)
    z_arr = np.empty(nodes * d)
    cdef double[::1] y = y_arr
    cdef double[::1] z = z_arr
    cdef Py_ssize_t stride[MAXDIM]
    cdef int idx[MAXDIM]
    cdef Py_ssize_t off[MAXBRANCH]
    cdef double sgn[MAXBRANCH * MAXDIM]
    cdef double zz[MAXDIM]
    cdef const double* yn = &y_next[0]
    cdef const double* tb = &theta_bar[0]
    cdef const double* kp = &kernel[0] if q > 0 else tb
    cdef double* yp = &y[0]
    cdef double* zp = &z[0]
    cdef Py_ssize_t p, base
    cdef int i, b
    cdef double v, ey, a0, a1, a2, a3
    cdef Py_ssize_t r, c, row
    cdef double inv = 1.0 / nb
    cdef double zscale = inv / sqrt(dt)

    stride[d - 1] = 1
    for i in range(d - 2, -1, -1):
        stride[i] = stride[i + 1] * (m + 2)
    for b in range(nb):
        off[b] = 0
        for i in range(d):
            if (b >> (d - 1 - i)) & 1:
                off[b] += stride[i]
                sgn[b * d + i] = 1.0
            else:
                sgn[b * d + i] = -1.0
    for i in range(d):
        idx[i] = 0

    with nogil:
        if d == 1:
            for p in range(nodes):
                zz[0] = (yn[p + 1] - yn[p]) * zscale
                zp[p] = zz[0]
                ey = (yn[p] + yn[p + 1]) * inv
                if code >= 0:
                    ey += dt * _driver(code, zz, 1, tb, kp, q, radius, bound, gamma)
                yp[p] = ey
        elif d == 2:
            for r in range(m + 1):
                row = r * (m + 2)
                for c in range(m + 1):
                    base = row + c
                    a0 = yn[base]
                    a1 = yn[base + 1]
                    a2 = yn[base + m + 2]
                    a3 = yn[base + m + 3]
                    p = r * (m + 1) + c
                    zz[0] = (a2 + a3 - a0 - a1) * zscale
                    zz[1] = (a1 + a3 - a0 - a2) * zscale
                    zp[2 * p] = zz[0]
                    zp[2 * p + 1] = zz[1]
                    ey = (a0 + a1 + a2 + a3) * inv
                    if code >= 0:
                        ey += dt * _driver(code, zz, 2, tb, kp, q, radius, bound, gamma)
                    yp[p] = ey
        else:
            base = 0
            for p in range(nodes):
                ey = 0.0
                for i in range(d):
                    zz[i] = 0.0
                for b in range(nb):
                    v = yn[base + off[b]]
                    ey += v
                    for i in range(d):
                        zz[i] += sgn[b * d + i] * v
                for i in range(d):
                    zz[i] *= zscale
                    zp[p * d + i] = zz[i]
                ey *= inv
                if code >= 0:
                    ey += dt * _driver(code, zz, d, tb, kp, q, radius, bound, gamma)
                yp[p] = ey
                # advance the multi-index over the (m+1)^d box inside the (m+2)^d parent
                i = d - 1
                while i >= 0:
                    idx[i] += 1
                    base += stride[i]
                    if idx[i] <= m:
                        break
                    base -= idx[i] * stride[i]
                    idx[i] = 0
                    i -= 1
    return y_arr, z_arr
