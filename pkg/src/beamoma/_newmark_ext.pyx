# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Newmark stepping of uncoupled modal equations.

Same contract as :func:`beamoma._newmark_py.newmark_modal`. The force is
linear between samples, so the ``substeps`` Newmark steps of one sample
interval compose into one affine map ``x <- A x + g (f1 - f0)`` of the state
x = (u, v, a); the map is built per mode by stepping the unit states through
one interval, and the sample loop then applies it.
"""
import numpy as np


cdef inline void _interval(double* x, double df, int substeps, double keff, double c,
                           double c0, double c1, double c2, double c3, double c4, double c5) noexcept nogil:
    # incremental form: stepping on (du, dv, da) avoids the cancellation of
    # the large 1/h**2 terms against the state at fine substeps
    cdef int s
    cdef double du, dv, da
    for s in range(substeps):
        du = (df + (c2 + c4 * c) * x[1] + (c3 + c5 * c) * x[2]) / keff
        dv = c1 * du - c4 * x[1] - c5 * x[2]
        da = c0 * du - c2 * x[1] - c3 * x[2]
        x[0] += du
        x[1] += dv
        x[2] += da


def newmark_modal(const double[::1] omega2, const double[::1] damping, const double[:, ::1] forces,
                  double dt, int substeps, const double[::1] q0, const double[::1] v0,
                  double gamma=0.5, double beta=0.25):
    cdef Py_ssize_t n_samples = forces.shape[0]
    cdef Py_ssize_t n_modes = forces.shape[1]
    if omega2.shape[0] != n_modes or damping.shape[0] != n_modes:
        raise ValueError("omega2/damping length must equal the number of force columns")
    if q0.shape[0] != n_modes or v0.shape[0] != n_modes:
        raise ValueError("initial state length must equal the number of modes")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")

    u_arr = np.empty((n_samples, n_modes))
    v_arr = np.empty((n_samples, n_modes))
    a_arr = np.empty((n_samples, n_modes))
    cdef double[:, ::1] u_out = u_arr
    cdef double[:, ::1] v_out = v_arr
    cdef double[:, ::1] a_out = a_arr

    cdef double h = dt / substeps
    cdef double c0 = 1.0 / (beta * h * h)
    cdef double c1 = gamma / (beta * h)
    cdef double c2 = 1.0 / (beta * h)
    cdef double c3 = 1.0 / (2.0 * beta)
    cdef double c4 = gamma / beta
    cdef double c5 = h * (gamma / (2.0 * beta) - 1.0)
    cdef double inv_sub = 1.0 / substeps

    cdef Py_ssize_t j, n
    cdef int r, q
    cdef double k, c, keff, df, u, v, a
    cdef double A[3][3]
    cdef double g[3]
    cdef double x[3]

    with nogil:
        for j in range(n_modes):
            k = omega2[j]
            c = damping[j]
            keff = k + c0 + c1 * c
            for r in range(3):
                for q in range(3):
                    x[q] = 1.0 if q == r else 0.0
                _interval(x, 0.0, substeps, keff, c, c0, c1, c2, c3, c4, c5)
                for q in range(3):
                    A[q][r] = x[q]
            x[0] = 0.0
            x[1] = 0.0
            x[2] = 0.0
            _interval(x, inv_sub, substeps, keff, c, c0, c1, c2, c3, c4, c5)
            g[0] = x[0]
            g[1] = x[1]
            g[2] = x[2]

            u = q0[j]
            v = v0[j]
            a = forces[0, j] - c * v - k * u
            u_out[0, j] = u
            v_out[0, j] = v
            a_out[0, j] = a
            for n in range(n_samples - 1):
                df = forces[n + 1, j] - forces[n, j]
                x[0] = A[0][0] * u + A[0][1] * v + A[0][2] * a + g[0] * df
                x[1] = A[1][0] * u + A[1][1] * v + A[1][2] * a + g[1] * df
                x[2] = A[2][0] * u + A[2][1] * v + A[2][2] * a + g[2] * df
                u = x[0]
                v = x[1]
                a = x[2]
                u_out[n + 1, j] = u
                v_out[n + 1, j] = v
                a_out[n + 1, j] = a
    return u_arr, v_arr, a_arr
