# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kinetic kernels. Same contract as ``_kernels_py``; the loops
release the GIL so the thread pool can run sub-ranges concurrently."""
from libc.math cimport fabs, fmin, fmax
from libc.stdlib cimport malloc, free

NAME = "cython"


cdef inline double _minmod(double a, double b) noexcept nogil:
    if a * b > 0.0:
        if a > 0.0:
            return fmin(a, b)
        return fmax(a, b)
    return 0.0


cdef inline double _limit(double f, double a, double b, int limiter) noexcept nogil:
    cdef double c
    if limiter == 0:
        return 0.5 * (a + b)
    if limiter == 1:
        return _minmod(a, b)
    c = 0.5 * (a + b)
    if f - 0.5 * fabs(c) >= 0.0:
        return c
    return _minmod(a, b)


cdef inline double _theta_face(const double[:, :, ::1] F, Py_ssize_t k, Py_ssize_t i,
                               Py_ssize_t j, Py_ssize_t n, double v, int limiter) noexcept nogil:
    # flux through the face between cell i and cell i+1 (periodic)
    cdef Py_ssize_t im, ip, ipp
    cdef double s
    if v > 0.0:
        im = (i - 1 + n) % n
        ip = (i + 1) % n
        s = _limit(F[k, i, j], F[k, i, j] - F[k, im, j], F[k, ip, j] - F[k, i, j], limiter)
        return v * (F[k, i, j] + 0.5 * s)
    ip = (i + 1) % n
    ipp = (i + 2) % n
    s = _limit(F[k, ip, j], F[k, ip, j] - F[k, i, j], F[k, ipp, j] - F[k, ip, j], limiter)
    return v * (F[k, ip, j] - 0.5 * s)


def theta_rhs(const double[:, :, ::1] F, const double[:, ::1] vel, double inv_dth,
              int limiter, double[:, :, ::1] out, Py_ssize_t j0, Py_ssize_t j1):
    cdef Py_ssize_t nk = F.shape[0], n = F.shape[1]
    cdef Py_ssize_t k, i, j
    cdef double v, fl_prev, fl_last, fl
    with nogil:
        for k in range(nk):
            for j in range(j0, j1):
                v = vel[k, j]
                fl_last = _theta_face(F, k, n - 1, j, n, v, limiter)
                fl_prev = fl_last
                for i in range(n):
                    if i == n - 1:
                        fl = fl_last
                    else:
                        fl = _theta_face(F, k, i, j, n, v, limiter)
                    out[k, i, j] = -(fl - fl_prev) * inv_dth
                    fl_prev = fl


def omega_rhs(const double[:, ::1] F2, Py_ssize_t n_theta, const double[:, ::1] drift0,
              const double[::1] S, double inv_m, double kappa, double inv_dom, int limiter,
              double[:, ::1] out2, Py_ssize_t r0, Py_ssize_t r1):
    cdef Py_ssize_t n = F2.shape[1]
    cdef Py_ssize_t r, k, i, j
    cdef double A, fl, fl_prev, ks
    cdef double *s
    if r1 <= r0:
        return
    s = <double *> malloc(n * sizeof(double))
    if s == NULL:
        raise MemoryError()
    try:
        with nogil:
            for r in range(r0, r1):
                k = r // n_theta
                i = r % n_theta
                s[0] = 0.0
                s[n - 1] = 0.0
                for j in range(1, n - 1):
                    s[j] = _limit(F2[r, j], F2[r, j] - F2[r, j - 1], F2[r, j + 1] - F2[r, j], limiter)
                ks = kappa * S[i]
                fl_prev = 0.0
                for j in range(n - 1):
                    A = inv_m * (drift0[k, j] + ks)
                    if A > 0.0:
                        fl = A * (F2[r, j] + 0.5 * s[j])
                    else:
                        fl = A * (F2[r, j + 1] - 0.5 * s[j + 1])
                    out2[r, j] = -(fl - fl_prev) * inv_dom
                    fl_prev = fl
                out2[r, n - 1] = -(0.0 - fl_prev) * inv_dom
    finally:
        free(s)


def laplacian_update(const double[:, ::1] F2, double coef, double[:, ::1] out2,
                     Py_ssize_t r0, Py_ssize_t r1):
    cdef Py_ssize_t n = F2.shape[1]
    cdef Py_ssize_t r, j
    cdef double dl, dr
    with nogil:
        for r in range(r0, r1):
            for j in range(n):
                dr = F2[r, j + 1] - F2[r, j] if j < n - 1 else 0.0
                dl = F2[r, j] - F2[r, j - 1] if j > 0 else 0.0
                out2[r, j] = F2[r, j] + coef * (dr - dl)


def thomas_solve(const double[:, ::1] R2, double sub, const double[::1] cp,
                 const double[::1] minv, double[:, ::1] out2, Py_ssize_t r0, Py_ssize_t r1):
    cdef Py_ssize_t n = R2.shape[1]
    cdef Py_ssize_t r, j
    with nogil:
        for r in range(r0, r1):
            out2[r, 0] = R2[r, 0] * minv[0]
            for j in range(1, n):
                out2[r, j] = (R2[r, j] - sub * out2[r, j - 1]) * minv[j]
            for j in range(n - 2, -1, -1):
                out2[r, j] = out2[r, j] - cp[j] * out2[r, j + 1]
