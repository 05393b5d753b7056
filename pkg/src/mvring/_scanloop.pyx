# cython: boundscheck=False, wraparound=False, cdivision=True
# First-order linear recurrence kernels: h[l] = a[l] * h[l-1] + u[l].
# Multiply and add stay separate roundings (built with -ffp-contract=off),
# matching the numpy fallback bit for bit.


def linrec_f64(const double[:, ::1] a, const double[:, ::1] u,
               const double[::1] h0, double[:, ::1] out):
    cdef Py_ssize_t L = u.shape[0]
    cdef Py_ssize_t M = u.shape[1]
    cdef Py_ssize_t l, m
    if L == 0:
        return
    for m in range(M):
        out[0, m] = a[0, m] * h0[m] + u[0, m]
    for l in range(1, L):
        for m in range(M):
            out[l, m] = a[l, m] * out[l - 1, m] + u[l, m]


def linrec_f32(const float[:, ::1] a, const float[:, ::1] u,
               const float[::1] h0, float[:, ::1] out):
    cdef Py_ssize_t L = u.shape[0]
    cdef Py_ssize_t M = u.shape[1]
    cdef Py_ssize_t l, m
    if L == 0:
        return
    for m in range(M):
        out[0, m] = a[0, m] * h0[m] + u[0, m]
    for l in range(1, L):
        for m in range(M):
            out[l, m] = a[l, m] * out[l - 1, m] + u[l, m]
