# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled slot assignment; same contract as ``wfpad._slots_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport ceil

cnp.import_array()


cdef inline long long _first_slot(double x, double rho) nogil:
    cdef long long k
    if x <= 0:
        return 0
    k = <long long>ceil(x / rho)
    while k > 0 and (k - 1) * rho >= x:
        k -= 1
    while k * rho < x:
        k += 1
    return k


def first_slot(double x, double rho):
    return _first_slot(x, rho)


def assign_slots(times, outgoing, double rho_out, double rho_in, bint pessimistic):
    cdef const double[:] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef const cnp.npy_bool[:] out = np.ascontiguousarray(outgoing, dtype=np.bool_)
    cdef Py_ssize_t n = t.shape[0]
    result = np.empty(n, dtype=np.int64)
    cdef long long[:] slots = result
    cdef double rho[2]
    cdef long long next_free[2]
    cdef double last_time[2]
    cdef Py_ssize_t i
    cdef int d
    cdef double r, lower
    cdef long long k
    rho[0] = rho_in
    rho[1] = rho_out
    next_free[0] = 0
    next_free[1] = 0
    last_time[0] = 0.0
    last_time[1] = 0.0
    with nogil:
        for i in range(n):
            d = 1 if out[i] else 0
            r = rho[d]
            lower = t[i]
            if pessimistic and lower < last_time[1 - d]:
                lower = last_time[1 - d]
            k = _first_slot(lower, r)
            if k < next_free[d]:
                k = next_free[d]
            slots[i] = k
            next_free[d] = k + 1
            last_time[d] = k * r
    return result
