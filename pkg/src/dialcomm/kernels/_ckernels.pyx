# cython: language_level=3
"""Compiled versions of the kernels in ``_reference.py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt

cnp.import_array()

cdef int STE = 0, DRU = 1, GS = 2, ST_DRU = 3, ST_GS = 4
cdef double PROB_CLAMP = 1e-10


cdef inline double _sigmoid(double z) noexcept nogil:
    # branch on sign so exp never overflows
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def discretize(int kind, bint train, x, n1, n2, double tau):
    if kind < 0 or kind > 4:
        raise ValueError(f"unknown discretizer kind {kind}")
    shape = np.shape(x)
    cdef const double[::1] xf = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xf.shape[0], i
    cdef const double[::1] a1 = xf
    cdef const double[::1] a2 = xf
    if kind != STE and (train or kind == GS or kind == ST_GS):
        a1 = np.ascontiguousarray(np.broadcast_to(n1, shape), dtype=np.float64).ravel()
    if kind == GS or kind == ST_GS:
        a2 = np.ascontiguousarray(np.broadcast_to(n2, shape), dtype=np.float64).ravel()
    m_arr = np.empty(n, dtype=np.float64)
    d_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] m = m_arr
    cdef double[::1] d = d_arr
    cdef double z, s, p, lp0, lp1, inv_tau = 1.0 / tau
    cdef bint inside
    with nogil:
        if (kind == STE or kind == DRU or kind == ST_DRU) and not train:
            for i in range(n):
                m[i] = 1.0 if xf[i] >= 0.0 else 0.0
                d[i] = 0.0
        elif kind == STE:
            for i in range(n):
                m[i] = 1.0 if xf[i] >= 0.0 else 0.0
                d[i] = 1.0
        elif kind == DRU:
            for i in range(n):
                s = _sigmoid(xf[i] + a1[i])
                m[i] = s
                d[i] = s * (1.0 - s)
        elif kind == ST_DRU:
            for i in range(n):
                z = xf[i] + a1[i]
                s = _sigmoid(z)
                m[i] = 1.0 if z >= 0.0 else 0.0
                d[i] = s * (1.0 - s)
        else:
            for i in range(n):
                p = _sigmoid(xf[i])
                inside = p > PROB_CLAMP and p < 1.0 - PROB_CLAMP
                if p < PROB_CLAMP:
                    p = PROB_CLAMP
                elif p > 1.0 - PROB_CLAMP:
                    p = 1.0 - PROB_CLAMP
                lp0 = log(p) + a1[i]
                lp1 = log(1.0 - p) + a2[i]
                if not train:
                    m[i] = 1.0 if lp0 >= lp1 else 0.0
                    d[i] = 0.0
                    continue
                s = _sigmoid((lp0 - lp1) * inv_tau)
                d[i] = s * (1.0 - s) * inv_tau if inside else 0.0
                if kind == GS:
                    m[i] = s
                else:
                    m[i] = 1.0 if lp0 >= lp1 else 0.0
    return m_arr.reshape(shape), d_arr.reshape(shape)


def integrate(double[:, ::1] pos, double[:, ::1] vel, cnp.int64_t[::1] actions,
              double dt, double damping, double accel, double max_speed):
    cdef Py_ssize_t n = pos.shape[0], i
    cdef double dx, dy, speed, scale
    cdef cnp.int64_t a
    with nogil:
        for i in range(n):
            a = actions[i]
            dx = 0.0
            dy = 0.0
            if a == 1:
                dx = 1.0
            elif a == 2:
                dx = -1.0
            elif a == 3:
                dy = 1.0
            elif a == 4:
                dy = -1.0
            vel[i, 0] = vel[i, 0] * (1.0 - damping) + accel * dt * dx
            vel[i, 1] = vel[i, 1] * (1.0 - damping) + accel * dt * dy
            speed = sqrt(vel[i, 0] * vel[i, 0] + vel[i, 1] * vel[i, 1])
            if speed > max_speed:
                scale = max_speed / speed
                vel[i, 0] *= scale
                vel[i, 1] *= scale
            pos[i, 0] += vel[i, 0] * dt
            pos[i, 1] += vel[i, 1] * dt
    return np.asarray(pos), np.asarray(vel)


def sample_categorical(double[:, ::1] probs, double[::1] uniforms):
    cdef Py_ssize_t n = probs.shape[0], k = probs.shape[1], i, j
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(n, dtype=np.int64)
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            out[i] = k - 1
            for j in range(k):
                acc += probs[i, j]
                if uniforms[i] < acc:
                    out[i] = j
                    break
    return out


def flip_bits(messages, mask):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mf = np.ascontiguousarray(messages, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] kf = np.ascontiguousarray(mask, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty_like(mf)
    cdef Py_ssize_t i
    with nogil:
        for i in range(mf.shape[0]):
            out[i] = mf[i] + kf[i] * (1.0 - 2.0 * mf[i])
    return out.reshape(np.shape(messages))
