"""Compiled data pass for Inference Gradient refinement.

Every update ``B_o -= coef * g q^T`` is rank one.  Updates are buffered per
symbol and folded into the dense operator every ``BUFFER`` updates, so a
matrix-vector product with an operator costs one dense product plus a few
buffered dot products instead of rewriting the whole matrix after every
position.
"""
from __future__ import annotations

import ctypes

import numba as nb
import numpy as np
from scipy.linalg import cython_blas

BUFFER = 32


def _blas_pointer(name):
    capsule = cython_blas.__pyx_capi__[name]
    get_name = ctypes.pythonapi.PyCapsule_GetName
    get_name.restype = ctypes.c_char_p
    get_name.argtypes = [ctypes.py_object]
    get_ptr = ctypes.pythonapi.PyCapsule_GetPointer
    get_ptr.restype = ctypes.c_void_p
    get_ptr.argtypes = [ctypes.py_object, ctypes.c_char_p]
    return get_ptr(capsule, get_name(capsule))


_P = ctypes.c_void_p
_dgemm = ctypes.CFUNCTYPE(None, *([_P] * 13))(_blas_pointer("dgemm"))


@nb.njit(cache=True)
def _apply(ops, ubuf, xbuf, cnt, i, v):
    y = ops[i] @ v
    n = cnt[i]
    if n > 0:
        y -= ubuf[i, :n].T @ (xbuf[i, :n] @ v)
    return y


@nb.njit(cache=True)
def _apply_t(ops, ubuf, xbuf, cnt, i, u):
    y = ops[i].T @ u
    n = cnt[i]
    if n > 0:
        y -= xbuf[i, :n].T @ (ubuf[i, :n] @ u)
    return y


@nb.njit
def _flush(ops, ubuf, xbuf, cnt, i, ints, dbl, chars):
    """``ops[i] -= ubuf[i, :n].T @ xbuf[i, :n]`` in place through BLAS dgemm.

    Row-major ``ops[i]`` is the column-major transpose, so the call computes
    ``ops[i]^T -= xbuf^T ubuf`` on column-major views.
    """
    n = cnt[i]
    if n == 0:
        return
    d = ops.shape[1]
    ints[0] = d
    ints[1] = n
    dbl[0] = -1.0
    dbl[1] = 1.0
    x = xbuf[i]
    u = ubuf[i]
    c = ops[i]
    _dgemm(chars[0:].ctypes.data, chars[1:].ctypes.data, ints[0:].ctypes.data,
           ints[0:].ctypes.data, ints[1:].ctypes.data, dbl[0:].ctypes.data,
           x.ctypes.data, ints[0:].ctypes.data, u.ctypes.data, ints[0:].ctypes.data,
           dbl[1:].ctypes.data, c.ctypes.data, ints[0:].ctypes.data)
    cnt[i] = 0


@nb.njit
def refine_pass(ops, b, q1, symbols, starts, lengths, fut, fut_starts, order,
                alpha, horizon, average, l1_normalize, eps, buffer=BUFFER):
    """One pass over the data in ``order``; mutates ``ops`` in place.

    ``fut[fut_starts[j] + t]`` lists the coordinates set in psi_t of
    sequence ``j``.  Returns the number of clamped denominators.
    """
    a, d, _ = ops.shape
    k = fut.shape[1]
    ubuf = np.zeros((a, buffer, d))
    xbuf = np.zeros((a, buffer, d))
    cnt = np.zeros(a, dtype=np.int64)
    vs = np.zeros((horizon + 1, d))
    dens = np.zeros(horizon + 1)
    us = np.zeros((horizon + 1, d))
    ints = np.zeros(2, dtype=np.int32)
    dbl = np.zeros(2)
    chars = np.array([ord("N"), ord("T")], dtype=np.uint8)
    clamps = 0

    for jj in range(order.shape[0]):
        j = order[jj]
        s0 = starts[j]
        npos = lengths[j] - k
        q = q1.copy()
        for t in range(npos):
            hmax = min(horizon, npos - t)
            v = q
            for h in range(1, hmax + 1):
                v = _apply(ops, ubuf, xbuf, cnt, symbols[s0 + t + h - 1], v)
                s = np.dot(b, v)
                if abs(s) < eps:
                    clamps += 1
                    s = -eps if s < 0 else eps
                vs[h] = v
                dens[h] = s
            # Residual factor for each horizon.
            for h in range(1, hmax + 1):
                qh = vs[h] / dens[h]
                r = -qh
                for c in range(k):
                    r[fut[fut_starts[j] + t + h, c]] += 1.0
                proj = np.dot(qh, r)
                us[h] = (b * proj - r) / dens[h]
            # Backpropagate through the later operators: g = sum_h C_h^T u_h.
            g = us[hmax].copy()
            for h in range(hmax - 1, 0, -1):
                g = _apply_t(ops, ubuf, xbuf, cnt, symbols[s0 + t + h], g) + us[h]
            if average:
                g /= hmax
            coef = alpha
            if l1_normalize:
                norm = np.sum(np.abs(g)) * np.sum(np.abs(q))
                coef = alpha / norm if norm > 0 else 0.0
            o = symbols[s0 + t]
            q_next = vs[1] / dens[1]
            if coef != 0.0:
                m = cnt[o]
                ubuf[o, m] = coef * g
                xbuf[o, m] = q
                cnt[o] = m + 1
                if cnt[o] == buffer:
                    _flush(ops, ubuf, xbuf, cnt, o, ints, dbl, chars)
            q = q_next
    for i in range(a):
        _flush(ops, ubuf, xbuf, cnt, i, ints, dbl, chars)
    return clamps
