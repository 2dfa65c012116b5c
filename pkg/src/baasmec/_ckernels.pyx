# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops; same contracts as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def mlp_forward_vec(x, list weights, list biases, bint sigmoid_out=False):
    cdef double[::1] h = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] W
    cdef double[::1] b
    cdef double[::1] out
    cdef Py_ssize_t i, j, k, n_in, n_out, last = len(weights) - 1
    cdef double acc
    for k in range(last + 1):
        W = weights[k]
        b = biases[k]
        n_in = W.shape[0]
        n_out = W.shape[1]
        if h.shape[0] != n_in:
            raise ValueError("input length does not match layer fan-in")
        out = np.empty(n_out, dtype=np.float64)
        for j in range(n_out):
            out[j] = b[j]
        for i in range(n_in):
            acc = h[i]
            if acc != 0.0:
                for j in range(n_out):
                    out[j] += acc * W[i, j]
        if k < last:
            for j in range(n_out):
                if out[j] < 0.0:
                    out[j] = 0.0
        h = out
    if sigmoid_out:
        for j in range(h.shape[0]):
            h[j] = 1.0 / (1.0 + exp(-h[j]))
    return np.asarray(h)


def masked_argmax(double[::1] q, mask):
    cdef cnp.uint8_t[::1] mk = np.ascontiguousarray(mask, dtype=np.bool_).view(np.uint8)
    cdef Py_ssize_t i, best = -1
    cdef double best_val = 0.0
    for i in range(q.shape[0]):
        if mk[i] and (best < 0 or q[i] > best_val):
            best = i
            best_val = q[i]
    return best


def score_population(ues, levels, double[::1] demands, double[::1] sizes, double[::1] hash_levels,
                     double capacity, double price, double total_hash, double mining_factor,
                     double w_reward, double w_revenue, double w_latency):
    cdef cnp.int64_t[:, ::1] U = np.ascontiguousarray(ues, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] L = np.ascontiguousarray(levels, dtype=np.int64)
    cdef Py_ssize_t P = U.shape[0], M = U.shape[1], i, m
    cdef double[::1] out = np.zeros(P, dtype=np.float64)
    cdef double s, xi
    cdef cnp.int64_t u
    for i in range(P):
        s = 0.0
        for m in range(M):
            u = U[i, m]
            xi = demands[u]
            s += (w_reward * (mining_factor * hash_levels[L[i, m]] / total_hash)
                  + w_revenue * price * xi - w_latency * sizes[u] * xi / capacity)
        out[i] = s
    return np.asarray(out)


def repair_population(cnp.int64_t[:, ::1] ues, cnp.int64_t[:, ::1] levels, Py_ssize_t num_ues,
                      double[::1] hash_levels, double total_hash):
    cdef Py_ssize_t P = ues.shape[0], M = ues.shape[1], i, m, top, v
    cdef cnp.int64_t u
    cdef double total, h
    cdef bint over
    cdef cnp.uint8_t[::1] used = np.zeros(num_ues, dtype=np.uint8)
    for i in range(P):
        for v in range(num_ues):
            used[v] = 0
        for m in range(M):
            u = ues[i, m]
            if u < 0 or u >= num_ues or used[u]:
                u = 0
                while used[u]:
                    u += 1
                ues[i, m] = u
            used[u] = 1
        while True:
            total = 0.0
            over = False
            for m in range(M):
                h = hash_levels[levels[i, m]]
                total += h
                if h >= total_hash:
                    over = True
            if total <= total_hash and not over:
                break
            top = 0
            for m in range(1, M):
                if levels[i, m] > levels[i, top]:
                    top = m
            if levels[i, top] == 0:
                break
            levels[i, top] -= 1
