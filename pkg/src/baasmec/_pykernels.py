"""Pure numpy/Python kernels; reference behaviour for ``_ckernels``."""
import numpy as np


def mlp_forward_vec(x, weights, biases, sigmoid_out=False):
    h = np.asarray(x, dtype=np.float64)
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        h = h @ W + b
        if i < last:
            h = np.maximum(h, 0.0)
    if sigmoid_out:
        h = 1.0 / (1.0 + np.exp(-h))
    return h


def masked_argmax(q, mask):
    best = -1
    best_val = -np.inf
    for i in range(len(q)):
        if mask[i] and (best < 0 or q[i] > best_val):
            best = i
            best_val = q[i]
    return best


def score_population(ues, levels, demands, sizes, hash_levels, capacity, price,
                     total_hash, mining_factor, w_reward, w_revenue, w_latency):
    ues = np.asarray(ues)
    levels = np.asarray(levels)
    xi = demands[ues]
    mining = mining_factor * hash_levels[levels] / total_hash
    per_server = w_reward * mining + w_revenue * price * xi - w_latency * sizes[ues] * xi / capacity
    return per_server.sum(axis=1)


def repair_population(ues, levels, num_ues, hash_levels, total_hash):
    """Make every individual feasible in place.

    Duplicate UEs are replaced by the lowest unused index; then the highest
    hash level (lowest server index on ties) is lowered until the budget holds.
    """
    P, M = ues.shape
    for i in range(P):
        used = [False] * num_ues
        for m in range(M):
            u = ues[i, m]
            if u < 0 or u >= num_ues or used[u]:
                u = used.index(False)
                ues[i, m] = u
            used[u] = True
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
