"""Fused EM step for diagonal-family mixtures, JIT-compiled when numba is
available.

The kernel walks the data once per iteration, accumulating the
log-likelihood and the responsibility-weighted sufficient statistics without
materializing the responsibility matrix.  Serial row order keeps the
accumulation deterministic.  ``import radar._em_kernels`` raises ImportError
when numba is missing; callers fall back to the numpy path.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def em_step_diag(X, X2, log_w, means, var, out_nk, out_sx, out_sx2):
    """One E-step plus sufficient-statistic accumulation.

    Returns the average log-likelihood of the current parameters; fills
    out_nk (k,), out_sx (k,d), out_sx2 (k,d) with responsibility-weighted
    counts, sums, and squared sums for the caller's M-step.
    """
    n, d = X.shape
    k = means.shape[0]
    log2pi = 1.8378770664093453
    inv = 1.0 / var
    cst = np.empty(k)
    for j in range(k):
        s = 0.0
        for t in range(d):
            s += means[j, t] * means[j, t] * inv[j, t] + np.log(var[j, t])
        cst[j] = -0.5 * (s + d * log2pi) + log_w[j]
    for j in range(k):
        out_nk[j] = 0.0
        for t in range(d):
            out_sx[j, t] = 0.0
            out_sx2[j, t] = 0.0
    total = 0.0
    p = np.empty(k)
    for i in range(n):
        mx = -1.0e300
        for j in range(k):
            q = 0.0
            for t in range(d):
                q += (X[i, t] * means[j, t] - 0.5 * X2[i, t]) * inv[j, t]
            p[j] = cst[j] + q
            if p[j] > mx:
                mx = p[j]
        s = 0.0
        for j in range(k):
            p[j] = np.exp(p[j] - mx)
            s += p[j]
        total += mx + np.log(s)
        for j in range(k):
            r = p[j] / s
            out_nk[j] += r
            for t in range(d):
                out_sx[j, t] += r * X[i, t]
                out_sx2[j, t] += r * X2[i, t]
    return total / n


@njit(cache=True)
def lloyd_pass(X, centers, assign, dmin):
    """One Lloyd pass: assign points and accumulate per-cluster sums.

    ``dmin`` receives each point's squared distance to its assigned center
    (used by the empty-cluster re-seeding rule).  Returns (sums, counts,
    number of changed assignments).
    """
    n, d = X.shape
    k = centers.shape[0]
    sums = np.zeros((k, d))
    counts = np.zeros(k)
    changed = 0
    for i in range(n):
        best = 0
        best_d = 1.0e300
        for j in range(k):
            dist = 0.0
            for t in range(d):
                diff = X[i, t] - centers[j, t]
                dist += diff * diff
            if dist < best_d:
                best_d = dist
                best = j
        if assign[i] != best:
            changed += 1
            assign[i] = best
        dmin[i] = best_d
        counts[best] += 1.0
        for t in range(d):
            sums[best, t] += X[i, t]
    return sums, counts, changed
