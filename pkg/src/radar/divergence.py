"""Divergence estimators between within- and cross-domain descriptor sets.

Four estimators back the score: a Monte-Carlo weighted symmetric KL between
fitted mixtures, sliced Wasserstein between mixture draws, a debiased
log-domain Sinkhorn divergence on empirical point sets, and an unbiased
Gaussian-kernel MMD.  All are deterministic given their seed; pairwise-cost
estimators expect the caller to cap point counts (they are O(n^2) in memory).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .density import GmmModel
from .seeds import derive_seed


class DivergenceError(ValueError):
    pass


@dataclass(frozen=True)
class DivergenceResult:
    value: float
    algo: str
    mc_std_error: Optional[float]
    seed: int


def kl_mc(p: GmmModel, q: GmmModel, m: int, seed: int) -> tuple[float, float]:
    """Monte-Carlo estimate of KL(P || Q) with its standard error.

    Draws x ~ P and averages log p(x) - log q(x); unbiased for any mixture
    pair and exact (zero variance) when P and Q share parameters.
    """
    if p.dim != q.dim:
        raise DivergenceError(f"dimension mismatch: {p.dim} != {q.dim}")
    x = p.sample(m, seed=derive_seed(seed, "kl-draw"))
    vals = p.logpdf(x) - q.logpdf(x)
    se = float(vals.std(ddof=1) / math.sqrt(m)) if m > 1 else float("inf")
    return float(vals.mean()), se


def sym_weighted_kl(
    p: GmmModel, q: GmmModel, n_a: int, n_b: int, m: int, seed: int
) -> DivergenceResult:
    """Size-weighted symmetric KL:
    n_a/(n_a+n_b) * KL(P||Q) + n_b/(n_a+n_b) * KL(Q||P)."""
    if n_a < 1 or n_b < 1:
        raise DivergenceError(f"sample counts must be >= 1, got {n_a}, {n_b}")
    w_a = n_a / (n_a + n_b)
    w_b = n_b / (n_a + n_b)
    kl_pq, se_pq = kl_mc(p, q, m, derive_seed(seed, "kl", "pq"))
    kl_qp, se_qp = kl_mc(q, p, m, derive_seed(seed, "kl", "qp"))
    value = w_a * kl_pq + w_b * kl_qp
    se = math.sqrt((w_a * se_pq) ** 2 + (w_b * se_qp) ** 2)
    return DivergenceResult(value=value, algo="gmm-kl", mc_std_error=se, seed=seed)


def swd(
    samples_a: np.ndarray, samples_b: np.ndarray, n_projections: int, seed: int
) -> float:
    """Sliced Wasserstein distance: mean over random unit directions of the
    1-D 2-Wasserstein distance between the projected empirical distributions.

    Unequal sample counts are handled by evaluating both empirical quantile
    functions on a common grid of max(n_a, n_b) points (the smaller side's
    sorted values repeat).
    """
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DivergenceError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] < 1 or b.shape[0] < 1:
        raise DivergenceError("need at least one sample on each side")
    rng = np.random.default_rng(derive_seed(seed, "swd-projections"))
    dirs = rng.standard_normal((n_projections, a.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    proj_a = np.sort(a @ dirs.T, axis=0)
    proj_b = np.sort(b @ dirs.T, axis=0)
    m = max(proj_a.shape[0], proj_b.shape[0])
    if proj_a.shape[0] != m:
        proj_a = proj_a[(np.arange(m) * proj_a.shape[0]) // m]
    if proj_b.shape[0] != m:
        proj_b = proj_b[(np.arange(m) * proj_b.shape[0]) // m]
    w2 = np.sqrt(((proj_a - proj_b) ** 2).mean(axis=0))
    return float(w2.mean())


def _softmin(cost, potential, log_w, eps, axis, buf):
    """-eps * logsumexp((potential - C)/eps + log_w) along ``axis``.

    ``buf`` is a preallocated cost-shaped scratch array; uniform weights make
    log_w a scalar.
    """
    if axis == 1:
        np.subtract(potential[None, :], cost, out=buf)
    else:
        np.subtract(potential[:, None], cost, out=buf)
    buf /= eps
    mx = buf.max(axis=axis)
    buf -= mx[:, None] if axis == 1 else mx[None, :]
    np.exp(buf, out=buf)
    return -eps * (mx + log_w + np.log(buf.sum(axis=axis)))


def _ot_eps(a: np.ndarray, b: np.ndarray, eps: float, max_iter: int, tol: float
            ) -> tuple[float, bool]:
    """Entropic OT cost between uniform empirical measures, log-domain.

    Returns <alpha, f> + <beta, g> at the Sinkhorn fixed point, where the
    regularization is eps * KL(pi | alpha x beta) and the cost is squared
    Euclidean.  An annealing schedule starts from a cost-scale epsilon and
    halves down to the target, which keeps iteration counts manageable when
    eps is far below the cost scale.  Convergence is the L1 violation of the
    first marginal (the second is exact after every g update); the check
    reuses the next f update, so each iteration is two softmin passes.
    """
    n, m = a.shape[0], b.shape[0]
    cost = cdist(a, b, metric="sqeuclidean")
    log_wa = -math.log(n)
    log_wb = -math.log(m)
    buf = np.empty_like(cost)

    f = np.zeros(n)
    g = np.zeros(m)
    # annealing warm start: geometric from ~max cost down to target eps
    warm = float(cost.max())
    while warm > eps * 1.5:
        f = _softmin(cost, g, log_wb, warm, 1, buf)
        g = _softmin(cost, f, log_wa, warm, 0, buf)
        warm *= 0.5

    converged = False
    it = 0
    while it < max_iter:
        f_new = _softmin(cost, g, log_wb, eps, 1, buf)
        if it > 0:
            err = float(np.abs(np.exp((f - f_new) / eps) - 1.0).sum()) / n
            if err < tol:
                f = f_new
                converged = True
                break
        f = f_new
        g = _softmin(cost, f, log_wa, eps, 0, buf)
        it += 1
    value = float(f.mean() + g.mean())
    return value, converged


def sinkhorn_divergence(
    a: np.ndarray,
    b: np.ndarray,
    epsilon: float = 0.05,
    max_iter: int = 1000,
    tol: float = 1e-6,
    debiased: bool = True,
) -> float:
    """Debiased Sinkhorn divergence S(A,B) = OT(A,B) - OT(A,A)/2 - OT(B,B)/2
    on uniform empirical measures with squared-Euclidean cost.

    All three terms run the same iteration, so identical inputs cancel to
    exactly zero.  Warns (and still returns the value) if any term fails to
    reach ``tol`` within ``max_iter``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DivergenceError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if epsilon <= 0:
        raise DivergenceError(f"epsilon must be > 0, got {epsilon}")
    if debiased and a.shape == b.shape and np.array_equal(a, b):
        return 0.0  # the three terms cancel exactly
    ot_ab, conv_ab = _ot_eps(a, b, epsilon, max_iter, tol)
    if not debiased:
        if not conv_ab:
            warnings.warn(f"sinkhorn did not converge within {max_iter} iterations")
        return ot_ab
    ot_aa, conv_aa = _ot_eps(a, a, epsilon, max_iter, tol)
    ot_bb, conv_bb = _ot_eps(b, b, epsilon, max_iter, tol)
    if not (conv_ab and conv_aa and conv_bb):
        warnings.warn(f"sinkhorn did not converge within {max_iter} iterations")
    return ot_ab - 0.5 * ot_aa - 0.5 * ot_bb


def median_heuristic(pooled: np.ndarray) -> float:
    """Median pairwise Euclidean distance over the pooled sample set."""
    dists = pdist(np.asarray(pooled, dtype=np.float64))
    med = float(np.median(dists))
    return max(med, 1e-12)


def mmd_gaussian(
    a: np.ndarray,
    b: np.ndarray,
    bandwidth: float | str = "median",
    unbiased: bool = True,
) -> float:
    """Gaussian-kernel MMD^2 with kernel exp(-||u-v||^2 / (2 sigma^2)).

    The unbiased estimator (default) excludes within-set diagonals and is
    clamped at zero (it can dip negative for close distributions); pass
    ``unbiased=False`` for the biased V-statistic, which also accepts
    single-sample inputs.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DivergenceError(f"dimension mismatch: {a.shape} vs {b.shape}")
    m, n = a.shape[0], b.shape[0]
    if unbiased and (m < 2 or n < 2):
        raise DivergenceError("unbiased MMD needs at least 2 samples per side")
    if bandwidth == "median":
        sigma = median_heuristic(np.vstack([a, b]))
    else:
        sigma = float(bandwidth)
        if sigma <= 0:
            raise DivergenceError(f"bandwidth must be > 0, got {sigma}")
    gamma = 1.0 / (2.0 * sigma * sigma)
    k_aa = np.exp(-gamma * cdist(a, a, metric="sqeuclidean"))
    k_bb = np.exp(-gamma * cdist(b, b, metric="sqeuclidean"))
    k_ab = np.exp(-gamma * cdist(a, b, metric="sqeuclidean"))
    if unbiased:
        term_a = (k_aa.sum() - np.trace(k_aa)) / (m * (m - 1))
        term_b = (k_bb.sum() - np.trace(k_bb)) / (n * (n - 1))
    else:
        term_a = k_aa.mean()
        term_b = k_bb.mean()
    raw = float(term_a + term_b - 2.0 * k_ab.mean())
    return max(raw, 0.0) if unbiased else raw
