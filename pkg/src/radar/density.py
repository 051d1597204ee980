"""Gaussian mixture density estimation over descriptor batches.

Fitting runs EM from a k-means++ initialization with one of four covariance
parameterizations (diagonal, full, tied, spherical).  A diagonal
regularization constant is added after every M-step to keep covariances
positive definite.  The per-iteration average log-likelihood trace is
recorded on the fitted model; by the EM ascent property it never decreases
beyond rounding.  All randomness flows through the caller's seed, so
identical (data, K, kind, seed) reproduce identical parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .seeds import derive_seed

try:  # fused JIT kernels; the numpy path below covers their absence
    from . import _em_kernels as _kernels
except ImportError:  # pragma: no cover - numba not installed
    _kernels = None

DEFAULT_REG = 1e-3
DEFAULT_MAX_ITER = 100
DEFAULT_TOL = 1e-6
STD_FLOOR = 1e-8

_LOG_2PI = math.log(2.0 * math.pi)


class DensityError(ValueError):
    pass


class CovarianceKind(str, Enum):
    DIAG = "diag"
    FULL = "full"
    TIED = "tied"
    SPHERICAL = "spherical"


def mixture_components(num_classes: int, cap: int = 50) -> int:
    """Component-count rule: twice the class count, capped."""
    return min(2 * num_classes, cap)


def kmeans_init(X: np.ndarray, k: int, seed: int) -> np.ndarray:
    """k-means++ seeding followed by Lloyd iterations (cap 100).

    Converges when assignments stop changing.  An empty cluster is re-seeded
    to the point currently farthest from its own center, which keeps all k
    centers meaningful on degenerate data.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < k:
        raise DensityError(f"need at least k={k} points, got {n}")
    rng = np.random.default_rng(derive_seed(seed, "kmeans"))

    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest_sq = np.full(n, np.inf)
    for i in range(1, k):
        dist_sq = ((X - centers[i - 1]) ** 2).sum(axis=1)
        np.minimum(closest_sq, dist_sq, out=closest_sq)
        total = closest_sq.sum()
        if total <= 0:  # all points coincide with chosen centers
            centers[i] = X[rng.integers(n)]
            continue
        centers[i] = X[rng.choice(n, p=closest_sq / total)]

    if _kernels is not None:
        assign = np.full(n, -1, dtype=np.int64)
        dmin = np.empty(n)
        for _ in range(100):
            sums, counts, changed = _kernels.lloyd_pass(X, centers, assign, dmin)
            for empty in np.flatnonzero(counts == 0):
                worst = int(dmin.argmax())
                old = assign[worst]
                sums[old] -= X[worst]
                counts[old] -= 1.0
                centers[empty] = X[worst]
                sums[empty] = X[worst]
                counts[empty] = 1.0
                assign[worst] = empty
                dmin[worst] = 0.0
                changed += 1
            if changed == 0:
                break
            nonempty = counts > 0
            centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        return centers

    assign = np.full(n, -1)
    x_sq = (X ** 2).sum(axis=1)[:, None]
    onehot = np.zeros((n, k))
    rows = np.arange(n)
    for _ in range(100):
        d2 = x_sq - 2.0 * X @ centers.T + (centers ** 2).sum(axis=1)[None, :]
        new_assign = d2.argmin(axis=1)
        for empty in np.setdiff1d(np.arange(k), np.unique(new_assign)):
            worst = d2[rows, new_assign].argmax()
            centers[empty] = X[worst]
            new_assign[worst] = empty
            d2[:, empty] = ((X - centers[empty]) ** 2).sum(axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        onehot[:] = 0.0
        onehot[rows, assign] = 1.0
        counts = onehot.sum(axis=0)
        sums = onehot.T @ X
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
    return centers


@dataclass
class GmmModel:
    """Fitted mixture: weights on the simplex, K x D means, covariances
    shaped per kind (diag K x D, full K x D x D, tied D x D, spherical K)."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    kind: CovarianceKind
    reg: float
    loglik_trace: tuple[float, ...] = field(default=(), repr=False)
    converged: bool = True

    @property
    def k(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    def _log_gauss(self, X: np.ndarray) -> np.ndarray:
        """[n, K] log N(x; mean_k, cov_k)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.dim:
            raise DensityError(f"dimension mismatch: {X.shape[1]} != {self.dim}")
        kind = self.kind
        d = self.dim
        if kind is CovarianceKind.DIAG or kind is CovarianceKind.SPHERICAL:
            if kind is CovarianceKind.SPHERICAL:
                var = np.repeat(self.covariances[:, None], d, axis=1)
            else:
                var = self.covariances
            inv = 1.0 / var
            quad = (
                (X ** 2) @ inv.T
                - 2.0 * X @ (self.means * inv).T
                + ((self.means ** 2) * inv).sum(axis=1)[None, :]
            )
            logdet = np.log(var).sum(axis=1)
            return -0.5 * (d * _LOG_2PI + logdet[None, :] + quad)
        if kind is CovarianceKind.TIED:
            chol = np.linalg.cholesky(self.covariances)
            logdet = 2.0 * np.log(np.diag(chol)).sum()
            out = np.empty((X.shape[0], self.k))
            for j in range(self.k):
                sol = np.linalg.solve(chol, (X - self.means[j]).T)
                out[:, j] = -0.5 * (d * _LOG_2PI + logdet + (sol ** 2).sum(axis=0))
            return out
        out = np.empty((X.shape[0], self.k))
        for j in range(self.k):
            chol = np.linalg.cholesky(self.covariances[j])
            logdet = 2.0 * np.log(np.diag(chol)).sum()
            sol = np.linalg.solve(chol, (X - self.means[j]).T)
            out[:, j] = -0.5 * (d * _LOG_2PI + logdet + (sol ** 2).sum(axis=0))
        return out

    def logpdf(self, X: np.ndarray) -> np.ndarray:
        """Mixture log-density via log-sum-exp; finite for finite inputs."""
        lg = self._log_gauss(X) + np.log(self.weights)[None, :]
        m = lg.max(axis=1, keepdims=True)
        return (m + np.log(np.exp(lg - m).sum(axis=1, keepdims=True)))[:, 0]

    def sample(self, m: int, seed: int) -> np.ndarray:
        """Draw m points: component by weight, then a Gaussian draw."""
        if m < 1:
            raise DensityError(f"m must be >= 1, got {m}")
        rng = np.random.default_rng(derive_seed(seed, "gmm-sample"))
        comps = rng.choice(self.k, size=m, p=self.weights)
        z = rng.standard_normal((m, self.dim))
        out = np.empty((m, self.dim))
        kind = self.kind
        tied_chol = (
            np.linalg.cholesky(self.covariances) if kind is CovarianceKind.TIED else None
        )
        for j in range(self.k):
            sel = comps == j
            if not sel.any():
                continue
            if kind is CovarianceKind.DIAG:
                out[sel] = self.means[j] + z[sel] * np.sqrt(self.covariances[j])
            elif kind is CovarianceKind.SPHERICAL:
                out[sel] = self.means[j] + z[sel] * math.sqrt(self.covariances[j])
            elif kind is CovarianceKind.TIED:
                out[sel] = self.means[j] + z[sel] @ tied_chol.T
            else:
                chol = np.linalg.cholesky(self.covariances[j])
                out[sel] = self.means[j] + z[sel] @ chol.T
        return out

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "kind": self.kind.value,
            "reg": self.reg,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GmmModel":
        return cls(
            weights=np.asarray(d["weights"], dtype=np.float64),
            means=np.asarray(d["means"], dtype=np.float64),
            covariances=np.asarray(d["covariances"], dtype=np.float64),
            kind=CovarianceKind(d["kind"]),
            reg=float(d["reg"]),
        )


def _m_step(
    X: np.ndarray,
    X2: np.ndarray,
    resp: np.ndarray,
    kind: CovarianceKind,
    reg: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, d = X.shape
    nk = resp.sum(axis=0) + 10.0 * np.finfo(np.float64).eps
    weights = nk / nk.sum()
    means = (resp.T @ X) / nk[:, None]
    if kind is CovarianceKind.DIAG or kind is CovarianceKind.SPHERICAL:
        avg_x2 = (resp.T @ X2) / nk[:, None]
        var = np.maximum(avg_x2 - means ** 2, 0.0)
        if kind is CovarianceKind.SPHERICAL:
            cov = var.mean(axis=1) + reg
        else:
            cov = var + reg
    elif kind is CovarianceKind.FULL:
        cov = np.empty((resp.shape[1], d, d))
        for j in range(resp.shape[1]):
            diff = X - means[j]
            cov[j] = (resp[:, j] * diff.T) @ diff / nk[j] + reg * np.eye(d)
    else:  # tied: pooled weighted scatter across components
        scatter = np.zeros((d, d))
        for j in range(resp.shape[1]):
            diff = X - means[j]
            scatter += (resp[:, j] * diff.T) @ diff
        cov = scatter / n + reg * np.eye(d)
    return weights, means, cov


def _log_gauss_diag_fast(
    X: np.ndarray, X2: np.ndarray, means: np.ndarray, var: np.ndarray
) -> np.ndarray:
    """GEMM-formulated diagonal/spherical log N(x; mu_k, var_k)."""
    d = X.shape[1]
    inv = 1.0 / var
    quad = X2 @ inv.T
    quad -= 2.0 * (X @ (means * inv).T)
    quad += ((means ** 2) * inv).sum(axis=1)[None, :]
    quad += d * _LOG_2PI + np.log(var).sum(axis=1)[None, :]
    quad *= -0.5
    return quad


def fit_gmm(
    X: np.ndarray,
    k: int,
    kind: CovarianceKind = CovarianceKind.DIAG,
    reg: float = DEFAULT_REG,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> GmmModel:
    """EM fit from k-means responsibilities.

    Stops when the average log-likelihood improves by less than ``tol``
    or after ``max_iter`` iterations.  The trace of average log-likelihood
    values (one per E-step) lands on the returned model.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1:
        raise DensityError(f"expected 2-D data, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise DensityError("non-finite values in training data")
    n, d = X.shape
    if n < k:
        raise DensityError(f"need at least k={k} rows, got {n}")

    kind = CovarianceKind(kind)
    centers = kmeans_init(X, k, seed=derive_seed(seed, "gmm-init"))
    X2 = X ** 2
    d2 = (
        X2.sum(axis=1)[:, None]
        - 2.0 * X @ centers.T
        + (centers ** 2).sum(axis=1)[None, :]
    )
    assign = d2.argmin(axis=1)
    resp = np.zeros((n, k))
    resp[np.arange(n), assign] = 1.0

    weights, means, cov = _m_step(X, X2, resp, kind, reg)
    fast_diag = kind in (CovarianceKind.DIAG, CovarianceKind.SPHERICAL)

    trace: list[float] = []
    prev = None
    converged = False
    eps10 = 10.0 * np.finfo(np.float64).eps
    if fast_diag and _kernels is not None:
        nk = np.empty(k)
        sx = np.empty((k, d))
        sx2 = np.empty((k, d))
        for _ in range(max_iter):
            var = (
                cov
                if kind is CovarianceKind.DIAG
                else np.repeat(cov[:, None], d, axis=1)
            )
            loglik = float(
                _kernels.em_step_diag(X, X2, np.log(weights), means, var, nk, sx, sx2)
            )
            trace.append(loglik)
            if prev is not None and abs(loglik - prev) < tol:
                converged = True
                break
            prev = loglik
            nke = nk + eps10
            weights = nke / nke.sum()
            means = sx / nke[:, None]
            var = np.maximum(sx2 / nke[:, None] - means ** 2, 0.0)
            cov = var.mean(axis=1) + reg if kind is CovarianceKind.SPHERICAL else var + reg
    else:
        for _ in range(max_iter):
            if fast_diag:
                var = (
                    cov
                    if kind is CovarianceKind.DIAG
                    else np.repeat(cov[:, None], d, axis=1)
                )
                lg = _log_gauss_diag_fast(X, X2, means, var)
            else:
                lg = GmmModel(
                    weights=weights, means=means, covariances=cov, kind=kind, reg=reg
                )._log_gauss(X)
            lg += np.log(weights)[None, :]
            m = lg.max(axis=1, keepdims=True)
            lg -= m
            np.exp(lg, out=lg)  # lg now holds unnormalized responsibilities
            norm = lg.sum(axis=1, keepdims=True)
            loglik = float((m + np.log(norm)).mean())
            trace.append(loglik)
            if prev is not None and abs(loglik - prev) < tol:
                converged = True
                break
            prev = loglik
            lg /= norm
            weights, means, cov = _m_step(X, X2, lg, kind, reg)
    model = GmmModel(weights=weights, means=means, covariances=cov, kind=kind, reg=reg)
    model.loglik_trace = tuple(trace)
    model.converged = converged
    return model


@dataclass(frozen=True)
class StandardizeStats:
    """Columnwise mean/std fitted on a baseline descriptor draw."""

    mean: np.ndarray
    std: np.ndarray  # floored at STD_FLOOR
    source: str = ""


def fit_standardizer(descriptors: np.ndarray, source: str = "") -> StandardizeStats:
    X = np.asarray(descriptors, dtype=np.float64)
    if X.size == 0:
        raise DensityError("cannot fit standardizer on empty descriptor batch")
    return StandardizeStats(
        mean=X.mean(axis=0),
        std=np.maximum(X.std(axis=0), STD_FLOOR),
        source=source,
    )


def apply_standardizer(stats: StandardizeStats, descriptors: np.ndarray) -> np.ndarray:
    X = np.asarray(descriptors, dtype=np.float64)
    return (X - stats.mean) / stats.std
