"""Stratified, inlier-weighted sampling of within- and cross-domain pairs.

Pairs are allocated as evenly as possible across class-pair strata (c_i, c_j),
then drawn inside each stratum by the strategy's product weights:

    inlier-inlier   p(x, x') ~ w_reg(x) * w_reg(x')
    inlier-outlier  p(x, x') ~ w_reg(x) * (1 - w_reg(x'))

where w(x) = 1 - min-max-normalized distance of x to its domain-specific
class centroid, and w_reg is the temperature-regulated form of w.  Two
regulated forms exist because the published formula w_reg = exp(-w/tau) is
decreasing in w (down-weighting inliers) while the surrounding text calls for
inliers to receive higher probability; ``appendix`` implements the formula
as written, ``monotone`` the increasing variant exp((w-1)/tau).  Both are
clamped to [0.1, 1.0].

Everything is deterministic given the seed: each (stratum, half) derives an
independent child seed, and without-replacement draws use exponential-key
order statistics (keys Exp(1)/weight, smallest kept), which realizes exact
weighted sampling without replacement.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .pack import FeaturePack
from .seeds import derive_seed

WEIGHT_CLAMP = (0.1, 1.0)

# Cell budget per RNG chunk when streaming exponential keys over a stratum
# grid; bounds memory without affecting determinism (chunking is input-fixed).
_KEY_CHUNK_CELLS = 4_000_000


class SamplingError(ValueError):
    """Unachievable request or invalid strategy parameters."""


class StrategyKind(str, Enum):
    UNIFORM = "uniform"
    POSITIVE = "positive"
    NEGATIVE = "negative"
    MIX = "mix"


class WeightTransform(str, Enum):
    APPENDIX = "appendix"  # exp(-w/tau), decreasing in w, as published
    MONOTONE = "monotone"  # exp((w-1)/tau), increasing in w, equal range


@dataclass(frozen=True)
class SamplingStrategy:
    kind: StrategyKind = StrategyKind.MIX
    replacement: bool = False
    tau: float = 2.0
    weight_transform: WeightTransform = WeightTransform.APPENDIX

    def __post_init__(self):
        if self.tau <= 0:
            raise SamplingError(f"tau must be > 0, got {self.tau}")


@dataclass
class PairSet:
    anchors: np.ndarray  # global pack row indices
    partners: np.ndarray
    kind: str  # "within" | "cross" | "baseline"
    layer_basis: int  # layer used for weights/centroids
    seed: int
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.anchors.shape[0])


def class_centroids(features: np.ndarray, labels: np.ndarray) -> dict[int, np.ndarray]:
    """Per-class mean vectors; classes with no samples are simply absent."""
    features = np.asarray(features, dtype=np.float64)
    out = {}
    for c in np.unique(labels):
        out[int(c)] = features[labels == c].mean(axis=0)
    return out


def inlier_weights(features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """w(x) = 1 - min-max-normalized distance to the class centroid.

    Normalization happens within each class group; a group whose distances
    are all equal (including singletons) gets w = 1 for every member.
    """
    features = np.asarray(features, dtype=np.float64)
    centroids = class_centroids(features, labels)
    w = np.ones(features.shape[0], dtype=np.float64)
    for c, centroid in centroids.items():
        idx = np.flatnonzero(labels == c)
        dist = np.linalg.norm(features[idx] - centroid, axis=1)
        lo, hi = dist.min(), dist.max()
        if hi > lo:
            w[idx] = 1.0 - (dist - lo) / (hi - lo)
        # else: degenerate group, keep w = 1
    return w


def transform_weights(
    w: np.ndarray, tau: float, transform: WeightTransform = WeightTransform.APPENDIX
) -> np.ndarray:
    """Temperature-regulated weights, clamped to [0.1, 1.0]."""
    if tau <= 0:
        raise SamplingError(f"tau must be > 0, got {tau}")
    w = np.asarray(w, dtype=np.float64)
    if WeightTransform(transform) is WeightTransform.APPENDIX:
        reg = np.exp(-w / tau)
    else:
        reg = np.exp((w - 1.0) / tau)
    return np.clip(reg, WEIGHT_CLAMP[0], WEIGHT_CLAMP[1])


def _allocate_even(n: int, caps: list[float], what: str) -> list[int]:
    """Even split over strata with caps; remainder round-robin; capped strata
    spill their unmet share to the remaining ones deterministically."""
    m = len(caps)
    counts = [0] * m
    remaining = n
    while remaining > 0:
        active = [i for i in range(m) if counts[i] < caps[i]]
        if not active:
            available = sum(int(c) for c in caps if math.isfinite(c))
            raise SamplingError(
                f"{what}: requested {n} pairs but only {available} are "
                f"available without replacement (shortfall {remaining})"
            )
        base, extra = divmod(remaining, len(active))
        for rank, i in enumerate(active):
            want = base + (1 if rank < extra else 0)
            if math.isfinite(caps[i]):
                want = min(want, int(caps[i]) - counts[i])
            counts[i] += want
            remaining -= want
    return counts


def _positions_of(sorted_rows: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Positions of values inside an ascending array (-1 where absent)."""
    if sorted_rows.size == 0:
        return np.full(values.shape, -1, dtype=np.int64)
    pos = np.searchsorted(sorted_rows, values)
    pos_clamped = np.minimum(pos, sorted_rows.size - 1)
    hit = sorted_rows[pos_clamped] == values
    return np.where(hit, pos_clamped, -1).astype(np.int64)


def _excluded_positions(
    a_rows: np.ndarray, p_rows: np.ndarray, excluded: set[tuple[int, int]]
) -> tuple[np.ndarray, np.ndarray]:
    """(i, j) stratum-local positions of excluded (anchor, partner) pairs."""
    if not excluded:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    ea = np.fromiter((a for a, _ in excluded), dtype=np.int64, count=len(excluded))
    ep = np.fromiter((p for _, p in excluded), dtype=np.int64, count=len(excluded))
    ia = _positions_of(a_rows, ea)
    jp = _positions_of(p_rows, ep)
    ok = (ia >= 0) & (jp >= 0)
    return ia[ok], jp[ok]


def _draw_without_replacement(
    rng: np.random.Generator,
    a_rows: np.ndarray,
    p_rows: np.ndarray,
    wa: np.ndarray,
    wb: np.ndarray,
    count: int,
    exclude_diag: bool,
    excluded: set[tuple[int, int]],
) -> tuple[np.ndarray, np.ndarray]:
    """Top-``count`` pairs by exponential key Exp(1)/(wa*wb), streamed in
    anchor chunks so large strata never materialize the full grid."""
    n_b = p_rows.size
    rows_per_chunk = max(1, _KEY_CHUNK_CELLS // max(n_b, 1))
    exc_i, exc_j = _excluded_positions(a_rows, p_rows, excluded)
    best_keys = np.empty(0)
    best_flat = np.empty(0, dtype=np.int64)
    for start in range(0, a_rows.size, rows_per_chunk):
        a_chunk = a_rows[start : start + rows_per_chunk]
        keys = rng.exponential(size=(a_chunk.size, n_b))
        weight = np.outer(wa[start : start + a_chunk.size], wb)
        keys = np.where(weight > 0, keys / np.maximum(weight, 1e-300), np.inf)
        if exclude_diag:
            pos = _positions_of(p_rows, a_chunk)
            has = np.flatnonzero(pos >= 0)
            keys[has, pos[has]] = np.inf
        in_chunk = (exc_i >= start) & (exc_i < start + a_chunk.size)
        keys[exc_i[in_chunk] - start, exc_j[in_chunk]] = np.inf
        flat_keys = keys.ravel()
        finite = np.flatnonzero(np.isfinite(flat_keys))
        flat_idx = (start * n_b + finite).astype(np.int64)
        all_keys = np.concatenate([best_keys, flat_keys[finite]])
        all_flat = np.concatenate([best_flat, flat_idx])
        if all_keys.size > count:
            top = np.argpartition(all_keys, count - 1)[:count]
            best_keys, best_flat = all_keys[top], all_flat[top]
        else:
            best_keys, best_flat = all_keys, all_flat
    if best_keys.size < count:
        raise SamplingError(
            f"stratum exhausted: needed {count}, found {best_keys.size} admissible pairs"
        )
    order = np.argsort(best_keys, kind="stable")
    chosen = best_flat[order]
    return a_rows[chosen // n_b], p_rows[chosen % n_b]


def _draw_with_replacement(
    rng: np.random.Generator,
    a_rows: np.ndarray,
    p_rows: np.ndarray,
    wa: np.ndarray,
    wb: np.ndarray,
    count: int,
    exclude_diag: bool,
) -> tuple[np.ndarray, np.ndarray]:
    pa = wa / wa.sum()
    pb = wb / wb.sum()
    anchors = a_rows[rng.choice(a_rows.size, size=count, p=pa)]
    partners = p_rows[rng.choice(p_rows.size, size=count, p=pb)]
    if exclude_diag:
        for attempt in range(200):
            bad = anchors == partners
            if not bad.any():
                break
            n_bad = int(bad.sum())
            partners[bad] = p_rows[rng.choice(p_rows.size, size=n_bad, p=pb)]
            if attempt % 10 == 9:  # anchor may have no admissible partner at all
                bad = anchors == partners
                if bad.any():
                    anchors[bad] = a_rows[
                        rng.choice(a_rows.size, size=int(bad.sum()), p=pa)
                    ]
        if (anchors == partners).any():
            raise SamplingError("could not draw distinct anchor/partner pairs")
    return anchors, partners


def _partner_weights(wreg_rows: np.ndarray, pairing: str) -> np.ndarray:
    if pairing == "uniform":
        return np.ones_like(wreg_rows)
    if pairing == "positive":
        return wreg_rows
    return 1.0 - wreg_rows  # "negative": inlier-outlier


def _count_positive_diag(
    a_rows: np.ndarray, p_rows: np.ndarray, wa: np.ndarray, wb: np.ndarray
) -> int:
    """Diagonal pairs (same row both sides) that carry positive weight."""
    pos = _positions_of(p_rows, a_rows)
    has = pos >= 0
    if not has.any():
        return 0
    return int(((wa[has] > 0) & (wb[pos[has]] > 0)).sum())


def _stratified_draw(
    pack: FeaturePack,
    kind: str,
    anchor_rows_by_class: dict[int, np.ndarray],
    partner_rows_by_class: dict[int, np.ndarray],
    wreg: np.ndarray,
    pairing: str,
    n: int,
    replacement: bool,
    seed: int,
    used: dict[tuple[int, int], set[tuple[int, int]]] | None,
    what: str,
) -> tuple[np.ndarray, np.ndarray]:
    num_classes = pack.manifest.num_classes
    for side, by_class in (
        ("anchor", anchor_rows_by_class),
        ("partner", partner_rows_by_class),
    ):
        for c in range(num_classes):
            if by_class.get(c, np.empty(0)).size == 0:
                warnings.warn(
                    f"{what}: class {c} empty on {side} side, strata skipped",
                    stacklevel=3,
                )

    strata = [(ci, cj) for ci in range(num_classes) for cj in range(num_classes)]
    prepared = []
    caps: list[float] = []
    for ci, cj in strata:
        a_rows = anchor_rows_by_class.get(ci, np.empty(0, dtype=np.int64))
        p_rows = partner_rows_by_class.get(cj, np.empty(0, dtype=np.int64))
        exclude_diag = kind == "within" and ci == cj
        if a_rows.size == 0 or p_rows.size == 0:
            prepared.append(None)
            caps.append(0)
            continue
        wa = wreg[a_rows] if pairing != "uniform" else np.ones(a_rows.size)
        wb = _partner_weights(wreg[p_rows], pairing)
        na_pos = int((wa > 0).sum())
        nb_pos = int((wb > 0).sum())
        total = na_pos * nb_pos
        if exclude_diag:
            total -= _count_positive_diag(a_rows, p_rows, wa, wb)
        if replacement:
            caps.append(np.inf if total > 0 else 0)
        else:
            if used is not None and (ci, cj) in used:
                exc_i, exc_j = _excluded_positions(a_rows, p_rows, used[(ci, cj)])
                if exc_i.size:
                    total -= int(((wa[exc_i] > 0) & (wb[exc_j] > 0)).sum())
            caps.append(max(total, 0))
        prepared.append((a_rows, p_rows, wa, wb, exclude_diag))

    counts = _allocate_even(n, caps, what)

    out_a: list[np.ndarray] = []
    out_p: list[np.ndarray] = []
    for (ci, cj), count, prep in zip(strata, counts, prepared):
        if count == 0 or prep is None:
            continue
        a_rows, p_rows, wa, wb, exclude_diag = prep
        rng = np.random.default_rng(derive_seed(seed, "stratum", ci, cj))
        if replacement:
            anchors, partners = _draw_with_replacement(
                rng, a_rows, p_rows, wa, wb, count, exclude_diag
            )
        else:
            excluded = used.get((ci, cj), set()) if used is not None else set()
            anchors, partners = _draw_without_replacement(
                rng, a_rows, p_rows, wa, wb, count, exclude_diag, excluded
            )
            if used is not None:
                used.setdefault((ci, cj), set()).update(
                    zip(anchors.tolist(), partners.tolist())
                )
        out_a.append(anchors)
        out_p.append(partners)
    return (
        np.concatenate(out_a) if out_a else np.empty(0, dtype=np.int64),
        np.concatenate(out_p) if out_p else np.empty(0, dtype=np.int64),
    )


def sample_pairs(
    pack: FeaturePack,
    kind: str,
    target_domain: str,
    blend_domains: tuple[str, ...] | list[str] | None,
    n_pairs: int,
    strategy: SamplingStrategy,
    seed: int,
    weight_layer: int,
) -> PairSet:
    """Draw ``n_pairs`` (anchor, partner) row pairs.

    kind "within": both sides are the target domain, anchor != partner.
    kind "cross": anchors from the target, partners from the blend union.
    Deterministic for identical inputs and seed.  Without replacement an
    ordered pair never repeats (across both halves of a mix draw), and a
    shortfall raises SamplingError naming the gap.
    """
    if n_pairs < 1:
        raise SamplingError(f"n_pairs must be >= 1, got {n_pairs}")
    if kind not in ("within", "cross"):
        raise SamplingError(f"kind must be 'within' or 'cross', got {kind!r}")
    if kind == "cross" and not blend_domains:
        raise SamplingError("cross sampling needs a non-empty blend")

    partner_domains = [target_domain] if kind == "within" else sorted(blend_domains)
    involved = sorted(set([target_domain] + partner_domains))

    # Regulated inlier weights per (domain, class) group at the basis layer.
    wreg = np.zeros(pack.manifest.total_samples, dtype=np.float64)
    for dom in involved:
        rows = pack.rows_for(dom)
        if rows.size == 0:
            raise SamplingError(f"domain {dom!r} has no samples")
        w = inlier_weights(pack.features[weight_layer][rows], pack.labels[rows])
        wreg[rows] = transform_weights(w, strategy.tau, strategy.weight_transform)

    def rows_by_class(domains):
        rows = pack.rows_for(domains)
        labels = pack.labels[rows]
        return {int(c): rows[labels == c] for c in np.unique(labels)}

    anchor_by_class = rows_by_class(target_domain)
    partner_by_class = rows_by_class(partner_domains)

    what = (
        f"{kind} pairs over {target_domain!r}"
        if kind == "within"
        else f"{kind} pairs {target_domain!r} -> {'+'.join(partner_domains)}"
    )

    kind_tag = StrategyKind(strategy.kind)
    if kind_tag is StrategyKind.MIX:
        n_pos = (n_pairs + 1) // 2
        n_neg = n_pairs // 2
        used: dict | None = None if strategy.replacement else {}
        a1, p1 = _stratified_draw(
            pack, kind, anchor_by_class, partner_by_class, wreg,
            "positive", n_pos, strategy.replacement,
            derive_seed(seed, "mix", "inlier-inlier"), used, what,
        )
        if n_neg > 0:
            a2, p2 = _stratified_draw(
                pack, kind, anchor_by_class, partner_by_class, wreg,
                "negative", n_neg, strategy.replacement,
                derive_seed(seed, "mix", "inlier-outlier"), used, what,
            )
        else:
            a2 = p2 = np.empty(0, dtype=np.int64)
        anchors = np.concatenate([a1, a2])
        partners = np.concatenate([p1, p2])
        meta = {"inlier_inlier": int(a1.size), "inlier_outlier": int(a2.size)}
    else:
        used = None if strategy.replacement else {}
        anchors, partners = _stratified_draw(
            pack, kind, anchor_by_class, partner_by_class, wreg,
            kind_tag.value, n_pairs, strategy.replacement, seed, used, what,
        )
        meta = {kind_tag.value: int(anchors.size)}

    meta.update(
        {
            "tau": strategy.tau,
            "weight_transform": WeightTransform(strategy.weight_transform).value,
            "replacement": strategy.replacement,
            "pair_weights": "regulated w_reg products",
        }
    )
    return PairSet(
        anchors=anchors,
        partners=partners,
        kind=kind,
        layer_basis=weight_layer,
        seed=seed,
        meta=meta,
    )


def uniform_pooled_pairs(
    pack: FeaturePack,
    domains: list[str] | tuple[str, ...],
    n_pairs: int,
    seed: int,
) -> PairSet:
    """Uniform anchor/partner draws (with replacement, anchor != partner)
    pooled over the union of ``domains``; used for standardizer baselines."""
    rows = pack.rows_for(domains)
    if rows.size < 2:
        raise SamplingError("need at least two samples to form pairs")
    rng = np.random.default_rng(derive_seed(seed, "uniform-pooled"))
    anchors = rows[rng.integers(0, rows.size, size=n_pairs)]
    partners = rows[rng.integers(0, rows.size, size=n_pairs)]
    while True:
        bad = anchors == partners
        if not bad.any():
            break
        partners[bad] = rows[rng.integers(0, rows.size, size=int(bad.sum()))]
    return PairSet(
        anchors=anchors,
        partners=partners,
        kind="baseline",
        layer_basis=-1,
        seed=seed,
        meta={"pooled_over": list(domains)},
    )
