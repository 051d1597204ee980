"""End-to-end trajectory-divergence scoring for (target, blend, layer) triples.

One score run: sample within-domain and cross-domain pairs, turn each pair
into a multi-layer trajectory descriptor around the center layer, optionally
standardize against a uniform baseline draw pooled over the involved domains,
then measure the divergence between the two descriptor batches with the
configured estimator.  Higher values mean more divergent trajectory
dynamics, which predicts lower transfer gain; ranking consumers therefore
sort ascending.

Every stochastic stage derives its seed from (config.seed, stage tags
including target, blend, center layer), so a full profile is bit-reproducible
and within-domain work can be cached per (target, layer).
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import divergence as dv
from .density import (
    CovarianceKind,
    apply_standardizer,
    fit_gmm,
    fit_standardizer,
    mixture_components,
)
from .geometry import SpaceKind, descriptor_batch
from .pack import FeaturePack
from .sampling import (
    PairSet,
    SamplingStrategy,
    StrategyKind,
    WeightTransform,
    sample_pairs,
    uniform_pooled_pairs,
)
from .seeds import derive_seed

DEFAULT_PAIRS = 32768
DEFAULT_WINDOW = 6
DEFAULT_TAU = 2.0
DEFAULT_BASELINE_PAIRS = 2 ** 20

ALGO_KINDS = ("gmm-kl", "gmm-swd", "sinkhorn", "mmd")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DivergenceAlgo:
    """Estimator choice plus its knobs; unused knobs are ignored per kind."""

    kind: str = "gmm-kl"
    mc_samples: int = 100_000  # gmm-kl Monte-Carlo draws
    gmm_samples: int = 20_000  # gmm-swd draws per fitted mixture
    n_projections: int = 128  # gmm-swd slicing directions
    epsilon: float = 0.05  # sinkhorn entropic regularization
    max_iter: int = 1000  # sinkhorn iteration cap
    tol: float = 1e-6  # sinkhorn marginal violation target
    debiased: bool = True  # sinkhorn debiasing
    bandwidth: float | str = "median"  # mmd kernel bandwidth
    max_points: int = 2048  # subsample cap for the O(n^2) estimators

    def __post_init__(self):
        if self.kind not in ALGO_KINDS:
            raise ConfigError(f"algorithm must be one of {ALGO_KINDS}, got {self.kind!r}")
        for name in ("mc_samples", "gmm_samples", "n_projections", "max_iter", "max_points"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "mc_samples": self.mc_samples,
            "gmm_samples": self.gmm_samples,
            "n_projections": self.n_projections,
            "epsilon": self.epsilon,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "debiased": self.debiased,
            "bandwidth": self.bandwidth,
            "max_points": self.max_points,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DivergenceAlgo":
        return cls(**d)


@dataclass(frozen=True)
class RadarConfig:
    """Full design-choice ledger for one scoring run.

    Defaults follow the published configuration: 32768 mixed-strategy pairs
    without replacement at temperature 2.0, Euclidean space, standardization
    on, diagonal-covariance mixtures compared by weighted symmetric KL,
    window radius 6.
    """

    use_distance: bool = True
    use_angle: bool = True
    standardize: bool = True
    sampling: StrategyKind = StrategyKind.MIX
    replacement: bool = False
    tau: float = DEFAULT_TAU
    weight_transform: WeightTransform = WeightTransform.APPENDIX
    space: SpaceKind = SpaceKind.EUCLIDEAN
    covariance: CovarianceKind = CovarianceKind.DIAG
    algorithm: DivergenceAlgo = field(default_factory=DivergenceAlgo)
    pairs: int = DEFAULT_PAIRS
    window: int = DEFAULT_WINDOW
    baseline_pairs: int = DEFAULT_BASELINE_PAIRS
    seed: int = 0

    def __post_init__(self):
        if not (self.use_distance or self.use_angle):
            raise ConfigError("at least one of use_distance/use_angle must be true")
        if self.pairs < 1:
            raise ConfigError(f"pairs must be >= 1, got {self.pairs}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.baseline_pairs < 2:
            raise ConfigError(f"baseline_pairs must be >= 2, got {self.baseline_pairs}")
        if SpaceKind(self.space) is SpaceKind.PSEUDO_CARTESIAN and not (
            self.use_distance and self.use_angle
        ):
            raise ConfigError("pseudo-Cartesian space requires both angle and distance")

    @property
    def strategy(self) -> SamplingStrategy:
        return SamplingStrategy(
            kind=StrategyKind(self.sampling),
            replacement=self.replacement,
            tau=self.tau,
            weight_transform=WeightTransform(self.weight_transform),
        )

    def to_dict(self) -> dict:
        return {
            "use_distance": self.use_distance,
            "use_angle": self.use_angle,
            "standardize": self.standardize,
            "sampling": StrategyKind(self.sampling).value,
            "replacement": self.replacement,
            "tau": self.tau,
            "weight_transform": WeightTransform(self.weight_transform).value,
            "space": SpaceKind(self.space).value,
            "covariance": CovarianceKind(self.covariance).value,
            "algorithm": self.algorithm.to_dict(),
            "pairs": self.pairs,
            "window": self.window,
            "baseline_pairs": self.baseline_pairs,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RadarConfig":
        d = dict(d)
        unknown = set(d) - {
            "use_distance", "use_angle", "standardize", "sampling", "replacement",
            "tau", "weight_transform", "space", "covariance", "algorithm",
            "pairs", "window", "baseline_pairs", "seed",
        }
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            if "sampling" in d:
                d["sampling"] = StrategyKind(d["sampling"])
            if "weight_transform" in d:
                d["weight_transform"] = WeightTransform(d["weight_transform"])
            if "space" in d:
                d["space"] = SpaceKind(d["space"])
            if "covariance" in d:
                d["covariance"] = CovarianceKind(d["covariance"])
            if "algorithm" in d:
                algo = d["algorithm"]
                if isinstance(algo, str):
                    d["algorithm"] = DivergenceAlgo(kind=algo)
                elif isinstance(algo, dict):
                    d["algorithm"] = DivergenceAlgo.from_dict(algo)
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RadarScore:
    value: float
    center_layer: int
    config_digest: str
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "center_layer": self.center_layer,
            "config_digest": self.config_digest,
            "diagnostics": self.diagnostics,
        }


class _WithinCache:
    """Per-(target, layer) cache of the blend-independent within batch."""

    def __init__(self):
        self._store: dict = {}

    def get(self, key):
        return self._store.get(key)

    def put(self, key, value):
        self._store[key] = value


def _blend_id(blend: tuple[str, ...] | list[str]) -> str:
    return "+".join(sorted(blend))


def _subsample_rows(x: np.ndarray, cap: int, seed: int) -> np.ndarray:
    if x.shape[0] <= cap:
        return x
    rng = np.random.default_rng(derive_seed(seed, "subsample"))
    idx = rng.choice(x.shape[0], size=cap, replace=False)
    return x[np.sort(idx)]


def radar_score(
    pack: FeaturePack,
    target: str,
    blend: tuple[str, ...] | list[str] | set[str],
    center_layer: int,
    config: RadarConfig,
    cache: Optional[_WithinCache] = None,
) -> RadarScore:
    """Score one (target, blend, center layer) triple under ``config``."""
    blend = tuple(sorted(set(blend)))
    if not blend:
        raise ConfigError("blend must be non-empty")
    if target in blend:
        raise ConfigError(f"target {target!r} cannot be part of the blend")
    num_layers = pack.manifest.num_layers
    if not 0 <= center_layer < num_layers:
        raise ConfigError(f"center layer {center_layer} out of range [0, {num_layers})")

    blend_id = _blend_id(blend)
    seed = config.seed
    strategy = config.strategy
    space = SpaceKind(config.space)

    def descriptors(pairset: PairSet) -> np.ndarray:
        return descriptor_batch(
            pack.features,
            pairset.anchors,
            pairset.partners,
            center_layer,
            config.window,
            space,
            use_angle=config.use_angle,
            use_distance=config.use_distance,
        )

    cache_key = (target, center_layer, config.digest())
    cached = cache.get(cache_key) if cache is not None else None
    if cached is None:
        within_pairs = sample_pairs(
            pack, "within", target, None, config.pairs, strategy,
            derive_seed(seed, "pairs", "within", target, center_layer),
            weight_layer=center_layer,
        )
        within_x = descriptors(within_pairs)
        if cache is not None:
            cache.put(cache_key, (within_pairs, within_x))
    else:
        within_pairs, within_x = cached

    # Cross-side stages reuse one blend-independent seed stream (common
    # random numbers), so scores of different blends against the same target
    # differ only through the data, not through sampling noise.
    cross_pairs = sample_pairs(
        pack, "cross", target, blend, config.pairs, strategy,
        derive_seed(seed, "pairs", "cross", target, center_layer),
        weight_layer=center_layer,
    )
    cross_x = descriptors(cross_pairs)

    diagnostics: dict = {
        "within_rows": int(within_x.shape[0]),
        "cross_rows": int(cross_x.shape[0]),
        "descriptor_dim": int(within_x.shape[1]),
        "blend_id": blend_id,
    }

    if config.standardize:
        base_pairs = uniform_pooled_pairs(
            pack, (target,) + blend, config.baseline_pairs,
            derive_seed(seed, "baseline", target, center_layer),
        )
        stats = fit_standardizer(
            descriptors(base_pairs),
            source=f"center={center_layer} space={space.value} window={config.window}",
        )
        within_x = apply_standardizer(stats, within_x)
        cross_x = apply_standardizer(stats, cross_x)

    n_target = pack.manifest.domain_count(target)
    n_blend = sum(pack.manifest.domain_count(d) for d in blend)
    algo = config.algorithm

    if algo.kind in ("gmm-kl", "gmm-swd"):
        k = mixture_components(pack.manifest.num_classes)
        rows = min(within_x.shape[0], cross_x.shape[0])
        if rows < k:
            k = max(1, rows // 10)
            warnings.warn(
                f"descriptor rows ({rows}) below component rule; fitting k={k}"
            )
        # Mixture fitting uses a fixed random state, independent of the
        # master seed: published protocol varies only the pair subsampling
        # across repeats, and a blend-independent fit seed keeps blend
        # comparisons free of spurious refit noise.
        p = fit_gmm(
            within_x, k, config.covariance,
            seed=derive_seed(0, "gmm", "within", target, center_layer),
        )
        q = fit_gmm(
            cross_x, k, config.covariance,
            seed=derive_seed(0, "gmm", "cross", target, center_layer),
        )
        diagnostics["gmm_components"] = k
        diagnostics["gmm_loglik_p"] = p.loglik_trace[-1]
        diagnostics["gmm_loglik_q"] = q.loglik_trace[-1]
        if algo.kind == "gmm-kl":
            res = dv.sym_weighted_kl(
                p, q, n_target, n_blend, algo.mc_samples,
                derive_seed(seed, "symkl", target, center_layer),
            )
            value = res.value
            diagnostics["mc_std_error"] = res.mc_std_error
        else:
            draws_p = p.sample(
                algo.gmm_samples, derive_seed(seed, "swd-draw-p", target, center_layer)
            )
            draws_q = q.sample(
                algo.gmm_samples, derive_seed(seed, "swd-draw-q", target, center_layer)
            )
            value = dv.swd(
                draws_p, draws_q, algo.n_projections,
                derive_seed(seed, "swd", target, center_layer),
            )
    elif algo.kind == "sinkhorn":
        sub_seed = derive_seed(seed, "sinkhorn-cap", target, center_layer)
        a = _subsample_rows(within_x, algo.max_points, derive_seed(sub_seed, "a"))
        b = _subsample_rows(cross_x, algo.max_points, derive_seed(sub_seed, "b"))
        value = dv.sinkhorn_divergence(
            a, b, epsilon=algo.epsilon, max_iter=algo.max_iter, tol=algo.tol,
            debiased=algo.debiased,
        )
        diagnostics["points_used"] = [int(a.shape[0]), int(b.shape[0])]
    else:  # mmd
        sub_seed = derive_seed(seed, "mmd-cap", target, center_layer)
        a = _subsample_rows(within_x, algo.max_points, derive_seed(sub_seed, "a"))
        b = _subsample_rows(cross_x, algo.max_points, derive_seed(sub_seed, "b"))
        value = dv.mmd_gaussian(a, b, bandwidth=algo.bandwidth)
        diagnostics["points_used"] = [int(a.shape[0]), int(b.shape[0])]

    if not np.isfinite(value):
        raise RuntimeError(f"non-finite score {value} for {target!r} vs {blend_id!r}")
    return RadarScore(
        value=float(value),
        center_layer=center_layer,
        config_digest=config.digest(),
        diagnostics=diagnostics,
    )


def radar_profile(
    pack: FeaturePack,
    target: str,
    blend: tuple[str, ...] | list[str] | set[str],
    config: RadarConfig,
    cache: Optional[_WithinCache] = None,
) -> list[RadarScore]:
    """Scores for every center layer 0..L-1 (windows clamp at the edges)."""
    return [
        radar_score(pack, target, blend, layer, config, cache=cache)
        for layer in range(pack.manifest.num_layers)
    ]


def score_cache() -> _WithinCache:
    """Fresh within-domain cache, shareable across blends of one target."""
    return _WithinCache()
