"""Blend enumeration, rank correlation against ground-truth gains, and the
centroid-distance baseline.

The headline number is the mean correlation improvement (MCI): mean per-layer
Spearman rho of the metric minus that of the layer-0-style centroid baseline,
where both correlate raw (divergence-oriented) values against transfer gains.
Divergences predict gains inversely, so a good metric has rho near -1 and MCI
below zero.
"""

from __future__ import annotations

import csv
import io
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .pack import FeaturePack, PackError
from .pipeline import RadarConfig, radar_profile, score_cache

GAINS_HEADER = ("blend_id", "layer", "acc_blend", "acc_empty", "delta")


class EvaluationError(ValueError):
    pass


class DegenerateRankingError(EvaluationError):
    """All values tied on one side; a rank correlation is undefined."""


def blend_id_of(sources: Iterable[str]) -> str:
    return "+".join(sorted(sources))


@dataclass(frozen=True)
class BlendSpec:
    target: str
    sources: tuple[str, ...]

    def __post_init__(self):
        if not self.sources:
            raise EvaluationError("blend sources must be non-empty")
        if self.target in self.sources:
            raise EvaluationError(f"target {self.target!r} cannot appear in sources")
        object.__setattr__(self, "sources", tuple(sorted(self.sources)))

    @property
    def blend_id(self) -> str:
        return blend_id_of(self.sources)


def enumerate_blends(sources: list[str], mode: str = "pairwise") -> list[tuple[str, ...]]:
    """Candidate source-sets: singletons ("pairwise") or all non-empty
    subsets ("full"), in binary-counting order over sorted names."""
    if not sources:
        raise EvaluationError("need at least one source domain")
    ordered = sorted(sources)
    if mode == "pairwise":
        return [(s,) for s in ordered]
    if mode == "full":
        out = []
        for mask in range(1, 1 << len(ordered)):
            out.append(tuple(s for i, s in enumerate(ordered) if mask >> i & 1))
        return out
    raise EvaluationError(f"mode must be 'pairwise' or 'full', got {mode!r}")


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    start = 0
    for i in range(1, values.size + 1):
        if i == values.size or sorted_vals[i] != sorted_vals[start]:
            ranks[order[start:i]] = (start + i - 1) / 2.0 + 1.0
            start = i
    return ranks


def spearman(xs, ys) -> float:
    """Spearman rank correlation with mean ranks for ties."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise EvaluationError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise EvaluationError("need at least two points")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateRankingError("degenerate ranking: all values equal")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    rho = float((rx * ry).sum() / np.sqrt((rx ** 2).sum() * (ry ** 2).sum()))
    return max(-1.0, min(1.0, rho))


def centroid_distance(
    pack: FeaturePack,
    domains_a: str | Iterable[str],
    domains_b: str | Iterable[str],
    layer: int,
) -> float:
    """l2 distance between the feature centroids of two domain unions."""
    feats_a, _ = pack.slice(domains_a, layer)
    feats_b, _ = pack.slice(domains_b, layer)
    if feats_a.shape[0] == 0 or feats_b.shape[0] == 0:
        raise PackError("cannot take a centroid of an empty domain selection")
    mean_a = feats_a.astype(np.float64).mean(axis=0)
    mean_b = feats_b.astype(np.float64).mean(axis=0)
    return float(np.linalg.norm(mean_a - mean_b))


def centroid_matrix(pack: FeaturePack, layer: int) -> np.ndarray:
    """Symmetric K x K matrix of pairwise domain centroid distances."""
    names = pack.manifest.domain_names
    k = len(names)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            d = centroid_distance(pack, names[i], names[j], layer)
            out[i, j] = out[j, i] = d
    return out


@dataclass(frozen=True)
class GainsRow:
    blend_id: str
    layer: int
    acc_blend: float
    acc_empty: float
    delta: float


@dataclass(frozen=True)
class GainsTable:
    """Ground-truth A(S), A(empty), and delta per (blend, layer)."""

    rows: tuple[GainsRow, ...]

    def __post_init__(self):
        for r in self.rows:
            if abs(r.delta - (r.acc_blend - r.acc_empty)) > 1e-12:
                raise EvaluationError(
                    f"delta mismatch for {r.blend_id!r} layer {r.layer}: "
                    f"{r.delta} != {r.acc_blend} - {r.acc_empty}"
                )
            if not (0.0 <= r.acc_blend <= 1.0 and 0.0 <= r.acc_empty <= 1.0):
                raise EvaluationError(
                    f"accuracies must lie in [0,1]: {r.acc_blend}, {r.acc_empty}"
                )

    def layers(self) -> list[int]:
        return sorted({r.layer for r in self.rows})

    def blend_ids(self) -> list[str]:
        return sorted({r.blend_id for r in self.rows})

    def lookup(self) -> dict[tuple[str, int], GainsRow]:
        return {(r.blend_id, r.layer): r for r in self.rows}

    def broadcast_layers(self, layers: list[int]) -> "GainsTable":
        """A single-layer table is expanded across ``layers`` with a warning;
        anything else must already match."""
        own = self.layers()
        if own == sorted(layers):
            return self
        if len(own) == 1:
            warnings.warn(
                f"gains table has a single layer {own[0]}; broadcasting across "
                f"{len(layers)} layers"
            )
            rows = []
            for r in self.rows:
                for layer in layers:
                    rows.append(
                        GainsRow(r.blend_id, layer, r.acc_blend, r.acc_empty, r.delta)
                    )
            return GainsTable(rows=tuple(rows))
        raise EvaluationError(
            f"gains layers {own} do not match requested layers {sorted(layers)}"
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(GAINS_HEADER)
        for r in sorted(self.rows, key=lambda r: (r.blend_id, r.layer)):
            writer.writerow(
                [r.blend_id, r.layer, repr(r.acc_blend), repr(r.acc_empty), repr(r.delta)]
            )
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "GainsTable":
        reader = csv.reader(io.StringIO(text))
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise EvaluationError("empty gains file") from None
        if header != GAINS_HEADER:
            raise EvaluationError(
                f"gains header {header} != expected {GAINS_HEADER}"
            )
        rows = []
        for fields in reader:
            if not fields:
                continue
            if len(fields) != 5:
                raise EvaluationError(f"bad gains row: {fields}")
            rows.append(
                GainsRow(
                    blend_id=fields[0],
                    layer=int(fields[1]),
                    acc_blend=float(fields[2]),
                    acc_empty=float(fields[3]),
                    delta=float(fields[4]),
                )
            )
        return cls(rows=tuple(rows))

    @classmethod
    def load(cls, path: str | Path) -> "GainsTable":
        return cls.from_csv(Path(path).read_text())


@dataclass(frozen=True)
class EvalReport:
    layers: tuple[int, ...]
    rho_metric: tuple[float, ...]
    rho_base: tuple[float, ...]
    mean_rho_metric: float
    mean_rho_base: float
    mci: float
    omitted_layers: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "layers": list(self.layers),
            "rho_metric": list(self.rho_metric),
            "rho_base": list(self.rho_base),
            "mean_rho_metric": self.mean_rho_metric,
            "mean_rho_base": self.mean_rho_base,
            "mci": self.mci,
            "omitted_layers": list(self.omitted_layers),
        }


def evaluate(
    metric: dict[tuple[str, int], float],
    gains: GainsTable,
    baseline: dict[tuple[str, int], float],
) -> EvalReport:
    """Per-layer Spearman of metric and baseline against delta, plus MCI.

    Raw (divergence-oriented) values correlate directly; no sign flip.
    Layers where either ranking is degenerate are omitted from both means so
    the difference stays comparable.
    """
    lookup = gains.lookup()
    layers = gains.layers()
    blend_ids = gains.blend_ids()
    if len(blend_ids) < 2:
        raise EvaluationError("need at least two blends per layer to rank")
    missing = [
        (b, l) for l in layers for b in blend_ids if (b, l) not in lookup
    ]
    if missing:
        raise EvaluationError(
            f"gains rows missing for (blend, layer) cells: {missing[:5]}"
        )
    missing = [
        (b, l) for l in layers for b in blend_ids
        if (b, l) not in metric or (b, l) not in baseline
    ]
    if missing:
        raise EvaluationError(f"scores missing for (blend, layer) cells: {missing[:5]}")

    kept, rho_m, rho_b, omitted = [], [], [], []
    for layer in layers:
        deltas = [lookup[(b, layer)].delta for b in blend_ids]
        m_vals = [metric[(b, layer)] for b in blend_ids]
        b_vals = [baseline[(b, layer)] for b in blend_ids]
        try:
            rm = spearman(m_vals, deltas)
            rb = spearman(b_vals, deltas)
        except DegenerateRankingError as exc:
            warnings.warn(f"layer {layer} omitted from MCI: {exc}")
            omitted.append(layer)
            continue
        kept.append(layer)
        rho_m.append(rm)
        rho_b.append(rb)
    if not kept:
        raise EvaluationError("every layer had a degenerate ranking")
    mean_m = float(np.mean(rho_m))
    mean_b = float(np.mean(rho_b))
    return EvalReport(
        layers=tuple(kept),
        rho_metric=tuple(rho_m),
        rho_base=tuple(rho_b),
        mean_rho_metric=mean_m,
        mean_rho_base=mean_b,
        mci=mean_m - mean_b,
        omitted_layers=tuple(omitted),
    )


def _score_blend_chunk(args):
    pack, target, blends, config = args
    cache = score_cache()
    out = {}
    for blend in blends:
        profile = radar_profile(pack, target, blend, config, cache=cache)
        out[blend_id_of(blend)] = [s.to_dict() for s in profile]
    return out


def score_blends(
    pack: FeaturePack,
    target: str,
    blends: list[tuple[str, ...]],
    config: RadarConfig,
    jobs: int = 1,
) -> dict[str, list[dict]]:
    """Full per-layer profiles for every blend, keyed by blend id.

    With jobs > 1 the blend list is chunked over a process pool; results are
    identical to the sequential run since every score's seed is derived from
    (config.seed, target, blend, layer) alone.
    """
    blends = list(blends)
    if jobs <= 1 or len(blends) <= 1:
        return _score_blend_chunk((pack, target, blends, config))
    jobs = min(jobs, len(blends))
    chunks = [blends[i::jobs] for i in range(jobs)]
    out: dict[str, list[dict]] = {}
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for result in pool.map(
            _score_blend_chunk,
            [(pack, target, chunk, config) for chunk in chunks],
        ):
            out.update(result)
    return {blend_id_of(b): out[blend_id_of(b)] for b in blends}


@dataclass(frozen=True)
class RankedBlend:
    blend_id: str
    sources: tuple[str, ...]
    mean_score: float
    per_layer: tuple[float, ...]


@dataclass(frozen=True)
class RankingResult:
    ranked: tuple[RankedBlend, ...]
    rank_layer: Optional[int]  # None = ranked by mean across layers
    report: Optional[EvalReport]
    profiles: dict = field(default_factory=dict)


def rank_blends(
    pack: FeaturePack,
    target: str,
    mode: str,
    config: RadarConfig,
    gains: Optional[GainsTable] = None,
    rank_layer: Optional[int] = None,
    jobs: int = 1,
) -> RankingResult:
    """Score every enumerated blend, rank ascending (lower = better expected
    transfer), and evaluate against gains when provided."""
    sources = [d for d in pack.manifest.domain_names if d != target]
    blends = enumerate_blends(sources, mode)
    profiles = score_blends(pack, target, blends, config, jobs=jobs)

    ranked = []
    for blend in blends:
        bid = blend_id_of(blend)
        values = tuple(s["value"] for s in profiles[bid])
        key_score = values[rank_layer] if rank_layer is not None else float(np.mean(values))
        ranked.append(
            RankedBlend(
                blend_id=bid,
                sources=tuple(sorted(blend)),
                mean_score=float(key_score),
                per_layer=values,
            )
        )
    order = sorted(range(len(ranked)), key=lambda i: (ranked[i].mean_score, i))
    ranked = tuple(ranked[i] for i in order)

    report = None
    if gains is not None and len(blends) >= 2:
        required = {blend_id_of(b) for b in blends}
        have = set(gains.blend_ids())
        if required - have:
            raise EvaluationError(
                f"gains table lacks rows for blends: {sorted(required - have)}"
            )
        # a richer table (e.g. full-mode gains consumed in pairwise mode) is
        # fine; evaluate only the enumerated blends
        if have - required:
            gains = GainsTable(
                rows=tuple(r for r in gains.rows if r.blend_id in required)
            )
        gains = gains.broadcast_layers(list(range(pack.manifest.num_layers)))
        metric = {}
        baseline = {}
        for blend in blends:
            bid = blend_id_of(blend)
            for layer, s in enumerate(profiles[bid]):
                metric[(bid, layer)] = s["value"]
                baseline[(bid, layer)] = centroid_distance(
                    pack, target, sorted(blend), layer
                )
        report = evaluate(metric, gains, baseline)
    return RankingResult(
        ranked=ranked, rank_layer=rank_layer, report=report, profiles=profiles
    )
