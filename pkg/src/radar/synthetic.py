"""Deterministic synthetic feature packs with controllable domain shift.

A base distribution of Gaussian class clusters is shared by every domain;
each domain applies its own shift (rotation, translation, or added noise) at
a chosen severity to its layer-0 features, and a single deterministic layer
map (rotation + contraction + optional tanh) is applied repeatedly to
produce the deeper layers.  Because the layer map is shared and
deterministic, total variation between any two domains' pushforwards can
only shrink with depth, which the `dpi_check` routine verifies empirically.

Proxy ground-truth gains come from a nearest-class-centroid classifier: fit
on target-train plus blend rows, evaluate on a held-out target split, and
compare against the target-only fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .evaluation import GainsRow, GainsTable, blend_id_of
from .pack import FeaturePack, PackManifest
from .seeds import derive_seed

SHIFT_KINDS = ("rotation", "translation", "noise")


class SyntheticError(ValueError):
    pass


@dataclass(frozen=True)
class DomainShift:
    name: str
    kind: str = "translation"
    severity: float = 0.0

    def __post_init__(self):
        if self.kind not in SHIFT_KINDS:
            raise SyntheticError(f"shift kind must be one of {SHIFT_KINDS}")
        if self.severity < 0:
            raise SyntheticError(f"severity must be >= 0, got {self.severity}")


@dataclass(frozen=True)
class LayerMap:
    """Deterministic per-transition map shared by all domains.

    Each transition rotates by that layer's angle in seeded, layer-specific
    coordinate planes, contracts uniformly, and optionally squashes with
    tanh.  Distinct planes per layer keep the transitions genuinely
    different, which real networks exhibit and which stops the trajectory
    descriptor's columns from being copies of one another.
    """

    rotation_angle: float | tuple[float, ...] = 0.3  # radians per transition
    contraction: float = 0.9  # uniform scale factor in (0, 1]
    tanh_squash: bool = False
    mix_planes: bool = True  # new seeded plane pairing per layer

    def __post_init__(self):
        if not 0.0 < self.contraction <= 1.0:
            raise SyntheticError(f"contraction must be in (0, 1], got {self.contraction}")
        if isinstance(self.rotation_angle, (list, tuple)):
            object.__setattr__(self, "rotation_angle", tuple(float(a) for a in self.rotation_angle))

    def angle_at(self, transition: int) -> float:
        if isinstance(self.rotation_angle, tuple):
            return self.rotation_angle[transition % len(self.rotation_angle)]
        return float(self.rotation_angle)


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 4
    dim: int = 16
    num_layers: int = 6
    samples_per_domain: int = 400
    class_separation: float = 3.0
    domains: tuple[DomainShift, ...] = (
        DomainShift("target", "translation", 0.0),
        DomainShift("near", "translation", 0.5),
        DomainShift("far", "translation", 2.0),
    )
    layer_map: LayerMap = field(default_factory=LayerMap)
    seed: int = 0

    def __post_init__(self):
        if self.num_layers < 2:
            raise SyntheticError(f"need at least 2 layers, got {self.num_layers}")
        if self.num_classes < 2:
            raise SyntheticError(f"need at least 2 classes, got {self.num_classes}")
        if len({d.name for d in self.domains}) != len(self.domains):
            raise SyntheticError("domain names must be unique")
        if self.samples_per_domain < self.num_classes:
            raise SyntheticError("need at least one sample per class per domain")

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "dim": self.dim,
            "num_layers": self.num_layers,
            "samples_per_domain": self.samples_per_domain,
            "class_separation": self.class_separation,
            "domains": [
                {"name": d.name, "kind": d.kind, "severity": d.severity}
                for d in self.domains
            ],
            "layer_map": {
                "rotation_angle": (
                    list(self.layer_map.rotation_angle)
                    if isinstance(self.layer_map.rotation_angle, tuple)
                    else self.layer_map.rotation_angle
                ),
                "contraction": self.layer_map.contraction,
                "tanh_squash": self.layer_map.tanh_squash,
                "mix_planes": self.layer_map.mix_planes,
            },
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        if "domains" in d:
            d["domains"] = tuple(DomainShift(**e) for e in d["domains"])
        if "layer_map" in d:
            d["layer_map"] = LayerMap(**d["layer_map"])
        return cls(**d)


def _plane_rotation(x: np.ndarray, angle: float, pairing: np.ndarray | None = None) -> np.ndarray:
    """Rotate by ``angle`` in disjoint coordinate planes.

    ``pairing`` lists the coordinate order to pair up as (p[0], p[1]),
    (p[2], p[3]), ...; the default is the natural order.
    """
    if angle == 0.0:
        return x
    out = x.copy()
    h = x.shape[1]
    if pairing is None:
        pairing = np.arange(h)
    c, s = math.cos(angle), math.sin(angle)
    for i in range(0, h - 1, 2):
        u, v = pairing[i], pairing[i + 1]
        a, b = x[:, u], x[:, v]
        out[:, u] = c * a - s * b
        out[:, v] = s * a + c * b
    return out


def _layer_pairings(spec: "SyntheticSpec") -> list[np.ndarray | None]:
    """Seeded coordinate pairing per transition (None = natural order)."""
    out: list[np.ndarray | None] = []
    for t in range(spec.num_layers - 1):
        if spec.layer_map.mix_planes:
            rng = np.random.default_rng(derive_seed(spec.seed, "layer-planes", t))
            out.append(rng.permutation(spec.dim))
        else:
            out.append(None)
    return out


def _apply_layer_map(
    x: np.ndarray, layer_map: LayerMap, transition: int, pairing: np.ndarray | None
) -> np.ndarray:
    out = _plane_rotation(x, layer_map.angle_at(transition), pairing)
    out = out * layer_map.contraction
    if layer_map.tanh_squash:
        out = np.tanh(out)
    return out


def gen_pack(spec: SyntheticSpec) -> FeaturePack:
    """Deterministic pack for the spec; severity 0 reproduces the base
    distribution exactly (fresh draws, same law)."""
    c, h, n = spec.num_classes, spec.dim, spec.samples_per_domain
    centroid_rng = np.random.default_rng(derive_seed(spec.seed, "class-centroids"))
    centroids = centroid_rng.standard_normal((c, h))
    centroids *= spec.class_separation / math.sqrt(h)

    # Shared shift directions so same-severity domains are interchangeable.
    shift_rng = np.random.default_rng(derive_seed(spec.seed, "shift-direction"))
    translation_dir = shift_rng.standard_normal(h)
    translation_dir /= np.linalg.norm(translation_dir)

    all_feats0 = []
    labels = []
    domain_ids = []
    for d_idx, dom in enumerate(spec.domains):
        rng = np.random.default_rng(derive_seed(spec.seed, "domain", dom.name))
        lab = np.arange(n) % c
        rng.shuffle(lab)
        feats = centroids[lab] + rng.standard_normal((n, h))
        if dom.severity > 0:
            if dom.kind == "translation":
                feats = feats + dom.severity * translation_dir
            elif dom.kind == "rotation":
                feats = _plane_rotation(feats, dom.severity)
            else:  # noise
                feats = feats + dom.severity * rng.standard_normal((n, h))
        all_feats0.append(feats)
        labels.append(lab)
        domain_ids.append(np.full(n, d_idx))

    layer0 = np.vstack(all_feats0)
    features = [layer0.astype(np.float32)]
    current = layer0
    pairings = _layer_pairings(spec)
    for t in range(spec.num_layers - 1):
        current = _apply_layer_map(current, spec.layer_map, t, pairings[t])
        features.append(current.astype(np.float32))

    manifest = PackManifest(
        format_version=1,
        model_name="synthetic",
        num_layers=spec.num_layers,
        dims=tuple([h] * spec.num_layers),
        domains=tuple((d.name, n) for d in spec.domains),
        num_classes=c,
        class_names=tuple(f"class_{i}" for i in range(c)),
        total_samples=n * len(spec.domains),
    )
    pack = FeaturePack(
        manifest=manifest,
        features=features,
        labels=np.concatenate(labels).astype(np.uint32),
        domain_ids=np.concatenate(domain_ids).astype(np.uint32),
    )
    pack.check()
    return pack


@dataclass(frozen=True)
class GainsProxy:
    """Nearest-class-centroid stand-in for a trained probe."""

    holdout: float = 0.3
    seeds: tuple[int, ...] = (0, 1, 2)

    def __post_init__(self):
        if not 0.0 < self.holdout < 1.0:
            raise SyntheticError(f"holdout must be in (0,1), got {self.holdout}")
        if not self.seeds:
            raise SyntheticError("need at least one proxy seed")


def _nearest_centroid_accuracy(
    train_x: np.ndarray,
    train_y: np.ndarray,
    test_x: np.ndarray,
    test_y: np.ndarray,
    num_classes: int,
) -> float:
    centroids = np.zeros((num_classes, train_x.shape[1]))
    present = []
    for cls in range(num_classes):
        members = train_y == cls
        if members.any():
            centroids[cls] = train_x[members].mean(axis=0)
            present.append(cls)
    present = np.asarray(present)
    d2 = (
        (test_x ** 2).sum(axis=1)[:, None]
        - 2.0 * test_x @ centroids[present].T
        + (centroids[present] ** 2).sum(axis=1)[None, :]
    )
    pred = present[d2.argmin(axis=1)]
    return float((pred == test_y).mean())


def _stratified_split(
    labels: np.ndarray, holdout: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class split into (train positions, holdout positions)."""
    train, hold = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        n_hold = max(1, int(round(idx.size * holdout)))
        if n_hold >= idx.size:
            raise SyntheticError(
                f"class {int(cls)} too small to hold out {holdout:.0%} and still train"
            )
        hold.append(idx[:n_hold])
        train.append(idx[n_hold:])
    return np.concatenate(train), np.concatenate(hold)


def proxy_gains(
    pack: FeaturePack,
    target: str,
    blends: list[tuple[str, ...]],
    proxy: GainsProxy = GainsProxy(),
) -> GainsTable:
    """Ground-truth proxy: per layer and blend, nearest-centroid accuracy of
    (target-train + blend) vs target-train alone, on the same target holdout,
    averaged over the proxy's holdout-split seeds."""
    num_classes = pack.manifest.num_classes
    target_rows = pack.rows_for(target)
    target_labels = pack.labels[target_rows].astype(np.int64)

    acc_blend: dict[tuple[str, int], list[float]] = {}
    acc_empty: dict[int, list[float]] = {}
    for split_seed in proxy.seeds:
        rng = np.random.default_rng(derive_seed(split_seed, "proxy-split", target))
        train_pos, hold_pos = _stratified_split(target_labels, proxy.holdout, rng)
        train_rows = target_rows[train_pos]
        hold_rows = target_rows[hold_pos]
        hold_y = pack.labels[hold_rows].astype(np.int64)
        if np.unique(hold_y).size < num_classes:
            raise SyntheticError("a class is absent from the target holdout")
        train_y = pack.labels[train_rows].astype(np.int64)
        for layer in range(pack.manifest.num_layers):
            feats = pack.features[layer].astype(np.float64, copy=False)
            hold_x = feats[hold_rows]
            base = _nearest_centroid_accuracy(
                feats[train_rows], train_y, hold_x, hold_y, num_classes
            )
            acc_empty.setdefault(layer, []).append(base)
            for blend in blends:
                bid = blend_id_of(blend)
                blend_rows = pack.rows_for(sorted(blend))
                aug_rows = np.concatenate([train_rows, blend_rows])
                aug_y = pack.labels[aug_rows].astype(np.int64)
                acc = _nearest_centroid_accuracy(
                    feats[aug_rows], aug_y, hold_x, hold_y, num_classes
                )
                acc_blend.setdefault((bid, layer), []).append(acc)

    rows = []
    for blend in blends:
        bid = blend_id_of(blend)
        for layer in range(pack.manifest.num_layers):
            a_s = float(np.mean(acc_blend[(bid, layer)]))
            a_0 = float(np.mean(acc_empty[layer]))
            rows.append(
                GainsRow(
                    blend_id=bid,
                    layer=layer,
                    acc_blend=a_s,
                    acc_empty=a_0,
                    delta=a_s - a_0,
                )
            )
    return GainsTable(rows=tuple(rows))


def tv_histogram(
    a: np.ndarray, b: np.ndarray, bins: int = 10, dims: int = 3
) -> float:
    """Total-variation estimate between two sample sets on a shared grid.

    Histograms need few dimensions to stay populated, so inputs wider than
    ``dims`` are first projected onto the leading principal axes of the
    pooled data.  Returns 1/2 * sum |p_hat - q_hat| in [0, 1].
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise SyntheticError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise SyntheticError("empty input")
    if dims < 1 or dims > 3:
        raise SyntheticError(f"dims must be in [1, 3], got {dims}")
    if a.shape[1] > dims:
        pooled = np.vstack([a, b])
        center = pooled.mean(axis=0)
        _, _, vt = np.linalg.svd(pooled - center, full_matrices=False)
        proj = vt[:dims].T
        a = (a - center) @ proj
        b = (b - center) @ proj
    pooled = np.vstack([a, b])
    edges = [
        np.linspace(pooled[:, j].min(), pooled[:, j].max() + 1e-12, bins + 1)
        for j in range(a.shape[1])
    ]
    hist_a, _ = np.histogramdd(a, bins=edges)
    hist_b, _ = np.histogramdd(b, bins=edges)
    p = hist_a / a.shape[0]
    q = hist_b / b.shape[0]
    return float(0.5 * np.abs(p - q).sum())


@dataclass(frozen=True)
class DpiResult:
    tv_per_layer: tuple[float, ...]
    tolerance: float
    ok: bool


def dpi_check(spec: SyntheticSpec, bins: int = 10) -> DpiResult:
    """Estimate TV between the two domains' pushforwards at every layer and
    check the sequence never increases beyond estimation noise.

    The guarantee only binds when the histogram lives in the layer map's own
    space, so the spec's feature dim must be at most 3 (no projection).
    Tolerance is 3 * sqrt(cells / n), the scale of histogram sampling error.
    """
    if len(spec.domains) != 2:
        raise SyntheticError("dpi_check needs a two-domain spec")
    if spec.dim > 3:
        raise SyntheticError(
            "dpi_check estimates full-space TV; use dim <= 3 (histogram feasibility)"
        )
    pack = gen_pack(spec)
    d0, d1 = (d.name for d in spec.domains)
    tvs = []
    for layer in range(spec.num_layers):
        a, _ = pack.slice(d0, layer)
        b, _ = pack.slice(d1, layer)
        tvs.append(tv_histogram(a, b, bins=bins, dims=spec.dim))
    cells = bins ** spec.dim
    tol = 3.0 * math.sqrt(cells / spec.samples_per_domain)
    ok = all(tvs[i + 1] <= tvs[i] + tol for i in range(len(tvs) - 1))
    return DpiResult(tv_per_layer=tuple(tvs), tolerance=tol, ok=ok)
