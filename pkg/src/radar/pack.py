"""On-disk layer-wise feature packs shared by the engine and extractors.

A pack directory contains::

    manifest.json            descriptive metadata (see PackManifest)
    features_layer{l}.f32le  row-major little-endian float32, one per layer
    labels.u32le             per-sample class index, little-endian uint32
    domain_ids.u32le         per-sample domain index, little-endian uint32

Row ``i`` refers to the same underlying sample at every layer; labels and
domain ids are layer-independent by construction.  Packs are immutable after
load and safe for concurrent read-only use.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .seeds import derive_seed

FORMAT_VERSION = 1

MANIFEST_NAME = "manifest.json"
LABELS_NAME = "labels.u32le"
DOMAIN_IDS_NAME = "domain_ids.u32le"


class PackError(ValueError):
    """Malformed pack directory or invariant violation."""


def layer_file_name(layer: int) -> str:
    return f"features_layer{layer}.f32le"


@dataclass(frozen=True)
class PackManifest:
    """Pack metadata: layer dims, domain roster, and label space."""

    format_version: int
    model_name: str
    num_layers: int
    dims: tuple[int, ...]
    domains: tuple[tuple[str, int], ...]  # (name, sample_count)
    num_classes: int
    class_names: tuple[str, ...]
    total_samples: int

    @property
    def domain_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.domains)

    def domain_count(self, name: str) -> int:
        for dname, count in self.domains:
            if dname == name:
                return count
        raise PackError(f"unknown domain {name!r}")

    def issues(self) -> list[str]:
        """Invariant violations as human-readable messages (empty if valid)."""
        problems = []
        if self.num_layers < 2:
            problems.append(f"num_layers must be >= 2, got {self.num_layers}")
        if len(self.dims) != self.num_layers:
            problems.append(
                f"dims has {len(self.dims)} entries for {self.num_layers} layers"
            )
        if any(h < 1 for h in self.dims):
            problems.append(f"all layer dims must be >= 1, got {self.dims}")
        if not self.domains:
            problems.append("no domains")
        names = self.domain_names
        if len(set(names)) != len(names):
            problems.append(f"duplicate domain names in {names}")
        if any(count < 0 for _, count in self.domains):
            problems.append("negative domain sample_count")
        if sum(count for _, count in self.domains) != self.total_samples:
            problems.append(
                "domain sample_counts sum to "
                f"{sum(c for _, c in self.domains)}, expected {self.total_samples}"
            )
        if self.num_classes < 2:
            problems.append(f"num_classes must be >= 2, got {self.num_classes}")
        if len(self.class_names) != self.num_classes:
            problems.append(
                f"{len(self.class_names)} class_names for {self.num_classes} classes"
            )
        return problems

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "model_name": self.model_name,
            "num_layers": self.num_layers,
            "dims": list(self.dims),
            "domains": [{"name": n, "sample_count": c} for n, c in self.domains],
            "num_classes": self.num_classes,
            "class_names": list(self.class_names),
            "total_samples": self.total_samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PackManifest":
        try:
            return cls(
                format_version=int(d["format_version"]),
                model_name=str(d["model_name"]),
                num_layers=int(d["num_layers"]),
                dims=tuple(int(x) for x in d["dims"]),
                domains=tuple(
                    (str(e["name"]), int(e["sample_count"])) for e in d["domains"]
                ),
                num_classes=int(d["num_classes"]),
                class_names=tuple(str(x) for x in d["class_names"]),
                total_samples=int(d["total_samples"]),
            )
        except (KeyError, TypeError) as exc:
            raise PackError(f"manifest missing or malformed field: {exc}") from exc


@dataclass
class FeaturePack:
    """In-memory pack: per-layer feature matrices plus labels and domain ids."""

    manifest: PackManifest
    features: list[np.ndarray]  # layer l -> [N_total, H_l] float32
    labels: np.ndarray  # [N_total] uint32
    domain_ids: np.ndarray  # [N_total] uint32

    def issues(self) -> list[str]:
        problems = self.manifest.issues()
        m = self.manifest
        if len(self.features) != m.num_layers:
            problems.append(
                f"{len(self.features)} feature matrices for {m.num_layers} layers"
            )
        for l, mat in enumerate(self.features):
            if l < len(m.dims) and mat.shape != (m.total_samples, m.dims[l]):
                problems.append(
                    f"layer {l} shape {mat.shape} != ({m.total_samples}, {m.dims[l]})"
                )
            if not np.isfinite(mat).all():
                problems.append(f"non-finite values in layer {l} features")
        if self.labels.shape != (m.total_samples,):
            problems.append(f"labels shape {self.labels.shape}")
        elif self.labels.size and int(self.labels.max(initial=0)) >= m.num_classes:
            problems.append(
                f"label out of range: max {int(self.labels.max())} >= C={m.num_classes}"
            )
        if self.domain_ids.shape != (m.total_samples,):
            problems.append(f"domain_ids shape {self.domain_ids.shape}")
        else:
            k = len(m.domains)
            if self.domain_ids.size and int(self.domain_ids.max(initial=0)) >= k:
                problems.append(
                    f"domain id out of range: max {int(self.domain_ids.max())} >= K={k}"
                )
            else:
                counts = np.bincount(self.domain_ids, minlength=k)
                for idx, (name, declared) in enumerate(m.domains):
                    if counts[idx] != declared:
                        problems.append(
                            f"domain {name!r} has {int(counts[idx])} rows, "
                            f"manifest says {declared}"
                        )
        return problems

    def check(self) -> None:
        problems = self.issues()
        if problems:
            raise PackError("; ".join(problems))

    def domain_index(self, name: str) -> int:
        for idx, (dname, _) in enumerate(self.manifest.domains):
            if dname == name:
                return idx
        raise PackError(f"unknown domain {name!r}")

    def rows_for(self, domains: str | Iterable[str]) -> np.ndarray:
        """Row indices for one domain or the union of several, ascending."""
        if isinstance(domains, str):
            domains = [domains]
        ids = [self.domain_index(d) for d in domains]
        mask = np.isin(self.domain_ids, np.asarray(ids, dtype=self.domain_ids.dtype))
        return np.flatnonzero(mask)

    def slice(
        self, domains: str | Iterable[str], layer: int
    ) -> tuple[np.ndarray, np.ndarray]:
        """Features and labels of the given domain(s) at one layer.

        Row order is the pack's global row order, so indices line up across
        layers for the same domain selection.
        """
        if not 0 <= layer < self.manifest.num_layers:
            raise PackError(
                f"layer {layer} out of range [0, {self.manifest.num_layers})"
            )
        rows = self.rows_for(domains)
        return self.features[layer][rows], self.labels[rows]


@dataclass(frozen=True)
class ValidationIssue:
    severity: str  # "error" | "warning"
    message: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    issues: tuple[ValidationIssue, ...] = ()

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "issues": [
                {"severity": i.severity, "message": i.message} for i in self.issues
            ],
        }


def write_pack(pack: FeaturePack, path: str | Path) -> None:
    """Write a pack directory; rejects invalid packs before touching disk."""
    pack.check()
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    (out / MANIFEST_NAME).write_text(
        json.dumps(pack.manifest.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    for l, mat in enumerate(pack.features):
        np.ascontiguousarray(mat, dtype="<f4").tofile(out / layer_file_name(l))
    np.ascontiguousarray(pack.labels, dtype="<u4").tofile(out / LABELS_NAME)
    np.ascontiguousarray(pack.domain_ids, dtype="<u4").tofile(out / DOMAIN_IDS_NAME)


def _read_exact(path: Path, dtype: str, count: int, what: str) -> np.ndarray:
    if not path.is_file():
        raise PackError(f"missing file {path.name}")
    data = np.fromfile(path, dtype=dtype)
    if data.size != count:
        raise PackError(
            f"size mismatch in {path.name}: {data.size} {what} values, "
            f"manifest implies {count}"
        )
    return data


def load_pack(path: str | Path) -> FeaturePack:
    """Load and fully validate a pack directory; never returns a partial pack."""
    root = Path(path)
    mfile = root / MANIFEST_NAME
    if not mfile.is_file():
        raise PackError(f"missing file {MANIFEST_NAME} in {root}")
    try:
        manifest = PackManifest.from_dict(json.loads(mfile.read_text()))
    except json.JSONDecodeError as exc:
        raise PackError(f"manifest is not valid JSON: {exc}") from exc
    problems = manifest.issues()
    if problems:
        raise PackError("; ".join(problems))

    n = manifest.total_samples
    features = []
    for l, h in enumerate(manifest.dims):
        flat = _read_exact(root / layer_file_name(l), "<f4", n * h, "float32")
        features.append(flat.reshape(n, h))
    labels = _read_exact(root / LABELS_NAME, "<u4", n, "uint32")
    domain_ids = _read_exact(root / DOMAIN_IDS_NAME, "<u4", n, "uint32")

    pack = FeaturePack(manifest, features, labels, domain_ids)
    pack.check()
    return pack


def validate_pack(path: str | Path) -> ValidationReport:
    """Report every violated invariant instead of raising.

    A class absent from some domain is a warning (downstream sampling skips
    the empty strata); everything else that breaks an invariant is an error.
    """
    issues: list[ValidationIssue] = []
    try:
        root = Path(path)
        mfile = root / MANIFEST_NAME
        if not mfile.is_file():
            raise PackError(f"missing file {MANIFEST_NAME} in {root}")
        manifest = PackManifest.from_dict(json.loads(mfile.read_text()))
        for msg in manifest.issues():
            issues.append(ValidationIssue("error", msg))
        if not issues:
            pack = load_pack(path)
            for msg in pack.issues():
                issues.append(ValidationIssue("error", msg))
            # Class coverage: warn when a class has no samples in a domain.
            for idx, (name, _) in enumerate(manifest.domains):
                present = set(
                    np.unique(pack.labels[pack.domain_ids == idx]).tolist()
                )
                missing = sorted(set(range(manifest.num_classes)) - present)
                for c in missing:
                    issues.append(
                        ValidationIssue(
                            "warning",
                            f"class coverage: class {c} "
                            f"({manifest.class_names[c]!r}) absent from domain {name!r}",
                        )
                    )
    except (PackError, json.JSONDecodeError, OSError) as exc:
        issues.append(ValidationIssue("error", str(exc)))
    ok = not any(i.severity == "error" for i in issues)
    return ValidationReport(ok=ok, issues=tuple(issues))


def split_domain(
    pack: FeaturePack,
    domain: str,
    new_names: tuple[str, str],
    fraction: float = 0.5,
    seed: int = 0,
) -> FeaturePack:
    """Split one domain's rows into two pseudo-domains at random.

    Used for null calibration: a 50/50 split of a single domain yields two
    domains drawn from the same distribution.  Row order and features are
    untouched; only domain ids and the manifest roster change.
    """
    if not 0.0 < fraction < 1.0:
        raise PackError(f"fraction must be in (0,1), got {fraction}")
    if new_names[0] == new_names[1]:
        raise PackError("pseudo-domain names must differ")
    src_idx = pack.domain_index(domain)
    rows = np.flatnonzero(pack.domain_ids == src_idx)
    if rows.size < 2:
        raise PackError(f"domain {domain!r} too small to split")
    rng = np.random.default_rng(derive_seed(seed, "split-domain", domain))
    perm = rng.permutation(rows.size)
    n_first = int(round(rows.size * fraction))
    n_first = min(max(n_first, 1), rows.size - 1)
    first_rows = rows[perm[:n_first]]

    old_names = pack.manifest.domain_names
    kept = [(n, c) for n, c in pack.manifest.domains if n != domain]
    for n, _ in kept:
        if n in new_names:
            raise PackError(f"pseudo-domain name {n!r} already exists")
    new_domains = tuple(kept) + (
        (new_names[0], n_first),
        (new_names[1], rows.size - n_first),
    )
    name_to_new = {n: i for i, (n, _) in enumerate(new_domains)}

    new_ids = np.empty_like(pack.domain_ids)
    for old_i, old_name in enumerate(old_names):
        if old_name == domain:
            continue
        new_ids[pack.domain_ids == old_i] = name_to_new[old_name]
    new_ids[rows] = name_to_new[new_names[1]]
    new_ids[first_rows] = name_to_new[new_names[0]]

    manifest = PackManifest(
        format_version=pack.manifest.format_version,
        model_name=pack.manifest.model_name,
        num_layers=pack.manifest.num_layers,
        dims=pack.manifest.dims,
        domains=new_domains,
        num_classes=pack.manifest.num_classes,
        class_names=pack.manifest.class_names,
        total_samples=pack.manifest.total_samples,
    )
    out = FeaturePack(manifest, pack.features, pack.labels, new_ids)
    out.check()
    return out
