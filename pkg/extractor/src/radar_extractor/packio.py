"""Writer for the engine's feature-pack directory format.

The format is the interchange contract with the scoring engine:
``manifest.json`` plus ``features_layer{l}.f32le`` (row-major little-endian
float32), ``labels.u32le`` and ``domain_ids.u32le`` (little-endian uint32).
This module deliberately re-implements the writer against the published
layout instead of importing the engine.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def write_pack_dir(
    path: str | Path,
    model_name: str,
    layer_features: list[np.ndarray],
    labels: np.ndarray,
    domain_ids: np.ndarray,
    domain_names: list[str],
    class_names: list[str],
) -> None:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    total = int(labels.shape[0])
    if any(mat.shape[0] != total for mat in layer_features):
        raise ValueError("all layers must have one row per sample")
    if domain_ids.shape[0] != total:
        raise ValueError("domain_ids length mismatch")
    counts = np.bincount(domain_ids, minlength=len(domain_names))
    manifest = {
        "format_version": FORMAT_VERSION,
        "model_name": model_name,
        "num_layers": len(layer_features),
        "dims": [int(mat.shape[1]) for mat in layer_features],
        "domains": [
            {"name": name, "sample_count": int(counts[i])}
            for i, name in enumerate(domain_names)
        ],
        "num_classes": len(class_names),
        "class_names": list(class_names),
        "total_samples": total,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for l, mat in enumerate(layer_features):
        np.ascontiguousarray(mat, dtype="<f4").tofile(out / f"features_layer{l}.f32le")
    np.ascontiguousarray(labels, dtype="<u4").tofile(out / "labels.u32le")
    np.ascontiguousarray(domain_ids, dtype="<u4").tofile(out / "domain_ids.u32le")


def read_pack_dir(path: str | Path):
    """Minimal reader for this package's own tests and the probe CLI."""
    root = Path(path)
    manifest = json.loads((root / "manifest.json").read_text())
    n = manifest["total_samples"]
    features = []
    for l, h in enumerate(manifest["dims"]):
        flat = np.fromfile(root / f"features_layer{l}.f32le", dtype="<f4")
        if flat.size != n * h:
            raise ValueError(f"size mismatch in layer {l}")
        features.append(flat.reshape(n, h))
    labels = np.fromfile(root / "labels.u32le", dtype="<u4")
    domain_ids = np.fromfile(root / "domain_ids.u32le", dtype="<u4")
    return manifest, features, labels, domain_ids
