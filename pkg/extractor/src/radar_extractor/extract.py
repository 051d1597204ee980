"""Extraction jobs: dataset -> frozen backbone -> on-disk feature pack."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backbones import load_backbone
from .datasets import Dataset, load_dataset
from .packio import write_pack_dir


@dataclass(frozen=True)
class ExtractionJob:
    model_id: str
    dataset_path: str
    output_pack: str
    pooling: str = "cls"
    batch_size: int = 32
    device: str = "cpu"

    def __post_init__(self):
        if self.pooling not in ("cls", "mean"):
            raise ValueError(f"pooling must be 'cls' or 'mean', got {self.pooling!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def extract(job: ExtractionJob) -> Path:
    """Run the job and write a feature pack; returns the pack path.

    Samples are processed in dataset order with fixed preprocessing, so a
    repeated job produces byte-identical feature files.
    """
    dataset: Dataset = load_dataset(job.dataset_path)
    backbone = load_backbone(job.model_id, device=job.device)

    per_layer: list[list[np.ndarray]] = []
    labels = np.array([s.label for s in dataset.samples], dtype=np.uint32)
    domain_ids = np.array([s.domain for s in dataset.samples], dtype=np.uint32)
    payloads = [s.payload for s in dataset.samples]

    for start in range(0, len(payloads), job.batch_size):
        batch = payloads[start : start + job.batch_size]
        states = backbone.hidden_states(batch, dataset.kind, job.pooling)
        if not per_layer:
            per_layer = [[] for _ in states]
        if len(states) < 2:
            raise RuntimeError(
                f"backbone exposed {len(states)} hidden states; need at least 2"
            )
        for l, state in enumerate(states):
            per_layer[l].append(state.astype(np.float32))

    layer_features = [np.vstack(chunks) for chunks in per_layer]
    write_pack_dir(
        job.output_pack,
        model_name=f"{job.model_id}+{job.pooling}",
        layer_features=layer_features,
        labels=labels,
        domain_ids=domain_ids,
        domain_names=list(dataset.domain_names),
        class_names=list(dataset.class_names),
    )
    return Path(job.output_pack)
