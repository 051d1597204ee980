from __future__ import annotations

import numpy as np
import pytest

from radar.pack import FeaturePack, PackManifest
from radar.synthetic import DomainShift, LayerMap, SyntheticSpec, gen_pack


def make_pack(
    num_layers=3,
    dims=None,
    domains=(("alpha", 30), ("beta", 24)),
    num_classes=3,
    seed=0,
    model_name="toy",
):
    """Small hand-rolled pack with round-robin labels per domain."""
    dims = tuple(dims) if dims is not None else tuple([6] * num_layers)
    total = sum(c for _, c in domains)
    rng = np.random.default_rng(seed)
    features = [
        rng.standard_normal((total, h)).astype(np.float32) for h in dims
    ]
    labels = []
    domain_ids = []
    for idx, (_, count) in enumerate(domains):
        labels.append(np.arange(count) % num_classes)
        domain_ids.append(np.full(count, idx))
    manifest = PackManifest(
        format_version=1,
        model_name=model_name,
        num_layers=num_layers,
        dims=dims,
        domains=tuple(domains),
        num_classes=num_classes,
        class_names=tuple(f"c{i}" for i in range(num_classes)),
        total_samples=total,
    )
    pack = FeaturePack(
        manifest=manifest,
        features=features,
        labels=np.concatenate(labels).astype(np.uint32),
        domain_ids=np.concatenate(domain_ids).astype(np.uint32),
    )
    pack.check()
    return pack


@pytest.fixture
def small_pack():
    return make_pack()


MIXED_ANGLES = (0.5, 0.9, 0.3, 0.7, 0.4, 0.8, 0.6)


def ladder_spec(
    severities,
    kind="translation",
    num_classes=5,
    dim=16,
    num_layers=8,
    samples_per_domain=500,
    class_separation=3.0,
    seed=11,
    tanh=False,
):
    """Severity-ladder spec with the per-layer mixed-plane map."""
    return SyntheticSpec(
        num_classes=num_classes,
        dim=dim,
        num_layers=num_layers,
        samples_per_domain=samples_per_domain,
        class_separation=class_separation,
        layer_map=LayerMap(MIXED_ANGLES, 0.9, tanh),
        domains=tuple(
            [DomainShift("target", kind, 0.0)]
            + [DomainShift(f"s{i}", kind, s) for i, s in enumerate(severities, 1)]
        ),
        seed=seed,
    )


@pytest.fixture(scope="session")
def bench_pack():
    """Shared mid-size synthetic pack for pipeline-level tests."""
    spec = ladder_spec(
        [2.0, 6.0],
        num_classes=3,
        dim=12,
        num_layers=5,
        samples_per_domain=240,
        seed=7,
    )
    return gen_pack(spec)
