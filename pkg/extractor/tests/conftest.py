from __future__ import annotations

import numpy as np
import pytest
from PIL import Image


def build_image_dataset(root, domains=("photo", "sketch"), classes=("cat", "dog"),
                        per_class=20, seed=0, noise=42.0, shifts=None):
    """Tiny image-folder dataset with imperfectly separable classes.

    Classes differ by a moderate intensity offset plus a class-specific
    gradient direction, under heavy pixel noise, so probe accuracies land
    strictly between chance and 1.0.  Domains shift the distribution to
    different degrees: "sketch"-like stripes are a strong shift, any third
    domain gets a mild gamma-style change.
    """
    if shifts is None:
        shifts = tuple(
            "none" if i == 0 else ("stripes" if i == 1 else "gamma")
            for i in range(len(domains))
        )
    rng = np.random.default_rng(seed)
    ramp = np.linspace(-1.0, 1.0, 32)
    for d_i, domain in enumerate(domains):
        for c_i, cls in enumerate(classes):
            out = root / domain / cls
            out.mkdir(parents=True)
            for i in range(per_class):
                base = 105.0 + 30.0 * c_i + rng.normal(0, 14)
                grad = 28.0 * (ramp[:, None] if c_i == 0 else ramp[None, :])
                img = base + grad + rng.normal(0, noise, (32, 32))
                if shifts[d_i] == "stripes":  # strong shift
                    img[::2] *= 0.55
                elif shifts[d_i] == "gamma":  # mild shift
                    img = 255.0 * (np.clip(img, 0, 255) / 255.0) ** 0.8
                arr = np.clip(img, 0, 255).astype(np.uint8)
                Image.fromarray(arr, mode="L").save(out / f"{cls}_{i:03d}.png")
    return root


def build_text_dataset(path, domains=("english", "german"), per_class=25, seed=0):
    rng = np.random.default_rng(seed)
    positive = {
        "english": ["great product love it", "excellent quality works well"],
        "german": ["tolles produkt sehr gut", "ausgezeichnete qualitaet"],
    }
    negative = {
        "english": ["terrible waste of money", "broke after one day awful"],
        "german": ["schrecklich geldverschwendung", "nach einem tag kaputt"],
    }
    lines = []
    for domain in domains:
        for label, bank in (("pos", positive), ("neg", negative)):
            for i in range(per_class):
                words = bank[domain][i % len(bank[domain])].split()
                rng.shuffle(words)
                text = " ".join(words) + f" sample{i}"
                lines.append(f"{text}\t{label}\t{domain}")
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="session")
def image_dataset(tmp_path_factory):
    return build_image_dataset(tmp_path_factory.mktemp("images"))


@pytest.fixture(scope="session")
def text_dataset(tmp_path_factory):
    return build_text_dataset(tmp_path_factory.mktemp("texts") / "data.tsv")
