"""Dataset loading: image folders per domain, or a TSV of text records.

Image layout: ``root/<domain>/<class>/*.png|jpg``.  Text layout: a TSV with
``text<TAB>label<TAB>domain`` per line (no header).  All domains share the
global label space; class and domain names are sorted for stable indexing.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp"}


@dataclass(frozen=True)
class Sample:
    payload: object  # PIL image path or text string
    label: int
    domain: int


@dataclass(frozen=True)
class Dataset:
    kind: str  # "image" | "text"
    samples: tuple[Sample, ...]
    class_names: tuple[str, ...]
    domain_names: tuple[str, ...]


def load_image_folder(root: str | Path) -> Dataset:
    root = Path(root)
    domains = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not domains:
        raise ValueError(f"no domain directories under {root}")
    classes = sorted(
        {c.name for d in domains for c in (root / d).iterdir() if c.is_dir()}
    )
    class_idx = {c: i for i, c in enumerate(classes)}
    samples = []
    for d_i, domain in enumerate(domains):
        for cls in sorted(p.name for p in (root / domain).iterdir() if p.is_dir()):
            for f in sorted((root / domain / cls).iterdir()):
                if f.suffix.lower() in IMAGE_EXTENSIONS:
                    samples.append(Sample(f, class_idx[cls], d_i))
    if not samples:
        raise ValueError(f"no images found under {root}")
    return Dataset("image", tuple(samples), tuple(classes), tuple(domains))


def load_text_tsv(path: str | Path) -> Dataset:
    rows = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"line {line_no}: expected text<TAB>label<TAB>domain")
        rows.append(parts)
    if not rows:
        raise ValueError(f"no records in {path}")
    classes = sorted({r[1] for r in rows})
    domains = sorted({r[2] for r in rows})
    class_idx = {c: i for i, c in enumerate(classes)}
    domain_idx = {d: i for i, d in enumerate(domains)}
    samples = tuple(
        Sample(text, class_idx[label], domain_idx[domain])
        for text, label, domain in rows
    )
    return Dataset("text", samples, tuple(classes), tuple(domains))


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    if path.is_dir():
        return load_image_folder(path)
    return load_text_tsv(path)


def image_to_array(path: Path, size: int = 32) -> np.ndarray:
    """Deterministic preprocessing: grayscale, fixed resize, scaled to [0,1]."""
    with Image.open(path) as img:
        img = img.convert("L").resize((size, size), Image.BILINEAR)
        return np.asarray(img, dtype=np.float32) / 255.0
