"""MLP probe training: layer-wise features -> ground-truth gains CSV.

For every (blend, layer) the probe trains on target-train plus the blend's
rows and is scored on the held-out target test split; the target-only run
gives the baseline accuracy.  Accuracies average over independent training
seeds.  The output CSV follows the engine's gains contract:

    blend_id,layer,acc_blend,acc_empty,delta
"""

from __future__ import annotations

import io
import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .packio import read_pack_dir

EARLY_STOP_EXPECTED_BEFORE = 40  # soft expectation, reported as a warning

# Early stopping may only trigger after this many optimizer updates.  At
# realistic dataset sizes one epoch already exceeds it (no behavior change);
# on tiny toy sets, where an epoch is a single update, it prevents the
# patience window from freezing an undertrained model.
MIN_UPDATES_BEFORE_STOP = 30


@dataclass(frozen=True)
class ProbeConfig:
    hidden: int = 512
    dropout: float = 0.1
    lr: float = 0.01
    weight_decay: float = 1e-4
    batch_size: int = 256
    max_epochs: int = 100
    patience: int = 10
    seeds: tuple[int, ...] = tuple(range(10))
    split_seed: int = 0
    train_fraction: float = 0.6
    val_fraction: float = 0.2

    def __post_init__(self):
        if not 0 < self.train_fraction < 1 or not 0 < self.val_fraction < 1:
            raise ValueError("fractions must be in (0,1)")
        if self.train_fraction + self.val_fraction >= 1:
            raise ValueError("train+val fractions must leave a test split")
        if not self.seeds:
            raise ValueError("need at least one probe seed")


def class_weights(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """w_c = C * (N_c^-1 / sum_j N_j^-1) over classes present in training."""
    counts = np.bincount(labels, minlength=num_classes).astype(np.float64)
    present = counts > 0
    inv = np.zeros(num_classes)
    inv[present] = 1.0 / counts[present]
    weights = np.zeros(num_classes)
    weights[present] = num_classes * inv[present] / inv[present].sum()
    return weights


class MlpProbe(nn.Module):
    def __init__(self, dim: int, hidden: int, num_classes: int, dropout: float):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(dim, hidden),
            nn.ReLU(),
            nn.Dropout(dropout),
            nn.Linear(hidden, num_classes),
        )

    def forward(self, x):
        return self.net(x)


def _stratified_three_way(labels, train_frac, val_frac, rng):
    train, val, test = [], [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        n_train = max(1, int(round(idx.size * train_frac)))
        n_val = max(1, int(round(idx.size * val_frac)))
        if n_train + n_val >= idx.size:
            raise ValueError(
                f"class {int(cls)} has {idx.size} target samples; "
                "not enough for train/val/test"
            )
        train.append(idx[:n_train])
        val.append(idx[n_train : n_train + n_val])
        test.append(idx[n_train + n_val :])
    return np.concatenate(train), np.concatenate(val), np.concatenate(test)


def _train_one(
    x_train, y_train, x_val, y_val, x_test, y_test,
    num_classes: int, config: ProbeConfig, seed: int,
) -> tuple[float, int]:
    """Returns (test accuracy at the best validation epoch, stop epoch)."""
    torch.manual_seed(seed)
    device = "cpu"
    model = MlpProbe(x_train.shape[1], config.hidden, num_classes, config.dropout).to(device)
    weights = torch.tensor(
        class_weights(y_train, num_classes), dtype=torch.float32, device=device
    )
    loss_fn = nn.CrossEntropyLoss(weight=weights)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.lr, weight_decay=config.weight_decay
    )
    xt = torch.tensor(x_train, dtype=torch.float32, device=device)
    yt = torch.tensor(y_train, dtype=torch.long, device=device)
    xv = torch.tensor(x_val, dtype=torch.float32, device=device)
    yv = torch.tensor(y_val, dtype=torch.long, device=device)
    gen = torch.Generator().manual_seed(seed)

    best_val = float("inf")
    best_state = {k: v.clone() for k, v in model.state_dict().items()}
    since_best = 0
    stop_epoch = config.max_epochs
    updates = 0
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = torch.randperm(xt.shape[0], generator=gen)
        for start in range(0, xt.shape[0], config.batch_size):
            batch = order[start : start + config.batch_size]
            optimizer.zero_grad()
            loss = loss_fn(model(xt[batch]), yt[batch])
            if not torch.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            optimizer.step()
            updates += 1
        model.eval()
        with torch.no_grad():
            val_loss = float(loss_fn(model(xv), yv))
        if val_loss < best_val - 1e-6:
            best_val = val_loss
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience and updates >= MIN_UPDATES_BEFORE_STOP:
                stop_epoch = epoch
                break
    model.load_state_dict(best_state)
    model.eval()
    with torch.no_grad():
        pred = model(torch.tensor(x_test, dtype=torch.float32)).argmax(dim=1).numpy()
    return float((pred == y_test).mean()), stop_epoch


def train_probe(
    pack_dir: str | Path,
    target: str,
    blends: list[tuple[str, ...]],
    config: ProbeConfig = ProbeConfig(),
) -> tuple[str, dict]:
    """Train probes for every (blend, layer) and return (gains CSV text,
    diagnostics with per-run stop epochs and any per-seed failures)."""
    manifest, features, labels, domain_ids = read_pack_dir(pack_dir)
    domain_names = [d["name"] for d in manifest["domains"]]
    if target not in domain_names:
        raise ValueError(f"unknown target domain {target!r}")
    num_classes = manifest["num_classes"]
    name_to_id = {n: i for i, n in enumerate(domain_names)}

    target_rows = np.flatnonzero(domain_ids == name_to_id[target])
    target_labels = labels[target_rows].astype(np.int64)
    split_rng = np.random.default_rng(config.split_seed)
    tr_pos, va_pos, te_pos = _stratified_three_way(
        target_labels, config.train_fraction, config.val_fraction, split_rng
    )
    train_rows = target_rows[tr_pos]
    val_rows = target_rows[va_pos]
    test_rows = target_rows[te_pos]

    def blend_rows(blend):
        ids = [name_to_id[d] for d in blend]
        return np.flatnonzero(np.isin(domain_ids, ids))

    num_layers = manifest["num_layers"]
    stop_epochs = []
    failures = []

    def run(rows_train, layer):
        accs = []
        x_all = features[layer]
        for seed in config.seeds:
            try:
                acc, stop = _train_one(
                    x_all[rows_train], labels[rows_train].astype(np.int64),
                    x_all[val_rows], labels[val_rows].astype(np.int64),
                    x_all[test_rows], labels[test_rows].astype(np.int64),
                    num_classes, config, seed,
                )
            except FloatingPointError as exc:
                warnings.warn(f"seed {seed} layer {layer}: {exc}; seed excluded")
                failures.append((layer, seed, str(exc)))
                continue
            accs.append(acc)
            stop_epochs.append(stop)
        if not accs:
            raise RuntimeError(f"every probe seed diverged at layer {layer}")
        return float(np.mean(accs))

    rows_out = []
    for layer in range(num_layers):
        acc_empty = run(train_rows, layer)
        for blend in blends:
            bid = "+".join(sorted(blend))
            augmented = np.concatenate([train_rows, blend_rows(blend)])
            acc_blend = run(augmented, layer)
            rows_out.append((bid, layer, acc_blend, acc_empty, acc_blend - acc_empty))

    max_stop = max(stop_epochs)
    if max_stop >= EARLY_STOP_EXPECTED_BEFORE:
        warnings.warn(
            f"early stopping triggered at epoch {max_stop}; expected before "
            f"{EARLY_STOP_EXPECTED_BEFORE}"
        )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("blend_id", "layer", "acc_blend", "acc_empty", "delta"))
    for bid, layer, a_b, a_e, delta in sorted(rows_out):
        writer.writerow([bid, layer, repr(a_b), repr(a_e), repr(delta)])
    diagnostics = {
        "stop_epochs": stop_epochs,
        "max_stop_epoch": max_stop,
        "early_stop_before_40": max_stop < EARLY_STOP_EXPECTED_BEFORE,
        "failures": failures,
        "splits": {
            "train": int(train_rows.size),
            "val": int(val_rows.size),
            "test": int(test_rows.size),
        },
    }
    return buf.getvalue(), diagnostics
