"""CLI entry points: ``radar-extract`` and ``radar-probe``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .extract import ExtractionJob, extract
from .probe import ProbeConfig, train_probe


def extract_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="radar-extract",
        description="Extract per-block hidden states into a feature pack",
    )
    parser.add_argument("--model", required=True,
                        help="Hugging Face checkpoint id, or toy-vision / toy-text")
    parser.add_argument("--dataset", required=True,
                        help="image folder root (domain/class/*.png) or text TSV")
    parser.add_argument("--out", required=True, help="output pack directory")
    parser.add_argument("--pooling", choices=["cls", "mean"], default="cls")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)
    try:
        job = ExtractionJob(
            model_id=args.model,
            dataset_path=args.dataset,
            output_pack=args.out,
            pooling=args.pooling,
            batch_size=args.batch_size,
            device=args.device,
        )
        path = extract(job)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"command": "extract", "pack": str(path)}, sort_keys=True))
    return 0


def probe_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="radar-probe",
        description="Train MLP probes and emit a transfer-gains CSV",
    )
    parser.add_argument("--pack", required=True, help="feature pack directory")
    parser.add_argument("--target", required=True)
    parser.add_argument("--sources", required=True, nargs="+",
                        help="one or more '+'-joined source sets, e.g. a b a+b")
    parser.add_argument("--out", required=True, help="output gains CSV path")
    parser.add_argument("--seeds", type=int, default=10, help="training seeds per run")
    parser.add_argument("--split-seed", type=int, default=0)
    parser.add_argument("--max-epochs", type=int, default=100)
    parser.add_argument("--patience", type=int, default=10)
    parser.add_argument("--train-fraction", type=float, default=0.6)
    parser.add_argument("--val-fraction", type=float, default=0.2)
    args = parser.parse_args(argv)
    blends = [tuple(s.split("+")) for s in args.sources]
    config = ProbeConfig(
        seeds=tuple(range(args.seeds)),
        split_seed=args.split_seed,
        max_epochs=args.max_epochs,
        patience=args.patience,
        train_fraction=args.train_fraction,
        val_fraction=args.val_fraction,
    )
    try:
        csv_text, diagnostics = train_probe(args.pack, args.target, blends, config)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    Path(args.out).write_text(csv_text)
    print(json.dumps({"command": "probe", "out": args.out, **{
        k: diagnostics[k] for k in ("max_stop_epoch", "early_stop_before_40", "splits")
    }}, sort_keys=True))
    return 0


def extract_entry() -> None:
    sys.exit(extract_main())


def probe_entry() -> None:
    sys.exit(probe_main())
