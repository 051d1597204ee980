#!/usr/bin/env python3
"""Score a synthetic severity ladder at every center layer.

Builds a ladder pack (one clean target plus shifted sources of increasing
severity), scores each source against the target at every layer, and prints
the score matrix with a monotonicity verdict per layer.
"""

from __future__ import annotations

import argparse
import time

from radar.pipeline import RadarConfig, radar_score, score_cache
from radar.synthetic import DomainShift, LayerMap, SyntheticSpec, gen_pack

MIXED_ANGLES = (0.5, 0.9, 0.3, 0.7, 0.4, 0.8, 0.6)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--severities", type=float, nargs="+",
                        default=[2.5, 4.0, 5.2, 6.2, 7.0])
    parser.add_argument("--kind", choices=["translation", "rotation", "noise"],
                        default="translation")
    parser.add_argument("--classes", type=int, default=5)
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--layers", type=int, default=8)
    parser.add_argument("--samples", type=int, default=500)
    parser.add_argument("--pairs", type=int, default=8192)
    parser.add_argument("--baseline-pairs", type=int, default=2 ** 13)
    parser.add_argument("--pack-seed", type=int, default=101)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    spec = SyntheticSpec(
        num_classes=args.classes,
        dim=args.dim,
        num_layers=args.layers,
        samples_per_domain=args.samples,
        class_separation=3.0,
        layer_map=LayerMap(MIXED_ANGLES, 0.9, False),
        domains=tuple(
            [DomainShift("target", args.kind, 0.0)]
            + [DomainShift(f"s{i}", args.kind, s)
               for i, s in enumerate(args.severities, 1)]
        ),
        seed=args.pack_seed,
    )
    pack = gen_pack(spec)
    config = RadarConfig(
        pairs=args.pairs, baseline_pairs=args.baseline_pairs, seed=args.seed
    )
    cache = score_cache()

    names = [f"s{i}" for i in range(1, len(args.severities) + 1)]
    header = "layer | " + "  ".join(f"{n:>8}" for n in names) + " | monotone"
    print(header)
    print("-" * len(header))
    t0 = time.monotonic()
    for layer in range(args.layers):
        values = [
            radar_score(pack, "target", (n,), layer, config, cache=cache).value
            for n in names
        ]
        mono = all(a < b for a, b in zip(values, values[1:]))
        row = "  ".join(f"{v:8.3f}" for v in values)
        print(f"{layer:5d} | {row} | {'yes' if mono else 'NO'}")
    print(f"elapsed: {time.monotonic() - t0:.1f}s")


if __name__ == "__main__":
    main()
