"""Command-line surface: validate packs, score blends, rank, generate
synthetic benchmarks, compute proxy gains and centroid matrices, and sweep
config grids.

Exit codes: 0 success, 1 internal error, 2 invalid input or config.  All
randomness flows from --seed through tagged sub-seed hashing, so reports are
byte-identical across repeated runs; stage timings go to stderr to keep the
JSON deterministic.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .density import CovarianceKind
from .evaluation import (
    EvaluationError,
    GainsTable,
    blend_id_of,
    centroid_matrix,
    enumerate_blends,
    rank_blends,
    score_blends,
)
from .geometry import SpaceKind
from .pack import PackError, load_pack, validate_pack, write_pack
from .pipeline import ConfigError, DivergenceAlgo, RadarConfig
from .sampling import SamplingError, StrategyKind, WeightTransform
from .seeds import SEED_DERIVATION
from .synthetic import GainsProxy, SyntheticError, SyntheticSpec, gen_pack, proxy_gains

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2

_INPUT_ERRORS = (
    PackError,
    ConfigError,
    SamplingError,
    SyntheticError,
    EvaluationError,
    FileNotFoundError,
    json.JSONDecodeError,
)


SCHEMA_VERSION = 1


def _emit(report: dict, out: str | None) -> None:
    report.setdefault("schema_version", SCHEMA_VERSION)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _log(msg: str) -> None:
    print(f"[radar] {msg}", file=sys.stderr)


def _run_record(config: RadarConfig | None, seed: int) -> dict:
    rec = {
        "engine_version": __version__,
        "seed": seed,
        "seed_derivation": SEED_DERIVATION,
    }
    if config is not None:
        rec["config_digest"] = config.digest()
    return rec


def _config_from_args(args) -> RadarConfig:
    base: dict = {}
    if getattr(args, "config", None):
        base = json.loads(Path(args.config).read_text())
    overrides = {
        "pairs": args.pairs,
        "window": args.window,
        "tau": args.tau,
        "sampling": args.sampling,
        "replacement": args.replacement or None,
        "space": args.space,
        "covariance": args.covariance,
        "baseline_pairs": args.baseline_pairs,
        "seed": args.seed,
    }
    for key, value in overrides.items():
        if value is not None:
            base[key] = value
    if args.algorithm is not None:
        algo = base.get("algorithm", {})
        if isinstance(algo, str):
            algo = {"kind": algo}
        algo["kind"] = args.algorithm
        base["algorithm"] = algo
    if args.no_standardize:
        base["standardize"] = False
    if args.no_angle:
        base["use_angle"] = False
    if args.no_distance:
        base["use_distance"] = False
    return RadarConfig.from_dict(base)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file mirroring the config field names")
    p.add_argument("--pairs", type=int, default=None, help="pair count N (default 32768)")
    p.add_argument("--window", type=int, default=None, help="window radius (default 6)")
    p.add_argument("--tau", type=float, default=None, help="weight temperature (default 2.0)")
    p.add_argument(
        "--sampling", choices=[k.value for k in StrategyKind], default=None,
        help="pair sampling strategy (default mix)",
    )
    p.add_argument("--replacement", action="store_true", help="sample pairs with replacement")
    p.add_argument(
        "--space", choices=[s.value for s in SpaceKind], default=None,
        help="descriptor space (default euclidean)",
    )
    p.add_argument(
        "--covariance", choices=[c.value for c in CovarianceKind], default=None,
        help="mixture covariance kind (default diag)",
    )
    p.add_argument(
        "--algorithm", choices=["gmm-kl", "gmm-swd", "sinkhorn", "mmd"], default=None,
        help="divergence estimator (default gmm-kl)",
    )
    p.add_argument("--no-standardize", action="store_true", help="skip feature standardization")
    p.add_argument("--no-angle", action="store_true", help="drop angle columns")
    p.add_argument("--no-distance", action="store_true", help="drop distance columns")
    p.add_argument("--baseline-pairs", type=int, default=None, dest="baseline_pairs",
                   help="standardizer baseline draw size (default 2^20)")
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers over blends")
    p.add_argument("--out", help="write the JSON report here instead of stdout")


def _parse_sources(text: str) -> tuple[str, ...]:
    parts = tuple(s for s in text.split("+") if s)
    if not parts:
        raise ConfigError(f"could not parse source set from {text!r}")
    return parts


def cmd_validate(args) -> int:
    report = validate_pack(args.pack)
    if args.json:
        _emit(report.to_dict(), args.out)
    else:
        status = "ok" if report.ok else "INVALID"
        print(f"pack {args.pack}: {status}")
        for issue in report.issues:
            print(f"  [{issue.severity}] {issue.message}")
    return EXIT_OK if report.ok else EXIT_USAGE


def cmd_score(args) -> int:
    config = _config_from_args(args)
    pack = load_pack(args.pack)
    sources = _parse_sources(args.sources)
    if args.layer is None and not args.all_layers:
        raise ConfigError("pass --layer L or --all-layers")
    t0 = time.monotonic()
    profiles = score_blends(pack, args.target, [sources], config, jobs=1)
    scores = profiles[blend_id_of(sources)]
    if args.layer is not None:
        scores = [scores[args.layer]] if 0 <= args.layer < len(scores) else None
        if scores is None:
            raise ConfigError(f"layer {args.layer} out of range")
    _log(f"stage=score elapsed={time.monotonic() - t0:.2f}s")
    report = {
        "command": "score",
        "pack": str(args.pack),
        "target": args.target,
        "blend_id": blend_id_of(sources),
        "config": config.to_dict(),
        "run": _run_record(config, config.seed),
        "scores": scores,
    }
    _emit(report, args.out)
    return EXIT_OK


def cmd_rank(args) -> int:
    config = _config_from_args(args)
    pack = load_pack(args.pack)
    gains = GainsTable.load(args.gains) if args.gains else None
    t0 = time.monotonic()
    result = rank_blends(
        pack, args.target, args.mode, config,
        gains=gains,
        rank_layer=args.rank_layer,
        jobs=args.jobs,
    )
    _log(f"stage=rank elapsed={time.monotonic() - t0:.2f}s")
    report = {
        "command": "rank",
        "pack": str(args.pack),
        "target": args.target,
        "mode": args.mode,
        "config": config.to_dict(),
        "run": _run_record(config, config.seed),
        "ranking": [
            {
                "blend_id": r.blend_id,
                "sources": list(r.sources),
                "score": r.mean_score,
                "per_layer": list(r.per_layer),
            }
            for r in result.ranked
        ],
    }
    if result.report is not None:
        report["evaluation"] = result.report.to_dict()
    _emit(report, args.out)
    # plain-text rendering alongside the JSON report
    print(f"{'rank':>4}  {'blend':<24} {'score':>10}", file=sys.stderr)
    for i, r in enumerate(result.ranked, 1):
        print(f"{i:>4}  {r.blend_id:<24} {r.mean_score:>10.4f}", file=sys.stderr)
    if result.report is not None:
        rep = result.report
        print(
            f"mean rho metric {rep.mean_rho_metric:+.4f} | baseline "
            f"{rep.mean_rho_base:+.4f} | MCI {rep.mci:+.4f}",
            file=sys.stderr,
        )
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SyntheticSpec.from_dict(json.loads(Path(args.spec).read_text()))
    pack = gen_pack(spec)
    write_pack(pack, args.out_dir)
    _log(f"stage=synth wrote pack to {args.out_dir}")
    report = validate_pack(args.out_dir)
    if not report.ok:
        raise RuntimeError(f"generated pack failed validation: {report.to_dict()}")
    print(json.dumps({"command": "synth", "out": str(args.out_dir), "ok": True}, sort_keys=True))
    return EXIT_OK


def cmd_proxy_gains(args) -> int:
    pack = load_pack(args.pack)
    sources = [d for d in pack.manifest.domain_names if d != args.target]
    blends = enumerate_blends(sources, args.mode)
    proxy = GainsProxy(
        holdout=args.holdout,
        seeds=tuple(range(args.proxy_seeds)),
    )
    table = proxy_gains(pack, args.target, blends, proxy)
    table.save(args.out_csv)
    _log(f"stage=proxy-gains wrote {len(table.rows)} rows to {args.out_csv}")
    print(json.dumps({"command": "proxy-gains", "rows": len(table.rows), "out": str(args.out_csv)}, sort_keys=True))
    return EXIT_OK


def cmd_centroids(args) -> int:
    pack = load_pack(args.pack)
    matrix = centroid_matrix(pack, args.layer)
    names = pack.manifest.domain_names
    if args.csv:
        lines = ["domain," + ",".join(names)]
        for i, name in enumerate(names):
            lines.append(name + "," + ",".join(repr(float(v)) for v in matrix[i]))
        text = "\n".join(lines) + "\n"
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
    else:
        _emit(
            {
                "command": "centroids",
                "layer": args.layer,
                "domains": list(names),
                "matrix": matrix.tolist(),
            },
            args.out,
        )
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = _config_from_args(args)
    pack = load_pack(args.pack)
    gains = GainsTable.load(args.gains)
    variants = json.loads(Path(args.grid).read_text())
    if not isinstance(variants, list):
        raise ConfigError("grid file must hold a JSON list of config override objects")

    base = config.to_dict()
    rows = []
    seen: set[str] = set()
    for overrides in variants:
        merged = dict(base)
        for key, value in overrides.items():
            if key == "algorithm":
                algo = dict(merged.get("algorithm", {}))
                if isinstance(value, str):
                    algo["kind"] = value
                else:
                    algo.update(value)
                merged["algorithm"] = algo
            else:
                merged[key] = value
        variant = RadarConfig.from_dict(merged)
        digest = variant.digest()
        if digest in seen:
            _log(f"stage=ablate duplicate variant {digest} skipped")
            continue
        seen.add(digest)
        t0 = time.monotonic()
        result = rank_blends(pack, args.target, args.mode, variant, gains=gains, jobs=args.jobs)
        _log(f"stage=ablate variant={digest} elapsed={time.monotonic() - t0:.2f}s")
        rows.append(
            {
                "overrides": overrides,
                "config_digest": digest,
                "covariance": merged.get("covariance", base["covariance"]),
                "algorithm": merged["algorithm"]["kind"]
                if isinstance(merged.get("algorithm"), dict)
                else base["algorithm"]["kind"],
                "mci": result.report.mci,
                "mean_rho_metric": result.report.mean_rho_metric,
                "mean_rho_base": result.report.mean_rho_base,
            }
        )
    report = {
        "command": "ablate",
        "pack": str(args.pack),
        "target": args.target,
        "mode": args.mode,
        "base_config": base,
        "run": _run_record(config, config.seed),
        "rows": rows,
    }
    _emit(report, args.out)
    width = max((len(str(r["overrides"])) for r in rows), default=10)
    print(f"{'variant':<{width}}  {'MCI':>8}  {'rho_metric':>10}  {'rho_base':>9}", file=sys.stderr)
    for r in rows:
        print(
            f"{str(r['overrides']):<{width}}  {r['mci']:>8.4f}  "
            f"{r['mean_rho_metric']:>10.4f}  {r['mean_rho_base']:>9.4f}",
            file=sys.stderr,
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radar",
        description="Score and rank source-domain blends by trajectory divergence",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a feature pack directory")
    p.add_argument("pack")
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("score", help="score one blend against a target")
    p.add_argument("--pack", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--sources", required=True, help="'+'-joined source domain names")
    p.add_argument("--layer", type=int, default=None)
    p.add_argument("--all-layers", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("rank", help="rank all blends for a target")
    p.add_argument("--pack", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--mode", choices=["pairwise", "full"], default="pairwise")
    p.add_argument("--gains", help="ground-truth gains CSV for evaluation")
    p.add_argument("--rank-layer", type=int, default=None,
                   help="rank at this layer instead of the cross-layer mean")
    _add_config_flags(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("synth", help="generate a synthetic pack from a spec")
    p.add_argument("--spec", required=True, help="JSON synthetic spec")
    p.add_argument("--out", dest="out_dir", required=True, help="output pack directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("proxy-gains", help="nearest-centroid proxy gains table")
    p.add_argument("--pack", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--mode", choices=["pairwise", "full"], default="pairwise")
    p.add_argument("--out", dest="out_csv", required=True)
    p.add_argument("--holdout", type=float, default=0.3)
    p.add_argument("--proxy-seeds", type=int, default=3)
    p.set_defaults(func=cmd_proxy_gains)

    p = sub.add_parser("centroids", help="domain centroid distance matrix at a layer")
    p.add_argument("--pack", required=True)
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("--csv", action="store_true", help="CSV instead of JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_centroids)

    p = sub.add_parser("ablate", help="MCI table over a grid of config variants")
    p.add_argument("--pack", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--mode", choices=["pairwise", "full"], default="pairwise")
    p.add_argument("--gains", required=True)
    p.add_argument("--grid", required=True, help="JSON list of config overrides")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses code 2 for usage errors already
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # internal failure
        import traceback

        traceback.print_exc()
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
