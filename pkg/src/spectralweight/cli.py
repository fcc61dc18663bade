"""Command line entry point: ``spectralweight extract|train|evaluate|predict|synth``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import pipeline
from .errors import NumericalError, SpectralWeightError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

DEFAULT_CACHE = ".spectralweight-cache"


def _common(p):
    p.add_argument("--config", metavar="JSON", help="pipeline configuration file")
    p.add_argument("--seed", type=int, help="override the configured random seed")
    p.add_argument("--verbose", "-v", action="store_true")


def _cache_args(p):
    p.add_argument("--cache-dir", help=f"eigen/signature cache (default: <manifest dir>/{DEFAULT_CACHE})")
    p.add_argument("--no-cache", action="store_true", help="disable the on-disk cache")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectralweight",
        description="Spectral graph wavelet shape features and PLS weight prediction for triangle meshes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="compute the n x (k+3) feature matrix for a manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", default="features.csv")
    p.add_argument("--skip-bad", action="store_true", help="drop meshes that fail validation")
    _cache_args(p)
    _common(p)

    p = sub.add_parser("train", help="fit a PLS model on an extracted feature file")
    p.add_argument("features")
    p.add_argument("--target", required=True)
    p.add_argument("-o", "--output", default="model.json")
    _common(p)

    p = sub.add_parser("evaluate", help="leave-one-out cross-validation over a manifest")
    p.add_argument("manifest")
    p.add_argument("--target", required=True)
    p.add_argument("-o", "--output", help="directory for report JSON/CSV/text and figures")
    p.add_argument("--shared-dictionary", action="store_true",
                   help="learn one dictionary on all meshes instead of per fold")
    p.add_argument("--skip-bad", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    _cache_args(p)
    _common(p)

    p = sub.add_parser("predict", help="predict the target for one mesh")
    p.add_argument("bundle")
    p.add_argument("mesh")
    p.add_argument("--weight", type=float, required=True, help="carcass weight (kg)")
    _cache_args(p)
    _common(p)

    p = sub.add_parser("synth", help="generate a synthetic dataset with known targets")
    p.add_argument("n", type=int)
    p.add_argument("-o", "--output", default="synth")
    p.add_argument("--noise", type=float, default=0.0, help="relative target noise (e.g. 0.05)")
    p.add_argument("--vertices", type=int, default=3600, help="vertices per generated mesh")
    _common(p)
    return parser


def _config(args):
    cfg = pipeline.PipelineConfig.load(args.config) if args.config else pipeline.PipelineConfig()
    return cfg.replace(seed=args.seed)


def _cache_dir(args, anchor):
    if args.no_cache:
        return None
    if args.cache_dir:
        return args.cache_dir
    return os.path.join(os.path.dirname(os.path.abspath(anchor)), DEFAULT_CACHE)


def run(args, out=None) -> int:
    out = out or sys.stdout
    if args.command == "extract":
        res = pipeline.cmd_extract(args.manifest, _config(args), args.output,
                                   _cache_dir(args, args.manifest), args.skip_bad)
        for path, exc in res.failures:
            print(f"skipped {path}: {exc}", file=out)
        print(f"wrote {res.n} rows to {res.features_path} ({res.meta_path})", file=out)
        print(f"cache: {res.cache_hits} hits, {res.cache_misses} misses", file=out)
    elif args.command == "train":
        cfg = _config(args) if args.config else None
        bundle = pipeline.cmd_train(args.features, args.target, args.output, cfg)
        print(f"wrote {args.output}: target={bundle.target} components={bundle.model.n_components} "
              f"features={bundle.model.n_features}", file=out)
    elif args.command == "evaluate":
        res = pipeline.cmd_evaluate(args.manifest, args.target, _config(args), args.output,
                                    _cache_dir(args, args.manifest), args.shared_dictionary,
                                    args.skip_bad, not args.no_figures)
        out.write(res.table)
        for kind, path in sorted(res.paths.items()):
            print(f"{kind}: {path}", file=out)
    elif args.command == "predict":
        cfg = _config(args) if args.config else None
        yhat = pipeline.cmd_predict(args.bundle, args.mesh, args.weight, cfg,
                                    _cache_dir(args, args.bundle), args.verbose, out)
        print(f"{yhat:.6f}", file=out)
    elif args.command == "synth":
        seed = 0 if args.seed is None else args.seed
        path = pipeline.cmd_synth(args.n, seed, args.output, args.noise, args.vertices)
        print(f"wrote {args.n} meshes and {path}", file=out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (SpectralWeightError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
