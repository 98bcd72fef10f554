"""Command-line entry point: ``ricens <stage> [options]``.

Each stage reads and writes artifacts in ``--out-dir`` so stages can be run
one at a time. ``run`` chains every stage and removes partial output on
failure. Exit status is 0 on success and stage-coded otherwise (see
``pipeline.STAGE_CODES``).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, load_config
from .pipeline import PipelineError
from .synthetic import SyntheticSpec

log = logging.getLogger("ricens")


def _common(parser: argparse.ArgumentParser, data: bool = False, out: bool = True):
    parser.add_argument("--config", type=Path, help="flat key = value config file")
    parser.add_argument("--seed", type=int, help="overrides the config seed")
    parser.add_argument("--mode", choices=("paper_fixed", "run_pipeline"), help="feature-selection mode")
    if data:
        parser.add_argument("--data-dir", type=Path, help="directory with fields.csv and locations/")
    if out:
        parser.add_argument("--out-dir", type=Path, default=Path("ricens_out"), help="artifact directory")
    parser.add_argument("-v", "--verbose", action="store_true")


def _synthetic_options(parser):
    parser.add_argument("--n-records", type=int, default=SyntheticSpec.n_records)
    parser.add_argument("--noise-sd", type=float, default=SyntheticSpec.noise_sd, help="kg/ha")
    parser.add_argument("--interaction", type=float, default=0.0, help="VV x kNDVI coefficient (kg/ha)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ricens", description="Multi-sensor crop-yield ensemble pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset to --data-dir")
    _common(p, out=False)
    p.add_argument("--data-dir", type=Path, required=True)
    _synthetic_options(p)

    p = sub.add_parser("extract", help="engineer the feature table from --data-dir")
    _common(p, data=True)
    sub_help = {
        "select": "split, scale and select features",
        "train": "cross-validate and fit the ensemble on the training split",
        "evaluate": "single evaluation on the test split",
        "report": "render figures and a text summary",
    }
    for name, text in sub_help.items():
        _common(sub.add_parser(name, help=text))

    p = sub.add_parser("predict", help="apply trained models to a feature file")
    _common(p)
    p.add_argument("--features", type=Path, required=True, help="features.csv produced by extract")
    p.add_argument("--output", type=Path, required=True)

    p = sub.add_parser("run", help="all stages; synthetic data unless --data-dir is given")
    _common(p, data=True)
    _synthetic_options(p)
    p.add_argument("--no-report", action="store_true", help="skip figure rendering")
    return parser


def _config(args):
    config = load_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.mode is not None:
        updates["mode"] = args.mode
    return config.with_updates(**updates) if updates else config


def _spec(args) -> SyntheticSpec:
    return SyntheticSpec(n_records=args.n_records, noise_sd=args.noise_sd, interaction=args.interaction)


def dispatch(args) -> int:
    try:
        config = _config(args)
    except (ConfigError, OSError) as exc:
        raise PipelineError("config", str(exc)) from exc

    cmd = args.command
    if cmd == "synth":
        try:
            spec = _spec(args)
        except ValueError as exc:
            raise PipelineError("config", str(exc)) from exc
        pipeline.stage_synth(config, args.data_dir, spec)
        print(f"wrote {spec.n_records} records to {args.data_dir}")
    elif cmd == "extract":
        if args.data_dir is None:
            raise PipelineError("config", "extract needs --data-dir")
        table = pipeline.stage_extract(config, args.out_dir, data_dir=args.data_dir)
        print(f"features.csv: {len(table)} rows x {len(table.columns)} feature columns")
    elif cmd == "select":
        selected = pipeline.stage_select(config, args.out_dir)
        print(f"{len(selected)} features selected ({config.mode})")
    elif cmd == "train":
        result = pipeline.stage_train(config, args.out_dir)
        cv = result.cv[pipeline.ENSEMBLE]
        print(f"ensemble 10-fold CV R2 {cv.mean:.4f} +/- {cv.std:.4f}")
    elif cmd == "evaluate":
        summary = pipeline.stage_evaluate(config, args.out_dir)
        print(summary.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    elif cmd == "predict":
        frame = pipeline.stage_predict(config, args.out_dir, args.features, args.output)
        print(f"wrote {len(frame)} predictions to {args.output}")
    elif cmd == "report":
        for path in pipeline.stage_report(config, args.out_dir):
            print(path)
    elif cmd == "run":
        try:
            spec = _spec(args)
        except ValueError as exc:
            raise PipelineError("config", str(exc)) from exc
        result = pipeline.run_pipeline(config, args.out_dir, data_dir=args.data_dir, synthetic=spec,
                                       report=not args.no_report)
        print(result.summary.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
        print(f"artifacts in {result.out_dir}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: missing artifact {exc.filename}; run the earlier stages first", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
