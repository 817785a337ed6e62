"""Command-line entry point: synth, train, fit-detector, anticipate, evaluate."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile

from . import iforest, workflow
from .config import ConfigError, RunConfig, load_config
from .features import load_mask
from .forecaster import load_model, model_bytes
from .pipeline import check_binding, evaluate_run
from .series import frame_text, synth_generate

PROG = "anticipator"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # one-line diagnostic instead of the multi-line usage dump
        self.exit(2, f"{self.prog}: error: {message}\n")


def _write_atomic(path: str, data: bytes | str) -> None:
    """Write via a temporary file in the target directory so failures leave no partial output."""
    path = os.path.abspath(path)
    d = os.path.dirname(path)
    if not os.path.isdir(d):
        raise FileNotFoundError(f"output directory does not exist: {d}")
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _need(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def cmd_synth(cfg: RunConfig, args) -> None:
    out = args.out or cfg.paths.data
    frame = synth_generate(workflow.synth_config(cfg), cfg.seed)
    _write_atomic(out, frame_text(frame))
    print(f"wrote {frame.length} rows x {frame.m} metrics to {out}")


def cmd_train(cfg: RunConfig, args) -> None:
    frame = workflow.read_frame(cfg, args.data)
    model, trace = workflow.train_forecaster(frame, cfg)
    out = args.out or cfg.paths.checkpoint
    trace_path = args.trace or cfg.paths.loss_trace or out + ".loss.csv"
    _write_atomic(out, model_bytes(model))
    _write_atomic(trace_path, workflow.loss_trace_text(trace))
    print(f"trained {len(trace)} epochs; checkpoint {out}; loss trace {trace_path}")


def cmd_fit_detector(cfg: RunConfig, args) -> None:
    model = load_model(_need(args.checkpoint or cfg.paths.checkpoint, "checkpoint"))
    frame = workflow.read_frame(cfg, args.data)
    fit = workflow.fit_detector(frame, model, cfg)
    out = args.out or cfg.paths.forest
    mask_path = args.mask or cfg.paths.mask
    _write_atomic(out, iforest.forest_bytes(fit.forest))
    _write_atomic(mask_path, "".join(f"{n}\n" for n in fit.mask))
    print(f"forest with {len(fit.forest.trees)} trees over {len(fit.mask)} features "
          f"(checksum {iforest.forest_checksum(fit.forest)}); mask {mask_path}")


def cmd_anticipate(cfg: RunConfig, args) -> None:
    model = load_model(_need(args.checkpoint or cfg.paths.checkpoint, "checkpoint"))
    forest = iforest.load_forest(_need(args.forest or cfg.paths.forest, "forest"))
    mask = load_mask(_need(args.mask or cfg.paths.mask, "feature mask"))
    check_binding(mask, forest)
    frame = workflow.read_frame(cfg, args.data)
    results = workflow.run_anticipation(frame, model, forest, mask, cfg, timing=not args.no_timing)
    out = args.out or cfg.paths.results
    _write_atomic(out, workflow.results_text(results, frame.names, model.window.forecast_len))
    print(f"scored {len(results)} windows, {sum(r.flag for r in results)} flagged; results {out}")


def cmd_evaluate(cfg: RunConfig, args) -> None:
    frame = workflow.read_frame(cfg, args.data)
    s = cfg.window.forecast_len
    results = workflow.read_results(_need(args.results or cfg.paths.results, "results file"), frame.m, s)
    results = workflow.attach_truth(results, frame, cfg)
    if frame.interval is None:
        raise ValueError("data needs at least two rows to know its sampling interval")
    report = evaluate_run(results, frame.interval, s)
    out = args.out or cfg.paths.report
    _write_atomic(out, report.to_text())
    _write_atomic(args.jsonl or out + ".jsonl", report.to_json_line())
    sys.stdout.write(report.to_text())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value run configuration")
    common.add_argument("--seed", type=int, help="overrides config and $ANTICIPATOR_SEED")
    common.add_argument("--jobs", type=int, help="worker cap for feature extraction")
    common.add_argument("--out", help="primary output path of the command")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog=PROG, description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("synth", parents=[common], help="write a synthetic labelled data file")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", parents=[common], help="train the diffusion forecaster")
    sp.add_argument("--data")
    sp.add_argument("--trace", help="loss-trace CSV (default: <checkpoint>.loss.csv)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("fit-detector", parents=[common], help="fit the two-phase isolation forest")
    sp.add_argument("--data")
    sp.add_argument("--checkpoint")
    sp.add_argument("--mask", help="output feature mask path")
    sp.set_defaults(func=cmd_fit_detector)

    sp = sub.add_parser("anticipate", parents=[common], help="score every test window")
    sp.add_argument("--data")
    sp.add_argument("--checkpoint")
    sp.add_argument("--forest")
    sp.add_argument("--mask")
    sp.add_argument("--no-timing", action="store_true",
                    help="record zero durations so the results file is reproducible byte for byte")
    sp.set_defaults(func=cmd_anticipate)

    sp = sub.add_parser("evaluate", parents=[common], help="window-level report for a results file")
    sp.add_argument("--data")
    sp.add_argument("--results")
    sp.add_argument("--jsonl", help="machine-readable report line (default: <report>.jsonl)")
    sp.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set, seed=args.seed, jobs=args.jobs)
        args.func(cfg, args)
    except ConfigError as exc:
        print(f"{PROG}: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # every failure is reported as one line
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"{PROG}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
