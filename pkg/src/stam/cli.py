"""Batch command line.

Exit status: 0 on success, 1 on usage errors, 2 on data or validation errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import evaluation as ev
from . import run
from .checkpoint import TrainingState, load_checkpoint, save_checkpoint
from .config import load_config
from .errors import StamError, ValidationError

log = logging.getLogger("stam")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="stam", description="Train and inspect STAM hierarchies.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="stream the configured schedule through a hierarchy")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint-in")
    p.add_argument("--checkpoint-out", required=True)
    p.add_argument("--max-items", type=int, help="stop after this many stream items")

    p = sub.add_parser("eval", help="write a phase,metric,value CSV report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--baseline", help="earlier report; enables the forgetting metric")

    p = sub.add_parser("inspect", help="export centroids as binary PGM images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--centroids-pgm", required=True, metavar="DIR")

    p = sub.add_parser("gen-data", help="write the configured synthetic data as IDX files")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, metavar="DIR")
    return parser


def cmd_train(args):
    cfg = load_config(args.config)
    if args.checkpoint_in:
        state = load_checkpoint(args.checkpoint_in)
        if state.config != cfg:
            raise ValidationError("checkpoint was written with a different configuration")
        state.config = cfg
    else:
        state = TrainingState.fresh(cfg)
    data = run.make_data(cfg)
    schedule = run.make_schedule(cfg, data.train)
    if args.max_items is not None and args.max_items < 0:
        raise UsageError("--max-items must be non-negative")
    start = state.cursor
    pairs = run.train(state, data, schedule, args.max_items)
    log.info("trained on items %d..%d of %d", start, state.cursor, len(schedule))
    if pairs:
        log.info("top-level purity during training: %.4f", ev.purity(pairs))
    save_checkpoint(state, args.checkpoint_out)


def cmd_eval(args):
    cfg = load_config(args.config)
    state = load_checkpoint(args.checkpoint)
    if state.config != cfg:
        raise ValidationError("checkpoint was written with a different configuration")
    baseline = None
    if args.baseline:
        with open(args.baseline, encoding="utf-8") as fh:
            baseline = ev.read_report(fh.read())
    report = run.evaluate(cfg, state.hierarchy, run.make_data(cfg), baseline)
    with open(args.report, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(ev.rows_to_csv(report.rows()))


def cmd_inspect(args):
    state = load_checkpoint(args.checkpoint)
    paths = run.export_centroid_pgms(state.hierarchy, args.centroids_pgm)
    log.info("wrote %d PGM files", len(paths))


def cmd_gen_data(args):
    cfg = load_config(args.config)
    if cfg.data_source != "synth":
        raise ValidationError("gen-data needs data.source = synth")
    run.write_idx_files(run.make_data(cfg), args.out)


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "inspect": cmd_inspect, "gen-data": cmd_gen_data}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"stam: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"stam: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StamError, OSError) as exc:
        print(f"stam: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
