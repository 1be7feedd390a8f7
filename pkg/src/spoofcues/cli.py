"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 stage failure.
Diagnostics go to stderr; results go to files in the run directory.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import ConfigError, ExperimentConfig
from .errors import DataError, SpoofCuesError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_STAGE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="YAML experiment config (every key optional)")
    p.add_argument("--dataset", help="dataset root or manifest CSV")
    p.add_argument("--out", help="output root; results go to <out>/<condition>/")
    p.add_argument("--seed", type=int, help="GMM initialisation seed")
    p.add_argument("--models", help="comma-separated model list, e.g. LogReg,RbfSVM")
    p.add_argument("--condition", help="condition name (run sub-directory)")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="spoofcues", description="Interpretable synthetic-speech detection pipeline")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (("extract", "extract clip features into features.csv"),
                        ("analyze", "ANOVA, correlations and histograms"),
                        ("train", "select features, standardise and train models"),
                        ("evaluate", "score models, write tables, curves and McNemar tests"),
                        ("run-all", "run every stage, resuming from checkpoints")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name in ("extract", "run-all"):
            p.add_argument("--debug-dump", action="store_true",
                           help="also write per-clip spectrogram and pitch-track CSVs under debug/")
        if name == "run-all":
            p.add_argument("--print-summary", action="store_true", help="print summary.md to stdout")
    p = sub.add_parser("synth", help="write a synthetic real/fake corpus")
    p.add_argument("--out", required=True, help="corpus root")
    p.add_argument("--n-train", type=int, default=200, help="training clips per class")
    p.add_argument("--n-test", type=int, default=100, help="test clips per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.dataset is not None:
        cfg.dataset = args.dataset
    if args.out is not None:
        cfg.out = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.condition is not None:
        cfg.condition = args.condition
    if args.workers is not None:
        cfg.workers = args.workers
    if args.models is not None:
        cfg.models = [m.strip() for m in args.models.split(",") if m.strip()]
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    log = logging.getLogger("spoofcues")
    try:
        if args.command == "synth":
            from .synthetic import SynthConfig, write_corpus
            write_corpus(args.out, args.n_train, args.n_test, args.seed, SynthConfig(sample_rate=args.sample_rate))
            return EXIT_OK
        cfg = resolve_config(args)
        if args.command == "run-all":
            ran = pipeline.run_all(cfg, debug_dump=args.debug_dump)
            log.info("stages run: %s", ", ".join(ran) or "none (all up to date)")
            if args.print_summary:
                sys.stdout.write(pipeline.RunDir(cfg).path("summary.md").read_text(encoding="utf-8"))
        else:
            pipeline.run_stage(cfg, args.command, debug_dump=getattr(args, "debug_dump", False))
        return EXIT_OK
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_USAGE
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except SpoofCuesError as exc:
        log.error("stage failed: %s", exc)
        return EXIT_STAGE
    except Exception:
        log.exception("unexpected failure")
        return EXIT_STAGE
    finally:
        pipeline.detach_logs()


if __name__ == "__main__":
    sys.exit(main())
