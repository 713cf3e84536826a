import argparse
import logging
import sys
from pathlib import Path

from core.errors import ConfigError, FairnessToolkitError
from core.pipeline import StudyPipeline, eval_single_trace
from core.study_config import load_study_config
from algorithms.surrogates import KINDS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3

# ---------------------------------------------------------------------
# Logging Configuration
# ---------------------------------------------------------------------
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def configure_logging(out_dir: Path, verbose: bool = False) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.DEBUG if verbose else logging.INFO)
    logging.basicConfig(
        format=LOG_FORMAT,
        level=logging.DEBUG,
        handlers=[logging.FileHandler(out_dir / 'app.log', mode='a', encoding='utf-8'), console],
        force=True,
    )


logger = logging.getLogger()

# ---------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------
STAGE_COMMANDS = ("trace", "fit", "eval", "shift", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="app.py",
        description="Generate fairness traces, fit fairness surrogates and evaluate them.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, help="Path to the study JSON config")
        p.add_argument("--out", type=str, help="Output directory (overrides config out_dir)")
        p.add_argument("--force", action="store_true", help="Regenerate cached traces")
        p.add_argument("--seed", type=int, help="Base seed (overrides config seed)")
        p.add_argument("--jobs", type=int, help="Parallel evaluations per generation")
        p.add_argument("--verbose", action="store_true", help="DEBUG output on the console")

    common(sub.add_parser("run", help="trace -> fit -> eval -> shift -> report"))
    for name in STAGE_COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage alone")
        common(p)
        if name == "eval":
            p.add_argument("--trace", type=str, help="Benchmark a single trace file instead of a study")
            p.add_argument("--kinds", type=str, default=",".join(KINDS),
                           help="Comma-separated surrogate kinds (with --trace)")
            p.add_argument("--repeats", type=int, default=10, help="Repeats (with --trace)")
            p.add_argument("--target", choices=("aod", "eod"), default="aod", help="Target (with --trace)")
    return parser


def _standalone_eval(args) -> int:
    out = Path(args.out or "out")
    configure_logging(out, args.verbose)
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    unknown = [k for k in kinds if k not in KINDS]
    if unknown or args.repeats < 2:
        print(f"invalid arguments: unknown kinds {unknown}" if unknown else "--repeats must be >= 2",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        path = eval_single_trace(args.trace, out, kinds, args.repeats, 0.8, args.target,
                                 args.seed if args.seed is not None else 0)
    except FairnessToolkitError as e:
        logger.error(str(e))
        return EXIT_STAGE
    logger.info("report written to %s", path)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "eval" and args.trace:
        return _standalone_eval(args)
    if not args.config:
        print("--config is required", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs is not None and args.jobs < 1:
        print("--jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG

    # 1) validate the whole config before any work
    try:
        config = load_study_config(args.config, seed=args.seed, out_dir=args.out, jobs=args.jobs)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG

    configure_logging(Path(config.out_dir), args.verbose)
    logger.info("%s: config %s, out %s, seed %s", args.command, args.config, config.out_dir, config.seed)

    # 2) run the requested stage(s)
    pipeline = StudyPipeline(config, force=args.force)
    if args.command == "run":
        status = pipeline.run()
    else:
        status = pipeline.execute([args.command])
    if status != EXIT_OK:
        logger.error("%s finished with failures; see %s", args.command, Path(config.out_dir) / "manifest.json")
    return status


if __name__ == "__main__":
    sys.exit(main())
