"""Command-line entry point: ``tpopt <stage> [options]`` or ``tpopt run``.

Exit codes: 0 success, 2 configuration error, 3 missing upstream artifact,
4 divergence during optimization or training, 1 anything else.
"""

import argparse
from dataclasses import replace
import json
import os
import sys

from .errors import (ConfigurationError, DivergenceError, StageDependencyError, TpoptError,
                     TrainingError)
from .pipeline import STAGES, Pipeline

THREADS_ENV = "TPOPT_THREADS"

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DEPENDENCY, EXIT_DIVERGENCE = 0, 1, 2, 3, 4


def default_config_path():
    return os.path.join(os.path.dirname(__file__), "configs", "desk.yaml")


def _add_common(p):
    p.add_argument("--config", help="YAML experiment config (default: bundled desk config)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.add_argument("--threads", type=int,
                   help=f"cap BLAS threads (also read from ${THREADS_ENV})")
    p.add_argument("--stage", action="append", choices=STAGES,
                   help="stage to run; repeatable with 'run' (default: all stages)")


def build_parser():
    parser = argparse.ArgumentParser(prog="tpopt", description="template optimization experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        _add_common(sub.add_parser(stage, help=f"run the {stage} stage"))
    _add_common(sub.add_parser("run", help="run several stages in order"))
    show = sub.add_parser("show-config", help="print the resolved config as YAML")
    _add_common(show)
    return parser


def load(args):
    from .config import load_config_file

    cfg = load_config_file(args.config or default_config_path())
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def thread_limit(args):
    if args.threads is not None:
        n = args.threads
    elif os.environ.get(THREADS_ENV):
        try:
            n = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigurationError(f"${THREADS_ENV} must be an integer")
    else:
        return None
    if n < 1:
        raise ConfigurationError("thread count must be positive")
    return n


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args)
        threads = thread_limit(args)
        if args.command == "show-config":
            from .config import dump_config
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        if args.command == "run":
            stages = args.stage or list(STAGES)
        else:
            if args.stage and set(args.stage) != {args.command}:
                raise ConfigurationError(f"--stage conflicts with the '{args.command}' subcommand")
            stages = [args.command]
        from threadpoolctl import threadpool_limits
        with threadpool_limits(limits=threads):
            pipe = Pipeline(cfg)
            for stage in stages:
                manifest = pipe.run(stage)
                print(json.dumps({"stage": stage, "wall_time_s": round(manifest["wall_time_s"], 3),
                                  "outputs": sorted(manifest["outputs"])}))
        return EXIT_OK
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageDependencyError as exc:
        print(f"missing dependency: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except (DivergenceError, TrainingError) as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except TpoptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
