import argparse
import logging
import sys
import traceback

from .commands import analysis, metric, simulate
from .config import DATA_DIR, DEFAULT_WORKERS, LOG_LEVEL
from .exceptions import ConeLabError, ConfigError, MetricError, SeriesTooShortError, SolverError

logger = logging.getLogger(__name__)

# 异常 -> 退出码
EXIT_CODES = [
    (ConfigError, 2),
    (MetricError, 2),
    (SolverError, 3),
    (SeriesTooShortError, 4),
    (ConeLabError, 5),
]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment YAML document")
    common.add_argument("--out", default=None, help="output directory for traces, plots and records")
    common.add_argument("--workers", type=int, default=DEFAULT_WORKERS, help="parallel runs in a sweep")
    common.add_argument("--seed", type=int, default=None, help="seed for randomized angular sampling")
    common.add_argument("--data-dir", default=str(DATA_DIR), help="directory holding the run database")

    parser = argparse.ArgumentParser(prog="cone-lab", description="Local energy decay experiments for wave equations on cone metrics")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # 注册命令
    metric.register(subparsers, common)
    simulate.register(subparsers, common)
    analysis.register(subparsers, common)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
                        format='%(asctime)s - %(levelname)s - %(message)s')

    if args.command != "list-runs" and not args.config:
        parser.error(f"{args.command} needs --config")
    try:
        return args.handler(args)
    except ConeLabError as e:
        code = next(code for kind, code in EXIT_CODES if isinstance(e, kind))
        logger.error(f"{args.command} failed ({type(e).__name__}): {e}")
        return code
    except Exception as e:
        logger.error(f"{args.command} failed: {e}\n{traceback.format_exc()}")
        return 5


if __name__ == "__main__":
    sys.exit(main())
