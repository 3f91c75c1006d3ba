import logging

from ..repositories.run_repository import RunRepository
from ..services import experiment_service
from ..utils.config_loader import load_config

logger = logging.getLogger(__name__)


def cmd_analyze(args) -> int:
    """对已有轨迹 CSV 重新做衰减分类"""
    config = load_config(args.config)
    results = experiment_service.analyze_trace(config, args.trace, a=args.a)
    for a, fit in results:
        print(f"[a={a!r}]")
        print(fit.summary_block())
        print(",".join(["a"] + fit.CSV_HEADER))
        print(",".join([repr(a)] + fit.to_csv_row()))
    return 0


def cmd_list_runs(args) -> int:
    records = RunRepository(args.data_dir).list_recent(days=args.days, limit=args.limit)
    for record in records:
        status = "pass" if record.passed else "fail"
        print(f"{record.id}  {record.kind:<12} {record.config_hash[:12]}  "
              f"{record.started_at.isoformat(timespec='seconds')}  {status}")
    if not records:
        print("no runs recorded")
    return 0


def register(subparsers, common):
    parser = subparsers.add_parser("analyze", parents=[common], help="classify the decay in a trace CSV")
    parser.add_argument("trace", help="trace CSV written by run-radial or run-planar")
    parser.add_argument("--a", type=float, default=None, help="observation radius column to analyse")
    parser.set_defaults(handler=cmd_analyze)

    parser = subparsers.add_parser("list-runs", parents=[common], help="show recent run records")
    parser.add_argument("--days", type=int, default=30)
    parser.add_argument("--limit", type=int, default=50)
    parser.set_defaults(handler=cmd_list_runs)
