import logging
from pathlib import Path

from ..config import OUTPUT_DIR
from ..models.experiment import RunRecord
from ..repositories.run_repository import RunRepository
from ..services import experiment_service
from ..utils.config_loader import load_config
from ..utils.trace_io import write_assumption_records

logger = logging.getLogger(__name__)


def cmd_check_metric(args) -> int:
    """检查 Assumption (A)/(B)/(C)；任一失败返回 1"""
    config = load_config(args.config)
    reports = experiment_service.check_metric(config, seed=args.seed)
    directory = Path(args.out or config.output.directory or OUTPUT_DIR / config.name)
    records_path = write_assumption_records(directory / "assumptions.txt", reports)

    record = RunRecord(
        kind="check-metric",
        config_hash=config.config_hash(),
        config=config.model_dump(mode="json"),
        assumption_reports=[report.to_dict() for report in reports],
        checks={f"assumption_{report.assumption}": report.passed for report in reports},
        artifacts=[str(records_path)],
    )
    RunRepository(args.data_dir).save_run(record)

    for report in reports:
        suffix = " (heuristic)" if report.heuristic else ""
        print(f"Assumption {report.assumption}: {report.verdict}  margin={report.margin:.3e}  "
              f"samples={report.samples_checked}{suffix}")
    return 0 if record.passed else 1


def register(subparsers, common):
    parser = subparsers.add_parser("check-metric", parents=[common], help="verify the geometric assumptions of a metric")
    parser.set_defaults(handler=cmd_check_metric)
