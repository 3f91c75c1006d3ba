import logging

from ..models.experiment import RunRecord
from ..repositories.run_repository import RunRepository
from ..services import experiment_service
from ..utils.config_loader import load_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_EXTEND_T = 4


def _exit_code(records) -> int:
    if any("extend_T" in record.signals for record in records):
        return EXIT_EXTEND_T
    return EXIT_OK if all(record.passed for record in records) else EXIT_CHECK_FAILED


def _report(record: RunRecord) -> None:
    for name, ok in sorted(record.checks.items()):
        print(f"  {name:<26} {'pass' if ok else 'FAIL'}")
    for a, fit in sorted(record.decay_fits.items()):
        rate = "" if fit.get("rate") is None else f" rate={fit['rate']:.6g}"
        print(f"  a={a}: {fit['model']}{rate}")
    if record.signals:
        print(f"  signals: {', '.join(record.signals)}")


def cmd_run_radial(args) -> int:
    config = load_config(args.config)
    record = experiment_service.run_radial(config, args.out)
    RunRepository(args.data_dir).save_run(record)
    print(f"run-radial {record.id} ({config.name})")
    _report(record)
    return _exit_code([record])


def cmd_run_planar(args) -> int:
    config = load_config(args.config)
    record = experiment_service.run_planar(config, args.out)
    RunRepository(args.data_dir).save_run(record)
    print(f"run-planar {record.id} ({config.name})")
    _report(record)
    return _exit_code([record])


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    records, table = experiment_service.sweep(config, args.out, workers=args.workers)
    repository = RunRepository(args.data_dir)
    for record in records:
        repository.save_run(record)

    header = experiment_service.SWEEP_HEADER
    print("  ".join(f"{name:>12}" for name in header[:7]))
    for row in table:
        print("  ".join(f"{cell[:12]:>12}" for cell in row[:7]))
    return _exit_code(records)


def register(subparsers, common):
    parser = subparsers.add_parser("run-radial", parents=[common], help="solve the reduced radial equation")
    parser.set_defaults(handler=cmd_run_radial)

    parser = subparsers.add_parser("run-planar", parents=[common], help="solve the full 2-D equation on an annulus")
    parser.set_defaults(handler=cmd_run_planar)

    parser = subparsers.add_parser("sweep", parents=[common], help="run a parameter sweep from the config's sweep section")
    parser.set_defaults(handler=cmd_sweep)
