import csv
import json
import logging
from datetime import datetime
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..config import OUTPUT_DIR, PLANAR_DEFAULTS, RADIAL_DEFAULTS
from ..exceptions import ConfigError, SeriesTooShortError, SolverError
from ..models.analysis import DecayFit, EnergySeries, SeriesMeta
from ..models.experiment import ExperimentConfig, MetricSection, RunRecord
from ..models.grid import BumpSpec, PlanarBumpSpec
from ..models.metric import AssumptionReport, CoefficientField
from ..utils import svg_plot, trace_io
from . import decay_service, metric_service, planar_solver, radial_solver

logger = logging.getLogger(__name__)

WEIGHTED_MONOTONE_TOLERANCE = 1e-6


# ---------------------------------------------------------------------------
# 配置 -> 领域对象
# ---------------------------------------------------------------------------

def build_field(metric: MetricSection) -> CoefficientField:
    if metric.variant == "custom":
        matrix = np.asarray(metric.A, dtype=float)
        if matrix.shape != (metric.n, metric.n):
            raise ConfigError(f"A must be {metric.n}x{metric.n}", field="metric.A")
        return CoefficientField(metric.n, metric.r0, lambda x: matrix, variant="custom", cone_power=metric.m)
    alpha = None
    kind = metric.resolved_alpha_kind
    if kind is not None:
        alpha = metric_service.alpha_profile(kind, metric.m, delta=metric.delta, m1=metric.m1)
    return metric_service.build_example_metric(
        metric.variant, metric.n, metric.r0, metric.m, alpha=alpha, Q=metric.Q,
        delta=metric.delta, m1=metric.m1,
    )


def bump_for(config: ExperimentConfig) -> BumpSpec:
    return BumpSpec(
        center=config.resolved_center,
        width=config.data.width,
        amplitude=config.data.amplitude,
        mode=config.data.mode,
    )


def transit_time(config: ExperimentConfig, a: float) -> float:
    """支集内缘出发的入射波前到达 ρ = a^m 的时间 max(ρ_c - w - a^m, 0)"""
    return max(config.resolved_center - config.data.width - a ** config.metric.m, 0.0)


def exit_time(config: ExperimentConfig, a: float) -> float:
    """数据从障碍反射后完全离开 Ω(a) 的时间 a^m + ρ_c + w - 2ρ_min"""
    return a ** config.metric.m + config.resolved_center + config.data.width - 2.0 * config.metric.rho_min


def energy_series(config: ExperimentConfig, trace: Dict[str, np.ndarray], a: float, run_id: str = "") -> EnergySeries:
    """从轨迹列构造 E(t,a) 序列；运行中与 analyze 走同一条路径"""
    m = config.metric.m
    meta = SeriesMeta(
        n=config.metric.n,
        m=m,
        a=a,
        R0=(config.resolved_center + config.data.width) ** (1.0 / m),
        run_id=run_id,
        e0=float(trace["E_total"][0]),
        transit_time=transit_time(config, a),
        exit_time=exit_time(config, a),
    )
    return EnergySeries(times=trace["t"], values=trace[trace_io.local_column(a)], meta=meta)


def analyze_series(config: ExperimentConfig, series: EnergySeries) -> DecayFit:
    return decay_service.classify(
        series,
        window=config.analysis.window,
        extinction_threshold=config.analysis.extinction_threshold,
    )


def _output_dir(config: ExperimentConfig, out: Optional[Path]) -> Path:
    directory = Path(out or config.output.directory or OUTPUT_DIR / config.name)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


# ---------------------------------------------------------------------------
# check-metric
# ---------------------------------------------------------------------------

def check_metric(config: ExperimentConfig, seed: Optional[int] = None) -> List[AssumptionReport]:
    field = build_field(config.metric)
    checks = config.checks
    r0, n = field.obstacle_radius, field.dimension
    radii = np.linspace(r0, checks.r_max_factor * r0, checks.n_radii)
    directions = metric_service.sample_directions(n, checks.n_angles, seed=seed)

    reports = [metric_service.check_assumption_B(field, radii, directions)]
    reports.append(metric_service.check_assumption_A(field, checks.y_max_factor * r0, seed=seed))
    if field.alpha is not None:
        thetas = metric_service.sample_angles(n, checks.n_angles, seed=seed)
        reports.append(metric_service.check_assumption_C(field, field.alpha, radii, thetas))
    else:
        logger.info(f"no alpha configured for {field.variant}; Assumption C skipped")
    return reports


# ---------------------------------------------------------------------------
# run-radial / run-planar
# ---------------------------------------------------------------------------

def _finish_run(
    config: ExperimentConfig,
    record: RunRecord,
    rows: List[Dict],
    directory: Path,
    kind_label: str,
) -> RunRecord:
    """写轨迹、拟合、图与记录；分析得到 extend_T 时记为信号"""
    a_values = [float(a) for a in config.observation.a]
    formats = set(config.output.formats)
    trace_path = trace_io.write_trace(directory / f"{kind_label}_trace.csv", a_values, rows)
    if "csv" in formats:
        record.artifacts.append(str(trace_path))
    trace = trace_io.read_trace(trace_path)

    fits: List[Tuple[float, DecayFit]] = []
    e0 = float(trace["E_total"][0])
    for a in a_values:
        series = energy_series(config, trace, a, run_id=record.id)
        record.energy_series.append({"a": a, "times": series.times.tolist(), "values": series.values.tolist()})
        if not config.analysis.classify or e0 == 0.0:
            continue
        try:
            fit = analyze_series(config, series)
        except SeriesTooShortError as e:
            logger.warning(f"a={a}: {e}")
            if "extend_T" not in record.signals:
                record.signals.append("extend_T")
            continue
        fits.append((a, fit))
        record.decay_fits[repr(a)] = fit.model_dump(mode="json")

    if fits and "csv" in formats:
        record.artifacts.append(str(trace_io.write_fits(directory / f"{kind_label}_fits.csv", fits)))
    if "svg" in formats:
        curves = {f"a={a:g}": trace[trace_io.local_column(a)] for a in a_values}
        plot = svg_plot.write_decay_plot(directory / f"{kind_label}_decay.svg", trace["t"], curves, title=config.name)
        record.artifacts.append(str(plot))

    record.finished_at = datetime.utcnow()
    if "json" in formats:
        record_path = directory / f"{kind_label}_record.json"
        record_path.write_text(json.dumps(record.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8")
        record.artifacts.append(str(record_path))
    logger.info(f"{kind_label} run {record.id} finished: passed={record.passed}, signals={record.signals}")
    return record


def run_radial(config: ExperimentConfig, out: Optional[Path] = None) -> RunRecord:
    metric = config.metric
    n, m = metric.n, metric.m
    record = RunRecord(kind="run-radial", config_hash=config.config_hash(), config=config.model_dump(mode="json"))
    directory = _output_dir(config, out)
    T = config.require_observation().T

    data = bump_for(config)
    grid = radial_solver.sized_grid(data, T, metric.rho_min, n / m, config.grid.n_cells, config.grid.cfl)
    logger.info(f"run-radial {config.name}: n={n}, m={m}, d={n / m:.4g}, rho in [{grid.rho_min:.4g}, {grid.rho_max:.4g}]")
    trajectory = radial_solver.solve_radial(grid, data, T, sample_every=config.observation.sample_every)

    e0 = radial_solver.total_energy(trajectory[0], n, m)
    support_rho = data.support[1]
    margin = RADIAL_DEFAULTS["front_margin_cells"] * grid.delta_rho
    rows, weighted = [], []
    for state in trajectory:
        r_star = (support_rho + state.t + margin) ** (1.0 / m)
        try:
            w_exp = radial_solver.weighted_energy_exp(state, n, m)
        except SolverError:
            w_exp = None
        weighted.append(w_exp)
        row = {
            "t": state.t,
            "E_total": radial_solver.total_energy(state, n, m),
            "W_exp": w_exp,
            "front_outside": radial_solver.support_mass_outside(state, r_star, n, m, e0=e0),
        }
        for a in config.observation.a:
            row[trace_io.local_column(float(a))] = radial_solver.local_energy(state, a, n, m)
        rows.append(row)

    if config.checks.invariants:
        record.checks.update(_radial_checks(trajectory, rows, weighted, e0, n, m))
    return _finish_run(config, record, rows, directory, "radial")


def _radial_checks(trajectory, rows, weighted, e0, n, m) -> Dict[str, bool]:
    checks = {"dirichlet": all(state.u[0] == 0.0 for state in trajectory)}
    if e0 == 0.0:
        checks.update(energy_conservation=True, finite_speed=True, weighted_energy_monotone=True, linear_weight=True)
        return checks
    checks["energy_conservation"] = abs(rows[-1]["E_total"] - e0) / e0 <= 1e-3
    checks["finite_speed"] = max(row["front_outside"] for row in rows) <= 1e-6
    defined = [w for w in weighted if w is not None]
    checks["weighted_energy_monotone"] = all(
        later <= earlier * (1.0 + WEIGHTED_MONOTONE_TOLERANCE) for earlier, later in zip(defined[:-1], defined[1:])
    )
    if len(trajectory) >= 3:
        checks["linear_weight"] = radial_solver.linear_weight_check(trajectory, n, m) >= -1e-3 * e0
    return checks


def run_planar(config: ExperimentConfig, out: Optional[Path] = None) -> RunRecord:
    metric = config.metric
    if metric.n != 2:
        raise ConfigError("the planar solver needs n = 2", field="metric.n")
    m = metric.m
    record = RunRecord(kind="run-planar", config_hash=config.config_hash(), config=config.model_dump(mode="json"))
    directory = _output_dir(config, out)
    T = config.require_observation().T

    field = build_field(metric)
    base = bump_for(config)
    data = PlanarBumpSpec(**base.model_dump(), angular_mode=config.data.angular_mode)
    grid, operator = planar_solver.sized_polar_grid(
        field, data, T, n_r=config.grid.n_r, n_theta=config.grid.n_theta, cfl=config.grid.planar_cfl,
    )
    trajectory = planar_solver.solve_planar(
        field, grid, data, T, sample_every=config.observation.sample_every, operator=operator,
    )

    e0 = planar_solver.total_energy_2d(trajectory[0])
    R0 = data.support[1] ** (1.0 / m)
    margin = PLANAR_DEFAULTS["front_check_cells"] * grid.delta_r
    rows = []
    for state in trajectory:
        r_star = radial_solver.front_radius(state.t, R0, m) + margin
        row = {
            "t": state.t,
            "E_total": planar_solver.total_energy_2d(state),
            "W_exp": None,
            "front_outside": planar_solver.energy_outside_2d(state, r_star, e0=e0),
        }
        for a in config.observation.a:
            row[trace_io.local_column(float(a))] = planar_solver.local_energy_2d(state, a)
        rows.append(row)

    if "snapshot" in config.output.formats:
        every = config.output.snapshot_every or len(trajectory)
        for index, state in enumerate(trajectory):
            if index % every == 0 or index == len(trajectory) - 1:
                path = trace_io.write_snapshot(directory / f"planar_snapshot_{index:05d}.bin", state)
                record.artifacts.append(str(path))

    if config.checks.invariants:
        if e0 == 0.0:
            record.checks.update(energy_conservation=True, finite_speed=True)
        else:
            record.checks["energy_conservation"] = abs(rows[-1]["E_total"] - e0) / e0 <= 5e-3
            record.checks["finite_speed"] = max(row["front_outside"] for row in rows) <= 1e-4
    return _finish_run(config, record, rows, directory, "planar")


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def analyze_trace(config: ExperimentConfig, trace_path: Path, a: Optional[float] = None) -> List[Tuple[float, DecayFit]]:
    trace = trace_io.read_trace(trace_path)
    radii = trace_io.trace_local_radii(trace)
    if a is not None:
        if trace_io.local_column(float(a)) not in trace:
            raise ConfigError(f"trace has no column for a={a}; available: {radii}", field="--a")
        radii = [float(a)]
    return [(r, analyze_series(config, energy_series(config, trace, r))) for r in radii]


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def sweep_configs(config: ExperimentConfig) -> List[Tuple[float, ExperimentConfig]]:
    """扫描轴上的每个取值生成一份独立配置，按取值排序"""
    if config.sweep is None:
        raise ConfigError("sweep section is missing", field="sweep")
    base = config.model_dump(mode="json")
    base.pop("sweep")
    variants = []
    for value in sorted(config.sweep.values):
        data = json.loads(json.dumps(base))
        if config.sweep.axis == "m":
            data["metric"]["m"] = value
        elif config.sweep.axis == "delta":
            data["metric"]["delta"] = value
        else:
            data["observation"]["a"] = [value]
        data["name"] = f"{config.name}_{config.sweep.axis}={value:g}"
        try:
            variants.append((value, ExperimentConfig.model_validate(data)))
        except ValueError as e:
            raise ConfigError(f"sweep value {value} gives an invalid config: {e}", field="sweep.values")
    return variants


def _sweep_worker(job) -> dict:
    value, config_data, solver, out = job
    config = ExperimentConfig.model_validate(config_data)
    runner = run_radial if solver == "radial" else run_planar
    return runner(config, Path(out)).to_dict()


SWEEP_HEADER = ["axis", "value", "d", "a", "model", "rate", "r_squared", "extinction_time", "passed", "signals"]


def sweep(config: ExperimentConfig, out: Optional[Path] = None, workers: int = 1) -> Tuple[List[RunRecord], List[List[str]]]:
    directory = _output_dir(config, out)
    variants = sweep_configs(config)
    jobs = [
        (value, variant.model_dump(mode="json"), config.sweep.solver, str(directory / f"{config.sweep.axis}={value:g}"))
        for value, variant in variants
    ]
    logger.info(f"sweep {config.name}: {len(jobs)} runs over {config.sweep.axis}, workers={workers}")
    if workers > 1:
        with Pool(processes=workers) as pool:
            results = pool.map(_sweep_worker, jobs)
    else:
        results = [_sweep_worker(job) for job in jobs]

    records = [RunRecord.from_dict(result) for result in results]
    table: List[List[str]] = []
    for (value, variant), record in zip(variants, records):
        d = variant.metric.n / variant.metric.m
        for a in variant.observation.a:
            fit = record.decay_fits.get(repr(float(a)))
            table.append([
                config.sweep.axis,
                repr(float(value)),
                repr(float(d)),
                repr(float(a)),
                fit["model"] if fit else "",
                "" if not fit or fit.get("rate") is None else repr(float(fit["rate"])),
                "" if not fit else repr(float(fit["r_squared"])),
                "" if not fit or fit.get("extinction_time") is None else repr(float(fit["extinction_time"])),
                str(record.passed).lower(),
                ";".join(record.signals),
            ])

    with open(directory / "sweep.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        writer.writerows(table)
    return records, table
