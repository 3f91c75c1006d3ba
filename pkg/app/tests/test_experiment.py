import csv
import math
from pathlib import Path

import numpy as np
import pytest

from ..config import ANALYSIS_DEFAULTS
from ..exceptions import ConfigError
from ..main import main
from ..models.experiment import ExperimentConfig
from ..repositories.run_repository import RunRepository
from ..services import experiment_service
from ..utils import trace_io
from ..utils.config_loader import load_config, parse_config

RADIAL_CONFIG = """\
name: radial_unit
metric:
  variant: E2_2
  n: 3
  m: 3
data:
  amplitude: {amplitude}
grid:
  n_cells: 2000
observation:
  a: [1.5]
  T: 14
  sample_every: 4
analysis:
  extinction_threshold: 1.0e-6
output:
  formats: [csv, svg, json]
"""

SHORT_EVEN_CONFIG = """\
name: short_even
metric:
  variant: E2_2
  n: 3
  m: 1.5
grid:
  n_cells: 800
observation:
  a: [2.0]
  T: 6
"""

PLANAR_CONFIG = """\
name: planar_unit
metric:
  variant: {variant}
  n: 2
  m: 2
  A: {matrix}
grid:
  n_r: 40
  n_theta: 16
observation:
  a: [1.5]
  T: 1
  sample_every: 5
analysis:
  classify: false
checks:
  invariants: false
output:
  formats: [csv, json, snapshot]
  snapshot_every: 10
"""

CHECK_CONFIG = """\
name: check_unit
metric:
  variant: {variant}
  n: 2
  m: 2
  A: [[1.0, 0.0], [0.0, 1.0]]
checks:
  n_radii: 6
  n_angles: 16
"""


def write_config(tmp_path, text, name="config.yaml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def cli(tmp_path, *argv):
    return main(list(argv) + ["--out", str(tmp_path / "out"), "--data-dir", str(tmp_path / "data")])


class TestConfigLoader:
    """YAML 配置的解析、错误定位与哈希"""

    def test_defaults(self):
        config = parse_config(RADIAL_CONFIG.format(amplitude=1.0))
        assert config.metric.rho_min == 1.0
        assert config.resolved_center == 6.0
        assert config.observation.sample_every == 4
        assert config.sweep is None

    def test_unknown_key_reports_field_and_line(self):
        text = "metric:\n  variant: E2_2\n  n: 3\n  m: 3\n  colour: red\n"
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.field == "metric.colour"
        assert info.value.line == 5

    def test_out_of_range_value(self):
        text = "name: x\nmetric:\n  variant: E2_2\n  n: 3\n  m: -1\n"
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.field == "metric.m"
        assert info.value.line == 5

    def test_observation_radius_inside_obstacle(self):
        text = "metric:\n  n: 3\n  m: 3\nobservation:\n  a: [0.5]\n  T: 10\n"
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert "obstacle" in str(info.value)

    def test_variant_needs_alpha_input(self):
        with pytest.raises(ConfigError) as info:
            parse_config("metric:\n  variant: E2_4\n  n: 2\n  m: 2\n")
        assert info.value.field.startswith("metric")

    def test_invalid_yaml(self):
        with pytest.raises(ConfigError) as info:
            parse_config("metric: [1, 2\n")
        assert info.value.field == "<document>"

    def test_document_must_be_mapping(self):
        with pytest.raises(ConfigError) as info:
            parse_config("- 1\n- 2\n")
        assert info.value.line == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            load_config(tmp_path / "absent.yaml")
        assert info.value.field == "--config"

    def test_require_observation(self):
        config = parse_config("metric:\n  n: 2\n  m: 2\n")
        with pytest.raises(ConfigError):
            config.require_observation()

    def test_hash_ignores_key_order(self):
        first = parse_config("metric:\n  n: 3\n  m: 3\nname: h\n")
        second = parse_config("name: h\nmetric:\n  m: 3\n  n: 3\n")
        assert first.config_hash() == second.config_hash()
        assert len(first.config_hash()) == 64

    def test_hash_changes_with_values(self):
        first = parse_config("metric:\n  n: 3\n  m: 3\n")
        second = parse_config("metric:\n  n: 3\n  m: 1.5\n")
        assert first.config_hash() != second.config_hash()


class TestTraceFiles:

    def test_trace_roundtrip_and_missing_cells(self, tmp_path):
        rows = [
            {"t": 0.0, "E_total": 1.0, trace_io.local_column(1.5): 0.25, "W_exp": None, "front_outside": 0.0},
            {"t": 0.1, "E_total": 1.0, trace_io.local_column(1.5): 0.125, "W_exp": 2.0, "front_outside": 0.0},
        ]
        path = trace_io.write_trace(tmp_path / "trace.csv", [1.5], rows)
        trace = trace_io.read_trace(path)
        assert trace_io.trace_local_radii(trace) == [1.5]
        assert math.isnan(trace["W_exp"][0])
        assert trace[trace_io.local_column(1.5)][1] == 0.125
        with open(path, encoding="utf-8") as f:
            assert next(csv.reader(f)) == ["t", "E_total", "E_local[a=1.5]", "W_exp", "front_outside"]


class TestRadialExperiment:

    @pytest.fixture(scope="class")
    def radial_run(self, tmp_path_factory):
        out = tmp_path_factory.mktemp("radial")
        config = parse_config(RADIAL_CONFIG.format(amplitude=1.0))
        return config, experiment_service.run_radial(config, out), out

    def test_checks_and_extinction(self, radial_run):
        config, record, _ = radial_run
        assert record.passed, record.checks
        assert set(record.checks) == {
            "dirichlet", "energy_conservation", "finite_speed", "weighted_energy_monotone", "linear_weight",
        }
        fit = record.decay_fits[repr(1.5)]
        assert fit["model"] == "extinct"
        exit_time = experiment_service.exit_time(config, 1.5)
        assert abs(fit["extinction_time"] - exit_time) <= 0.5
        assert record.signals == []

    def test_transit_and_exit_times(self, radial_run):
        config, record, _ = radial_run
        # ρ_c = 6, w = 2, a^m = 3.375
        assert experiment_service.transit_time(config, 1.5) == pytest.approx(0.625)
        assert experiment_service.exit_time(config, 1.5) == pytest.approx(9.375)
        fit = record.decay_fits[repr(1.5)]
        assert fit["extinction_time"] <= 1.5 * experiment_service.exit_time(config, 1.5)

    def test_artifacts(self, radial_run):
        _, record, out = radial_run
        names = {path.split("/")[-1] for path in record.artifacts}
        assert names == {"radial_trace.csv", "radial_fits.csv", "radial_decay.svg", "radial_record.json"}
        assert (out / "radial_decay.svg").read_text(encoding="utf-8").startswith("<svg")

    def test_analyze_reproduces_in_run_fit(self, radial_run):
        config, record, out = radial_run
        [(a, fit)] = experiment_service.analyze_trace(config, out / "radial_trace.csv")
        assert a == 1.5
        assert fit.model_dump(mode="json") == record.decay_fits[repr(1.5)]

    def test_analyze_unknown_radius(self, radial_run):
        config, _, out = radial_run
        with pytest.raises(ConfigError):
            experiment_service.analyze_trace(config, out / "radial_trace.csv", a=2.5)

    def test_zero_amplitude(self, tmp_path):
        config = parse_config(RADIAL_CONFIG.format(amplitude=0.0))
        record = experiment_service.run_radial(config, tmp_path)
        assert record.passed
        assert record.decay_fits == {}
        trace = trace_io.read_trace(tmp_path / "radial_trace.csv")
        assert not np.any(trace["E_total"])

    def test_short_run_signals_extend_t(self, tmp_path):
        record = experiment_service.run_radial(parse_config(SHORT_EVEN_CONFIG), tmp_path)
        assert "extend_T" in record.signals


class TestSweep:

    def test_configs_are_sorted_and_named(self):
        text = RADIAL_CONFIG.format(amplitude=1.0) + "sweep:\n  axis: a\n  values: [1.8, 1.5]\n"
        variants = experiment_service.sweep_configs(parse_config(text))
        assert [value for value, _ in variants] == [1.5, 1.8]
        assert variants[0][1].name == "radial_unit_a=1.5"
        assert variants[1][1].observation.a == [1.8]

    def test_invalid_value(self):
        text = RADIAL_CONFIG.format(amplitude=1.0) + "sweep:\n  axis: a\n  values: [0.5]\n"
        with pytest.raises(ConfigError):
            experiment_service.sweep_configs(parse_config(text))

    def test_missing_section(self):
        with pytest.raises(ConfigError):
            experiment_service.sweep_configs(parse_config(RADIAL_CONFIG.format(amplitude=1.0)))

    def test_sweep_table(self, tmp_path):
        text = SHORT_EVEN_CONFIG + "analysis:\n  classify: false\nchecks:\n  invariants: false\n"
        text += "sweep:\n  axis: m\n  values: [3.0, 1.5]\n"
        records, table = experiment_service.sweep(parse_config(text), tmp_path)
        assert len(records) == 2
        assert [row[1] for row in table] == ["1.5", "3.0"]
        with open(tmp_path / "sweep.csv", encoding="utf-8") as f:
            lines = list(csv.reader(f))
        assert lines[0] == experiment_service.SWEEP_HEADER
        assert len(lines) == 3


class TestCommandLine:
    """退出码：0 通过，1 检查失败，2 配置错误，3 求解器错误，4 需要延长 T"""

    def test_check_metric_passes(self, tmp_path):
        path = write_config(tmp_path, CHECK_CONFIG.format(variant="E2_2"))
        assert cli(tmp_path, "check-metric", "--config", path) == 0
        assert (tmp_path / "out" / "assumptions.txt").exists()
        [record] = RunRepository(tmp_path / "data").list_recent()
        assert record.kind == "check-metric"

    def test_check_metric_fails_for_non_cone(self, tmp_path):
        path = write_config(tmp_path, CHECK_CONFIG.format(variant="custom"))
        assert cli(tmp_path, "check-metric", "--config", path) == 1
        text = (tmp_path / "out" / "assumptions.txt").read_text(encoding="utf-8")
        assert "# assumption=B verdict=fail" in text

    def test_bad_config_exit_code(self, tmp_path):
        path = write_config(tmp_path, "metric:\n  n: 3\n  m: 3\n  colour: red\n")
        assert cli(tmp_path, "run-radial", "--config", path) == 2

    def test_missing_config_file(self, tmp_path):
        assert cli(tmp_path, "run-radial", "--config", str(tmp_path / "absent.yaml")) == 2

    def test_missing_config_flag(self, tmp_path):
        with pytest.raises(SystemExit):
            cli(tmp_path, "run-radial")

    def test_degenerate_planar_metric_is_solver_error(self, tmp_path):
        path = write_config(tmp_path, PLANAR_CONFIG.format(variant="custom", matrix="[[1.0, 0.0], [0.0, 0.0]]"))
        assert cli(tmp_path, "run-planar", "--config", path) == 3

    def test_planar_run_with_snapshots(self, tmp_path):
        path = write_config(tmp_path, PLANAR_CONFIG.format(variant="E2_2", matrix="null"))
        assert cli(tmp_path, "run-planar", "--config", path) == 0
        snapshots = sorted((tmp_path / "out").glob("planar_snapshot_*.bin"))
        assert len(snapshots) >= 2
        t, u, _ = trace_io.read_snapshot(snapshots[-1])
        assert t == pytest.approx(1.0)
        assert u.shape == (41, 16)

    def test_short_run_exit_code(self, tmp_path):
        path = write_config(tmp_path, SHORT_EVEN_CONFIG)
        assert cli(tmp_path, "run-radial", "--config", path) == 4

    def test_analyze_and_list_runs(self, tmp_path, capsys):
        path = write_config(tmp_path, SHORT_EVEN_CONFIG + "analysis:\n  classify: false\n")
        cli(tmp_path, "run-radial", "--config", path)
        trace = str(tmp_path / "out" / "radial_trace.csv")
        # 轨迹太短：analyze 同样要求延长 T
        assert cli(tmp_path, "analyze", trace, "--config", path) == 4

        assert cli(tmp_path, "list-runs") == 0
        output = capsys.readouterr().out
        assert "run-radial" in output

    def test_list_runs_empty(self, tmp_path, capsys):
        assert cli(tmp_path, "list-runs") == 0
        assert "no runs recorded" in capsys.readouterr().out

    def test_sweep_command(self, tmp_path):
        text = SHORT_EVEN_CONFIG + "analysis:\n  classify: false\nchecks:\n  invariants: false\n"
        text += "sweep:\n  axis: a\n  values: [1.5, 2.0]\n"
        path = write_config(tmp_path, text)
        assert cli(tmp_path, "sweep", "--config", path, "--workers", "1") == 0
        assert len(RunRepository(tmp_path / "data").list_recent()) == 2


def test_config_model_rejects_support_inside_obstacle():
    with pytest.raises(ValueError):
        ExperimentConfig.model_validate({"metric": {"n": 3, "m": 3}, "data": {"center": 1.5, "width": 2.0}})


CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


@pytest.mark.slow
class TestShippedConfigs:
    """仓库自带配置的衰减结论"""

    def test_sweep_separates_odd_and_even_dimension(self, tmp_path):
        _, table = experiment_service.sweep(load_config(CONFIG_DIR / "sweep_n3.yaml"), tmp_path)
        models = {float(row[1]): row[4] for row in table}
        assert models == {1.0: "extinct", 1.5: "polynomial", 3.0: "extinct"}

    def test_radial_even_dimension(self, tmp_path):
        record = experiment_service.run_radial(load_config(CONFIG_DIR / "radial_m1_5.yaml"), tmp_path)
        fit = record.decay_fits[repr(2.0)]
        assert fit["model"] == "polynomial"
        assert fit["rate"] > 0

    def test_planar_coth_alpha_decays_exponentially(self, tmp_path):
        record = experiment_service.run_planar(load_config(CONFIG_DIR / "planar_e2_4.yaml"), tmp_path)
        fit = record.decay_fits[repr(2.0)]
        assert fit["model"] == "exponential"
        assert fit["rate"] > 0
        assert fit["r_squared"] >= 0.95

    def test_planar_power_alpha_decays_polynomially(self, tmp_path):
        record = experiment_service.run_planar(load_config(CONFIG_DIR / "planar_e2_4_power.yaml"), tmp_path)
        fit = record.decay_fits[repr(2.0)]
        assert fit["model"] == "polynomial"
        assert fit["rate"] >= 1.0 - ANALYSIS_DEFAULTS["slope_tolerance"]
