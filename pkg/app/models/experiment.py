import hashlib
import json
import uuid
from datetime import datetime
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..exceptions import ConfigError


class _Section(BaseModel):
    # 未知键直接报错，防止实验定义里的拼写错误被静默忽略
    model_config = ConfigDict(extra="forbid")


class MetricSection(_Section):
    variant: Literal["E2_2", "E2_3", "E2_4", "E2_5", "custom"] = "E2_2"
    n: int = Field(ge=2)
    m: float = Field(gt=0)
    r0: float = Field(default=1.0, gt=0)
    delta: Optional[float] = Field(default=None, gt=0)
    m1: Optional[float] = Field(default=None, gt=0)
    alpha_kind: Optional[Literal["coth", "power"]] = None
    Q: Optional[List[List[float]]] = None
    # custom 变体使用的常数矩阵 A
    A: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _check_variant_inputs(self):
        if self.variant in ("E2_4", "E2_5") and self.delta is None and self.m1 is None:
            raise ValueError(f"variant {self.variant} needs delta or m1")
        if self.variant == "custom" and self.A is None:
            raise ValueError("custom variant needs a constant matrix A")
        return self

    @property
    def resolved_alpha_kind(self) -> Optional[str]:
        if self.alpha_kind:
            return self.alpha_kind
        if self.delta is not None:
            return "coth"
        if self.m1 is not None:
            return "power"
        return None

    @property
    def rho_min(self) -> float:
        return self.r0 ** self.m


class DataSection(_Section):
    # 缺省中心为 ρ_min + 5
    center: Optional[float] = None
    width: float = Field(default=2.0, gt=0)
    amplitude: float = 1.0
    mode: Literal["displacement", "velocity"] = "displacement"
    angular_mode: int = Field(default=0, ge=0)


class GridSection(_Section):
    n_cells: int = Field(default=4000, gt=10)
    cfl: float = Field(default=0.5, gt=0, le=0.9)
    n_r: int = Field(default=200, gt=4)
    n_theta: int = Field(default=128, gt=3)
    planar_cfl: float = Field(default=0.4, gt=0, le=0.7)


class ObservationSection(_Section):
    a: List[float] = Field(min_length=1)
    T: float = Field(gt=0)
    sample_every: int = Field(default=10, ge=1)


class AnalysisSection(_Section):
    classify: bool = True
    window: Optional[Tuple[float, float]] = None
    extinction_threshold: float = Field(default=1e-8, gt=0)


class ChecksSection(_Section):
    n_radii: int = Field(default=16, ge=1)
    r_max_factor: float = Field(default=3.0, gt=1)
    n_angles: int = Field(default=64, ge=1)
    y_max_factor: float = Field(default=1024.0, ge=4)
    invariants: bool = True


class OutputSection(_Section):
    directory: Optional[str] = None
    formats: List[Literal["csv", "svg", "json", "snapshot"]] = Field(default_factory=lambda: ["csv", "svg", "json"])
    snapshot_every: Optional[int] = Field(default=None, ge=1)


class SweepSection(_Section):
    axis: Literal["m", "delta", "a"] = "m"
    values: List[float] = Field(min_length=1)
    solver: Literal["radial", "planar"] = "radial"


class ExperimentConfig(_Section):
    """一次实验（或一组扫描）的完整定义"""
    name: str = "experiment"
    metric: MetricSection
    data: DataSection = Field(default_factory=DataSection)
    grid: GridSection = Field(default_factory=GridSection)
    # check-metric 不需要观测段
    observation: Optional[ObservationSection] = None
    analysis: AnalysisSection = Field(default_factory=AnalysisSection)
    checks: ChecksSection = Field(default_factory=ChecksSection)
    output: OutputSection = Field(default_factory=OutputSection)
    sweep: Optional[SweepSection] = None

    @model_validator(mode="after")
    def _check_references(self):
        m = self.metric.m
        rho_min = self.metric.rho_min
        center = self.resolved_center
        if center - self.data.width < rho_min:
            raise ValueError(f"data support starts below rho_min={rho_min}")
        if self.observation is None:
            return self
        reach = center + self.data.width + self.observation.T
        for a in self.observation.a:
            if a <= self.metric.r0:
                raise ValueError(f"observation radius a={a} is not outside the obstacle r0={self.metric.r0}")
            if a ** m > reach:
                raise ValueError(f"observation radius a={a} lies beyond the truncated domain (a^m > {reach})")
        return self

    @property
    def resolved_center(self) -> float:
        return self.metric.rho_min + 5.0 if self.data.center is None else self.data.center

    def require_observation(self) -> ObservationSection:
        if self.observation is None:
            raise ConfigError("this command needs an observation section", field="observation", line=0)
        return self.observation

    def config_hash(self) -> str:
        """规范化 JSON（键排序）的 SHA-256"""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class RunRecord(BaseModel):
    """一次运行的来源记录；嵌入完整解析后的配置"""
    id: str = Field(default_factory=lambda: str(uuid.uuid4()))
    kind: Literal["check-metric", "run-radial", "run-planar", "sweep"]
    config_hash: str
    config: dict = Field(default_factory=dict)
    started_at: datetime = Field(default_factory=datetime.utcnow)
    finished_at: Optional[datetime] = None
    assumption_reports: List[dict] = Field(default_factory=list)
    # 每个观测半径 a 一条能量序列：{"a": ..., "times": [...], "values": [...]}
    energy_series: List[dict] = Field(default_factory=list)
    decay_fits: Dict[str, dict] = Field(default_factory=dict)
    checks: Dict[str, bool] = Field(default_factory=dict)
    # 需要调用方处理的信号，例如 "extend_T"
    signals: List[str] = Field(default_factory=list)
    artifacts: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self):
        """转换为字典格式"""
        data = self.model_dump(mode="json")
        data["passed"] = self.passed
        return data

    @classmethod
    def from_dict(cls, data):
        """从字典创建实例"""
        data = dict(data)
        data.pop("passed", None)
        for key in ("started_at", "finished_at"):
            if isinstance(data.get(key), str):
                data[key] = datetime.fromisoformat(data[key])
        return cls(**data)
