from typing import Callable, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..exceptions import MetricError

VARIANTS = ("E2_2", "E2_3", "E2_4", "E2_5", "custom")


class CoefficientField:
    """系数矩阵 A(x) 及其元数据，度量 g = A^{-1} 由它导出"""

    def __init__(
        self,
        dimension: int,
        obstacle_radius: float,
        evaluate: Callable[[np.ndarray], np.ndarray],
        variant: str = "custom",
        cone_power: Optional[float] = None,
        alpha: Optional[Callable[[float], float]] = None,
        params: Optional[Dict] = None,
    ):
        if variant not in VARIANTS:
            raise MetricError(f"Unknown metric variant: {variant}")
        if dimension < 2:
            raise MetricError(f"dimension must be >= 2, got {dimension}")
        if obstacle_radius <= 0:
            raise MetricError(f"obstacle radius must be positive, got {obstacle_radius}")
        if cone_power is not None and cone_power <= 0:
            raise MetricError(f"cone power m must be positive, got {cone_power}")
        self.dimension = dimension
        self.obstacle_radius = float(obstacle_radius)
        self.cone_power = cone_power
        self.variant = variant
        self.alpha = alpha
        self.params = params or {}
        self._evaluate = evaluate

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise MetricError(f"point must have shape ({self.dimension},), got {x.shape}")
        r = np.linalg.norm(x)
        # 允许舍入误差级别的越界
        if r < self.obstacle_radius * (1.0 - 1e-12):
            raise MetricError(f"point |x|={r} lies inside the obstacle r0={self.obstacle_radius}")
        return np.asarray(self._evaluate(x), dtype=float)

    __call__ = evaluate

    @property
    def is_cone(self) -> bool:
        """闭式构造的锥度量；custom 场即使声明了 m 也不算"""
        return self.variant != "custom" and self.cone_power is not None

    def phi(self, r: float) -> float:
        if self.cone_power is None:
            raise MetricError("phi(r) requires a cone power m")
        m = self.cone_power
        return m * r ** (m - 1.0)

    def __repr__(self):
        return (
            f"CoefficientField(variant={self.variant}, n={self.dimension}, "
            f"r0={self.obstacle_radius}, m={self.cone_power})"
        )


class SphereSample(BaseModel):
    """球面 S(r) 上一点处的 Υ 与 P"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    r: float
    theta: np.ndarray
    upsilon: np.ndarray
    p_form: Optional[np.ndarray] = None


class AssumptionReport(BaseModel):
    """几何假设检查的结论，包含最坏样本与裕量"""
    assumption: Literal["A", "B", "C", "cone"]
    verdict: Literal["pass", "fail"]
    margin: float
    tolerance: float
    worst_point: List[float] = Field(default_factory=list)
    samples_checked: int = 0
    heuristic: bool = False
    # 每个样本一行：r, θ..., margin
    samples: List[List[float]] = Field(default_factory=list)
    details: dict = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self):
        return self.model_dump()

    def to_record_lines(self) -> List[str]:
        """逐行文本格式：首行为摘要，其后每个样本一行"""
        header = (
            f"# assumption={self.assumption} verdict={self.verdict} margin={self.margin!r} "
            f"tolerance={self.tolerance!r} samples_checked={self.samples_checked} "
            f"heuristic={str(self.heuristic).lower()}"
        )
        lines = [header]
        for row in self.samples:
            lines.append(" ".join(repr(float(v)) for v in row))
        return lines
