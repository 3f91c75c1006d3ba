from typing import ClassVar, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class SeriesMeta(BaseModel):
    n: int = 0
    m: float = 0.0
    a: float = 0.0
    R0: float = 0.0
    run_id: str = ""
    # 总能量 E(0)；缺省时取序列首值
    e0: Optional[float] = None
    # 波前从数据支集出发穿过观测半径 a 的时刻
    transit_time: Optional[float] = None
    # 反射后的数据完全离开 Ω(a) 的时刻；d 为奇数时局部能量在此之后消失
    exit_time: Optional[float] = None


class EnergySeries(BaseModel):
    """E(t,a) 的时间序列"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    values: np.ndarray
    meta: SeriesMeta = Field(default_factory=SeriesMeta)

    @field_validator("times", "values", mode="before")
    @classmethod
    def _as_array(cls, value):
        return np.asarray(value, dtype=float)

    @model_validator(mode="after")
    def _check(self):
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(self.values < 0):
            raise ValueError("energy values must be non-negative")
        return self

    @property
    def reference_energy(self) -> float:
        if self.meta.e0 is not None:
            return self.meta.e0
        return float(self.values[0]) if self.values.size else 0.0

    def window(self, t1: float, t2: float) -> Tuple[np.ndarray, np.ndarray]:
        mask = (self.times >= t1) & (self.times <= t2)
        return self.times[mask], self.values[mask]

    def scaled(self, factor: float) -> "EnergySeries":
        meta = self.meta.model_copy()
        if meta.e0 is not None:
            meta.e0 = meta.e0 * factor
        return EnergySeries(times=self.times.copy(), values=self.values * factor, meta=meta)

    def decimated(self, factor: int) -> "EnergySeries":
        return EnergySeries(times=self.times[::factor], values=self.values[::factor], meta=self.meta)


class DecayFit(BaseModel):
    """衰减模型拟合结果"""
    model: Literal["exponential", "polynomial", "extinct", "inconclusive"]
    rate: Optional[float] = None
    prefactor: Optional[float] = None
    fit_window: Tuple[float, float] = (0.0, 0.0)
    r_squared: float = 0.0
    residual_rms: float = 0.0
    sub_window_slopes: List[float] = Field(default_factory=list)
    flags: List[str] = Field(default_factory=list)
    extinction_time: Optional[float] = None

    @field_validator("r_squared")
    @classmethod
    def _clip_r_squared(cls, value):
        return float(min(1.0, max(0.0, value)))

    CSV_HEADER: ClassVar[List[str]] = [
        "model", "rate", "prefactor", "t1", "t2", "r_squared",
        "residual_rms", "extinction_time", "flags",
    ]

    def to_csv_row(self) -> List[str]:
        def fmt(value):
            return "" if value is None else repr(float(value))

        return [
            self.model,
            fmt(self.rate),
            fmt(self.prefactor),
            fmt(self.fit_window[0]),
            fmt(self.fit_window[1]),
            fmt(self.r_squared),
            fmt(self.residual_rms),
            fmt(self.extinction_time),
            ";".join(self.flags),
        ]

    def summary_block(self) -> str:
        lines = [f"model:           {self.model}"]
        if self.model == "exponential":
            lines.append(f"rate C2:         {self.rate:.6g}")
        elif self.model == "polynomial":
            lines.append(f"exponent p:      {self.rate:.6g}")
        if self.prefactor is not None:
            lines.append(f"prefactor:       {self.prefactor:.6g}")
        lines.append(f"fit window:      [{self.fit_window[0]:.6g}, {self.fit_window[1]:.6g}]")
        lines.append(f"r^2:             {self.r_squared:.6f}")
        lines.append(f"residual rms:    {self.residual_rms:.3e}")
        if self.extinction_time is not None:
            lines.append(f"extinction time: {self.extinction_time:.6g}")
        if self.flags:
            lines.append(f"flags:           {', '.join(self.flags)}")
        return "\n".join(lines)
