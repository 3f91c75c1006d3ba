from typing import Any, Literal, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, Field, field_validator

# (1 - s^2)^4 及其原函数，s ∈ [-1, 1]
_BUMP = Polynomial([1.0, 0.0, -1.0]) ** 4
_BUMP_INTEGRAL = _BUMP.integ(lbnd=-1.0)


class BumpSpec(BaseModel):
    """ρ 变量下的紧支撑多项式鼓包初值"""
    center: float
    width: float = Field(gt=0)
    amplitude: float = 1.0
    mode: Literal["displacement", "velocity"] = "displacement"

    @property
    def support(self) -> Tuple[float, float]:
        return self.center - self.width, self.center + self.width

    def profile(self, rho) -> np.ndarray:
        s = (np.asarray(rho, dtype=float) - self.center) / self.width
        inside = np.abs(s) < 1.0
        return np.where(inside, self.amplitude * _BUMP(np.clip(s, -1.0, 1.0)), 0.0)

    def antiderivative(self, rho) -> np.ndarray:
        """∫_{-∞}^{ρ} profile"""
        s = np.clip((np.asarray(rho, dtype=float) - self.center) / self.width, -1.0, 1.0)
        return self.amplitude * self.width * _BUMP_INTEGRAL(s)

    def displacement(self, rho) -> np.ndarray:
        if self.mode == "displacement":
            return self.profile(rho)
        return np.zeros_like(np.asarray(rho, dtype=float))

    def velocity(self, rho) -> np.ndarray:
        if self.mode == "velocity":
            return self.profile(rho)
        return np.zeros_like(np.asarray(rho, dtype=float))


class PlanarBumpSpec(BumpSpec):
    """二维初值：ρ = r^m 上的鼓包乘以 cos(kθ)"""
    angular_mode: int = Field(default=0, ge=0)


class RadialGrid(BaseModel):
    rho_min: float
    rho_max: float
    n_cells: int = Field(gt=1)
    d: float = Field(gt=0)
    dt: float = Field(gt=0)

    @field_validator("rho_min")
    @classmethod
    def _positive_rho_min(cls, value):
        if value <= 0:
            raise ValueError("rho_min must be positive (exterior domain)")
        return value

    @property
    def delta_rho(self) -> float:
        return (self.rho_max - self.rho_min) / self.n_cells

    @property
    def cfl(self) -> float:
        return self.dt / self.delta_rho

    def nodes(self) -> np.ndarray:
        return self.rho_min + self.delta_rho * np.arange(self.n_cells + 1)

    @classmethod
    def sized_for(
        cls,
        data: BumpSpec,
        T: float,
        rho_min: float,
        d: float,
        n_cells: int,
        cfl: float = 0.5,
        padding_cells: int = 32,
    ) -> "RadialGrid":
        """ρ_max = 支集上界 + T + padding_cells·Δρ；padding 须大于有限速度检查的余量"""
        reach = max(data.support[1], rho_min) + T - rho_min
        padding_cells = min(padding_cells, n_cells // 4)
        length = reach / (1.0 - padding_cells / n_cells)
        delta = length / n_cells
        return cls(rho_min=rho_min, rho_max=rho_min + length, n_cells=n_cells, d=d, dt=cfl * delta)


class RadialState(BaseModel):
    """某一时刻的离散波场 (u, u_t)"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    t: float
    u: np.ndarray
    v: np.ndarray
    grid: RadialGrid


class PolarGrid2D(BaseModel):
    r_min: float = Field(gt=0)
    r_max: float
    n_r: int = Field(gt=1)
    n_theta: int = Field(gt=3)
    dt: float = Field(gt=0)

    @property
    def delta_r(self) -> float:
        return (self.r_max - self.r_min) / self.n_r

    @property
    def delta_theta(self) -> float:
        return 2.0 * np.pi / self.n_theta

    def radii(self) -> np.ndarray:
        return self.r_min + self.delta_r * np.arange(self.n_r + 1)

    def angles(self) -> np.ndarray:
        return self.delta_theta * np.arange(self.n_theta)

    def cell_radii(self) -> np.ndarray:
        return self.r_min + self.delta_r * (np.arange(self.n_r) + 0.5)

    def cell_angles(self) -> np.ndarray:
        return self.delta_theta * (np.arange(self.n_theta) + 0.5)

    @classmethod
    def sized_for(cls, r_min: float, r_front: float, n_r: int, n_theta: int, dt: float = 1.0, margin_cells: int = 32) -> "PolarGrid2D":
        """外半径 = 波前半径 + margin_cells 个径向网格（至多 n_r / 4）"""
        margin_cells = min(margin_cells, n_r // 4)
        length = max(r_front - r_min, 0.0) / (1.0 - margin_cells / n_r)
        return cls(r_min=r_min, r_max=r_min + length, n_r=n_r, n_theta=n_theta, dt=dt)


class PlanarState(BaseModel):
    """二维波场快照；operator 指向装配好的离散算子，用于计算能量"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    t: float
    u: np.ndarray
    v: np.ndarray
    grid: PolarGrid2D
    operator: Any = Field(default=None, repr=False, exclude=True)
