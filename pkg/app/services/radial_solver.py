import logging
import math
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy import special

from ..config import RADIAL_DEFAULTS
from ..exceptions import AnalysisError, CFLViolationError, DomainTruncationError, InstabilityError, SolverError
from ..models.grid import BumpSpec, RadialGrid, RadialState

logger = logging.getLogger(__name__)

MAX_CFL = 0.9


def sphere_area(n: int) -> float:
    """单位球面 S^{n-1} 的面积 ω_{n-1} = 2π^{n/2}/Γ(n/2)"""
    return 2.0 * math.pi ** (n / 2.0) / special.gamma(n / 2.0)


def default_bump(rho_min: float, amplitude: float = 1.0, mode: str = "displacement") -> BumpSpec:
    return BumpSpec(center=rho_min + 5.0, width=2.0, amplitude=amplitude, mode=mode)


class LeapfrogStepper:
    """u^{k+1} = 2u^k - u^{k-1} + dt² L u^k，两端 Dirichlet

    prev/cur 是相邻两个时间层；reverse() 交换它们，之后 step() 沿时间倒退。
    """

    def __init__(self, grid: RadialGrid, u0: np.ndarray, u1: np.ndarray):
        self.grid = grid
        self.dt = grid.dt
        self.rho = grid.nodes()
        self.delta = grid.delta_rho
        self._advection = (grid.d - 1.0) / self.rho[1:-1]

        u0 = np.array(u0, dtype=float)
        u0[0] = u0[-1] = 0.0
        first = u0 + self.dt * np.asarray(u1, dtype=float) + 0.5 * self.dt ** 2 * self.apply(u0)
        first[0] = first[-1] = 0.0
        self.prev = u0
        self.cur = first
        self.level = 1
        self.direction = 1

    @property
    def t(self) -> float:
        return self.level * self.dt

    def apply(self, u: np.ndarray) -> np.ndarray:
        """L u = D+D- u + (d-1)/ρ D0 u，边界行为零"""
        out = np.zeros_like(u)
        h = self.delta
        out[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h ** 2 + self._advection * (u[2:] - u[:-2]) / (2.0 * h)
        return out

    def step(self) -> None:
        nxt = 2.0 * self.cur - self.prev + self.dt ** 2 * self.apply(self.cur)
        nxt[0] = nxt[-1] = 0.0
        self.prev, self.cur = self.cur, nxt
        self.level += self.direction

    def reverse(self) -> None:
        self.prev, self.cur = self.cur, self.prev
        self.direction = -self.direction
        self.level += self.direction


def _check_grid(grid: RadialGrid, data: BumpSpec, T: float) -> None:
    if grid.cfl > MAX_CFL:
        raise CFLViolationError(f"dt={grid.dt} exceeds {MAX_CFL}*drho (cfl={grid.cfl:.3f})")
    if data.amplitude == 0.0:
        return
    lo, hi = data.support
    if lo < grid.rho_min:
        raise DomainTruncationError(f"data support [{lo}, {hi}] reaches inside rho_min={grid.rho_min}")
    needed = hi + T + 10.0 * grid.delta_rho
    if needed > grid.rho_max:
        raise DomainTruncationError(
            f"rho_max={grid.rho_max} < support {hi} + T {T} + 10 cells; the front would reach the truncated boundary"
        )


def _unnormalised_energy(u: np.ndarray, v: np.ndarray, grid: RadialGrid) -> float:
    rho = grid.nodes()
    du = np.gradient(u, grid.delta_rho, edge_order=2)
    return float(np.sum(_node_weights(grid) * (v ** 2 + du ** 2) * rho ** (grid.d - 1.0)))


def solve_radial(
    grid: RadialGrid,
    data: BumpSpec,
    T: float,
    sample_every: int = 1,
    energy_growth_guard: Optional[float] = None,
) -> List[RadialState]:
    """约化径向方程 u_tt = u_ρρ + (d-1)/ρ u_ρ 的蛙跳积分

    采样时刻的 v 用中心差分 (u^{k+1} - u^{k-1}) / 2dt 重构；t=0 时取 u₁。
    时间步被调整为 T / ceil(T/dt)，使最后一个样本恰好落在 T。
    """
    if T <= 0:
        raise SolverError(f"final time must be positive, got {T}")
    if sample_every < 1:
        raise SolverError(f"sample_every must be >= 1, got {sample_every}")
    _check_grid(grid, data, T)
    guard = RADIAL_DEFAULTS["energy_growth_guard"] if energy_growth_guard is None else energy_growth_guard

    n_steps = max(1, math.ceil(T / grid.dt - 1e-9))
    grid = grid.model_copy(update={"dt": T / n_steps})
    dt = grid.dt
    rho = grid.nodes()
    u0 = data.displacement(rho)
    u1 = data.velocity(rho)
    u0[0] = u0[-1] = 0.0
    logger.info(
        f"solve_radial: d={grid.d}, cells={grid.n_cells}, drho={grid.delta_rho:.4g}, dt={dt:.4g}, steps={n_steps}"
    )

    stepper = LeapfrogStepper(grid, u0, u1)
    states = [RadialState(t=0.0, u=u0, v=np.asarray(u1, dtype=float), grid=grid)]
    e0 = _unnormalised_energy(u0, u1, grid)

    for k in range(1, n_steps + 1):
        if k % sample_every == 0 or k == n_steps:
            before, current = stepper.prev, stepper.cur
            stepper.step()
            v = (stepper.cur - before) / (2.0 * dt)
            if not (np.all(np.isfinite(current)) and np.all(np.isfinite(v))):
                raise InstabilityError(f"non-finite values at step {k}", step=k, t=k * dt)
            energy = _unnormalised_energy(current, v, grid)
            if e0 > 0 and energy > (1.0 + guard) * e0:
                growth = energy / e0 - 1.0
                raise InstabilityError(
                    f"energy grew by {growth:.3%} at step {k} (t={k * dt:.4g})", step=k, t=k * dt, growth=growth
                )
            states.append(RadialState(t=k * dt, u=current, v=v, grid=grid))
        else:
            stepper.step()

    logger.info(f"solve_radial finished: {len(states)} samples up to t={states[-1].t:.4g}")
    return states


def dalembert_images_oracle(
    data: BumpSpec,
    rho_min: float,
    t: float,
    rho_query: Union[float, Sequence[float], np.ndarray],
    d: float = 1.0,
) -> Union[float, np.ndarray]:
    """d = 1 时半直线 Dirichlet 问题的精确解（关于 ρ_min 奇延拓）"""
    if d != 1.0:
        raise SolverError(f"the method-of-images oracle only holds for d = 1, got d={d}")
    rho = np.asarray(rho_query, dtype=float)

    def odd_displacement(s):
        return np.where(s >= rho_min, data.displacement(s), -data.displacement(2.0 * rho_min - s))

    def velocity_potential(s):
        # ∫_{ρ_min}^{s} G，G 为 u₁ 的奇延拓
        if data.mode != "velocity":
            return np.zeros_like(s)
        return data.antiderivative(rho_min + np.abs(s - rho_min)) - data.antiderivative(rho_min)

    value = 0.5 * (odd_displacement(rho - t) + odd_displacement(rho + t))
    value = value + 0.5 * (velocity_potential(rho + t) - velocity_potential(rho - t))
    return float(value) if value.ndim == 0 else value


# ---------------------------------------------------------------------------
# 能量
# ---------------------------------------------------------------------------

def _node_weights(grid: RadialGrid) -> np.ndarray:
    weights = np.full(grid.n_cells + 1, grid.delta_rho)
    weights[0] = weights[-1] = 0.5 * grid.delta_rho
    return weights


def _energy_density(state: RadialState, n: int, m: float) -> np.ndarray:
    """按节点的 (ω/m) ρ^{d-1} (u_t² + u_ρ²) × 求积权"""
    grid = state.grid
    rho = grid.nodes()
    du = np.gradient(state.u, grid.delta_rho, edge_order=2)
    d = n / m
    return sphere_area(n) / m * _node_weights(grid) * rho ** (d - 1.0) * (state.v ** 2 + du ** 2)


def total_energy(state: RadialState, n: int, m: float) -> float:
    return float(0.5 * np.sum(_energy_density(state, n, m)))


def local_energy(state: RadialState, a: float, n: int, m: float) -> float:
    """截断到 ρ ≤ a^m 的能量 E(t,a)"""
    grid = state.grid
    rho_a = a ** m
    if rho_a > grid.rho_max:
        raise DomainTruncationError(f"a^m={rho_a} exceeds rho_max={grid.rho_max}")
    if rho_a < grid.rho_min:
        raise SolverError(f"observation radius a={a} lies inside the obstacle")
    mask = grid.nodes() <= rho_a * (1.0 + 1e-12)
    return float(0.5 * np.sum(_energy_density(state, n, m)[mask]))


def front_radius(t: float, R0: float, m: float) -> float:
    """∫_{R0}^{r} φ = t 的闭式解"""
    if t < 0:
        raise SolverError(f"front radius needs t >= 0, got {t}")
    return (R0 ** m + t) ** (1.0 / m)


def support_mass_outside(state: RadialState, r_star: float, n: int, m: float, e0: Optional[float] = None) -> float:
    """ρ > r_star^m 部分的能量占 E(0) 的比例"""
    density = 0.5 * _energy_density(state, n, m)
    reference = float(np.sum(density)) if e0 is None else e0
    if reference <= 0:
        return 0.0
    mask = state.grid.nodes() > r_star ** m
    return float(np.sum(density[mask]) / reference)


def weighted_energy_exp(state: RadialState, n: int, m: float, exponent_cap: Optional[float] = None) -> float:
    """½∫ e^{ρ-t}(u_t² + |∇u|²)，权只在能量密度非零处计算"""
    cap = RADIAL_DEFAULTS["weight_exponent_cap"] if exponent_cap is None else exponent_cap
    density = _energy_density(state, n, m)
    active = density > 0
    if not np.any(active):
        return 0.0
    exponent = state.grid.nodes()[active] - state.t
    if exponent.max() > cap:
        raise SolverError(f"exponential weight overflows: rho - t = {exponent.max():.1f} > {cap}")
    return float(0.5 * np.sum(np.exp(exponent) * density[active]))


def linear_weight_check(trajectory: List[RadialState], n: int, m: float) -> float:
    """RHS - LHS：
    LHS = ∫ρ(u_t² + u_ρ²)(T)，
    RHS = ∫₀^T∫(u_t² + u_ρ²) dt + ∫ρ(u₁² + u₀'²)
    """
    if len(trajectory) < 3:
        raise AnalysisError(f"linear_weight_check needs at least 3 samples, got {len(trajectory)}")
    times = np.array([s.t for s in trajectory])
    # _energy_density 已含 1 倍的密度（不含 ½）
    plain = np.array([np.sum(_energy_density(s, n, m)) for s in trajectory])

    def rho_weighted(state):
        return float(np.sum(state.grid.nodes() * _energy_density(state, n, m)))

    time_integral = float(np.sum(0.5 * (plain[1:] + plain[:-1]) * np.diff(times)))
    rhs = time_integral + rho_weighted(trajectory[0])
    lhs = rho_weighted(trajectory[-1])
    return rhs - lhs


def radial_identity_residual(state: RadialState, n: int, m: float) -> float:
    """紧支撑径向态满足 ∫u u_ρ dx = ∫(1/2ρ)(1 - n/m)u² dx，返回相对残差"""
    grid = state.grid
    rho = grid.nodes()
    weight = sphere_area(n) / m * _node_weights(grid) * rho ** (n / m - 1.0)
    du = np.gradient(state.u, grid.delta_rho, edge_order=2)
    lhs = float(np.sum(weight * state.u * du))
    scale = float(np.sum(weight * state.u ** 2 / (2.0 * rho)))
    if scale == 0.0:
        return 0.0
    rhs = (1.0 - n / m) * scale
    return abs(lhs - rhs) / scale


def sized_grid(data: BumpSpec, T: float, rho_min: float, d: float, n_cells: Optional[int] = None, cfl: Optional[float] = None) -> RadialGrid:
    n_cells = RADIAL_DEFAULTS["n_cells"] if n_cells is None else n_cells
    cfl = RADIAL_DEFAULTS["cfl"] if cfl is None else cfl
    return RadialGrid.sized_for(
        data, T, rho_min=rho_min, d=d, n_cells=n_cells, cfl=cfl, padding_cells=RADIAL_DEFAULTS["padding_cells"],
    )
