import logging
import math
from typing import List, Optional

import numpy as np

from ..config import PLANAR_DEFAULTS
from ..exceptions import CFLViolationError, DomainTruncationError, InstabilityError, SolverError
from ..models.grid import PlanarBumpSpec, PlanarState, PolarGrid2D
from ..models.metric import CoefficientField
from .radial_solver import front_radius

logger = logging.getLogger(__name__)

# 二维显式蛙跳：dt·c·√(1/Δr² + 1/(rΔθ)²) ≤ 1
MAX_CFL = 0.7


class PolarOperator:
    """环形极坐标网格上的 div A∇u

    势能按单元求和，每个单元的二次型由围住它的四条边上的差分构成；
    A 取单元中心值并旋转到 (e_r, e_θ) 基下得到 p, c, q。
    L u = -∇V(u) / M，M 为节点面积权 r Δr Δθ，内外环两行置零。
    """

    def __init__(self, grid: PolarGrid2D, p: np.ndarray, c: np.ndarray, q: np.ndarray):
        self.grid = grid
        self.p, self.c, self.q = p, c, q
        self.dr = grid.delta_r
        self.dtheta = grid.delta_theta
        self.r_nodes = grid.radii()
        self.r_cells = grid.cell_radii()[:, None]
        self.cell_area = self.r_cells * self.dr * self.dtheta
        self.mass = (self.r_nodes * self.dr * self.dtheta)[:, None] * np.ones((1, grid.n_theta))
        self.mass[0] *= 0.5
        self.mass[-1] *= 0.5

        half_trace = 0.5 * (p + q)
        spread = np.sqrt((0.5 * (p - q)) ** 2 + c ** 2)
        self.lambda_max = float(np.max(half_trace + spread))
        self.lambda_min = float(np.min(half_trace - spread))

    @property
    def max_speed(self) -> float:
        return math.sqrt(self.lambda_max)

    def stable_dt(self, cfl: float) -> float:
        if not self.lambda_min > 0:
            raise CFLViolationError(f"A is degenerate on the annulus (min eigenvalue {self.lambda_min:.3e})")
        spacing = min(self.dr, self.grid.r_min * self.dtheta)
        return cfl * spacing / self.max_speed

    def _differences(self, u: np.ndarray):
        radial = (u[1:] - u[:-1]) / self.dr
        angular = (np.roll(u, -1, axis=1) - u) / self.dtheta
        a0, a1 = radial, np.roll(radial, -1, axis=1)
        b0, b1 = angular[:-1], angular[1:]
        mean_r = 0.5 * (a0 + a1)
        mean_theta = 0.5 * (b0 + b1) / self.r_cells
        return a0, a1, b0, b1, mean_r, mean_theta

    def cell_energy(self, u: np.ndarray) -> np.ndarray:
        """每个单元的势能 ½∫⟨∇u, A∇u⟩，形状 (n_r, n_theta)"""
        a0, a1, b0, b1, mean_r, mean_theta = self._differences(u)
        r2 = self.r_cells ** 2
        form = (
            self.p * 0.5 * (a0 ** 2 + a1 ** 2)
            + 2.0 * self.c * mean_r * mean_theta
            + self.q * 0.5 * (b0 ** 2 + b1 ** 2) / r2
        )
        return 0.5 * self.cell_area * form

    def apply(self, u: np.ndarray) -> np.ndarray:
        a0, a1, b0, b1, mean_r, mean_theta = self._differences(u)
        w = 0.5 * self.cell_area
        r = self.r_cells

        # ∂V/∂(径向差分)，单元 (i, j-1) 的右侧边即单元 (i, j) 的左侧边
        ra0 = w * (self.p * a0 + self.c * mean_theta)
        ra1 = w * (self.p * a1 + self.c * mean_theta)
        d_radial = ra0 + np.roll(ra1, 1, axis=1)

        rb0 = w * (self.c * mean_r / r + self.q * b0 / r ** 2)
        rb1 = w * (self.c * mean_r / r + self.q * b1 / r ** 2)
        d_angular = np.zeros_like(u)
        d_angular[:-1] += rb0
        d_angular[1:] += rb1

        gradient = np.zeros_like(u)
        gradient[1:] += d_radial / self.dr
        gradient[:-1] -= d_radial / self.dr
        gradient += (np.roll(d_angular, 1, axis=1) - d_angular) / self.dtheta

        out = -gradient / self.mass
        out[0] = 0.0
        out[-1] = 0.0
        return out

    def inner(self, u: np.ndarray, w: np.ndarray) -> float:
        """面积加权内积"""
        return float(np.sum(self.mass * u * w))


def assemble_operator(field: CoefficientField, grid: PolarGrid2D) -> PolarOperator:
    if field.dimension != 2:
        raise SolverError(f"the planar solver is two-dimensional, got n={field.dimension}")
    if grid.r_min < field.obstacle_radius * (1.0 - 1e-12):
        raise SolverError(f"grid r_min={grid.r_min} lies inside the obstacle r0={field.obstacle_radius}")
    radii = grid.cell_radii()
    angles = grid.cell_angles()
    p = np.empty((grid.n_r, grid.n_theta))
    c = np.empty_like(p)
    q = np.empty_like(p)
    for j, theta in enumerate(angles):
        e_r = np.array([math.cos(theta), math.sin(theta)])
        e_theta = np.array([-math.sin(theta), math.cos(theta)])
        for i, r in enumerate(radii):
            A = field(r * e_r)
            p[i, j] = e_r @ A @ e_r
            c[i, j] = 0.5 * (e_r @ A @ e_theta + e_theta @ A @ e_r)
            q[i, j] = e_theta @ A @ e_theta
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(c)) and np.all(np.isfinite(q))):
        raise SolverError("non-finite coefficient entries on the annulus")
    operator = PolarOperator(grid, p, c, q)
    if not operator.lambda_min > 0:
        raise CFLViolationError(f"A is degenerate on the annulus (min eigenvalue {operator.lambda_min:.3e})")
    logger.info(
        f"assembled polar operator {grid.n_r}x{grid.n_theta}: speed range "
        f"[{math.sqrt(operator.lambda_min):.4g}, {operator.max_speed:.4g}]"
    )
    return operator


def sized_polar_grid(
    field: CoefficientField,
    data: PlanarBumpSpec,
    T: float,
    n_r: Optional[int] = None,
    n_theta: Optional[int] = None,
    cfl: Optional[float] = None,
    margin_cells: Optional[int] = None,
):
    """按波前半径确定外半径，再按局部波速确定 dt；返回 (grid, operator)"""
    n_r = PLANAR_DEFAULTS["n_r"] if n_r is None else n_r
    n_theta = PLANAR_DEFAULTS["n_theta"] if n_theta is None else n_theta
    cfl = PLANAR_DEFAULTS["cfl"] if cfl is None else cfl
    margin = PLANAR_DEFAULTS["front_margin_cells"] if margin_cells is None else margin_cells
    m = field.cone_power or 1.0
    r0 = field.obstacle_radius
    support_radius = max(data.support[1], r0 ** m) ** (1.0 / m)
    reach = max(front_radius(T, support_radius, m), 2.0 * r0)
    grid = PolarGrid2D.sized_for(r0, reach, n_r, n_theta, margin_cells=margin)
    operator = assemble_operator(field, grid)
    grid = grid.model_copy(update={"dt": operator.stable_dt(cfl)})
    operator.grid = grid
    return grid, operator


def initial_data(grid: PolarGrid2D, data: PlanarBumpSpec, m: float):
    """ρ = r^m 上的鼓包乘以 cos(kθ)"""
    rho = grid.radii()[:, None] ** m
    modulation = np.cos(data.angular_mode * grid.angles())[None, :]
    u0 = data.displacement(rho) * modulation
    v0 = data.velocity(rho) * modulation
    u0[0] = u0[-1] = 0.0
    v0[0] = v0[-1] = 0.0
    return u0, v0


def solve_planar(
    field: CoefficientField,
    grid: PolarGrid2D,
    data: PlanarBumpSpec,
    T: float,
    sample_every: int = 1,
    operator: Optional[PolarOperator] = None,
    energy_growth_guard: Optional[float] = None,
) -> List[PlanarState]:
    if T <= 0:
        raise SolverError(f"final time must be positive, got {T}")
    if sample_every < 1:
        raise SolverError(f"sample_every must be >= 1, got {sample_every}")
    guard = PLANAR_DEFAULTS["energy_growth_guard"] if energy_growth_guard is None else energy_growth_guard
    operator = assemble_operator(field, grid) if operator is None else operator
    m = field.cone_power or 1.0

    if grid.dt > operator.stable_dt(MAX_CFL):
        raise CFLViolationError(f"dt={grid.dt} exceeds the variable-coefficient CFL bound {operator.stable_dt(MAX_CFL):.4g}")
    if data.amplitude != 0.0:
        lo, hi = data.support
        if lo < grid.r_min ** m:
            raise DomainTruncationError(f"data support starts at rho={lo}, inside the obstacle")
        if front_radius(T, hi ** (1.0 / m), m) > grid.r_max:
            raise DomainTruncationError(f"r_max={grid.r_max} is inside the front radius at T={T}")

    n_steps = max(1, math.ceil(T / grid.dt - 1e-9))
    dt = T / n_steps
    grid = grid.model_copy(update={"dt": dt})
    operator.grid = grid
    u0, v0 = initial_data(grid, data, m)
    logger.info(f"solve_planar: {grid.n_r}x{grid.n_theta}, r_max={grid.r_max:.4g}, dt={dt:.4g}, steps={n_steps}")

    prev = u0
    cur = u0 + dt * v0 + 0.5 * dt ** 2 * operator.apply(u0)
    cur[0] = cur[-1] = 0.0
    states = [PlanarState(t=0.0, u=u0, v=v0, grid=grid, operator=operator)]
    e0 = total_energy_2d(states[0])

    for k in range(1, n_steps + 1):
        nxt = 2.0 * cur - prev + dt ** 2 * operator.apply(cur)
        nxt[0] = nxt[-1] = 0.0
        if k % sample_every == 0 or k == n_steps:
            v = (nxt - prev) / (2.0 * dt)
            if not (np.all(np.isfinite(cur)) and np.all(np.isfinite(v))):
                raise InstabilityError(f"non-finite values at step {k}", step=k, t=k * dt)
            state = PlanarState(t=k * dt, u=cur, v=v, grid=grid, operator=operator)
            energy = total_energy_2d(state)
            if e0 > 0 and energy > (1.0 + guard) * e0:
                growth = energy / e0 - 1.0
                raise InstabilityError(
                    f"energy grew by {growth:.3%} at step {k} (t={k * dt:.4g})", step=k, t=k * dt, growth=growth
                )
            states.append(state)
        prev, cur = cur, nxt

    logger.info(f"solve_planar finished: {len(states)} samples up to t={states[-1].t:.4g}")
    return states


def _operator_of(state: PlanarState) -> PolarOperator:
    if state.operator is None:
        raise SolverError("planar state carries no operator; energies need the assembled coefficients")
    return state.operator


def total_energy_2d(state: PlanarState) -> float:
    operator = _operator_of(state)
    kinetic = 0.5 * float(np.sum(operator.mass * state.v ** 2))
    return kinetic + float(np.sum(operator.cell_energy(state.u)))


def local_energy_2d(state: PlanarState, a: float) -> float:
    """截断到 r ≤ a：节点动能与中心在 r ≤ a 内的单元势能"""
    if a > state.grid.r_max * (1.0 + 1e-12):
        raise DomainTruncationError(f"a={a} exceeds r_max={state.grid.r_max}")
    operator = _operator_of(state)
    nodes = state.grid.radii() <= a * (1.0 + 1e-12)
    cells = state.grid.cell_radii() <= a
    kinetic = 0.5 * float(np.sum((operator.mass * state.v ** 2)[nodes]))
    return kinetic + float(np.sum(operator.cell_energy(state.u)[cells]))


def energy_outside_2d(state: PlanarState, r_star: float, e0: Optional[float] = None) -> float:
    """r > r_star 的能量占 E(0) 的比例"""
    operator = _operator_of(state)
    reference = total_energy_2d(state) if e0 is None else e0
    if reference <= 0:
        return 0.0
    nodes = state.grid.radii() > r_star
    cells = state.grid.cell_radii() > r_star
    kinetic = 0.5 * float(np.sum((operator.mass * state.v ** 2)[nodes]))
    potential = float(np.sum(operator.cell_energy(state.u)[cells]))
    return (kinetic + potential) / reference
