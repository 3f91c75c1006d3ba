import logging
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, linalg

from ..config import METRIC_DEFAULTS
from ..exceptions import MetricError
from ..models.metric import AssumptionReport, CoefficientField, SphereSample, VARIANTS
from ..utils.quadrature import CumulativeIntegral

logger = logging.getLogger(__name__)

MatrixSpec = Union[None, np.ndarray, Sequence[Sequence[float]], Callable[[np.ndarray], np.ndarray]]


# ---------------------------------------------------------------------------
# α(r) 与球坐标图
# ---------------------------------------------------------------------------

def alpha_profile(kind: str, m: float, delta: Optional[float] = None, m1: Optional[float] = None) -> Callable[[float], float]:
    """Assumption (C) 中的下界函数 α(r)

    coth: α = δ coth(δ r^m)，指数衰减定理所用
    power: α = m1 / r^m，多项式衰减定理所用
    """
    if kind == "coth":
        if delta is None or delta <= 0:
            raise MetricError("coth-type alpha needs delta > 0")
        return lambda r: delta / np.tanh(delta * r ** m)
    if kind == "power":
        if m1 is None or m1 <= 0:
            raise MetricError("power-type alpha needs m1 > 0")
        return lambda r: m1 / r ** m
    raise MetricError(f"Unknown alpha kind: {kind}")


def chart_point(theta: Sequence[float], derivative: Optional[int] = None) -> np.ndarray:
    """标准超球坐标下的单位向量，或其对 θ_k 的偏导

    x_1 = cos θ_1, x_2 = sin θ_1 cos θ_2, ..., x_n = sin θ_1 ... sin θ_{n-1}
    """
    theta = np.asarray(theta, dtype=float)
    n = theta.size + 1
    sin = np.sin(theta)
    cos = np.cos(theta)
    dsin = cos
    dcos = -sin
    point = np.empty(n)
    for j in range(n):
        value = 1.0
        for i in range(min(j, n - 1)):
            value *= dsin[i] if derivative == i else sin[i]
        if j < n - 1:
            value *= dcos[j] if derivative == j else cos[j]
            if derivative is not None and derivative > j:
                value = 0.0
        point[j] = value
    return point


def chart_tangents(r: float, theta: Sequence[float]) -> np.ndarray:
    """坐标切向量 ∂/∂θ_i 的笛卡尔分量，按行排列，形状 (n-1, n)"""
    theta = np.asarray(theta, dtype=float)
    return np.array([r * chart_point(theta, derivative=i) for i in range(theta.size)])


def sample_directions(n: int, count: int, seed: Optional[int] = None) -> np.ndarray:
    """球面上的稠密方向样本"""
    if n == 2:
        angles = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(angles), np.sin(angles)])
    if n == 3:
        # Fibonacci 点阵
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        azimuth = np.pi * (1.0 + 5 ** 0.5) * k
        s = np.sqrt(1.0 - z * z)
        return np.column_stack([s * np.cos(azimuth), s * np.sin(azimuth), z])
    rng = np.random.default_rng(seed)
    points = rng.standard_normal((count, n))
    return points / np.linalg.norm(points, axis=1, keepdims=True)


def sample_angles(n: int, count: int, seed: Optional[int] = None, pole_margin: Optional[float] = None) -> List[np.ndarray]:
    """避开坐标奇点的角度样本；n=2 为等距，高维为随机"""
    margin = METRIC_DEFAULTS["pole_margin"] if pole_margin is None else pole_margin
    if n == 2:
        return [np.array([2.0 * np.pi * k / count]) for k in range(count)]
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(count):
        polar = rng.uniform(margin, np.pi - margin, size=n - 2)
        azimuth = rng.uniform(0.0, 2.0 * np.pi)
        samples.append(np.concatenate([polar, [azimuth]]))
    return samples


# ---------------------------------------------------------------------------
# 构造
# ---------------------------------------------------------------------------

def _matrix_function(Q: MatrixSpec, n: int) -> Callable[[np.ndarray], np.ndarray]:
    if Q is None:
        return lambda x: np.eye(n)
    if callable(Q):
        return lambda x: np.asarray(Q(x), dtype=float)
    matrix = np.asarray(Q, dtype=float)
    if matrix.shape != (n, n):
        raise MetricError(f"Q must be {n}x{n}, got {matrix.shape}")
    return lambda x: matrix


def _require_spd(matrix: np.ndarray, what: str) -> None:
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12):
        raise MetricError(f"{what} is not symmetric")
    try:
        np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        raise MetricError(f"{what} is not positive definite")


def _require_spd_field(q_of: Callable[[np.ndarray], np.ndarray], n: int, r0: float) -> None:
    """在障碍面上的一组方向检查 Q 对称正定"""
    for direction in sample_directions(n, METRIC_DEFAULTS["q_check_directions"], seed=0):
        _require_spd(q_of(r0 * direction), f"Q at {np.round(r0 * direction, 6).tolist()}")


def _resolve_alpha(m, alpha, delta, m1):
    if alpha is not None:
        return alpha
    if delta is not None:
        return alpha_profile("coth", m, delta=delta)
    if m1 is not None:
        return alpha_profile("power", m, m1=m1)
    raise MetricError("E2_4/E2_5 need an alpha specification (delta or m1)")


def build_example_metric(
    variant: str,
    n: int,
    r0: float,
    m: float,
    delta: Optional[float] = None,
    m1: Optional[float] = None,
    alpha: Optional[Callable[[float], float]] = None,
    Q: MatrixSpec = None,
) -> CoefficientField:
    """闭式锥度量 A(x)

    E2_2: A = I / φ²
    E2_3: A = x̂x̂ᵀ/φ² + P Q(x) P
    E2_4: A = (1/φ² - e^{-H}) x̂x̂ᵀ + e^{-H} I
    E2_5: A = x̂x̂ᵀ/φ² + e^{-H} P Q(r0 x̂) P
    其中 P = I - x̂x̂ᵀ，H(r) = ∫_{r0}^{r} h，h = 2αφ - 2/r。
    """
    if variant not in VARIANTS or variant == "custom":
        raise MetricError(f"Unknown example variant: {variant}")
    if m is None or m <= 0:
        raise MetricError(f"cone power m must be positive, got {m}")
    if r0 <= 0:
        raise MetricError(f"obstacle radius must be positive, got {r0}")

    def phi(r):
        return m * r ** (m - 1.0)

    identity = np.eye(n)
    params = {"n": n, "r0": r0, "m": m, "delta": delta, "m1": m1}

    if variant == "E2_2":
        def evaluate(x):
            return identity / phi(np.linalg.norm(x)) ** 2

        return CoefficientField(n, r0, evaluate, variant=variant, cone_power=m, params=params)

    if variant == "E2_3":
        q_of = _matrix_function(Q, n)
        _require_spd_field(q_of, n, r0)

        def evaluate(x):
            r = np.linalg.norm(x)
            xhat = x / r
            radial = np.outer(xhat, xhat)
            proj = identity - radial
            return radial / phi(r) ** 2 + proj @ q_of(x) @ proj

        return CoefficientField(n, r0, evaluate, variant=variant, cone_power=m, params=params)

    alpha_fn = _resolve_alpha(m, alpha, delta, m1)
    integral = CumulativeIntegral(
        lambda y: 2.0 * alpha_fn(y) * phi(y) - 2.0 / y,
        r0,
        step=METRIC_DEFAULTS["quadrature_grid_step"],
        tolerance=METRIC_DEFAULTS["quadrature_tolerance"],
    )
    params["h_integral"] = integral

    if variant == "E2_4":
        def evaluate(x):
            r = np.linalg.norm(x)
            xhat = x / r
            tangential = np.exp(-integral(r))
            return (1.0 / phi(r) ** 2 - tangential) * np.outer(xhat, xhat) + tangential * identity

        return CoefficientField(n, r0, evaluate, variant=variant, cone_power=m, alpha=alpha_fn, params=params)

    q_of = _matrix_function(Q, n)
    _require_spd_field(q_of, n, r0)

    def evaluate(x):
        r = np.linalg.norm(x)
        xhat = x / r
        radial = np.outer(xhat, xhat)
        proj = identity - radial
        return radial / phi(r) ** 2 + np.exp(-integral(r)) * proj @ q_of(r0 * xhat) @ proj

    return CoefficientField(n, r0, evaluate, variant=variant, cone_power=m, alpha=alpha_fn, params=params)


# ---------------------------------------------------------------------------
# 锥条件与 Assumption (A)/(B)
# ---------------------------------------------------------------------------

def verify_cone(
    field: CoefficientField,
    radii: Iterable[float],
    directions: Iterable[Sequence[float]],
    tolerance: Optional[float] = None,
    assumption: str = "cone",
) -> AssumptionReport:
    """检查 A(x)x = x/φ²(r)，裕量为最大相对偏差"""
    radii = [float(r) for r in radii]
    directions = [np.asarray(d, dtype=float) for d in directions]
    if not radii or not directions:
        raise MetricError("verify_cone needs non-empty radius and direction samples")
    if field.cone_power is None:
        raise MetricError("verify_cone needs a declared cone power m")
    tol = METRIC_DEFAULTS["cone_tolerance"] if tolerance is None else tolerance

    rows = []
    worst, worst_point = -np.inf, []
    for r in radii:
        if r < field.obstacle_radius:
            raise MetricError(f"radius {r} is below r0={field.obstacle_radius}")
        for direction in directions:
            norm = np.linalg.norm(direction)
            if abs(norm - 1.0) > 1e-9:
                raise MetricError(f"direction {direction} is not a unit vector")
            x = r * direction
            target = x / field.phi(r) ** 2
            defect = np.linalg.norm(field(x) @ x - target) / np.linalg.norm(target)
            rows.append([r, *direction.tolist(), float(defect)])
            if defect > worst:
                worst, worst_point = float(defect), [r, *direction.tolist()]

    verdict = "pass" if worst <= tol else "fail"
    logger.info(f"{assumption} check on {field}: margin={worst:.3e} -> {verdict}")
    return AssumptionReport(
        assumption=assumption,
        verdict=verdict,
        margin=worst,
        tolerance=tol,
        worst_point=worst_point,
        samples_checked=len(rows),
        samples=rows,
    )


def check_assumption_B(field: CoefficientField, radii, directions, tolerance: Optional[float] = None) -> AssumptionReport:
    """Assumption (B)：锥且 φ(r) = m r^{m-1}"""
    return verify_cone(field, radii, directions, tolerance=tolerance, assumption="B")


def speed_bound_F(field: CoefficientField, y: float, n_samples: Optional[int] = None, seed: Optional[int] = None) -> float:
    """F(y) = sup_{|x|=y} √⟨∂r, A ∂r⟩"""
    if y < field.obstacle_radius:
        raise MetricError(f"F(y) is defined for y >= r0, got y={y}")
    if field.is_cone:
        return 1.0 / field.phi(y)
    n = field.dimension
    if n_samples is None:
        n_samples = METRIC_DEFAULTS["angular_samples"].get(n, METRIC_DEFAULTS["angular_samples_high_dim"])
    best = 0.0
    for direction in sample_directions(n, n_samples, seed=seed):
        value = direction @ field(y * direction) @ direction
        best = max(best, value)
    return float(np.sqrt(best))


def check_assumption_A(
    field: CoefficientField,
    y_max: float,
    growth_fraction: Optional[float] = None,
    n_samples: Optional[int] = None,
    seed: Optional[int] = None,
) -> AssumptionReport:
    """∫ 1/F dy 发散的启发式检验

    在几何阶梯 Y_k = r0·2^k 上求部分积分；最后一次倍增的增量不小于
    前一次增量的 growth_fraction 倍时判为通过。这是启发式判断。
    """
    fraction = METRIC_DEFAULTS["assumption_a_growth_fraction"] if growth_fraction is None else growth_fraction
    r0 = field.obstacle_radius
    ladder = [r0]
    while ladder[-1] * 2.0 <= y_max * (1.0 + 1e-12) and len(ladder) <= METRIC_DEFAULTS["assumption_a_ladder"]:
        ladder.append(ladder[-1] * 2.0)
    if len(ladder) < 3:
        raise MetricError(f"y_max={y_max} too small for a divergence ladder from r0={r0}")

    def inverse_speed(y):
        F = speed_bound_F(field, y, n_samples=n_samples, seed=seed)
        if not F > 0:
            raise MetricError(f"F(y) <= 0 at y={y}; 1/F is not integrable")
        return 1.0 / F

    partial = [0.0]
    for a, b in zip(ladder[:-1], ladder[1:]):
        segment, _ = integrate.quad(inverse_speed, a, b, limit=100)
        partial.append(partial[-1] + segment)
    increments = np.diff(partial)
    ratio = increments[-1] / increments[-2] if increments[-2] > 0 else np.inf
    margin = float(ratio - fraction)
    verdict = "pass" if margin >= 0 else "fail"
    logger.warning(f"Assumption A is a heuristic ladder test: last increment ratio={ratio:.4g} -> {verdict}")
    return AssumptionReport(
        assumption="A",
        verdict=verdict,
        margin=margin,
        tolerance=0.0,
        worst_point=[ladder[-1]],
        samples_checked=len(ladder) - 1,
        heuristic=True,
        samples=[[Y, I] for Y, I in zip(ladder, partial)],
        details={"ladder": ladder, "partial_integrals": partial, "growth_fraction": fraction},
    )


def rho_of_r(m: float, r0: float, r: float) -> float:
    """测地径向坐标 ρ = r^m（取 c(r0) = r0^m）"""
    if r < r0:
        raise MetricError(f"rho(r) is defined for r >= r0, got r={r}")
    return r ** m


# ---------------------------------------------------------------------------
# 球面度量 Υ、张量 P、Assumption (C)、Hessian 恒等式
# ---------------------------------------------------------------------------

def _check_theta(field: CoefficientField, theta) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.size != field.dimension - 1:
        raise MetricError(f"expected {field.dimension - 1} angles, got {theta.size}")
    return theta


def _upsilon(field: CoefficientField, r: float, theta: np.ndarray) -> np.ndarray:
    tangents = chart_tangents(r, theta)
    A = field(r * chart_point(theta))
    try:
        solved = np.linalg.solve(A, tangents.T)
    except np.linalg.LinAlgError:
        raise MetricError(f"A is singular at r={r}, theta={theta}")
    upsilon = tangents @ solved
    return 0.5 * (upsilon + upsilon.T)


def sphere_metric(field: CoefficientField, r: float, theta) -> SphereSample:
    """Υ = (γ_ij)，γ_ij = ⟨A^{-1} ∂θ_i, ∂θ_j⟩"""
    theta = _check_theta(field, theta)
    if r < field.obstacle_radius:
        raise MetricError(f"r={r} is below r0={field.obstacle_radius}")
    return SphereSample(r=r, theta=theta, upsilon=_upsilon(field, r, theta))


def p_form(field: CoefficientField, r: float, theta, h_r: Optional[float] = None, one_sided_at_obstacle: bool = False) -> SphereSample:
    """P = (1/2φ) ∂γ/∂r，中心差分

    one_sided_at_obstacle=True 时，在中心差分会越过 r0 的位置改用
    二阶前向差分（步长取下限值）。
    """
    theta = _check_theta(field, theta)
    if field.cone_power is None:
        raise MetricError("P needs a cone power m")
    r0 = field.obstacle_radius
    if r < r0:
        raise MetricError(f"r={r} is below r0={r0}")
    h = h_r if h_r is not None else max(METRIC_DEFAULTS["h_r_factor"] * r, METRIC_DEFAULTS["h_r_floor"])
    upsilon = _upsilon(field, r, theta)
    if r - h >= r0:
        d_gamma = (_upsilon(field, r + h, theta) - _upsilon(field, r - h, theta)) / (2.0 * h)
    elif one_sided_at_obstacle:
        h = max(METRIC_DEFAULTS["h_r_floor"] * r, 1e-9)
        d_gamma = (
            -3.0 * upsilon + 4.0 * _upsilon(field, r + h, theta) - _upsilon(field, r + 2.0 * h, theta)
        ) / (2.0 * h)
    else:
        raise MetricError(f"differencing step h={h} at r={r} leaves [r0, inf)")
    p = d_gamma / (2.0 * field.phi(r))
    return SphereSample(r=r, theta=theta, upsilon=upsilon, p_form=0.5 * (p + p.T))


def generalized_min_eigenvalue(a: np.ndarray, b: np.ndarray) -> float:
    """a v = λ b v 的最小特征值；b 用 Cholesky 白化"""
    try:
        lower = linalg.cholesky(b, lower=True)
    except linalg.LinAlgError:
        raise MetricError("metric block is not positive definite (singular Upsilon)")
    y = linalg.solve_triangular(lower, a, lower=True)
    c = linalg.solve_triangular(lower, y.T, lower=True).T
    return float(np.linalg.eigvalsh(0.5 * (c + c.T))[0])


def check_assumption_C(
    field: CoefficientField,
    alpha: Callable[[float], float],
    r_samples: Iterable[float],
    theta_samples: Iterable[Sequence[float]],
    tolerance: Optional[float] = None,
) -> AssumptionReport:
    """P(X,X) ≥ α(r)|X|²_g：束 (P - αΥ, Υ) 的最小广义特征值"""
    tol = METRIC_DEFAULTS["assumption_c_tolerance"] if tolerance is None else tolerance
    r_samples = [float(r) for r in r_samples]
    theta_samples = [_check_theta(field, th) for th in theta_samples]
    if not r_samples or not theta_samples:
        raise MetricError("check_assumption_C needs non-empty samples")

    rows = []
    margin, worst_point = np.inf, []
    for r in r_samples:
        a_r = alpha(r)
        for theta in theta_samples:
            sample = p_form(field, r, theta, one_sided_at_obstacle=True)
            lam = generalized_min_eigenvalue(sample.p_form - a_r * sample.upsilon, sample.upsilon)
            rows.append([r, *theta.tolist(), lam])
            if lam < margin:
                margin, worst_point = lam, [r, *theta.tolist()]

    verdict = "pass" if margin >= -tol else "fail"
    logger.info(f"Assumption C on {field}: margin={margin:.3e} over {len(rows)} samples -> {verdict}")
    return AssumptionReport(
        assumption="C",
        verdict=verdict,
        margin=float(margin),
        tolerance=tol,
        worst_point=worst_point,
        samples_checked=len(rows),
        samples=rows,
    )


def _christoffel(field: CoefficientField, x: np.ndarray, h: float) -> np.ndarray:
    """g = A^{-1} 在笛卡尔坐标下的 Christoffel 符号 Γ^k_ij，形状 (k, i, j)"""
    n = field.dimension
    dg = np.empty((n, n, n))
    for l in range(n):
        step = np.zeros(n)
        step[l] = h
        dg[l] = (np.linalg.inv(field(x + step)) - np.linalg.inv(field(x - step))) / (2.0 * h)
    # first_kind[i, j, l] = ∂_i g_jl + ∂_j g_il - ∂_l g_ij
    first_kind = dg + dg.transpose(1, 0, 2) - dg.transpose(1, 2, 0)
    A = field(x)
    return 0.5 * np.einsum("kl,ijl->kij", A, first_kind)


def tangent_hessian(field: CoefficientField, r: float, theta, h_g: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """返回 (D²ρ, P, Υ)，均限制在角向切空间的坐标基上"""
    theta = _check_theta(field, theta)
    if field.cone_power is None:
        raise MetricError("Hessian identity needs a cone field")
    h = METRIC_DEFAULTS["h_g"] if h_g is None else h_g
    if r - h <= field.obstacle_radius:
        raise MetricError(f"Christoffel differencing with h={h} at r={r} leaves the domain")
    m = field.cone_power
    x = r * chart_point(theta)
    n = field.dimension
    grad_rho = m * r ** (m - 2.0) * x
    hess_rho = m * r ** (m - 2.0) * (np.eye(n) + (m - 2.0) * np.outer(x, x) / r ** 2)
    gamma = _christoffel(field, x, h)
    covariant = hess_rho - np.einsum("kij,k->ij", gamma, grad_rho)
    tangents = chart_tangents(r, theta)
    d2rho = tangents @ covariant @ tangents.T
    sample = p_form(field, r, theta)
    return 0.5 * (d2rho + d2rho.T), sample.p_form, sample.upsilon


def hessian_identity_check(field: CoefficientField, r: float, theta, h_g: Optional[float] = None) -> float:
    """D²ρ(X,X) 与 P(X,X) 在 Υ-正交基下的最大相对差"""
    d2rho, p, upsilon = tangent_hessian(field, r, theta, h_g=h_g)
    lower = np.linalg.cholesky(upsilon)
    whiten = np.linalg.inv(lower)
    d_hat = whiten @ d2rho @ whiten.T
    p_hat = whiten @ p @ whiten.T
    scale = max(np.max(np.abs(p_hat)), np.finfo(float).tiny)
    return float(np.max(np.abs(d_hat - p_hat)) / scale)


def conormal_norm(field: CoefficientField, x) -> float:
    """|ν_A|_g = √⟨∂r, A ∂r⟩"""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x)
    if r < field.obstacle_radius:
        raise MetricError(f"|x|={r} is inside the obstacle")
    xhat = x / r
    return float(np.sqrt(xhat @ field(x) @ xhat))
