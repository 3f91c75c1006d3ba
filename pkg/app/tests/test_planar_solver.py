import numpy as np
import pytest

from ..config import PLANAR_DEFAULTS
from ..exceptions import CFLViolationError, DomainTruncationError, SolverError
from ..models.grid import PlanarBumpSpec, PlanarState, PolarGrid2D
from ..models.metric import CoefficientField
from ..services import metric_service
from ..services import planar_solver as ps
from ..services.radial_solver import dalembert_images_oracle, front_radius
from ..utils.trace_io import read_snapshot, write_snapshot


@pytest.fixture
def flat_operator():
    field = CoefficientField(2, 1.0, lambda x: np.eye(2), cone_power=1.0)
    grid = PolarGrid2D(r_min=1.0, r_max=3.0, n_r=40, n_theta=64, dt=1.0)
    return ps.assemble_operator(field, grid)


@pytest.fixture
def e2_4_operator():
    field = metric_service.build_example_metric("E2_4", n=2, r0=1.0, m=2.0, delta=0.5)
    grid = PolarGrid2D(r_min=1.0, r_max=2.5, n_r=24, n_theta=32, dt=1.0)
    return ps.assemble_operator(field, grid)


def interior_random(grid, seed):
    values = np.random.default_rng(seed).normal(size=(grid.n_r + 1, grid.n_theta))
    values[0] = values[-1] = 0.0
    return values


class TestOperator:
    """离散 div A∇ 的对称性、半负定性与相容性"""

    def test_symmetric(self, e2_4_operator):
        grid = e2_4_operator.grid
        u, w = interior_random(grid, 1), interior_random(grid, 2)
        left = e2_4_operator.inner(u, e2_4_operator.apply(w))
        right = e2_4_operator.inner(e2_4_operator.apply(u), w)
        assert left == pytest.approx(right, rel=1e-10, abs=1e-10)

    def test_negative_semidefinite(self, e2_4_operator):
        u = interior_random(e2_4_operator.grid, 3)
        potential = float(np.sum(e2_4_operator.cell_energy(u)))
        assert potential > 0
        assert e2_4_operator.inner(u, e2_4_operator.apply(u)) == pytest.approx(-2.0 * potential, rel=1e-10)

    def test_boundary_rows_are_zero(self, e2_4_operator):
        out = e2_4_operator.apply(interior_random(e2_4_operator.grid, 4))
        assert not np.any(out[0]) and not np.any(out[-1])

    @pytest.mark.parametrize("harmonic,tolerance", [
        (lambda r, theta: r * np.cos(theta), 2e-2),
        (lambda r, theta: r ** 2 * np.cos(2.0 * theta), 5e-2),
    ])
    def test_flat_laplacian_of_harmonic(self, flat_operator, harmonic, tolerance):
        grid = flat_operator.grid
        u = harmonic(grid.radii()[:, None], grid.angles()[None, :])
        assert np.max(np.abs(flat_operator.apply(u)[1:-1])) <= tolerance

    def test_flat_constant_is_annihilated(self, flat_operator):
        u = np.ones((flat_operator.grid.n_r + 1, flat_operator.grid.n_theta))
        assert np.max(np.abs(flat_operator.apply(u))) <= 1e-10

    def test_isotropic_has_no_mixed_term(self):
        field = metric_service.build_example_metric("E2_2", n=2, r0=1.0, m=2.0)
        operator = ps.assemble_operator(field, PolarGrid2D(r_min=1.0, r_max=2.0, n_r=8, n_theta=8, dt=1.0))
        assert np.max(np.abs(operator.c)) <= 1e-14
        assert np.allclose(operator.p, operator.q)

    def test_three_dimensional_field_rejected(self):
        field = CoefficientField(3, 1.0, lambda x: np.eye(3), cone_power=1.0)
        with pytest.raises(SolverError):
            ps.assemble_operator(field, PolarGrid2D(r_min=1.0, r_max=2.0, n_r=8, n_theta=8, dt=1.0))

    def test_grid_inside_obstacle(self):
        field = CoefficientField(2, 1.0, lambda x: np.eye(2), cone_power=1.0)
        with pytest.raises(SolverError):
            ps.assemble_operator(field, PolarGrid2D(r_min=0.5, r_max=2.0, n_r=8, n_theta=8, dt=1.0))

    def test_degenerate_coefficients(self):
        field = CoefficientField(2, 1.0, lambda x: np.diag([1.0, 0.0]), cone_power=1.0)
        with pytest.raises(CFLViolationError):
            ps.assemble_operator(field, PolarGrid2D(r_min=1.0, r_max=2.0, n_r=8, n_theta=8, dt=1.0))


class TestSolvePlanar:

    @pytest.fixture
    def e2_2(self):
        return metric_service.build_example_metric("E2_2", n=2, r0=1.0, m=2.0)

    @pytest.fixture
    def e2_4(self):
        return metric_service.build_example_metric("E2_4", n=2, r0=1.0, m=2.0, delta=0.5)

    def test_radial_data_matches_images_solution(self, e2_2):
        # n = m = 2 时 d = 1，径向数据的解是 ρ = r² 上的镜像法解
        data = PlanarBumpSpec(center=6.0, width=2.0)
        T = 5.0
        grid, operator = ps.sized_polar_grid(e2_2, data, T, n_r=240, n_theta=8, cfl=0.4)
        final = ps.solve_planar(e2_2, grid, data, T, sample_every=10 ** 9, operator=operator)[-1]
        rho = final.grid.radii() ** 2
        exact = dalembert_images_oracle(data, 1.0, final.t, rho)
        assert np.max(np.abs(final.u[:, 0] - exact)) <= 1e-2
        # 径向数据保持与 θ 无关
        assert np.max(np.abs(final.u - final.u[:, :1])) <= 1e-10

    def test_zero_data(self, e2_4):
        data = PlanarBumpSpec(center=6.0, width=2.0, amplitude=0.0)
        grid, operator = ps.sized_polar_grid(e2_4, data, 1.0, n_r=16, n_theta=16)
        trajectory = ps.solve_planar(e2_4, grid, data, 1.0, sample_every=5, operator=operator)
        assert all(not np.any(state.u) and not np.any(state.v) for state in trajectory)
        assert ps.total_energy_2d(trajectory[-1]) == 0.0
        assert ps.energy_outside_2d(trajectory[-1], 1.5) == 0.0

    def test_energy_conservation_anisotropic(self, e2_4):
        data = PlanarBumpSpec(center=6.0, width=2.0, angular_mode=2)
        grid, operator = ps.sized_polar_grid(e2_4, data, 2.0, n_r=80, n_theta=64)
        trajectory = ps.solve_planar(e2_4, grid, data, 2.0, sample_every=10, operator=operator)
        e0 = ps.total_energy_2d(trajectory[0])
        assert e0 > 0
        for state in trajectory[1:]:
            assert abs(ps.total_energy_2d(state) - e0) <= 5e-3 * e0

    def test_dirichlet_rows(self, e2_4):
        data = PlanarBumpSpec(center=6.0, width=2.0, angular_mode=1)
        grid, operator = ps.sized_polar_grid(e2_4, data, 1.5, n_r=32, n_theta=32)
        for state in ps.solve_planar(e2_4, grid, data, 1.5, sample_every=7, operator=operator):
            assert not np.any(state.u[0]) and not np.any(state.u[-1])

    @pytest.mark.parametrize("m", [1.0, 2.0, 3.0])
    def test_finite_speed(self, m):
        field = metric_service.build_example_metric("E2_2", n=2, r0=1.0, m=m)
        data = PlanarBumpSpec(center=6.0, width=2.0)
        T = 4.0
        grid, operator = ps.sized_polar_grid(field, data, T, n_r=160, n_theta=8)
        trajectory = ps.solve_planar(field, grid, data, T, sample_every=20, operator=operator)
        e0 = ps.total_energy_2d(trajectory[0])
        R0 = data.support[1] ** (1.0 / m)
        margin = PLANAR_DEFAULTS["front_check_cells"] * grid.delta_r
        for state in trajectory:
            r_star = front_radius(state.t, R0, m) + margin
            assert r_star < grid.r_max
            assert ps.energy_outside_2d(state, r_star, e0=e0) <= 1e-4

    def test_outer_radius_clears_check_margin(self, e2_4):
        data = PlanarBumpSpec(center=6.0, width=2.0, angular_mode=2)
        T = 20.0
        grid, _ = ps.sized_polar_grid(e2_4, data, T, n_r=400, n_theta=16)
        front = front_radius(T, data.support[1] ** 0.5, 2.0)
        assert grid.r_max - front > PLANAR_DEFAULTS["front_check_cells"] * grid.delta_r

    def test_local_energy_limits(self, e2_2):
        data = PlanarBumpSpec(center=6.0, width=2.0)
        grid, operator = ps.sized_polar_grid(e2_2, data, 1.0, n_r=40, n_theta=8)
        state = ps.solve_planar(e2_2, grid, data, 1.0, sample_every=10 ** 9, operator=operator)[-1]
        assert ps.local_energy_2d(state, grid.r_max) == pytest.approx(ps.total_energy_2d(state))
        assert ps.local_energy_2d(state, 1.2) < ps.total_energy_2d(state)
        with pytest.raises(DomainTruncationError):
            ps.local_energy_2d(state, 2.0 * grid.r_max)

    def test_state_without_operator(self):
        grid = PolarGrid2D(r_min=1.0, r_max=2.0, n_r=8, n_theta=8, dt=0.01)
        state = PlanarState(t=0.0, u=np.zeros((9, 8)), v=np.zeros((9, 8)), grid=grid)
        with pytest.raises(SolverError):
            ps.total_energy_2d(state)

    def test_time_step_too_large(self, e2_2):
        data = PlanarBumpSpec(center=6.0, width=2.0)
        grid, operator = ps.sized_polar_grid(e2_2, data, 1.0, n_r=40, n_theta=8)
        too_large = grid.model_copy(update={"dt": 10.0 * grid.dt})
        with pytest.raises(CFLViolationError):
            ps.solve_planar(e2_2, too_large, data, 1.0, operator=operator)

    def test_truncated_annulus(self, e2_2):
        data = PlanarBumpSpec(center=6.0, width=2.0)
        grid, operator = ps.sized_polar_grid(e2_2, data, 1.0, n_r=40, n_theta=8)
        with pytest.raises(DomainTruncationError):
            ps.solve_planar(e2_2, grid, data, 6.0, operator=operator)

    def test_snapshot_file(self, e2_4, tmp_path):
        data = PlanarBumpSpec(center=6.0, width=2.0, angular_mode=3)
        grid, operator = ps.sized_polar_grid(e2_4, data, 0.5, n_r=16, n_theta=16)
        state = ps.solve_planar(e2_4, grid, data, 0.5, sample_every=10 ** 9, operator=operator)[-1]
        path = write_snapshot(tmp_path / "snap" / "final.bin", state)
        assert path.stat().st_size == 32 + 2 * 8 * state.u.size
        t, u, v = read_snapshot(path)
        assert t == state.t
        assert np.array_equal(u, state.u) and np.array_equal(v, state.v)

    def test_snapshot_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "other.bin"
        path.write_bytes(b"NOTASNAP" + bytes(32))
        with pytest.raises(ValueError):
            read_snapshot(path)
