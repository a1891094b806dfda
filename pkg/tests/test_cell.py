import numpy as np
import pytest
from scipy.integrate import quad

from oscille import cell, linalg
from oscille.core import preset_coefficient
from oscille.mesh import build_cell_mesh

SQRT3 = np.sqrt(3.0)


@pytest.fixture(scope="module")
def sine_field():
    return preset_coefficient("Sine1D", [2, 1], 1)


@pytest.fixture(scope="module")
def sine_cell(sine_field):
    return cell.solve_cell(sine_field, np.zeros(1), build_cell_mesh(256, 1))


def test_closed_form_examples(sine_field):
    const = preset_coefficient("Constant", [2.0], 1)
    assert cell.closed_form_1d_effective(const, 0.0) == pytest.approx(2.0, abs=1e-10)
    # int_0^1 dy/(c + sin 2 pi y) = 1/sqrt(c^2-1), so the harmonic mean is sqrt(3)
    assert cell.closed_form_1d_effective(sine_field, 0.0) == pytest.approx(SQRT3, abs=1e-10)
    lp = preset_coefficient("LocallyPeriodic1D", [2, 1, 0.5], 1)
    assert cell.closed_form_1d_effective(lp, 1.0) == pytest.approx(1.5 * SQRT3, abs=1e-10)


def test_constant_cell_solution_is_zero():
    const = preset_coefficient("Constant", [2.0], 1)
    sol = cell.solve_cell(const, np.zeros(1), build_cell_mesh(64, 1))
    assert np.max(np.abs(sol.columns)) <= 1e-10
    t = cell.effective_tensor(const, np.zeros(1), build_cell_mesh(64, 1), solution=sol)
    np.testing.assert_allclose(t, 2.0 * np.eye(1), atol=1e-12)


def test_effective_tensor_sine_1d(sine_field, sine_cell):
    t = cell.effective_tensor(sine_field, np.zeros(1), sine_cell.cell_mesh, solution=sine_cell)
    assert abs(t[0, 0] - SQRT3) <= 1e-4


def _exact_n(ys):
    # zero-mean antiderivative of sqrt(3)/a(y) - 1 for a = 2 + sin 2 pi y
    def raw(y):
        v, _ = quad(lambda t: SQRT3 / (2 + np.sin(2 * np.pi * t)) - 1.0, 0.0, y, limit=200)
        return v

    vals = np.array([raw(y) for y in ys])
    mean, _ = quad(raw, 0.0, 1.0, limit=200)
    return vals - mean


def test_cell_solution_matches_antiderivative(sine_cell):
    ys = sine_cell.cell_mesh.axis_coords(0)
    exact = _exact_n(ys)
    err = np.sqrt(np.mean((sine_cell.columns[:, 0] - exact) ** 2))
    assert err <= 1e-4


def test_mean_zero(sine_cell):
    assert sine_cell.mean_defect() <= 1e-10


def test_laminate_reduces_to_1d(sine_cell):
    lam = preset_coefficient("Laminate2D", [2, 1], 2)
    cmesh = build_cell_mesh(64, 2)
    sol = cell.solve_cell(lam, np.zeros(2), cmesh)
    cols = sol.columns.reshape(64, 64, 2)
    # N1 depends on y1 only; N2 vanishes
    spread = cols[:, :, 0].max(axis=1) - cols[:, :, 0].min(axis=1)
    assert np.max(spread) <= 1e-8
    assert np.max(np.abs(cols[:, :, 1])) <= 1e-8
    sol1d = cell.solve_cell(preset_coefficient("Sine1D", [2, 1], 1), np.zeros(1), build_cell_mesh(64, 1))
    np.testing.assert_allclose(cols[:, 0, 0], sol1d.columns[:, 0], atol=1e-8)


def test_laminate_effective_tensor():
    lam = preset_coefficient("Laminate2D", [2, 1], 2)
    t = cell.effective_tensor(lam, np.zeros(2), build_cell_mesh(128, 2))
    assert abs(t[0, 0] - SQRT3) <= 1e-4
    assert abs(t[1, 1] - 2.0) <= 1e-12  # arithmetic mean, exact for the laminate
    assert abs(t[0, 1]) <= 1e-8 and abs(t[1, 0]) <= 1e-8


def test_effective_tensor_symmetry():
    f = preset_coefficient("SineProduct2D", [2, 1], 2)
    t = cell.effective_tensor(f, np.zeros(2), build_cell_mesh(32, 2))
    assert abs(t[0, 1] - t[1, 0]) <= 1e-8


def test_voigt_reuss_bracket():
    # harmonic mean <= eigenvalues of A0 <= arithmetic mean
    for pid, params, d in [("Sine1D", [2, 1], 1), ("SineProduct2D", [2, 1], 2), ("Laminate2D", [3, 2], 2)]:
        f = preset_coefficient(pid, params, d)
        m = 128 if d == 1 else 48
        t = cell.effective_tensor(f, np.zeros(d), build_cell_mesh(m, d))
        eigs = np.linalg.eigvalsh(0.5 * (t + t.T))

        def a_point(y):
            return float(f.eval(np.zeros((1, d)), np.array(y).reshape(1, d))[0])

        ys = np.linspace(0, 1, 201)[:-1]
        if d == 1:
            samples = np.array([a_point([y]) for y in ys])
        else:
            samples = np.array([a_point([y1, y2]) for y1 in ys[::10] for y2 in ys[::10]])
        harm = 1.0 / np.mean(1.0 / samples)
        arith = np.mean(samples)
        assert eigs.min() >= harm - 1e-3  # sampling tolerance on the bounds
        assert eigs.max() <= arith + 1e-3
        assert eigs.min() >= f.c_a - 1e-6
        assert eigs.max() <= f.norm_inf + 1e-6


def test_cell_mesh_convergence_order():
    # |A0_m - A0_2m| shrinks by at least a factor 3 per doubling
    for pid, params, d, ms in [
        ("Sine1D", [2, 1], 1, (32, 64, 128)),
        ("SineProduct2D", [2, 1], 2, (16, 32, 64)),
        ("Laminate2D", [2, 1], 2, (16, 32, 64)),
    ]:
        f = preset_coefficient(pid, params, d)
        tensors = [cell.effective_tensor(f, np.zeros(d), build_cell_mesh(m, d)) for m in ms]
        d1 = np.max(np.abs(tensors[1] - tensors[0]))
        d2 = np.max(np.abs(tensors[2] - tensors[1]))
        assert d1 / d2 >= 3.0


def test_uniqueness_under_dof_permutation(sine_field):
    # permuted unknown ordering must give the same cell function
    cmesh = build_cell_mesh(64, 1)
    sol = cell.solve_cell(sine_field, np.zeros(1), cmesh)
    matrix, loads, _, _ = cell._periodic_stiffness_and_loads(sine_field, np.zeros(1), cmesh)
    c = cell._mean_functional(cmesh)
    rng = np.random.default_rng(17)
    perm = rng.permutation(cmesh.n_nodes)
    sp = matrix.as_scipy()[perm][:, perm]
    pm = linalg.SparseMatrix.from_scipy(sp, symmetric=True)
    x_p, _, _ = linalg.solve_saddle(pm, c[perm], loads[0][perm])
    x = np.empty_like(x_p)
    x[perm] = x_p
    l2 = np.sqrt(np.mean((x - sol.columns[:, 0]) ** 2))
    assert l2 <= 1e-8


def test_tabulate_constant_in_x(sine_field):
    cmesh = build_cell_mesh(64, 1)
    axes = (np.linspace(-0.25, 1.25, 25),)
    eff, table = cell.tabulate_effective(sine_field, axes, cmesh)
    assert np.max(np.abs(eff.tensors - eff.tensors[0])) <= 1e-12
    pts = np.array([[0.123], [0.9]])
    np.testing.assert_allclose(eff.tensor_at(pts)[:, 0, 0], eff.tensors[0, 0, 0], atol=1e-12)


@pytest.fixture(scope="module")
def lp_table():
    f = preset_coefficient("LocallyPeriodic1D", [2, 1, 0.5], 1)
    axes = (np.linspace(0.0, 1.0, 17),)
    eff, table = cell.tabulate_effective(f, axes, build_cell_mesh(128, 1))
    return f, eff, table


def test_tabulated_locally_periodic_values(lp_table):
    f, eff, _ = lp_table
    for x in (0.0, 0.5, 1.0):
        got = eff.tensor_at(np.array([[x]]))[0, 0, 0]
        assert abs(got - (1 + 0.5 * x) * SQRT3) <= 1e-4


def test_tabulated_lipschitz_estimate(lp_table):
    _, eff, _ = lp_table
    # d/dx of (1 + x/2) sqrt(3) is sqrt(3)/2
    assert eff.lipschitz_estimate() == pytest.approx(0.5 * SQRT3, rel=0.05)


def test_table_coverage_error(lp_table):
    _, eff, _ = lp_table
    with pytest.raises(cell.TableCoverage):
        eff.tensor_at(np.array([[1.5]]))


def test_ellipticity_violation():
    f = preset_coefficient("LocallyPeriodic1D", [2, 1, 0.5], 1)
    with pytest.raises(cell.EllipticityViolation):
        cell.solve_cell(f, np.array([-2.5]), build_cell_mesh(16, 1))


def test_eval_n_periodic_interpolation(sine_cell):
    ys = np.array([[0.1], [0.37], [1.1], [-0.9]])
    vals = sine_cell.eval_n(ys)
    np.testing.assert_allclose(vals[2], vals[0], atol=1e-12)
    np.testing.assert_allclose(vals[3], vals[0], atol=1e-12)
    exact = _exact_n([0.37])
    assert abs(vals[1, 0] - exact[0]) <= 1e-4


def test_dump_tables_csv(tmp_path, lp_table):
    _, eff, _ = lp_table
    path = tmp_path / "a0.csv"
    cell.dump_tables_csv(eff, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x1,a11"
    assert len(lines) == 1 + len(eff.x_axes[0])


def test_dump_cell_csv(tmp_path, sine_cell):
    path = tmp_path / "n.csv"
    cell.dump_cell_csv(sine_cell, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "y1,n1"
    assert len(lines) == 1 + sine_cell.cell_mesh.n_nodes
