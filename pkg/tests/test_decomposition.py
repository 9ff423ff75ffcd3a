import numpy as np
import pytest

from hamdual.decomposition import (SubspaceSpec, bilinear_bound_ratio, build_basis,
                                   gap_constants, positivity_constant, project)
from hamdual.discretization import LaplacianSolver, Mesh, lp_norm
from hamdual.errors import BadSpec, TooManyModes


@pytest.fixture(scope="module")
def basis():
    return build_basis(Mesh(1, 255), 40)


@pytest.fixture(scope="module")
def square():
    return build_basis(Mesh(2, 31), 30)


def test_ground_eigenvalue(basis):
    assert basis.eigenvalues[0] == pytest.approx(np.pi**2, rel=1e-3)
    assert np.all(np.diff(basis.eigenvalues) > 0)


@pytest.mark.parametrize("which", ["basis", "square"])
def test_biorthogonality(which, request):
    b = request.getfixturevalue(which)
    solver = LaplacianSolver(b.mesh)
    AG = np.column_stack([solver.A(b.g(k)) for k in range(1, b.m_max + 1)])
    F = b.G * b.eigenvalues
    assert np.max(np.abs(b.mesh.weight * F.T @ AG - np.eye(b.m_max))) <= 1e-9


@pytest.mark.parametrize("which", ["basis", "square"])
def test_eigenpairs(which, request):
    b = request.getfixturevalue(which)
    L = LaplacianSolver(b.mesh)
    for j in range(1, b.m_max + 1):
        res = L.neg_laplacian(b.g(j)) - b.eigenvalues[j - 1] * b.g(j)
        assert np.max(np.abs(res)) <= 1e-8 * b.eigenvalues[j - 1] * np.max(np.abs(b.g(j)))


def test_square_order_is_deterministic(square):
    assert np.all(np.diff(square.eigenvalues) >= 0)
    assert square.modes[:3] == [(1, 1), (1, 2), (2, 1)]


def test_single_mode_basis():
    b = build_basis(Mesh(1, 63), 1)
    assert b.m_max == 1
    assert SubspaceSpec("F_n", 1).dim(b) == 1


def test_too_many_modes():
    with pytest.raises(TooManyModes):
        build_basis(Mesh(1, 15), 16)


def test_subspace_dimensions(basis):
    assert SubspaceSpec("F_n", 4).dim() == 4
    assert SubspaceSpec("G_n", 4).dim() == 8
    assert SubspaceSpec("G_n_m", 3, 7).dim() == 2 * 7 - 2 * 3 + 2


@pytest.mark.parametrize("spec", [SubspaceSpec("E_n", 0), SubspaceSpec("G_n_m", 5, 3),
                                  SubspaceSpec("G_n_m", 2), SubspaceSpec("E_n", 41),
                                  SubspaceSpec("H_n", 1)])
def test_bad_subspace(basis, spec):
    with pytest.raises(BadSpec):
        project(basis.g(1), basis, spec)


def test_project_modes(basis):
    assert np.allclose(project(basis.g(1), basis, SubspaceSpec("E_n", 1)), basis.g(1), atol=1e-12)
    assert np.max(np.abs(project(basis.g(2), basis, SubspaceSpec("E_n", 1)))) <= 1e-12


def test_project_direct_sum(basis):
    x = np.random.default_rng(0).standard_normal(basis.mesh.size)
    a = project(x, basis, SubspaceSpec("E_n", 5))
    b = project(x, basis, SubspaceSpec("E_n_perp", 5))
    assert np.max(np.abs(a + b - x)) <= 1e-14 * np.max(np.abs(x))


def test_project_converges(basis):
    # a field in the span of the basis, so the residual reaches zero at m_max
    c = np.random.default_rng(1).standard_normal(basis.m_max)
    x = basis.G @ c
    errs = [lp_norm(project(x, basis, SubspaceSpec("E_n", n)) - x, 2, basis.mesh)
            for n in range(1, basis.m_max + 1)]
    assert np.all(np.diff(errs) < 0)
    assert errs[-1] <= 1e-12


def test_project_F_n_is_idempotent(basis):
    rng = np.random.default_rng(2)
    pair = tuple(rng.standard_normal((2, basis.mesh.size)))
    once = project(pair, basis, SubspaceSpec("F_n", 3))
    twice = project(once, basis, SubspaceSpec("F_n", 3))
    assert np.allclose(once[0], twice[0]) and np.allclose(once[1], twice[1])


@pytest.mark.parametrize("n", [1, 2, 5])
def test_alpha_for_quadratic_case(basis, n):
    gc = gap_constants(basis, n, 1, 1)
    assert gc.alpha == pytest.approx(1 / basis.eigenvalues[n], abs=1e-8)
    assert not gc.lower_bound_only
    if n == 1:
        assert gc.alpha == pytest.approx(1 / (4 * np.pi**2), rel=1e-3)


def test_alpha_beats_random_sampling(basis):
    gc = gap_constants(basis, 1, 3, 3)
    rng = np.random.default_rng(3)
    T = basis.G[:, 1:]
    C = rng.standard_normal((T.shape[1], 10_000)) * np.exp(-0.2 * np.arange(T.shape[1]))[:, None]
    g = T @ C
    Ag = T @ (C / basis.eigenvalues[1:, None])
    w = basis.mesh.weight
    ratio = (w * np.sum(np.abs(Ag) ** 4, axis=0)) ** 0.25 / (w * np.sum(np.abs(g) ** (4 / 3), axis=0)) ** 0.75
    assert gc.alpha >= ratio.max()


def test_gamma_decays(basis):
    g = {n: gap_constants(basis, n, 3, 3).gamma for n in (1, 5, 10, 20)}
    assert g[20] < g[10] < g[5] < g[1]
    assert g[20] < 0.1 * g[1]


def test_bilinear_bound(basis):
    gamma = gap_constants(basis, 3, 3, 3).gamma
    assert bilinear_bound_ratio(basis, 3, 3, 3, count=1000) <= gamma * (1 + 1e-6)


def test_positivity_one_mode(basis):
    g1 = basis.g(1)
    x = lp_norm(basis.eigenvalues[0] * g1, 4 / 3, basis.mesh) + lp_norm(g1, 4 / 3, basis.mesh)
    assert positivity_constant(basis, 1, 3, 3) == pytest.approx(1 / x**2, rel=1e-12)


def test_positivity_nonincreasing(basis):
    c = [positivity_constant(basis, n, 3, 3) for n in range(1, 21)]
    assert min(c) > 0
    assert np.all(np.diff(c) <= 1e-12 * np.array(c[:-1]))
