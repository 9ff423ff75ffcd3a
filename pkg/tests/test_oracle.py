import numpy as np
import pytest

from hamdual.conjugate import HamiltonianSpec, conjugate_value
from hamdual.discretization import LaplacianSolver, Mesh, l2_norm
from hamdual.errors import BoundaryMaximum, BracketFailure, NonConvergence
from hamdual.functional import pde_residual
from hamdual.oracle import (brute_force_auto, brute_force_conjugate, newton_primal, shoot_1d,
                            shoot_hamiltonian)

CUBIC = HamiltonianSpec(3, 3)


@pytest.fixture(scope="module")
def shots():
    return {k: shoot_hamiltonian(CUBIC, k) for k in (0, 1, 2)}


def test_ground_state_symmetric(shots):
    s = shots[0]
    u, v = s.u.values, s.v.values
    assert s.node_count_u == 0 and np.all(u > 0)
    assert np.array_equal(u, v)
    assert np.max(np.abs(u - u[::-1])) <= 1e-8
    assert max(abs(s.boundary_u), abs(s.boundary_v)) <= 1e-10


def test_one_node_state_odd(shots):
    s = shots[1]
    u = s.u.values
    assert s.node_count_u == 1
    assert abs(u[u.size // 2]) <= 1e-8  # the fine mesh has a node at x = 1/2
    assert np.max(np.abs(u + u[::-1])) <= 1e-8


def test_energies_increase_with_nodes(shots):
    assert shots[0].energy_I < shots[1].energy_I < shots[2].energy_I


def test_asymmetric_shooting():
    s = shoot_hamiltonian(HamiltonianSpec(2, 4), 0)
    assert s.node_count_u == 0
    assert max(abs(s.boundary_u), abs(s.boundary_v)) <= 1e-10
    assert s.energy_I > 0


def test_sublinear_shooting():
    s = shoot_hamiltonian(HamiltonianSpec(0.5, 0.5), 1)
    assert s.node_count_u == 1 and s.energy_I < 0


def test_bracket_failure():
    with pytest.raises(BracketFailure):
        shoot_1d(3, 3, 0, bracket=(1e-3, 2e-3))


def test_shooting_rejects_coupling():
    with pytest.raises(ValueError):
        shoot_hamiltonian(HamiltonianSpec(3, 3, 0.05), 0)


@pytest.mark.parametrize("spec", [CUBIC, HamiltonianSpec(2, 4)], ids=["p=q=3", "p=2,q=4"])
def test_interpolated_residual_second_order(spec):
    s = shoot_hamiltonian(spec, 0)
    res = []
    for n in (127, 255):
        mesh = Mesh(1, n)
        res.append(max(pde_residual(spec, LaplacianSolver(mesh), *s.on_mesh(mesh))))
    assert 3.5 <= res[0] / res[1] <= 4.5


def test_newton_primal_from_shooting(shots):
    errs = []
    for n in (127, 255):
        mesh = Mesh(1, n)
        solver = LaplacianSolver(mesh)
        u0, v0 = shots[0].on_mesh(mesh)
        u, v, info = newton_primal(CUBIC, solver, u0, v0, info=True)
        assert info["residual"] <= 1e-10
        errs.append(l2_norm(u.values - u0, mesh))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_newton_primal_fixed_point(shots):
    mesh = Mesh(1, 255)
    solver = LaplacianSolver(mesh)
    u, v = newton_primal(CUBIC, solver, *shots[0].on_mesh(mesh))
    u2, v2, info = newton_primal(CUBIC, solver, u.values, v.values, info=True)
    assert info["iterations"] <= 3
    assert np.max(np.abs(u2.values - u.values)) <= 1e-8


def test_newton_primal_trivial():
    mesh = Mesh(1, 63)
    u, v = newton_primal(CUBIC, LaplacianSolver(mesh), np.zeros(63), np.zeros(63))
    assert not np.any(u.values) and not np.any(v.values)


def test_newton_primal_gives_up():
    mesh = Mesh(1, 63)
    start = np.full(63, 50.0)
    with pytest.raises(NonConvergence):
        newton_primal(CUBIC, LaplacianSolver(mesh), start, -start, maxiter=2)


def test_brute_force_examples():
    quad = HamiltonianSpec(1, 1)
    assert brute_force_conjugate(quad, 2.0, 4.0, 10, 1e-3) == pytest.approx(5.0, abs=1e-5)
    assert brute_force_conjugate(quad, 0.0, 0.0, 10, 1e-3) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(BoundaryMaximum):
        brute_force_conjugate(quad, 30.0, 0.0, 10, 1e-3)


def test_brute_force_is_lower_bound():
    spec = HamiltonianSpec(2, 4)
    for f, g in np.random.default_rng(0).uniform(-5, 5, size=(10, 2)):
        assert brute_force_auto(spec, f, g) <= conjugate_value(spec, f, g) + 1e-12
