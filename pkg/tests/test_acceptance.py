"""Acceptance criteria 1-9 at their stated tolerances.

Each test records one PASS/FAIL line, printed in the terminal summary.
"""

import itertools
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import ACCEPTANCE

from hamdual.cli import main
from hamdual.conjugate import (HamiltonianSpec, biconjugate, conjugate_arrays, conjugate_value,
                               eval_H, grad_conjugate, grad_H, validate)
from hamdual.decomposition import (bilinear_bound_ratio, build_basis, gap_constants,
                                   positivity_constant)
from hamdual.discretization import LaplacianSolver, Mesh
from hamdual.errors import InvalidHamiltonian
from hamdual.functional import DualPoint, eval_J, grad_J, pde_residual
from hamdual.oracle import brute_force_auto, newton_primal, shoot_hamiltonian
from hamdual.pipeline import Solver, pairwise_distinct

ADMISSIBLE = [HamiltonianSpec(0.5, 0.5), HamiltonianSpec(3, 3), HamiltonianSpec(3, 3, 0.05),
              HamiltonianSpec(2, 4), HamiltonianSpec(2, 4, 0.05)]
LINE = Mesh(1, 255)


def record(number, ok, detail):
    ACCEPTANCE.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def fd_grad(fun, z, h=1e-5):
    e = np.eye(2)
    return np.array([(fun(*(z + h * e[i])) - fun(*(z - h * e[i]))) / (2 * h) for i in range(2)])


def largest_distinct_set(records):
    d = pairwise_distinct(records)
    for size in range(len(records), 0, -1):
        for idx in itertools.combinations(range(len(records)), size):
            if all(d[i, j] for i, j in itertools.combinations(idx, 2)):
                return size
    return 0


@pytest.fixture(scope="module")
def superlinear():
    t0 = time.perf_counter()
    res = Solver(HamiltonianSpec(3, 3), LINE).run([(1, None), (2, None), (3, None)])
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def sublinear():
    t0 = time.perf_counter()
    res = Solver(HamiltonianSpec(0.5, 0.5), LINE).run([(n, 2 * n + 4) for n in range(2, 6)])
    return res, time.perf_counter() - t0


def test_criterion_1_conjugate():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst_bf = worst_fy = worst_inv = 0.0
    ax = np.linspace(-3, 3, 61)
    U, V = np.meshgrid(ax, ax)
    for spec in ADMISSIBLE:
        f, g = rng.uniform(-5, 5, size=(2, 200))
        val, u, v = conjugate_arrays(spec, f, g)
        ref = np.array([brute_force_auto(spec, a, b) for a, b in zip(f, g)])
        worst_bf = max(worst_bf, np.max(np.abs(val - ref)))
        worst_fy = max(worst_fy, np.max(np.abs(f * u + g * v - eval_H(spec, u, v) - val)))
        worst_inv = max(worst_inv, np.max(np.abs(biconjugate(spec, U, V) - eval_H(spec, U, V))))
    try:
        validate(HamiltonianSpec(0.5, 0.5, 0.05))
        rejected = False
    except InvalidHamiltonian as exc:
        rejected = exc.check == "coupling"
    secs = time.perf_counter() - t0
    ok = worst_bf <= 1e-5 and worst_fy <= 1e-9 and worst_inv <= 1e-6 and rejected and secs <= 30
    record(1, ok, f"brute force {worst_bf:.1e}, Fenchel-Young {worst_fy:.1e}, "
                  f"involution {worst_inv:.1e}, p=q=1/2 eps=0.05 rejected={rejected}, {secs:.1f} s")


def test_criterion_2_gradients():
    rng = np.random.default_rng(0)
    solver = LaplacianSolver(LINE)
    basis = build_basis(LINE, 8)
    worst = {"grad_H": 0.0, "grad_conjugate": 0.0, "grad_J": 0.0}
    odd = True
    for spec in ADMISSIBLE:
        for z in rng.uniform(-3, 3, size=(50, 2)):
            an = np.array(grad_H(spec, *z))
            fd = fd_grad(lambda a, b: float(eval_H(spec, a, b)), z)
            worst["grad_H"] = max(worst["grad_H"], np.linalg.norm(an - fd) / np.linalg.norm(an))
            an = np.array(grad_conjugate(spec, *z), dtype=float)
            fd = fd_grad(lambda a, b: float(conjugate_value(spec, a, b)), z)
            worst["grad_conjugate"] = max(worst["grad_conjugate"],
                                          np.linalg.norm(an - fd) / np.linalg.norm(an))
        for _ in range(50):
            c = rng.standard_normal((4, 8)) / np.arange(1, 9)
            pt = DualPoint.from_arrays(2 * basis.G @ c[0], 2 * basis.G @ c[1], LINE)
            d = DualPoint.from_arrays(basis.G @ c[2], basis.G @ c[3], LINE)
            gr = grad_J(spec, solver, pt)
            an = LINE.weight * (gr.f.values @ d.f.values + gr.g.values @ d.g.values)
            t = 1e-5
            fd = (eval_J(spec, solver, pt + d * t) - eval_J(spec, solver, pt - d * t)) / (2 * t)
            worst["grad_J"] = max(worst["grad_J"], abs(fd - an) / abs(an))
            neg = grad_J(spec, solver, -pt)
            odd &= np.array_equal(neg.f.values, -gr.f.values) and np.array_equal(
                neg.g.values, -gr.g.values)
    ok = max(worst.values()) <= 1e-5 and odd
    record(2, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", oddness exact={odd}")


def test_criterion_3_decomposition():
    basis = build_basis(LINE, 40)
    solver = LaplacianSolver(LINE)
    AG = np.column_stack([solver.A(basis.g(k)) for k in range(1, 41)])
    bio = np.max(np.abs(LINE.weight * (basis.G * basis.eigenvalues).T @ AG - np.eye(40)))
    alpha_err = max(abs(gap_constants(basis, n, 1, 1).alpha - 1 / basis.eigenvalues[n])
                    for n in (1, 2, 5, 10))
    g1, g20 = gap_constants(basis, 1, 3, 3).gamma, gap_constants(basis, 20, 3, 3).gamma
    ratio = bilinear_bound_ratio(basis, 3, 3, 3, count=1000)
    gamma3 = gap_constants(basis, 3, 3, 3).gamma
    cmin = min(positivity_constant(basis, n, 3, 3) for n in range(1, 21))
    ok = (bio <= 1e-9 and alpha_err <= 1e-8 and g20 < 0.1 * g1
          and ratio <= gamma3 * (1 + 1e-6) and cmin > 0)
    record(3, ok, f"biorthogonality {bio:.1e}, alpha error {alpha_err:.1e}, "
                  f"gamma_20/gamma_1 {g20 / g1:.3f}, pairing/gamma_3 {ratio / gamma3:.3f}, "
                  f"min C(n) {cmin:.2e}")


def test_criterion_4_energy_identity(superlinear, sublinear):
    recs = [r.record for r in superlinear[0] + sublinear[0]]
    gap = max(r.identity_gap / (1 + abs(r.J_value)) for r in recs)
    res = max(max(r.residual_u, r.residual_v) for r in recs)
    record(4, gap <= 1e-6 and res <= 1e-6,
           f"{len(recs)} solutions, max relative gap {gap:.1e}, max residual {res:.1e}")


def test_criterion_5_superlinear(superlinear):
    results, secs = superlinear
    recs = [r.record for r in results]
    I = [r.I_value for r in recs]
    d = pairwise_distinct(recs)
    all_distinct = bool(d[np.triu_indices(3, 1)].all())
    oracle = shoot_hamiltonian(HamiltonianSpec(3, 3), 0).energy_I
    rel = abs(I[0] - oracle) / abs(oracle)
    nontrivial = all(np.max(np.abs(r.u.values)) > 1e-3 for r in recs)
    ok = (all_distinct and nontrivial and I[0] < I[1] < I[2] and rel <= 1e-3 and secs <= 300)
    record(5, ok, f"I = {I[0]:.6g}, {I[1]:.6g}, {I[2]:.6g}; pairwise distinct={all_distinct}; "
                  f"oracle rel diff {rel:.1e}; {secs:.0f} s")


def test_criterion_6_sublinear(sublinear):
    results, secs = sublinear
    recs = [r.record for r in results]
    I = [r.I_value for r in recs]
    rho = [r.config.rho_n for r in results]
    n_distinct = largest_distinct_set(recs)
    bracket = all(r.bounds.d_tilde - 1e-9 * abs(r.bounds.d_tilde) <= r.outcome.level_value
                  <= r.bounds.upper < 0 for r in results)
    ok = (n_distinct >= 3 and all(i < 0 for i in I) and bool(np.all(np.diff(I) > 0))
          and bool(np.all(np.diff(rho) < 0)) and bracket and secs <= 300)
    record(6, ok, f"I = {', '.join(f'{i:.3g}' for i in I)}; distinct set size {n_distinct}; "
                  f"rho decreasing={bool(np.all(np.diff(rho) < 0))}; bracket={bracket}; "
                  f"{secs:.0f} s")


def test_criterion_7_oracle_concordance(superlinear, sublinear):
    solver = LaplacianSolver(LINE)
    moved = 0.0
    for res in superlinear[0] + sublinear[0]:
        rec = res.record
        spec = HamiltonianSpec(3, 3) if rec.regime == "superlinear" else HamiltonianSpec(0.5, 0.5)
        u, v = newton_primal(spec, solver, rec.u.values, rec.v.values)
        moved = max(moved, np.max(np.abs(u.values - rec.u.values)),
                    np.max(np.abs(v.values - rec.v.values)))
    ratios = []
    for spec, nodes in [(HamiltonianSpec(3, 3), 0), (HamiltonianSpec(3, 3), 1),
                        (HamiltonianSpec(2, 4), 0), (HamiltonianSpec(0.5, 0.5), 1)]:
        shot = shoot_hamiltonian(spec, nodes)
        r = []
        for n in (127, 255):
            mesh = Mesh(1, n)
            s = LaplacianSolver(mesh)
            r.append(max(pde_residual(spec, s, *shot.on_mesh(mesh))))
        ratios.append(r[0] / r[1])
    ok = moved <= 1e-8 and all(3.5 <= x <= 4.5 for x in ratios)
    record(7, ok, f"newton_primal moves pipeline fields by {moved:.1e}; residual ratios "
                  + ", ".join(f"{x:.3f}" for x in ratios))


def test_criterion_8_square():
    t0 = time.perf_counter()
    res = Solver(HamiltonianSpec(2, 2), Mesh(2, 63)).level(1)
    secs = time.perf_counter() - t0
    rec = res.record
    res_max = max(rec.residual_u, rec.residual_v)
    gap = rec.identity_gap / (1 + abs(rec.J_value))
    ok = np.max(np.abs(rec.u.values)) > 1e-3 and res_max <= 1e-5 and gap <= 1e-5 and secs <= 600
    record(8, ok, f"I = {rec.I_value:.6g}, residual {res_max:.1e}, relative gap {gap:.1e}, "
                  f"{secs:.0f} s")


def test_criterion_9_reproducible(tmp_path):
    config = str(Path(__file__).parent.parent / "configs" / "superlinear.json")
    codes = [main(["solve", "--config", config, "--out", str(tmp_path / name)])
             for name in ("a", "b")]
    a, b = ((tmp_path / name / "spectrum.csv").read_bytes() for name in ("a", "b"))
    record(9, codes == [0, 0] and a == b, f"exit codes {codes}, spectrum.csv identical={a == b}")
