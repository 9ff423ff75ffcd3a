import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamdual.conjugate import (HamiltonianSpec, biconjugate, calibrate_growth, check_H3,
                               conjugate_arrays, conjugate_point, conjugate_value, eval_H,
                               grad_conjugate, grad_H, hess_conjugate, validate)
from hamdual.errors import H3Violation, InvalidHamiltonian
from hamdual.oracle import brute_force_auto
from hamdual.verify import central_difference

SPECS = {
    "p=q=1/2": HamiltonianSpec(0.5, 0.5),
    "p=q=3": HamiltonianSpec(3, 3),
    "p=2,q=4": HamiltonianSpec(2, 4),
    "p=q=3,eps": HamiltonianSpec(3, 3, 0.05),
    "p=2,q=4,eps": HamiltonianSpec(2, 4, 0.05),
}
coord = st.floats(-5, 5, allow_nan=False)


def test_eval_H_examples():
    assert eval_H(HamiltonianSpec(1, 1), 1.0, 2.0) == 5.0
    assert eval_H(HamiltonianSpec(3, 3, 0.1, 2, 2), 1.0, 1.0) == pytest.approx(2.1, abs=1e-15)
    for spec in SPECS.values():
        assert eval_H(spec, 0.0, 0.0) == 0.0


def test_grad_H_examples():
    assert np.allclose(grad_H(HamiltonianSpec(1, 1), 1.0, 2.0), (2, 4))
    for spec in SPECS.values():
        assert np.allclose(grad_H(spec, 0.0, 0.0), (0, 0))


@pytest.mark.parametrize("name", SPECS)
def test_grad_H_finite_differences(name):
    spec = SPECS[name]
    rng = np.random.default_rng(1)
    for z in rng.uniform(-3, 3, size=(100, 2)):
        an = np.array(grad_H(spec, *z))
        fd = central_difference(lambda w: float(eval_H(spec, *w)), z)
        assert np.linalg.norm(an - fd) <= 1e-6 * max(1.0, np.linalg.norm(an))


def test_conjugate_point_examples():
    c = conjugate_point(HamiltonianSpec(1, 1), 2.0, 4.0)
    assert c.value == pytest.approx(5.0, rel=1e-12)
    assert (c.argmax_u, c.argmax_v) == pytest.approx((1.0, 2.0), rel=1e-12)
    c = conjugate_point(HamiltonianSpec(3, 3), 1.0, 0.0)
    assert c.value == pytest.approx(0.75 * 4 ** (-1 / 3), rel=1e-12)
    assert c.value == pytest.approx(0.4724703, abs=1e-7)
    assert c.argmax_u == pytest.approx(0.25 ** (1 / 3), rel=1e-12)
    for spec in SPECS.values():
        c = conjugate_point(spec, 0.0, 0.0)
        assert (c.value, c.argmax_u, c.argmax_v) == (0.0, 0.0, 0.0)


def test_conjugate_grid_example():
    # grid sup of t f + s g - t^2 - s^2 at (2, 4), independent of the closed form
    spec = HamiltonianSpec(1, 1)
    assert brute_force_auto(spec, 2.0, 4.0, grid_step=1e-6) == pytest.approx(5.0, abs=1e-9)


def test_grad_conjugate_examples():
    assert np.allclose(grad_conjugate(HamiltonianSpec(1, 1), 2.0, 4.0), (1, 2))
    for spec in SPECS.values():
        assert np.allclose(grad_conjugate(spec, 0.0, 0.0), (0, 0))


@pytest.mark.parametrize("name", SPECS)
def test_round_trip(name):
    spec = SPECS[name]
    f, g = np.random.default_rng(2).uniform(-5, 5, size=(2, 100))
    u, v = grad_conjugate(spec, f, g)
    hu, hv = grad_H(spec, u, v)
    assert np.max(np.abs(hu - f)) <= 1e-8 * 6
    assert np.max(np.abs(hv - g)) <= 1e-8 * 6


@pytest.mark.parametrize("name", SPECS)
def test_grad_conjugate_finite_differences(name):
    spec = SPECS[name]
    for z in np.random.default_rng(3).uniform(-3, 3, size=(50, 2)):
        an = np.array(grad_conjugate(spec, *z), dtype=float)
        fd = central_difference(lambda w: float(conjugate_value(spec, *w)), z)
        assert np.linalg.norm(an - fd) <= 1e-5 * np.linalg.norm(an)


@pytest.mark.parametrize("name", SPECS)
def test_hess_conjugate_is_jacobian_of_gradient(name):
    spec = SPECS[name]
    for z in np.random.default_rng(4).uniform(0.3, 3, size=(20, 2)) * [1, -1]:
        dff, dfg, dgg = hess_conjugate(spec, *z)
        h = 1e-6
        up = np.array(grad_conjugate(spec, z[0] + h, z[1]), dtype=float)
        dn = np.array(grad_conjugate(spec, z[0] - h, z[1]), dtype=float)
        col = (up - dn) / (2 * h)
        assert np.allclose(col, [dff, dfg], rtol=1e-5, atol=1e-7)
        assert dgg > 0


@pytest.mark.parametrize("name", SPECS)
@settings(max_examples=60, deadline=None)
@given(f=coord, g=coord)
def test_conjugate_is_even(name, f, g):
    spec = SPECS[name]
    assert conjugate_value(spec, -f, -g) == conjugate_value(spec, f, g)


@pytest.mark.parametrize("name", SPECS)
@settings(max_examples=60, deadline=None)
@given(f=coord, g=coord, t=st.floats(-3, 3), s=st.floats(-3, 3))
def test_fenchel_young(name, f, g, t, s):
    spec = SPECS[name]
    c = conjugate_point(spec, f, g)
    # equality at the maximizer, inequality everywhere else
    assert abs(f * c.argmax_u + g * c.argmax_v - eval_H(spec, c.argmax_u, c.argmax_v) - c.value) <= 1e-9
    assert c.value + eval_H(spec, t, s) >= f * t + g * s - 1e-9


@pytest.mark.parametrize("name", SPECS)
def test_matches_brute_force(name):
    spec = SPECS[name]
    pts = np.random.default_rng(5).uniform(-5, 5, size=(30, 2))
    val = conjugate_arrays(spec, pts[:, 0], pts[:, 1])[0]
    ref = [brute_force_auto(spec, f, g) for f, g in pts]
    assert np.max(np.abs(val - ref)) <= 1e-5


@pytest.mark.parametrize("name", SPECS)
def test_involution(name):
    spec = SPECS[name]
    ax = np.linspace(-3, 3, 31)
    U, V = np.meshgrid(ax, ax)
    assert np.max(np.abs(biconjugate(spec, U, V) - eval_H(spec, U, V))) <= 1e-6


def test_warm_start_gives_same_conjugate():
    spec = SPECS["p=2,q=4,eps"]
    f, g = np.random.default_rng(6).uniform(-5, 5, size=(2, 200))
    cold = conjugate_arrays(spec, f, g)
    warm = conjugate_arrays(spec, f, g, start=(np.ones(200), -np.ones(200)))
    assert np.allclose(cold[0], warm[0], rtol=1e-12, atol=1e-12)
    assert np.allclose(cold[1], warm[1], rtol=1e-9, atol=1e-9)


def test_growth_sandwich_on_fields():
    spec = SPECS["p=2,q=4,eps"]
    A1, A2 = calibrate_growth(spec)
    assert 0 < A1 <= A2
    rng = np.random.default_rng(7)
    for _ in range(20):
        f, g = rng.standard_normal((2, 64)) * rng.uniform(0.01, 10)
        total = np.sum(conjugate_value(spec, f, g))
        P = np.sum(np.abs(f) ** spec.a + np.abs(g) ** spec.b)
        # sampled constants, so allow the calibration's own sampling slack
        assert 0.99 * A1 * P <= total <= 1.01 * A2 * P


def test_validate_accepts_family():
    for spec in SPECS.values():
        rep = validate(spec)
        assert rep.C1 > 0 and np.isfinite(rep.C2)


def test_validate_names_convexity():
    with pytest.raises(InvalidHamiltonian) as exc:
        validate(HamiltonianSpec(3, 3, 10.0, 2, 2))
    assert exc.value.check == "convexity"


def test_validate_coupling_constraint():
    with pytest.raises(InvalidHamiltonian) as exc:
        validate(HamiltonianSpec(3, 3, 0.05, 2, 3))
    assert exc.value.check == "coupling"
    # no alpha, beta > 1 satisfies the constraint when p = q = 1/2
    with pytest.raises(InvalidHamiltonian) as exc:
        validate(HamiltonianSpec(0.5, 0.5, 0.05))
    assert exc.value.check == "coupling"


def test_negative_exponent_rejected():
    with pytest.raises(InvalidHamiltonian):
        HamiltonianSpec(-1, 2)


def test_check_H3_superlinear():
    c3, c4 = check_H3(HamiltonianSpec(3, 3))
    assert c3 >= 0.75
    assert c4 <= 1e-9


def test_check_H3_fails_sublinear():
    with pytest.raises(H3Violation) as exc:
        check_H3(HamiltonianSpec(0.5, 0.5))
    assert len(exc.value.point) == 2


def test_coupled_conjugate_near_singular_axis():
    # maximizer has u ~ 1e-13, where the coupling term makes H_uu unbounded
    spec = SPECS["p=2,q=4,eps"]
    c = conjugate_point(spec, 3.517112355986471e-08, 1.0)
    hu, hv = grad_H(spec, c.argmax_u, c.argmax_v)
    assert abs(hu - 3.517112355986471e-08) <= 1e-9 and abs(hv - 1.0) <= 1e-9
    assert c.value == pytest.approx(brute_force_auto(spec, 3.517112355986471e-08, 1.0), abs=1e-5)
