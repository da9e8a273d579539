import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make
from tspec.core import (BrokenFunction, FirstOrder, IntegralKernel, Multiplication, TransmissionProblem,
                        TrigPolynomial, Zero, condition_values, green_interface_coefficient,
                        project_to_domain, symmetry_defect, validate_problem)
from tspec.errors import DegenerateBoundary, GridTooCoarse, SingularCorrection, ZeroStiffness

RAW = dict(p1=-1, p2=1, alpha0=1, alpha1=0, beta0=1, beta1=0, gamma0=0, delta0=1, gamma1=-1,
           delta1=0)


def test_validate_problem_accepts_coupled_opposite_sign():
    pr = validate_problem({**RAW, "perturbation": Zero()})
    assert pr.p1 == -1 and pr.opposite_signs
    assert isinstance(pr.perturbation, Zero)


def test_validate_problem_rejects_zero_stiffness():
    with pytest.raises(ZeroStiffness):
        validate_problem({**RAW, "p1": 0})


def test_validate_problem_rejects_degenerate_boundary():
    with pytest.raises(DegenerateBoundary):
        validate_problem({**RAW, "alpha0": 0, "alpha1": 0})
    with pytest.raises(DegenerateBoundary):
        validate_problem({**RAW, "beta0": 0, "beta1": 0})


def test_validate_problem_missing_coefficient():
    raw = dict(RAW)
    del raw["gamma1"]
    with pytest.raises(ValueError):
        validate_problem(raw)


def test_non_finite_coefficient_rejected():
    with pytest.raises(ValueError):
        make(1, np.inf)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_unbounded_perturbation_rejected():
    with pytest.raises(ValueError):
        make(1, 1, perturbation=Multiplication(lambda x: 1.0 / x))
    with pytest.raises(ValueError):
        make(1, 1, perturbation=IntegralKernel(lambda x, y: 1.0 / (x - y)))


@pytest.mark.parametrize("p1,p2,d0,g1,expected", [(-1, 1, 1, -1, 0.0), (1, 1, 1, 2, -1.0),
                                                  (2, 4, 2, 1, 0.0)])
def test_symmetry_defect(p1, p2, d0, g1, expected):
    assert symmetry_defect(make(p1, p2, d0=d0, g1=g1)) == expected


def test_green_interface_coefficient():
    assert green_interface_coefficient(make(-1, 1, d0=1, g1=-1)) == -2.0
    assert green_interface_coefficient(make(1, 1, d0=1, g1=-1)) == 0.0
    assert green_interface_coefficient(make(1, 4, d0=2, g1=0.5)) == 4.0


def test_condition_values_of_zero():
    u = BrokenFunction(np.zeros(9), np.zeros(9))
    assert condition_values(make(1, 1), u).max_abs() == 0.0


def test_condition_values_sine_on_left():
    pr = make(1, 1)
    u = BrokenFunction.from_callables(lambda x: np.sin(np.pi * (x + 1)), lambda x: 0 * x, 64,
                                      lambda x: np.pi * np.cos(np.pi * (x + 1)), lambda x: 0 * x)
    cv = condition_values(pr, u)
    assert abs(cv.L1) < 1e-15
    assert cv.L3 == pytest.approx(-np.pi, abs=1e-14)


def test_condition_values_hand_evaluation():
    pr = make(1, 1, a0=1, a1=-1, b0=1, b1=1, g0=1, d0=0, g1=0, d1=1)
    u = BrokenFunction.from_callables(lambda x: x + 1, lambda x: x + 1, 16,
                                      lambda x: 1 + 0 * x, lambda x: 1 + 0 * x)
    cv = condition_values(pr, u)
    assert cv.as_array() == pytest.approx([-1, 3, 0, 0], abs=1e-14)


def test_condition_values_from_finite_differences_are_exact_for_quadratics():
    pr = make(1, 1, a0=1, a1=-1, b0=1, b1=1, g0=1, d1=1)
    u = BrokenFunction.from_callables(lambda x: (x + 1) ** 2, lambda x: x**2, 8)
    # u(-1)=0, u'(-1)=0, u(1)=1, u'(1)=2, u(0-)=1, u'(0-)=2, u(0+)=0, u'(0+)=0
    assert condition_values(pr, u).as_array() == pytest.approx([0, 3, 1, 0], abs=1e-12)


def test_broken_function_needs_three_samples():
    with pytest.raises(GridTooCoarse):
        BrokenFunction(np.zeros(2), np.zeros(5))


def test_broken_function_arithmetic_and_norm():
    u = BrokenFunction(np.ones(11), np.ones(11))
    assert u.l2_norm() == pytest.approx(np.sqrt(2))
    v = 2 * u - u
    assert v.l2_norm() == pytest.approx(np.sqrt(2))
    assert u.inner(1j * u) == pytest.approx(-2j)


def test_trace_consistency_is_second_order():
    def gap(n):
        u = BrokenFunction.from_callables(np.sin, np.cos, n, np.cos, lambda x: -np.sin(x))
        return u.trace_consistency()
    assert 3.0 < gap(64) / gap(128) < 5.0


def test_trig_polynomial_derivative():
    t = TrigPolynomial([0.5, 1.0, -2.0], [0.0, 0.3, 0.7])
    x = np.linspace(-1, 1, 7)
    h = 1e-6
    fd = (t(x + h) - t(x - h)) / (2 * h)
    assert np.allclose(t.deriv()(x), fd, atol=1e-7)
    assert np.allclose(t.deriv(2)(x), t.deriv().deriv()(x))


def test_project_to_domain_sine_seed():
    seed = TrigPolynomial([], [0, 0, 1])
    for pr in (make(1, 1), make(1, 1, a0=0, a1=1, b0=0, b1=1)):
        u = project_to_domain(pr, seed, seed)
        assert condition_values(pr, u).max_abs() <= 1e-10
        assert u.l2_norm() > 0


def test_project_to_domain_keeps_members():
    # sin(pi (x+1)/2) and cos(pi x/2) already satisfy Dirichlet ends and u'(0-) = u'(0+) = 0
    left = (lambda x: np.sin(np.pi * (x + 1) / 2), lambda x: np.pi / 2 * np.cos(np.pi * (x + 1) / 2))
    right = (lambda x: np.cos(np.pi * x / 2), lambda x: -np.pi / 2 * np.sin(np.pi * x / 2))
    _, c = project_to_domain(make(1, 1), left, right, return_coefficients=True)
    assert np.max(np.abs(c)) <= 1e-10


def test_project_to_domain_constant_seed_unchanged():
    pr = make(1, 1, a0=0, a1=1, b0=0, b1=1)  # Neumann ends, no coupling: constants are members
    one = np.polynomial.Polynomial([1.0])
    u = project_to_domain(pr, one, one)
    assert np.allclose(u.left, 1) and np.allclose(u.right, 1)


coef = st.floats(-3, 3, allow_nan=False).filter(lambda v: abs(v) > 1e-3)


@st.composite
def problems(draw):
    p1, p2 = draw(coef), draw(coef)
    vals = [draw(st.floats(-2, 2, allow_nan=False)) for _ in range(8)]
    a0, a1, b0, b1 = vals[:4]
    if abs(a0) + abs(a1) < 1e-3:
        a0 = 1.0
    if abs(b0) + abs(b1) < 1e-3:
        b0 = 1.0
    return make(p1, p2, a0, a1, b0, b1, *vals[4:])


@settings(max_examples=100, deadline=None)
@given(pr=problems(), seed=st.integers(0, 2**32 - 1))
def test_project_to_domain_always_in_domain(pr, seed):
    rng = np.random.default_rng(seed)
    left = TrigPolynomial(rng.uniform(-1, 1, 5), rng.uniform(-1, 1, 5))
    right = TrigPolynomial(rng.uniform(-1, 1, 5), rng.uniform(-1, 1, 5))
    try:
        u = project_to_domain(pr, left, right, n=64)
    except SingularCorrection:
        return
    scale = 1 + max(abs(v) for v in np.concatenate([u.left, u.right]))
    assert condition_values(pr, u).max_abs() <= 1e-10 * scale


@settings(max_examples=50, deadline=None)
@given(pr=problems(), a=st.complex_numbers(max_magnitude=10), b=st.complex_numbers(max_magnitude=10),
       seed=st.integers(0, 2**32 - 1))
def test_condition_values_linear(pr, a, b, seed):
    rng = np.random.default_rng(seed)
    u = BrokenFunction(rng.standard_normal(9), rng.standard_normal(9))
    v = BrokenFunction(rng.standard_normal(9), rng.standard_normal(9))
    lhs = condition_values(pr, a * u + b * v).as_array()
    rhs = a * condition_values(pr, u).as_array() + b * condition_values(pr, v).as_array()
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * (1 + np.abs(rhs).max()))


def test_perturbation_coefficients():
    x = np.linspace(-1, 1, 5)
    q, c = Multiplication(lambda x: 3.0).local_coefficients(x)
    assert np.all(q == 3.0) and np.all(c == 0)
    q, c = FirstOrder(lambda x: x).local_coefficients(x)
    assert np.all(q == 0) and np.allclose(c, x)
    assert not IntegralKernel(lambda x, y: x * y).is_local


def test_problem_is_immutable():
    pr = make(1, 1)
    with pytest.raises(AttributeError):
        pr.p1 = 2.0
    assert isinstance(pr.with_perturbation(Multiplication(np.cos)).perturbation, Multiplication)
    assert isinstance(TransmissionProblem(**pr.as_dict()).perturbation, Zero)
