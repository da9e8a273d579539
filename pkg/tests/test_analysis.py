import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make
from tspec.analysis import (assign_branches, counting_function, counting_law_check,
                            fit_asymptotics, match_spectra, predicted_leading_coefficient,
                            prediction_note, sector_enclosure, shooting_spectrum)
from tspec.core import Multiplication
from tspec.discrete import build_grid, discrete_spectrum
from tspec.errors import AmbiguousMember, SpectrumTooShort, SpectrumWarning, TooFewEigenvalues
from tspec.shooting import EigenvalueRecord


def test_branches_by_half_plane():
    pr = make(-1, 1)
    b = assign_branches([9.9, -9.8, 39.7, -39.5], pr)
    assert [e.value.real for e in b.branch1] == [9.9, 39.7]
    assert [e.value.real for e in b.branch2] == [-9.8, -39.5]
    assert [e.index for e in b.branch2] == [1, 2]


def test_same_sign_single_sequence():
    b = assign_branches([-40.0, -4.4, -20.0], make(1, 4))
    assert b.case == "SameSign"
    assert [e.value.real for e in b.single] == [-4.4, -20.0, -40.0]


def test_empty_half_plane_warns_without_ambiguity():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        b = assign_branches([-1.0, -4.0], make(-1, 1))
    assert b.branch1 == []
    kinds = {type(w.message) for w in caught}
    assert SpectrumWarning in kinds and AmbiguousMember not in kinds


def test_imaginary_axis_member_flagged():
    with pytest.warns(AmbiguousMember):
        b = assign_branches([3j, 5.0, -5.0], make(-1, 1))
    assert len(b.flagged) == 1 and len(b.branch1) == 2


def test_multiplicity_expanded_in_branches():
    b = assign_branches([EigenvalueRecord(-2.0, 2), EigenvalueRecord(-8.0)], make(1, 1))
    assert [e.index for e in b.single] == [1, 2, 3]


@pytest.mark.parametrize("p,expected", [((-1, 1), (np.pi**2, -np.pi**2)),
                                        ((1, 4), -4 * np.pi**2 / 9),
                                        ((1, 1), -np.pi**2 / 4)])
def test_predictions(p, expected):
    assert predicted_leading_coefficient(make(*p)) == pytest.approx(expected)
    assert prediction_note(make(*p)) == ""


def test_negative_pair_prediction_flagged():
    assert predicted_leading_coefficient(make(-1, -4)) == pytest.approx(4 * np.pi**2 / 9)
    assert "interpretation" in prediction_note(make(-1, -4))


@settings(max_examples=30)
@given(a=st.floats(0.01, 100))
def test_equal_stiffness_prediction(a):
    assert predicted_leading_coefficient(make(a, a)) == pytest.approx(-a * np.pi**2 / 4)


def test_fit_synthetic_with_linear_remainder():
    n = np.arange(1, 31)
    fit = fit_asymptotics(list(zip(n, -np.pi**2 * n**2 + 3 * n)), -np.pi**2, tail_start=10)
    assert fit.relative_error <= 0.01
    assert fit.residual_bound_constant == pytest.approx(3.0)
    assert fit.fit_window == (10, 30)


@pytest.mark.parametrize("method", ["sqrt", "quadratic"])
def test_fit_exact_sequence(method):
    n = np.arange(1, 31)
    fit = fit_asymptotics(-np.pi**2 * n**2, -np.pi**2, tail_start=10, method=method)
    assert fit.relative_error <= 1e-12
    assert fit.residual_bound_constant <= 1e-9


def test_fit_too_few():
    with pytest.raises(TooFewEigenvalues):
        fit_asymptotics(np.arange(1, 15) ** 2, 1.0, tail_start=10)


def test_fit_ignores_members_below_tail():
    n = np.arange(1, 31)
    lam = -np.pi**2 * n**2 + 3 * n
    base = fit_asymptotics(list(zip(n, lam)), -np.pi**2)
    noisy = list(zip(n, lam))
    noisy[:9] = [(k, v + 100.0) for k, v in noisy[:9]]
    assert fit_asymptotics(noisy, -np.pi**2).leading_coefficient == base.leading_coefficient


def test_fit_on_computed_branch(opposite):
    recs = shooting_spectrum(opposite, 30)
    b = assign_branches(recs, opposite)
    fit = fit_asymptotics(b.branch1, np.pi**2, tail_start=10)
    assert fit.relative_error <= 0.02


def test_counting_examples():
    values = [-np.pi**2 * n**2 for n in range(1, 20)]
    assert counting_function(values, 50, "NegativeReal") == 2
    assert counting_function(values, 5) == 0
    assert counting_function([EigenvalueRecord(-3.0, 2)], 5) == 2
    assert counting_function([1 + 1j, 1 - 1j, -2], 3, np.pi / 2) == 2


@settings(max_examples=50)
@given(r1=st.floats(0.1, 1e4), r2=st.floats(0.1, 1e4))
def test_counting_monotone(r1, r2):
    values = [np.pi**2 * n**2 for n in range(1, 40)] + [-5 + 7j]
    lo, hi = sorted((r1, r2))
    assert counting_function(values, lo) <= counting_function(values, hi)


def test_counting_law_exact_sequence():
    pr = make(-1, 1)
    values = [np.pi**2 * n**2 for n in range(1, 40)] + [-np.pi**2 * n**2 for n in range(1, 40)]
    table = counting_law_check(assign_branches(values, pr), pr, [1.0, 1e4])
    row = [r for r in table.rows if r.branch == "Branch1" and r.r == 1e4][0]
    assert row.count == 31
    assert row.ratio == pytest.approx(31 / (100 / np.pi))
    assert row.ratio == pytest.approx(0.974, abs=1e-3)
    first = table.rows[0]
    assert first.count == 0 and not first.applicable
    doubled = [EigenvalueRecord(v, 2) for v in values]
    t2 = counting_law_check(assign_branches(doubled, pr), pr, [1e4])
    assert t2.rows[0].count == 62 and t2.rows[0].predicted == row.predicted


def test_counting_law_too_short():
    pr = make(-1, 1)
    with pytest.raises(SpectrumTooShort):
        counting_law_check(assign_branches([10.0, -10.0], pr), pr, [1e4])


def test_sector_enclosure_examples():
    assert sector_enclosure([-1.0, -40.0, 3.0]) == 0
    assert sector_enclosure([4 + 2j]) == pytest.approx(2 / 20**0.25)
    assert sector_enclosure([4 + 2j]) == pytest.approx(0.946, abs=1e-3)
    assert sector_enclosure([0.1 + 0.5j]) == 0


def test_sector_enclosure_stable_under_truncation(opposite):
    pr = opposite.with_perturbation(Multiplication(lambda x: np.cos(np.pi * x)))
    recs = discrete_spectrum(pr, build_grid(400), 60)
    b15 = sector_enclosure(recs[:30])
    b30 = sector_enclosure(recs)
    assert np.isfinite(b30)
    assert abs(b30 - b15) <= 0.2 * max(b15, 1e-12) or b30 == b15


def test_symmetric_sector_enclosure(self_adjoint):
    assert sector_enclosure(discrete_spectrum(self_adjoint, build_grid(200), 30)) <= 1e-6


@settings(max_examples=30)
@given(vals=st.lists(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False)
                     .filter(lambda z: abs(z.real) > 1e-6 * abs(z) and abs(z) > 1e-6),
                     min_size=1, max_size=12))
def test_branch_merge_reproduces_input(vals):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        b = assign_branches(vals, make(-1, 1))
    key = lambda z: (z.real, z.imag)
    merged = sorted((e.value for e in b.branch1 + b.branch2), key=key)
    assert merged == sorted(map(complex, vals), key=key)


def test_match_spectra():
    ag = match_spectra([1.0, 2.0, 10.0], [10.0005, 2.0, 1.0], 3)
    assert ag.within(1e-4)
    assert not ag.within(1e-5)
