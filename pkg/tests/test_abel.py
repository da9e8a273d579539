import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tspec.abel import (DEFAULT_ALPHA, DEFAULT_THETA, AbelExpansion, abel_convergence_study,
                        abel_partial_sum, abel_weight, min_abel_order, mode_functions,
                        projectors_for_modes, spectral_projector)
from tspec.core import BrokenFunction
from tspec.discrete import assemble_operator, build_grid
from tspec.errors import CircleHitsSpectrum, QuadratureNotConverged
from tspec.shooting import count_eigenvalues_in_rectangle


def _ip(grid, a, b):
    return np.sum(grid.weights() * grid.from_function(a) * np.conj(grid.from_function(b)))


@pytest.fixture(scope="module")
def sa_operator():
    from conftest import make
    pr = make(1, 1, d0=1, g1=-1)
    return pr, assemble_operator(pr, build_grid(200))


def test_diagonal_projector():
    rec = spectral_projector(np.diag([1.0, 2.0]), 1.0, 0.4)
    assert np.allclose(rec.projector, np.diag([1.0, 0.0]), atol=1e-10)
    assert rec.rank == 1 and rec.nodes >= 32


def test_jordan_block_projector():
    J = np.array([[3.0, 1.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 5.0]])
    rec = spectral_projector(J, 3.0, 1.0)
    assert rec.rank == 2
    assert np.allclose(rec.projector, np.diag([1.0, 1.0, 0.0]), atol=1e-10)


def test_projector_errors():
    with pytest.raises(CircleHitsSpectrum):
        spectral_projector(np.diag([1.0, 2.0]), 1.0, 1.0)
    with pytest.raises(CircleHitsSpectrum):
        spectral_projector(np.diag([1.0, 2.0]), 5.0, 1.0)
    with pytest.raises(CircleHitsSpectrum):
        spectral_projector(np.diag([1.0, 1.5]), 1.2, 0.5)
    with pytest.raises(QuadratureNotConverged):
        spectral_projector(np.diag([0.0, 1.0021]), 0.0, 1.0)
    with pytest.raises(ValueError):
        spectral_projector(np.diag([1.0, 2.0]), 1.0, 0.4, quadrature_nodes=16)


def test_simple_eigenvalue_matches_orthogonal_projection():
    # the discrete operator is only symmetric up to O(h^2); n=1000 brings the gap below 1e-6
    from conftest import make
    pr = make(1, 1, d0=1, g1=-1)
    g = build_grid(1000)
    op = assemble_operator(pr, g)
    lam, u = mode_functions(op, 2)[1]
    rec = spectral_projector(op, lam, 1.0)
    assert rec.rank == 1 and rec.idempotence <= 1e-6
    f = BrokenFunction.from_callables(np.exp, lambda x: np.cos(3 * x), 1000)
    orth = u * (_ip(g, f, u) / _ip(g, u, u))
    assert (rec.apply(f) - orth).l2_norm() <= 1e-6


def test_decoupled_double_eigenvalue_rank_two(decoupled):
    op = assemble_operator(decoupled, build_grid(200))
    rec = spectral_projector(op, -np.pi**2 / 4, 1.0)
    assert rec.rank == 2


def test_ranks_match_argument_principle(decoupled):
    op = assemble_operator(decoupled, build_grid(400))
    recs = projectors_for_modes(op, 4)
    assert sum(r.rank for r in recs) == 4
    assert all(-30 < r.eigenvalue.real < -1 for r in recs)
    assert count_eigenvalues_in_rectangle(decoupled, (-30 - 2j, -1 + 2j)) == 4


def test_projectors_annihilate_each_other(sa_operator):
    _, op = sa_operator
    recs = projectors_for_modes(op, 4)
    for i, a in enumerate(recs):
        for b in recs[i + 1:]:
            na, nb = np.linalg.norm(a.projector, 2), np.linalg.norm(b.projector, 2)
            assert np.linalg.norm(a.projector @ b.projector, 2) <= 1e-6 * na * nb


@pytest.mark.parametrize("lam,expected", [(4, np.exp(-0.8)), (-4, np.exp(-0.8)), (4j, 1.0),
                                          (0, 1.0)])
def test_weight_examples(lam, expected):
    assert abel_weight(lam, 1.5, 0.1, np.pi / 4) == pytest.approx(expected)


def test_weight_inside_sector_complex():
    lam = 4 * np.exp(0.3j)
    assert abel_weight(lam, 1.5, 0.1, np.pi / 4) == pytest.approx(np.exp(-8 * np.exp(0.45j) * 0.1))


def test_weight_preconditions():
    with pytest.raises(ValueError):
        abel_weight(1, 1.5, -1, np.pi / 4)
    with pytest.raises(ValueError):
        abel_weight(1, 1.5, 1, np.pi / 2)
    with pytest.raises(ValueError):
        abel_weight(1, 2.5, 1, np.pi / 4)


@settings(max_examples=50)
@given(r=st.floats(0.01, 1e3), phi=st.floats(-0.7, 0.7), t=st.floats(0, 1e-3))
def test_weight_continuous_at_zero(r, phi, t):
    lam = r * np.exp(1j * phi)
    assert abel_weight(lam, 1.5, 0.0, np.pi / 4) == 1
    w = abel_weight(lam, 1.5, t, np.pi / 4)
    assert abs(w - 1) <= r**1.5 * t * 1.0001 + 1e-15
    assert abs(w) <= 1


@pytest.mark.parametrize("s,p,expected", [(0.5, 0.5, 1.0), (0, 0, 1.0), (0.3, 0.9, 0.4),
                                          (0, 0.5, 0.5)])
def test_min_abel_order(s, p, expected):
    assert min_abel_order(s, p) == pytest.approx(expected)


def test_expansion_validates_order():
    with pytest.raises(ValueError):
        AbelExpansion(1.0, DEFAULT_THETA, (), (), 0)
    assert AbelExpansion(DEFAULT_ALPHA, DEFAULT_THETA, (), (), 0).alpha == 1.5


def test_partial_sum_on_eigenfunction(sa_operator):
    _, op = sa_operator
    lam, u = mode_functions(op, 2)[1]
    recs = projectors_for_modes(op, 3)
    out = abel_partial_sum(u, recs, 1.5, 0.1)
    assert (out - u * abel_weight(lam, 1.5, 0.1, DEFAULT_THETA)).l2_norm() <= 1e-6
    assert abel_partial_sum(u, recs, 1.5, 1e6).l2_norm() <= 1e-10


def _t0_gap(n):
    from conftest import make
    pr = make(1, 1, d0=1, g1=-1)
    g = build_grid(n)
    op = assemble_operator(pr, g)
    recs = projectors_for_modes(op, 3)
    f = BrokenFunction.from_callables(lambda x: 1 + x**2, lambda x: np.sin(2 * x), n)
    trunc = f * 0.0
    for _, u in mode_functions(op, 3):
        trunc = trunc + u * (_ip(g, f, u) / _ip(g, u, u))
    return (abel_partial_sum(f, recs, 1.5, 0.0) - trunc).l2_norm()


def test_partial_sum_at_t0_approaches_orthogonal_expansion():
    # the discrete operator is symmetric only up to O(h^2), so the gap closes at that rate
    coarse, fine = _t0_gap(250), _t0_gap(500)
    assert fine <= 2e-5
    assert 3 <= coarse / fine <= 5


def test_partial_sum_rejects_overlap(sa_operator):
    _, op = sa_operator
    recs = projectors_for_modes(op, 2)
    with pytest.raises(ValueError):
        abel_partial_sum(BrokenFunction(np.ones(201), np.ones(201)), [recs[0], recs[0]], 1.5, 0.1)


def test_study_span_of_first_modes(sa_operator):
    pr, op = sa_operator
    g = op.grid
    modes = mode_functions(op, 5)
    f = modes[0][1] * 0.0
    for _, u in modes:
        f = f + u
    f = f * (1 / f.l2_norm())
    study = abel_convergence_study(pr, g, f, 5, t_list=(1e-1, 1e-4), operator=op)
    # independent oracle: the modes are orthonormal, so the error is a weighted l2 sum
    c = 1 / np.sqrt(5)
    for t, err in zip(study.t_values, study.errors):
        expected = np.sqrt(sum(abs(c * (1 - abel_weight(lam, 1.5, t, DEFAULT_THETA))) ** 2
                               for lam, _ in modes))
        assert err == pytest.approx(expected, rel=1e-3)
    assert study.monotone
    assert max(study.idempotence) <= 1e-6


def test_study_deflated_function(sa_operator):
    pr, op = sa_operator
    g = op.grid
    recs = projectors_for_modes(op, 5)
    f = BrokenFunction.from_callables(np.cos, lambda x: 1 + x, 200)
    for rec in recs:
        f = f - rec.apply(f)
    norm = f.l2_norm()
    study = abel_convergence_study(pr, g, f, 5, operator=op, projectors=recs)
    assert np.allclose(study.errors, norm, rtol=1e-6)
