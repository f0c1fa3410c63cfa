import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from pamgap.spectral import (
    DomainError,
    SineBasis,
    SpectralField,
    diag_coeff,
    diag_tensor,
    heat_evolve,
    heat_kernel_eval,
    modes,
    sobolev_norm,
    triple_coeff,
    triple_tensor,
    unit_field,
)

import oracles

coeff_lists = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=16)


def test_project_sin_is_first_mode():
    f = SineBasis(4).project(np.sin)
    np.testing.assert_allclose(f.coeffs, [np.sqrt(np.pi / 2), 0, 0, 0], atol=1e-14)


def test_project_zero():
    assert not SineBasis(5).project(lambda x: 0 * x).coeffs.any()


def test_project_parabola_matches_adaptive_quadrature():
    f = lambda x: x * (np.pi - x)
    got = SineBasis(3).project(f).coeffs
    expect = [integrate.quad(lambda x: f(x) * oracles.m(k, x), 0, np.pi, epsabs=1e-12)[0]
              for k in (1, 2, 3)]
    assert abs(got[1]) < 1e-14
    np.testing.assert_allclose(got, expect, atol=1e-12)


def test_project_rejects_nonfinite():
    with pytest.raises(ValueError, match="non-finite"):
        SineBasis(3).project(lambda x: np.where(x > 1, np.inf, 0.0))


def test_field_vanishes_on_boundary():
    f = SpectralField(np.random.default_rng(0).normal(size=7))
    assert f(0.0) == 0.0
    assert abs(f(np.pi)) < 1e-14


@given(coeff_lists)
def test_parseval(c):
    f = SpectralField(c)
    x, w = SineBasis(len(c), 200).nodes_weights
    assert np.isclose(np.sum(w * f(x) ** 2), f.l2_norm() ** 2, rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("K", [1, 8, 32, 64])
def test_gram_is_identity(K):
    assert np.abs(SineBasis(K).gram() - np.eye(K)).max() < 1e-10


def test_heat_kernel_centre_value():
    k = np.arange(1, 20, 2)
    expect = 2 / np.pi * np.sum(np.exp(-(k**2)) * np.sin(k * np.pi / 2) ** 2)
    assert heat_kernel_eval(1.0, np.pi / 2, np.pi / 2) == pytest.approx(expect, abs=1e-15)
    assert heat_kernel_eval(1.0, np.pi / 2, np.pi / 2) == pytest.approx(0.2342779, abs=1e-7)


def test_heat_kernel_boundary_and_domain():
    assert heat_kernel_eval(0.3, 0.0, 1.1) == 0.0
    with pytest.raises(DomainError):
        heat_kernel_eval(0.0, 1.0, 1.0)


@settings(max_examples=50)
@given(st.floats(1e-3, 3), st.floats(0, np.pi), st.floats(0, np.pi))
def test_heat_kernel_symmetric_and_matches_modes(t, x, y):
    p = heat_kernel_eval(t, x, y)
    assert p == pytest.approx(heat_kernel_eval(t, y, x), abs=1e-13)
    K = 400
    via_modes = np.sum(np.exp(-np.arange(1, K + 1) ** 2 * t) * modes(x, K) * modes(y, K))
    assert p == pytest.approx(via_modes, abs=1e-12)


def test_heat_kernel_positive_inside():
    for t in (0.01, 0.1, 1.0):
        assert heat_kernel_eval(t, 1.0, 2.0) > 0


def test_heat_evolve_eigenfunction_and_identity():
    f = unit_field(1, 5)
    np.testing.assert_allclose(heat_evolve(f, 1.0).coeffs, [np.exp(-1), 0, 0, 0, 0])
    g = SpectralField([1.0, -2.0, 3.0])
    assert np.array_equal(heat_evolve(g, 0.0).coeffs, g.coeffs)
    with pytest.raises(DomainError):
        heat_evolve(g, -1e-3)


@given(coeff_lists, st.floats(0, 2), st.floats(0, 2))
def test_semigroup(c, s, t):
    f = SpectralField(c)
    a = heat_evolve(heat_evolve(f, s), t).coeffs
    b = heat_evolve(f, s + t).coeffs
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-300)


def test_sobolev_norm_examples():
    assert sobolev_norm(unit_field(1, 3), 0) == 1
    assert sobolev_norm(unit_field(2, 3), 1) == 2
    assert sobolev_norm(SpectralField([1, 1]), 0.5) == pytest.approx(np.sqrt(3))


def test_triple_coeff_examples():
    # 1+1+1 is odd, so the integral of m_1^3 = (2/pi)^{3/2} 4/3 is nonzero
    assert triple_coeff(1, 1, 1) == pytest.approx(oracles.quad_triple(1, 1, 1), abs=1e-12)
    assert triple_coeff(1, 1, 1) == pytest.approx((2 / np.pi) ** 1.5 * 4 / 3, abs=1e-14)
    assert triple_coeff(1, 1, 2) == pytest.approx(oracles.quad_triple(1, 1, 2), abs=1e-12)
    assert triple_coeff(2, 3, 4) == triple_coeff(4, 2, 3)


def test_diag_coeff_examples():
    assert diag_coeff(1, 1, 1) == pytest.approx(oracles.quad_diag(1, 1, 1), abs=1e-12)
    assert diag_coeff(1, 2, 3) == diag_coeff(3, 2, 1)
    # j != l, j + l even: the delta_jl part is absent
    assert diag_coeff(1, 1, 3) == pytest.approx(oracles.quad_diag(1, 1, 3), abs=1e-12)
    assert diag_coeff(2, 5, 4) == pytest.approx(oracles.quad_diag(2, 5, 4), abs=1e-12)


def test_closed_forms_match_quadrature_up_to_12():
    idx = range(1, 13)
    B = triple_tensor(12)
    D = diag_tensor(12, 12)
    worst_b = worst_d = 0.0
    for j in idx:
        for k in idx:
            for l in idx:
                if l < j:
                    continue
                b = triple_coeff(j, k, l)
                assert b == B[j - 1, k - 1, l - 1]
                worst_b = max(worst_b, abs(b - oracles.quad_triple(j, k, l)))
                d = diag_coeff(j, k, l)
                assert d == D[j - 1, k - 1, l - 1]
                worst_d = max(worst_d, abs(d - oracles.quad_diag(j, k, l)))
    assert worst_b < 1e-10
    assert worst_d < 1e-10


def test_triple_tensor_fully_symmetric():
    B = triple_tensor(9)
    for perm in [(0, 2, 1), (1, 0, 2), (2, 1, 0), (1, 2, 0), (2, 0, 1)]:
        assert np.array_equal(B, B.transpose(perm)) or np.abs(B - B.transpose(perm)).max() < 1e-16
