import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from fracspread import stable_law as sl

# density and cdf at single points, from direct Fourier inversion in mpmath (30 digits)
FOURIER_REFERENCE = [
    (1.5, 0.3, 0.7, 0.20985488481792348, 0.72579623418832399),
    (0.7, -0.4, -1.2, 0.152642293644202, 0.32447934495112326),
    (1.2, 0.6, 2.0, 0.038250869541342231, 0.9125367092415338),
    (0.5, 0.4, 1.0, 0.13033395550697919, 0.62339347051876642),
    (1.8, -0.7, -0.5, 0.24452675563600796, 0.3285053777337902),
    (0.9, 0.2, 0.3, 0.34867978932318055, 0.50231618114852686),
]

# a small pool keeps table builds cached across hypothesis examples
ALPHAS = [0.6, 1.0, 1.3, 1.8]
BETAS = [-0.5, 0.0, 0.7]
pooled = st.builds(sl.make_params, st.sampled_from(ALPHAS), st.sampled_from(BETAS))
open_alpha = st.floats(0.01, 1.99)
open_beta = st.floats(-0.99, 0.99)


@pytest.mark.parametrize(
    "alpha, beta, rho",
    [(1.0, 0.4, 0.4), (0.5, 0.0, 0.0), (1.5, 0.5, -0.25)],
)
def test_make_params_rho(alpha, beta, rho):
    assert sl.make_params(alpha, beta).rho == pytest.approx(rho, abs=1e-15)


@pytest.mark.parametrize("alpha, beta", [(2.0, 0.0), (0.0, 0.0), (-1.0, 0.2), (1.5, 1.0), (0.5, -1.0), (math.nan, 0.0)])
def test_make_params_rejects_closed_ends(alpha, beta):
    with pytest.raises(sl.DomainError):
        sl.make_params(alpha, beta)


@given(open_alpha, open_beta)
def test_rho_inside_admissible_band(alpha, beta):
    p = sl.make_params(alpha, beta)
    assert abs(p.rho) < min(alpha, 2 - alpha)


def test_symbol_examples():
    assert sl.char_exponent(sl.make_params(1.0, 0.0), 1.0) == pytest.approx(1.0)
    v = sl.char_exponent(sl.make_params(1.0, 0.5), 1.0)
    assert v == pytest.approx(complex(math.sqrt(0.5), -math.sqrt(0.5)), abs=1e-15)
    assert sl.char_function(sl.make_params(0.5, 0.0), 1.0) == pytest.approx(math.exp(-1.0))
    assert sl.char_function(sl.make_params(1.0, 0.5), 1.0) == pytest.approx(cmath.exp(-cmath.exp(-0.25j * math.pi)))
    assert sl.char_function(sl.make_params(1.3, -0.2), 0.0) == 1.0


@given(open_alpha, open_beta, st.floats(1e-3, 1e3))
def test_symbol_conjugate_symmetry_and_modulus(alpha, beta, lam):
    p = sl.make_params(alpha, beta)
    assert sl.char_exponent(p, -lam) == pytest.approx(sl.char_exponent(p, lam).conjugate(), rel=1e-14)
    assert abs(sl.char_exponent(p, 1.0)) == pytest.approx(1.0, rel=1e-15)


def test_alpha_one_examples():
    p = sl.make_params(1.0, 0.0)
    assert sl.density(p, 0.0) == pytest.approx(1 / math.pi, abs=1e-12)
    assert sl.cdf(p, 1.0) == pytest.approx(0.75, abs=1e-12)
    assert sl.quantile(p, 0.75) == pytest.approx(1.0, abs=1e-10)
    assert sl.quantile(p, 0.5) == pytest.approx(0.0, abs=1e-10)
    s = math.sin(math.pi / 4)
    q = sl.make_params(1.0, 0.5)
    assert sl.density(q, s) == pytest.approx(1 / (math.pi * math.cos(math.pi / 4)), abs=1e-12)
    assert sl.cdf(q, s) == pytest.approx(0.5, abs=1e-12)


def test_cdf_at_zero_examples():
    assert sl.cdf(sl.make_params(0.5, 0.4), 0.0) == pytest.approx(0.3, abs=1e-11)
    assert sl.cdf(sl.make_params(1.5, 0.0), 0.0) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.5, 0.8, 1.2, 1.7])
def test_symmetric_peak(alpha):
    exact = gamma(1 + 1 / alpha) / math.pi
    assert sl.density(sl.make_params(alpha, 0.0), 0.0) == pytest.approx(exact, rel=1e-7)


@pytest.mark.parametrize("alpha, beta, x, f, F", FOURIER_REFERENCE)
def test_against_fourier_reference(alpha, beta, x, f, F):
    p = sl.make_params(alpha, beta)
    assert sl.density(p, x) == pytest.approx(f, abs=1e-10)
    assert sl.cdf(p, x) == pytest.approx(F, abs=1e-10)


def test_quantile_round_trip_example():
    p = sl.make_params(1.5, 0.3)
    assert sl.quantile(p, sl.cdf(p, 2.0)) == pytest.approx(2.0, abs=1e-9)


@settings(deadline=None, max_examples=40)
@given(pooled, st.floats(1e-9, 1 - 1e-9))
def test_quantile_inverts_cdf(p, zeta):
    x = sl.quantile(p, zeta)
    assert sl.cdf(p, x) == pytest.approx(zeta, rel=1e-9, abs=1e-13)


@settings(deadline=None, max_examples=40)
@given(pooled, st.floats(-1e4, 1e4))
def test_reflection(p, x):
    q = p.reflected()
    assert sl.cdf(p, x) == pytest.approx(1 - sl.cdf(q, -x), abs=1e-12)
    assert sl.sf(p, x) == pytest.approx(sl.cdf(q, -x), rel=1e-9, abs=1e-15)
    assert sl.density(p, x) == pytest.approx(sl.density(q, -x), rel=1e-9, abs=1e-15)


@settings(deadline=None, max_examples=20)
@given(pooled)
def test_table_invariants(p):
    t = sl.default_table(p)
    assert np.all(np.diff(t.cdf_values) > 0)
    assert np.all(t.pdf_values > 0)
    assert np.all((t.cdf_values > 0) & (t.cdf_values < 1))
    assert abs(t.integral_pdf() - 1) < 1e-6
    assert t.tail_mismatch <= t.spec.tol
    assert float(t.cdf(0.0)) == pytest.approx(p.cdf_at_zero(), abs=1e-10)


@settings(deadline=None, max_examples=20)
@given(pooled)
def test_tables_continuous_at_tail_cuts(p):
    t = sl.default_table(p)
    for cut in (t.tail_cut_left, t.tail_cut_right):
        below, above = np.nextafter(cut, -np.inf), np.nextafter(cut, np.inf)
        assert t.cdf(below) == pytest.approx(t.cdf(above), rel=1e-9)
        assert t.density(below) == pytest.approx(t.density(above), rel=1e-9)


@pytest.mark.parametrize("alpha, beta", [(0.7, 0.2), (1.3, -0.5), (1.6, 0.5)])
def test_leading_tail_coefficients(alpha, beta):
    p = sl.make_params(alpha, beta)
    right, left = sl.default_table(p).leading_tail_coeffs
    c = gamma(alpha) / math.pi
    assert right == pytest.approx(c * math.sin(0.5 * math.pi * (alpha + p.rho)), rel=1e-4)
    assert left == pytest.approx(c * math.sin(0.5 * math.pi * (alpha - p.rho)), rel=1e-4)


def test_tail_slope_example():
    p = sl.make_params(0.7, 0.2)
    t = sl.default_table(p)
    x = np.geomspace(t.tail_cut_right, 4 * t.tail_cut_right, 20)
    slope = np.polyfit(np.log(x), np.log(t.sf(x)), 1)[0]
    assert -0.7 * 1.02 <= slope <= -0.7 * 0.98


@settings(deadline=None, max_examples=10)
@given(pooled, st.lists(st.floats(-50, 50), min_size=1, max_size=8))
def test_table_matches_inversion(p, xs):
    x = np.array(xs)
    pdf, _, _, cdf, sf = sl.inversion(p, x)
    t = sl.default_table(p)
    assert np.allclose(t.density(x), pdf, rtol=0, atol=1e-10)
    assert np.allclose(t.cdf(x), cdf, rtol=0, atol=1e-10)
    assert np.allclose(cdf + sf, 1.0, atol=1e-13)


def test_save_load_round_trip(tmp_path):
    t = sl.default_table(sl.make_params(1.3, -0.5))
    path = sl.save_table(t, tmp_path / "table.npz")
    back = sl.load_table(path)
    x = np.linspace(-100, 100, 501)
    assert np.array_equal(back.cdf(x), t.cdf(x))
    assert back.metadata() == t.metadata()


def test_load_rejects_other_schema(tmp_path):
    path = tmp_path / "bogus.npz"
    np.savez(path, meta=np.array('{"schema": "something/9"}'), grid=np.zeros(3), values=np.zeros((5, 3)))
    with pytest.raises(sl.DomainError):
        sl.load_table(path)


@pytest.mark.parametrize("kwargs", [{"tol": 1e-13}, {"du": 0.5}, {"min_extent": 10.0}])
def test_table_spec_validation(kwargs):
    with pytest.raises(sl.DomainError):
        sl.TableSpec(**kwargs)


@pytest.mark.parametrize("zeta", [0.0, 1.0, -0.1, 1.5])
def test_quantile_domain(zeta):
    with pytest.raises(sl.DomainError):
        sl.quantile(sl.make_params(1.2, 0.0), zeta)


def test_vector_shapes():
    p = sl.make_params(1.2, 0.1)
    x = np.zeros((2, 3))
    assert sl.density(p, x).shape == (2, 3)
    assert isinstance(sl.cdf(p, 0.0), float)
