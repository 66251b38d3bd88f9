import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import polynomial as npoly
from scipy import integrate as sint
from scipy.special import binom

from implosion.errors import OrderTooLowError, ResonanceError, SeriesDomainError
from implosion.params import make_params
from implosion.series import (
    CoeffTable,
    build,
    evaluate,
    faa_di_bruno_P,
    faa_di_bruno_W,
    mass_integral,
    matrix_AM,
    partitions,
    power_coeff,
    q_coeff,
    radius_estimate,
    round_product,
    source_terms,
    square_product,
)

coeff = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)


def seq(k):
    return st.lists(coeff, min_size=k, max_size=k)


def poly_product(*seqs):
    """Oracle: full polynomial product via numpy, truncated to the input length."""
    k = len(seqs[0])
    out = np.array([1.0])
    for s in seqs:
        out = npoly.polymul(out, s)
    # polymul trims trailing zeros, so pad back to the input length
    return np.r_[out, np.zeros(k)][:k]


def miller_power(base, e, M):
    """Oracle: coefficients of base(x)**e via the J.C.P. Miller recurrence."""
    out = [base[0] ** e]
    for m in range(1, M + 1):
        s = sum((e * k - (m - k)) * base[k] * out[m - k] for k in range(1, m + 1))
        out.append(s / (m * base[0]))
    return out


# --- products ---------------------------------------------------------------


def test_round_product_examples():
    assert round_product([1.0, 0, 0], [1.0, 0, 0]).tolist() == [1.0, 0.0, 0.0]
    assert round_product([1.0, 2.0], [3.0, 4.0])[1] == 10.0
    with pytest.raises(ValueError):
        round_product([1.0, 2.0], [1.0])


@settings(max_examples=60)
@given(st.integers(1, 7).flatmap(lambda k: st.tuples(seq(k), seq(k), seq(k))))
def test_round_product_matches_polymul(abc):
    a, b, c = abc
    np.testing.assert_allclose(round_product(a, b), poly_product(a, b), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(round_product(a, b, c), poly_product(a, b, c), rtol=1e-12, atol=1e-12)


@settings(max_examples=60)
@given(st.integers(1, 6).flatmap(lambda M: st.tuples(st.just(M), seq(M + 1), seq(M + 1), seq(M + 1))))
def test_square_product_matches_zeroed_product(args):
    # dropping every term with an index equal to M is the product with the
    # order-M coefficients set to zero
    M, a, b, c = args
    za, zb, zc = (np.r_[s[:M], 0.0] for s in (a, b, c))
    assert square_product(a, b, M=M) == pytest.approx(poly_product(za, zb)[M], abs=1e-12)
    assert square_product(a, b, c, M=M) == pytest.approx(poly_product(za, zb, zc)[M], abs=1e-12)
    # only orders below M are read
    assert square_product(a[:M], b[:M], c[:M], M=M) == square_product(a, b, c, M=M)


def test_square_product_examples():
    r, w = [0.3, 0.7, 0.0], [0.2, 0.5, 0.9]
    assert square_product(r, w, M=1) == 0.0
    assert square_product(w, w, M=2) == pytest.approx(w[1] ** 2)
    w4 = [0.2, 0.5, 0.9, 1.3]
    # brute-force enumeration of (i, j, k), i + j + k = 3, no index equal to 3
    brute = sum(w4[i] * w4[j] * w4[3 - i - j] for i in range(3) for j in range(3)
                if 0 <= 3 - i - j < 3)
    assert square_product(w4, w4, w4, M=3) == pytest.approx(brute, rel=1e-15)
    assert brute == pytest.approx(w4[1] ** 3 + 6 * w4[0] * w4[1] * w4[2], rel=1e-15)
    with pytest.raises(ValueError):
        square_product(w, w, M=0)
    with pytest.raises(ValueError):
        square_product([1.0], [1.0], M=3)


# --- Faa di Bruno -----------------------------------------------------------


def test_partition_counts():
    # p(M) for M = 0..12 (OEIS A000041)
    expected = [1, 1, 2, 3, 5, 7, 11, 15, 22, 30, 42, 56, 77]
    assert [len(partitions(m)) for m in range(13)] == expected
    for lam in partitions(9):
        assert sum(k * mult for k, mult in lam) == 9


def test_power_coeff_binomial_series():
    # (1 + x)**e has coefficients binom(e, M)
    for e in (0.5, -1.3, 5 / 3, 1 / 3):
        base = [1.0, 1.0] + [0.0] * 8
        for M in range(10):
            assert power_coeff(base, e, M) == pytest.approx(binom(e, M), rel=1e-12, abs=1e-15)


@settings(max_examples=60)
@given(seq(7), st.floats(min_value=-2.5, max_value=2.5))
def test_power_coeff_matches_miller(tail, e):
    base = [1.0 + abs(tail[0])] + tail[1:]
    ref = miller_power(base, e, 6)
    for M in range(7):
        assert power_coeff(base, e, M) == pytest.approx(ref[M], rel=1e-12, abs=1e-12)


def test_faa_di_bruno_low_orders():
    r = [0.05, -3e-4, 2e-6]
    g = 5 / 3
    assert faa_di_bruno_P(r, g, 0) == r[0] ** g
    assert faa_di_bruno_P(r, g, 1) == pytest.approx(g * r[0] ** (g - 1) * r[1], rel=1e-15)
    # truncated generalised binomial expansion of (r0 + r1 x + r2 x^2)**g at x^2
    p2 = r[0] ** g * (g * r[2] / r[0] + g * (g - 1) / 2 * (r[1] / r[0]) ** 2)
    assert faa_di_bruno_P(r, g, 2) == pytest.approx(p2, rel=1e-12)
    with pytest.raises(ValueError):
        faa_di_bruno_P(r, g, -1)


def test_faa_di_bruno_W_matches_miller():
    prm = make_params(1.7, 4)
    t = build(prm, 8)
    prod = round_product(t.rhobar, t.omegabar)
    ref = miller_power(prod, prm.n / 3 - 1, 8)
    for M in range(9):
        assert faa_di_bruno_W(t.rhobar, t.omegabar, 4, M) == pytest.approx(ref[M], rel=1e-12)
    # n = 6: exponent 1, W is the product itself
    t6 = build(make_params(1.8, 6), 6)
    prod6 = round_product(t6.rhobar, t6.omegabar)
    for M in range(7):
        assert t6.wbar[M] == pytest.approx(prod6[M], rel=1e-12, abs=1e-300)


def test_q_coefficients():
    prm = make_params(1.7, 4)
    t = build(prm, 4)
    r0, w0 = prm.rho0, prm.omega0
    assert t.qbar[0] == 0.0
    assert t.qbar[1] == pytest.approx(prm.n * prm.e2 * prm.p0 / r0, rel=1e-13)
    q2 = t.qbar[1] * (prm.gamma * t.rhobar[1] / r0
                      + (prm.n / 3 - 1) * (t.rhobar[1] / r0 + t.omegabar[1] / w0))
    assert t.qbar[2] == pytest.approx(q2, rel=1e-12)
    assert q_coeff(prm, t.pbar, t.wbar, 0) == 0.0


# --- the linear system ------------------------------------------------------


def det_closed_form(g, n, M):
    den = n - 3 * (2 - g)
    lead = (n - 2) ** 2 * (3 * g - 4) ** 2 * (2 - g) ** 4 / (2 * den**4)
    return -lead * (M * (3 * g - 4) + 1) * (2 * M * (3 * g - 4) - 3)


def test_det_spot_value():
    _, det = matrix_AM(make_params(5 / 3, 4), 2)
    assert det == pytest.approx(-2 / 2187, rel=1e-12)


@pytest.mark.parametrize("n", [4, 6])
def test_det_closed_form_on_grid(n):
    for k in range(1, 21):
        g = 19 / 12 + (11 / 6 - 19 / 12) * k / 21
        prm = make_params(g, n)
        for M in range(1, 51):
            _, det = matrix_AM(prm, M, check=False)
            assert det == pytest.approx(det_closed_form(g, n, M), rel=1e-12)


def test_second_resonance_is_band_endpoint():
    # the M = 2 resonance coincides with the lower edge of the first band,
    # which parameter validation already rejects
    from implosion.errors import SingularBandError

    with pytest.raises(SingularBandError):
        make_params(4 / 3 + 1 / 4, 4)
    with pytest.raises(ResonanceError):
        matrix_AM(make_params(4 / 3 + 1 / 4 + 5e-11, 4), 2)


@pytest.mark.parametrize("M", [3, 4, 5, 7])
def test_resonance_detection(M):
    g_res = 4 / 3 + 1 / (2 * M)
    for dg in (0.0, 9e-11, -9e-11):
        with pytest.raises(ResonanceError) as info:
            matrix_AM(make_params(g_res + dg, 4), M)
        assert info.value.order == M
        assert "4/3 + 1/(2M)" in str(info.value)
    _, det = matrix_AM(make_params(g_res + 1e-8, 4), M)
    assert det != 0.0


def test_build_aborts_at_resonance():
    with pytest.raises(ResonanceError) as info:
        build(make_params(1.5, 4), 5)
    assert info.value.order == 3
    build(make_params(1.5, 4), 2)


def test_first_order_sources_general_form():
    # the general sums give F1 = rho0 Q1, G1 = omega0 Q1, and solving A_1
    # with them reproduces the closed-form first-order coefficients
    for g, n in [(1.6, 4), (1.7, 4), (1.8, 6), (5 / 3, 4)]:
        prm = make_params(g, n)
        t = build(prm, 3)
        src = source_terms(prm, t.rhobar, t.omegabar, t.qbar, 1)
        assert src.f == pytest.approx(prm.rho0 * t.qbar[1], rel=1e-14)
        assert src.g == pytest.approx(prm.omega0 * t.qbar[1], rel=1e-14)
        A, _ = matrix_AM(prm, 1)
        sol = np.linalg.solve(A, [src.f, src.g])
        np.testing.assert_allclose(sol, [t.rhobar[1], t.omegabar[1]], rtol=1e-10)


def test_first_order_printed_form_where_it_applies():
    # at (5/3, 4) gamma - 1 - alpha/2 = 0 and the printed M = 1 sources agree
    prm = make_params(5 / 3, 4)
    assert prm.c1 == pytest.approx(0.0, abs=1e-15)
    t = build(prm, 2)
    src = source_terms(prm, t.rhobar, t.omegabar, t.qbar, 1)
    printed_f = prm.c1 * (2 - prm.gamma) * prm.rho0 + prm.rho0 * t.qbar[1]
    assert src.f == pytest.approx(printed_f, rel=1e-14)


def second_order_sources(prm, t):
    """Oracle: the simplified second-order sources written out by hand."""
    g, n, c1, e2 = prm.gamma, prm.n, prm.c1, prm.e2
    r0, w0 = prm.rho0, prm.omega0
    r1, w1 = t.rhobar[1], t.omegabar[1]
    Q1, Q2 = t.qbar[1], t.qbar[2]
    f = (-2 * (r0 * w1**2 + 2 * w0 * r1 * w1) - c1 * r1 * w1
         + 2 / 9 * e2 * (r1 / r0 + 2 * w1 / w0) * r1
         + (1 + (n - 2) * g / n) * r1 * Q1 + r0 * Q2 - 2 * (n - 2) * w0 * r1 * w1)
    gg = (-c1 * w1**2 + 2 / 9 * e2 * (w1 / w0 + 2 * r1 / r0) * w1
          + (1 - (n + 1) * g / n) * w1 * Q1 + w0 * Q2 + 2 * (n - 2) * w0 * w1**2)
    return f, gg


@pytest.mark.parametrize("g,n", [(5 / 3, 4), (1.7, 4), (1.8, 6), (1.6, 4), (1.62, 8)])
def test_second_order_sources(g, n):
    prm = make_params(g, n)
    t = build(prm, 3)
    src = source_terms(prm, t.rhobar, t.omegabar, t.qbar, 2)
    f, gg = second_order_sources(prm, t)
    assert src.f == pytest.approx(f, rel=1e-11)
    assert src.g == pytest.approx(gg, rel=1e-11)


def test_source_terms_needs_depth():
    prm = make_params(5 / 3, 4)
    t = build(prm, 2)
    with pytest.raises(ValueError):
        source_terms(prm, t.rhobar, t.omegabar, t.qbar, 4)


# --- build ------------------------------------------------------------------


def test_build_first_order_examples():
    prm = make_params(5 / 3, 4)
    t = build(prm, 2)
    p0 = prm.rho0 ** (5 / 3) * (prm.rho0 / 9) ** (4 / 3)
    assert t.rhobar[1] == pytest.approx(-45 * p0, rel=1e-13)
    assert t.rhobar[1] == pytest.approx(-3.587e-4, rel=1e-3)
    assert t.omegabar[1] == pytest.approx(12 * math.pi * p0, rel=1e-13)
    assert t.omegabar[1] == pytest.approx(3.005e-4, rel=1e-3)
    assert (t.rhobar[0], t.omegabar[0], t.qbar[0]) == (prm.rho0, prm.omega0, 0.0)


def S_ref(n, g):
    return (6 * g * (g - 1) * (11 - 6 * g) - 3 * n * (12 * g * g - 34 * g + 21)
            + n * n * (36 * g**3 - 30 * g * g - 132 * g + 133))


def test_second_order_sign_matches_S():
    prm = make_params(5 / 3, 4)
    t = build(prm, 2)
    assert np.sign(t.rhobar[2]) == np.sign(S_ref(4, 5 / 3))


def test_build_order_one_and_validation():
    t = build(make_params(5 / 3, 4), 1)
    assert t.order == 1
    with pytest.raises(ValueError):
        build(make_params(5 / 3, 4), 0)


def test_table_immutable():
    t = build(make_params(5 / 3, 4), 3)
    with pytest.raises(ValueError):
        t.rhobar[1] = 0.0


def test_first_band_sign_pattern():
    for k in range(1, 20):
        g = 19 / 12 + (11 / 6 - 19 / 12) * k / 20
        for n in (4, 6):
            prm = make_params(g, n)
            t = build(prm, 2)
            assert t.rhobar[1] < 0 < t.omegabar[1]
            lead = (n + 1) * prm.rho0 * t.omegabar[2] + (n - 2) * prm.omega0 * t.rhobar[2]
            assert lead > 0


# --- radius and evaluation --------------------------------------------------


def synthetic_table(rhobar, omegabar, n=4):
    prm = make_params(5 / 3, n)
    z = np.zeros(len(rhobar))
    return CoeffTable(prm, np.asarray(rhobar, float), np.asarray(omegabar, float), z, z, z)


def test_radius_geometric_series():
    C = 0.25
    c = C ** np.arange(21)
    assert radius_estimate(synthetic_table(c, c)) == pytest.approx((1 / C) ** 0.5, rel=1e-12)
    assert radius_estimate(synthetic_table(c, c, n=6)) == pytest.approx((1 / C) ** 0.25, rel=1e-12)


def test_radius_polynomially_damped_bound():
    # |c_M| <= C**(M - beta) / M**3 gives x_rad >= 1/C
    C, beta = 3.0, 1.5
    M = np.arange(41)
    c = np.r_[1.0, C ** (M[1:] - beta) / M[1:] ** 3]
    nu = radius_estimate(synthetic_table(c, c))
    assert nu**2 >= 1 / C


def test_radius_zero_tail_and_order_guard():
    c = np.r_[1.0, 0.5, np.zeros(19)]
    assert radius_estimate(synthetic_table(c, c)) == math.inf
    with pytest.raises(OrderTooLowError):
        radius_estimate(build(make_params(5 / 3, 4), 9))


def test_radius_regression_baseline():
    nu = radius_estimate(build(make_params(5 / 3, 4), 40))
    # baseline recorded from the order-40 table; guards against drift
    assert nu == pytest.approx(9.23083, rel=1e-5)
    assert 0 < nu < math.inf


def test_evaluate_origin():
    t = build(make_params(5 / 3, 4), 30)
    v = evaluate(t, 0.0)
    assert (v.rho, v.omega, v.drho_dy, v.domega_dy) == (t.rhobar[0], t.omegabar[0], 0.0, 0.0)


def test_evaluate_truncation_tail_bound():
    t = build(make_params(5 / 3, 4), 30)
    y = 0.1 * radius_estimate(t)
    d = abs(evaluate(t, y, order=2).rho - evaluate(t, y, order=1).rho)
    # the two partial sums differ by exactly the order-2 term
    assert d <= abs(t.rhobar[2]) * y ** (2 * 2) * (1 + 1e-9)


def test_evaluate_derivatives_match_finite_differences():
    t = build(make_params(1.8, 6), 30)
    for y in (0.5, 1.5, 3.0):
        v = evaluate(t, y)
        h = 1e-5 * y
        vp, vm = evaluate(t, y + h), evaluate(t, y - h)
        assert v.drho_dy == pytest.approx((vp.rho - vm.rho) / (2 * h), rel=1e-7)
        assert v.domega_dy == pytest.approx((vp.omega - vm.omega) / (2 * h), rel=1e-7)


def test_evaluate_vectorised_and_domain():
    t = build(make_params(5 / 3, 4), 30)
    nu = radius_estimate(t)
    ys = np.array([0.1, 1.0, 0.5 * nu])
    vec = evaluate(t, ys)
    for i, y in enumerate(ys):
        assert vec.rho[i] == evaluate(t, y).rho
    with pytest.raises(SeriesDomainError):
        evaluate(t, 1.01 * nu)
    with pytest.raises(SeriesDomainError):
        evaluate(t, -1.0)


def test_truncation_consistency():
    prm = make_params(5 / 3, 4)
    t30, t25 = build(prm, 30), build(prm, 25)
    y = 0.5 * radius_estimate(t30)
    a, b = evaluate(t30, y), evaluate(t25, y, check_radius=False)
    assert abs(a.rho - b.rho) <= 10 * b.tail_rho
    assert abs(a.omega - b.omega) <= 10 * b.tail_omega


def test_mass_integral_matches_quadrature():
    t = build(make_params(1.7, 4), 30)
    y = 4.0
    ref, _ = sint.quad(lambda z: 4 * math.pi * z * z * evaluate(t, z).rho, 0.0, y,
                       epsabs=0, epsrel=1e-13)
    assert mass_integral(t, y) == pytest.approx(ref, rel=1e-12)
    assert mass_integral(t, 0.0) == 0.0
