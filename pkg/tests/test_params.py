import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from implosion.errors import SingularBandError, ValidationError
from implosion.params import (
    GammaN,
    derive_alpha,
    make_params,
    omega0_closed_form,
    parse_gamma,
    regularity_index,
    scaling_indices,
    sonic_data,
    validate,
)

even_n = st.integers(min_value=2, max_value=20).map(lambda k: 2 * k)
small_n = st.sampled_from([4, 6, 8, 10, 12])
gammas = st.floats(min_value=4 / 3 + 1e-6, max_value=2 - 1e-6)
band_gammas = st.floats(min_value=19 / 12, max_value=11 / 6, exclude_min=True, exclude_max=True)
EPS = 2.0**-52


def forward_condition(gamma, alpha):
    """Relative rounding amplification of n(gamma, alpha) = 3(2-g)a/(4-3g+a).

    The denominator cancels as gamma -> 4/3 (alpha -> 0) and as gamma -> 2
    (alpha -> 2), so no fixed tolerance holds on the whole open interval.
    """
    return (4 + 3 * gamma + alpha) / abs(4 - 3 * gamma + alpha) + 2 / (2 - gamma)


def test_alpha_examples():
    # alpha = n(3g-4)/(n-3(2-g)); forward map must return n
    assert derive_alpha(5 / 3, 4) == pytest.approx(4 / 3, rel=1e-15)
    # 6 * 1.4 / (6 - 3 * 0.2) = 8.4 / 5.4 = 14/9
    assert derive_alpha(1.8, 6) == pytest.approx(14 / 9, rel=1e-15)
    assert regularity_index(1.8, 14 / 9) == pytest.approx(6, rel=1e-14)
    # 1.75 does not invert the map at gamma = 1.8: it gives n = 3
    assert regularity_index(1.8, 1.75) == pytest.approx(3, rel=1e-14)
    assert derive_alpha(4 / 3 + 1e-9, 4) < 1e-8


@given(band_gammas, small_n)
def test_alpha_round_trip_band(gamma, n):
    alpha = derive_alpha(gamma, n)
    assert regularity_index(gamma, alpha) == pytest.approx(n, rel=1e-12)
    assert 3 * gamma - 4 < alpha < gamma


@given(gammas, even_n)
def test_alpha_round_trip_full_range(gamma, n):
    alpha = derive_alpha(gamma, n)
    tol = max(1e-12, 16 * EPS * forward_condition(gamma, alpha))
    assert regularity_index(gamma, alpha) == pytest.approx(n, rel=tol)
    assert 3 * gamma - 4 < alpha < gamma


@given(band_gammas, small_n)
def test_exponent_identities(gamma, n):
    idx = scaling_indices(gamma, derive_alpha(gamma, n))
    assert idx.a1 == pytest.approx(2 * idx.a2 - 2, abs=1e-14 * max(1, abs(idx.a1)))
    assert idx.b == pytest.approx(1 - idx.a2, abs=1e-14)
    assert idx.a1 + 3 == pytest.approx((4 - 3 * gamma + idx.alpha) / (2 - gamma), rel=1e-12)
    assert idx.a1 < 0 and idx.a3 < 0 and idx.b > 0
    assert gamma < (4 + idx.alpha) / 3


def test_scaling_examples():
    idx = scaling_indices(5 / 3, 4 / 3)
    assert idx.b == pytest.approx(1.0, rel=1e-14)
    assert idx.a1 == pytest.approx(-2.0, rel=1e-14)


def test_omega0_closed_forms_agree_on_grid():
    for n in (4, 6, 8, 10):
        for k in range(100):
            g = 4 / 3 + (2 - 4 / 3) * (k + 0.5) / 100
            alpha = derive_alpha(g, n)
            assert (4 - 3 * g + alpha) / 3 == pytest.approx(omega0_closed_form(g, n), rel=1e-14)


def test_alpha_tends_to_zero_at_lower_edge():
    vals = [derive_alpha(4 / 3 + 10.0**-k, 4) for k in range(2, 10)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-8


def test_sonic_data_examples():
    sd = sonic_data(5 / 3, 4)
    assert sd.rho0 == pytest.approx(1 / (6 * math.pi), rel=1e-15)
    assert sd.omega0 == pytest.approx(1 / 9, rel=1e-14)
    assert sd.m0 == pytest.approx(45 * sd.rho0 * sd.omega0, rel=1e-14)
    assert sd.m0 == pytest.approx(0.26526, rel=1e-4)
    assert sd.p0 == pytest.approx(sd.rho0 ** (5 / 3) * (sd.rho0 / 9) ** (4 / 3), rel=1e-14)


@pytest.mark.parametrize("gamma", ["19/12", "11/6", "14/9"])
def test_singular_endpoints_rejected(gamma):
    with pytest.raises(SingularBandError):
        make_params(gamma, 4)


def test_m0_positive_in_first_band():
    for k in range(1, 20):
        g = 19 / 12 + (11 / 6 - 19 / 12) * k / 20
        for n in (4, 6, 8):
            assert sonic_data(g, n).m0 > 0


@pytest.mark.parametrize(
    "gamma,n,constraint",
    [(1.2, 4, "gamma_range"), (2.0, 4, "gamma_range"), (1.7, 5, "n_even"), (1.7, 2, "n_min"),
     (1.7, 4.5, "n_integer"), (float("nan"), 4, "gamma_finite")],
)
def test_hard_constraints(gamma, n, constraint):
    with pytest.raises(ValidationError) as info:
        GammaN(gamma, n)
    assert info.value.constraint == constraint
    with pytest.raises(ValidationError):
        derive_alpha(gamma, n)


def test_band_flags():
    assert GammaN(5 / 3, 4).first_band and GammaN(5 / 3, 4).global_band
    assert GammaN(1.7, 6).first_band and not GammaN(1.7, 6).global_band
    assert GammaN(1.8, 6).global_band
    assert not GammaN(1.5, 4).first_band
    assert GammaN(5 / 3, 8).first_band and not GammaN(5 / 3, 8).global_band


def test_validate_examples():
    ok = validate(5 / 3, 4)
    assert ok.ok, ok.failed()
    low = validate(1.25, 4)
    assert not low["gamma_range"].passed
    assert not low["alpha_constraints"].passed
    big_n = validate(5 / 3, 8)
    assert not big_n["a_positivity"].passed
    assert big_n["first_band"].passed


def test_validate_never_raises():
    for args in [("abc", 4), (1.2, 3), (1.7, 5), (5 / 3, 2), ("11/6", 4), (1.5, 4)]:
        diag = validate(*args)
        assert not diag.ok
    assert validate(1.5, 4, order=3)["non_resonant"].passed is False


def test_validate_lists_resonances():
    diag = validate(5 / 3, 4, order=6)
    assert [m for m, _ in diag.degenerate_gammas] == [1, 2, 3, 4, 5, 6]
    for m, g in diag.degenerate_gammas:
        assert g == pytest.approx(4 / 3 + 1 / (2 * m))


def test_parse_gamma():
    assert parse_gamma("5/3") == float(Fraction(5, 3))
    assert parse_gamma("1.75") == 1.75
    assert parse_gamma(Fraction(11, 6)) == 11 / 6
    assert GammaN(parse_gamma("5/3"), 4).first_band
    with pytest.raises(ValidationError):
        parse_gamma("five thirds")
    with pytest.raises(ValidationError):
        parse_gamma("1/0")


@settings(max_examples=50)
@given(band_gammas, small_n)
def test_make_params_consistent(gamma, n):
    try:
        p = make_params(gamma, n)
    except SingularBandError:
        return
    assert p.p_exponent == pytest.approx(n / 3, rel=1e-12)
    assert p.omega0 == pytest.approx(p.three_omega0 / 3, rel=1e-12)
    assert p.q_prefactor == pytest.approx(n * p.omega0 * p.e2, rel=1e-12)
