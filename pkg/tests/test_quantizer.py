import dataclasses

import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ptmrf.errors import BranchLost, ConfigError, IndexOutOfRange
from ptmrf.moments import (
    PolynomialPotential,
    column_values,
    cubic_potential,
    derive_recursion,
)
from ptmrf.quantizer import (
    MrfConfig,
    _scaled_delta,
    coefficient_sequence,
    converge,
    dedupe_roots,
    delta_and_derivative,
    grid_scan,
    mrf_entry,
    newton_refine,
    quantization_matrix,
    stable_prefix,
)

finite = st.floats(min_value=-4, max_value=4, allow_nan=False)
energies = st.builds(complex, finite, finite)


def cubic(alpha):
    return derive_recursion(cubic_potential(alpha))


# -- assembly ---------------------------------------------------------------


def test_entry_with_no_gaussian_terms():
    t = column_values(cubic(0.4), 0.7 + 0.1j, 12, 30)
    for l2 in range(3):
        assert mrf_entry(t, 0.5, 2, 2, l2) == t.m[0][l2]


def test_two_term_entry():
    t = column_values(cubic(-1.1), 2.0 - 0.3j, 12, 30)
    beta = 0.37
    for l2 in range(3):
        expect = t.m[2][l2] - t.ctx.mpf(beta) * t.m[0][l2]
        assert abs(mrf_entry(t, beta, 4, 2, l2) - expect) < 1e-28


def test_entry_matches_series_product():
    """Coefficient of t^(J-l1) in exp(-beta t^2) * sum_p M_{p,l2} t^p / p!."""
    J, beta = 12, 0.5
    t = column_values(cubic(0), 1.0, J, 40)
    with mpmath.workdps(40):
        gauss = mpmath.taylor(lambda x: mpmath.exp(-beta * x**2), 0, J)
        for l1 in range(3):
            for l2 in range(3):
                n = J - l1
                series = [t.raw(p, l2) / mpmath.factorial(p) for p in range(J + 1)]
                brute = sum(gauss[k] * series[n - k] for k in range(n + 1))
                assert abs(mrf_entry(t, beta, J, l1, l2) - brute) < mpmath.mpf(10) ** -35


def test_entry_index_checks():
    t = column_values(cubic(0), 1.0, 10, 20)
    with pytest.raises(IndexOutOfRange):
        mrf_entry(t, 0.5, 12, 0, 0)
    with pytest.raises(IndexError):
        mrf_entry(t, 0.5, 10, 0, 3)


def test_low_order_coefficients():
    spec = cubic(1.5)
    mu0, mu1, mu2 = 0.3 + 1j, -2.0, 0.5j
    beta = 0.45
    a = coefficient_sequence(spec, 0.8, beta, (mu0, mu1, mu2), 10, 30)
    assert abs(a[0] - mu0) < 1e-28
    assert abs(a[2] - (mu2 / 2 - beta * mu0)) < 1e-15  # reference value is double precision


@given(energies, st.floats(min_value=-5, max_value=5),
       st.lists(st.builds(complex, finite, finite), min_size=3, max_size=3),
       st.floats(min_value=0.1, max_value=2.0))
def test_coefficients_equal_entry_combination(E, alpha, missing, beta):
    J, digits = 30, 40
    spec = cubic(alpha)
    a = coefficient_sequence(spec, E, beta, missing, J, digits)
    t = column_values(spec, E, J, digits)
    ctx = t.ctx
    for j in range(J + 1):
        combo = sum((mrf_entry(t, beta, j, 0, l) * ctx.mpc(missing[l]) for l in range(3)), ctx.mpc(0))
        scale = max(1, abs(combo), *(abs(ctx.mpc(m)) for m in missing))
        assert abs(a[j] - combo) <= ctx.mpf(10) ** (5 - digits) * scale


def test_quantization_matrix_shape():
    t = column_values(cubic(0), 1.0, 20, 30)
    rows, drows = quantization_matrix(t, 0.25, 20)
    assert len(rows) == 3 and all(len(r) == 3 for r in rows)
    assert rows[1][2] == mrf_entry(t, 0.25, 20, 1, 2)


# -- the determinant --------------------------------------------------------


@pytest.mark.parametrize("J", [10, 21, 40])
def test_harmonic_expansion_terminates_at_exact_levels(J):
    """For V = x^2 and the Gaussian exp(-k^2/2) the transform of the ground
    (E = 1) and first excited (E = 3) states divided by the reference is a
    polynomial of degree 0 or 1, so every higher coefficient vanishes."""
    spec = derive_recursion(PolynomialPotential((0, 0, 1)))
    b = MrfConfig(beta=1.0, beta_scale=0.5).reference_exponent
    assert b == 0.5
    ground = coefficient_sequence(spec, 1, b, (1, 0), J, 50)
    assert all(abs(a) < 1e-45 for a in ground[1:])
    excited = coefficient_sequence(spec, 3, b, (0, 1), J, 50)
    assert all(abs(a) < 1e-45 for a in excited[2:])
    off = coefficient_sequence(spec, 2, b, (1, 0), J, 50)
    assert abs(off[J - J % 2]) > 1e-30


@given(energies, st.floats(min_value=-6, max_value=6))
def test_determinant_conjugation_closure(E, alpha):
    cfg = MrfConfig(J=30, precision_digits=40)
    d1, _ = delta_and_derivative(cubic(alpha), E, cfg)
    d2, _ = delta_and_derivative(cubic(alpha), E.conjugate(), cfg)
    assert abs(abs(d1) - abs(d2)) <= 1e-30 * max(1, abs(d1))


def test_derivative_is_consistent_with_difference_quotient():
    spec = cubic(-1.0)
    cfg = MrfConfig(J=40, precision_digits=60)
    ctx = mpmath.MPContext()
    ctx.dps = 60
    E = ctx.mpc(1.3, 0.2)
    _, dd, scales = _scaled_delta(spec, E, cfg)
    h = ctx.mpf(10) ** -20
    up, _, _ = _scaled_delta(spec, E + h, cfg, scales)
    dn, _, _ = _scaled_delta(spec, E - h, cfg, scales)
    assert abs((up - dn) / (2 * h) - dd) <= 1e-18 * abs(dd)


def test_config_validation():
    with pytest.raises(ConfigError):
        MrfConfig(beta=0)
    with pytest.raises(ConfigError):
        MrfConfig(precision_digits=10)
    with pytest.raises(ConfigError):
        MrfConfig(J=5).validate_for(cubic(0))
    MrfConfig(J=6).validate_for(cubic(0))
    assert MrfConfig(beta=0.5).reference_exponent == 0.25
    assert MrfConfig(J=100).digits == 80
    assert MrfConfig(precision_digits=60).tol == pytest.approx(1e-50)


def test_root_near_nominal_order_value():
    est = newton_refine(cubic(0), 1.15, MrfConfig(J=50, precision_digits=60))
    assert abs(complex(est.E) - 1.1562673) < 1e-6


# -- Newton -----------------------------------------------------------------


def test_newton_ground_state():
    est = newton_refine(cubic(0), 1.1, MrfConfig(J=100))
    assert est.converged
    assert abs(est.E.real - mpmath.mpf("1.1562670719881")) < 1e-13
    assert abs(est.E.imag) < 1e-10


def test_newton_complex_pair():
    est = newton_refine(cubic(-5), 1.3 + 2.9j, MrfConfig(J=100))
    assert abs(est.E.real - 1.3433431987) <= 1e-10
    assert abs(est.E.imag - 2.9073906160) <= 1e-10


def test_newton_from_a_root_takes_one_step():
    cfg = MrfConfig(J=60, precision_digits=60)
    root = newton_refine(cubic(1.0), 1.8, cfg)
    again = newton_refine(cubic(1.0), root.E, cfg)
    assert again.iterations <= 1
    assert abs(again.E - root.E) <= cfg.tol * 10


def test_residual_certificate():
    cfg = MrfConfig(J=80, precision_digits=70)
    est = newton_refine(cubic(2.0), 2.7, cfg)
    d, dd = delta_and_derivative(cubic(2.0), est.E, cfg)
    assert abs(d) <= cfg.tol * max(1, abs(dd))


@pytest.mark.parametrize("alpha", [-5.0, -3.0, -6.0])
def test_conjugate_roots_close(alpha):
    cfg = MrfConfig(J=60, precision_digits=60)
    seeds = {-5.0: 1.3 + 2.9j, -3.0: 1.2 + 0.76j, -6.0: 4.1 + 1.3j}
    est = newton_refine(cubic(alpha), seeds[alpha], cfg)
    assert abs(est.E.imag) > 1e-8
    conj = est.E.conjugate()
    mirror = newton_refine(cubic(alpha), conj, cfg)
    assert abs(mirror.E - conj) <= cfg.tol * 10


def test_beta_robustness_of_ground_state():
    values = []
    for beta in (0.4, 0.5, 0.6):
        est = newton_refine(cubic(0), 1.15, MrfConfig(beta=beta, J=60))
        values.append(complex(est.E))
    assert max(abs(v - values[1]) for v in values) < 1e-6


# -- seeding ----------------------------------------------------------------


def test_grid_scan_finds_low_spectrum():
    cfg = MrfConfig(J=40, precision_digits=50)
    seeds = grid_scan(cubic(0), (0, 12, -1, 1), 60, 20, cfg)
    for target in (1.156, 4.109, 7.562, 11.314):
        assert min(abs(s - target) for s in seeds) < 0.25


def test_grid_scan_empty_region():
    cfg = MrfConfig(J=40, precision_digits=50)
    assert grid_scan(cubic(0), (-5, -1, -1, 1), 20, 10, cfg) == []


def test_grid_scan_seeds_come_in_conjugate_pairs():
    cfg = MrfConfig(J=40, precision_digits=50)
    seeds = grid_scan(cubic(-3), (0, 6, -2, 2), 25, 17, cfg)
    complex_seeds = [s for s in seeds if abs(s.imag) > 1e-12]
    assert complex_seeds
    for s in complex_seeds:
        assert any(abs(s.conjugate() - t) < 1e-12 for t in complex_seeds)


def test_grid_scan_is_deterministic_and_validated():
    cfg = MrfConfig(J=20, precision_digits=30)
    a = grid_scan(cubic(1), (0, 8, -1, 1), 17, 5, cfg)
    assert a == grid_scan(cubic(1), (0, 8, -1, 1), 17, 5, cfg)
    with pytest.raises(ConfigError):
        grid_scan(cubic(1), (0, 8, -1, 1), 1, 5, cfg)


def test_dedupe():
    assert dedupe_roots([1.0, 1.0 + 1e-9, 2.0, 2.0000001]) == [1.0, 2.0]


# -- convergence in J -------------------------------------------------------


def test_converge_ground_state():
    res = converge(cubic(0), 1.1)
    assert res.is_real
    assert abs(res.stable_value.real - mpmath.mpf("1.1562670719881")) < 1e-13
    assert res.re_text.startswith("1.1562670719")
    assert res.im_text == "0"
    assert [j for j, _ in res.estimates][-1] == 100
    assert res.stable_digits[0] >= 10


def test_converge_complex_pair():
    res = converge(cubic(-6), 4.1 + 1.3j)
    assert not res.is_real
    assert abs(res.stable_value.real - 4.1342519473) <= 1e-10
    assert abs(res.stable_value.imag - 1.2851227083) <= 1e-10


def test_stable_prefix_of_constant_sequence():
    x = mpmath.mpf("3.14159265358979")
    count, text = stable_prefix([x, x, x], 14)
    assert text == "3.14159265358979"
    assert count == 15


def test_stable_prefix_stops_at_first_disagreement():
    count, text = stable_prefix([mpmath.mpf("1.23456"), mpmath.mpf("1.23457")], 5)
    assert text == "1.2345"
    assert count == 5


def test_converge_reports_lost_branch():
    cfg = dataclasses.replace(MrfConfig(), trust_radius=1e-30)
    with pytest.raises(BranchLost):
        converge(cubic(0), 1.1, (20, 30, 40), cfg)


def test_converge_rejects_bad_schedule():
    with pytest.raises(ConfigError):
        converge(cubic(0), 1.1, (40, 30))
