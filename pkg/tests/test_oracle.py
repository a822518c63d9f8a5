import mpmath
import pytest

from ptmrf.errors import ConfigError
from ptmrf.oracle import (
    BANDWIDTH,
    build_hamiltonian_matrix,
    match_roots,
    oracle_eigenvalues,
)

GROUND_TO_THIRD = (1.15626707198811329, 4.10922875280965, 7.5622738549788, 11.31442182019)


def test_matrix_is_banded_with_expected_selection_rules():
    H = build_hamiltonian_matrix(0.7, 20, omega=1.3)
    for i, row in enumerate(H.entries):
        for j, v in enumerate(row):
            d = abs(i - j)
            if d > BANDWIDTH or d == 0 and v.imag != 0:
                assert v == 0
            if d in (1, 3):
                assert v.real == 0 and v.imag != 0  # odd couplings come from i X^3 and i alpha X
            if d == 2:
                assert v.imag == 0 and v.real < 0


def test_kinetic_block_is_real_symmetric():
    H = build_hamiltonian_matrix(0.0, 16, omega=0.9)
    for i in range(16):
        for j in range(16):
            if (i - j) % 2 == 0:
                assert H.entries[i][j] == H.entries[j][i]
                assert H.entries[i][j].imag == 0


def test_full_matrix_is_complex_symmetric():
    H = build_hamiltonian_matrix(-1.5, 12)
    for i in range(12):
        for j in range(12):
            assert H.entries[i][j] == H.entries[j][i]


def test_invalid_arguments():
    with pytest.raises(ConfigError):
        build_hamiltonian_matrix(0, 4)
    with pytest.raises(ConfigError):
        build_hamiltonian_matrix(0, 20, omega=0)
    with pytest.raises(ConfigError):
        oracle_eigenvalues(build_hamiltonian_matrix(0, 10), 11)


def test_low_spectrum_at_zero_alpha():
    H = build_hamiltonian_matrix(0.0, 60, omega=1.25, precision_digits=40)
    vals = oracle_eigenvalues(H, 4)
    for v, ref in zip(vals, GROUND_TO_THIRD):
        assert abs(v.imag) < 1e-8
        assert abs(v.real - ref) < 1e-8


def test_broken_pair_at_negative_alpha():
    H = build_hamiltonian_matrix(-3.0, 80, omega=1.25, precision_digits=40)
    vals = oracle_eigenvalues(H, 2)
    assert vals[0].imag < 0 < vals[1].imag
    for v in vals:
        assert abs(v.real - 1.22584758) < 1e-7
        assert abs(abs(v.imag) - 0.76002247) < 1e-7


def test_whole_spectrum_closed_under_conjugation():
    H = build_hamiltonian_matrix(-2.0, 24, omega=1.1)
    vals = [complex(v) for v in oracle_eigenvalues(H, 24, polish=False)]
    scale = max(abs(v) for v in vals)
    for v in vals:
        assert min(abs(v.conjugate() - w) for w in vals) < 1e-9 * scale


def test_basis_doubling_leaves_low_levels_fixed():
    small = oracle_eigenvalues(build_hamiltonian_matrix(1.0, 70, omega=1.25, precision_digits=40), 3)
    large = oracle_eigenvalues(build_hamiltonian_matrix(1.0, 140, omega=1.25, precision_digits=40), 3)
    assert match_roots(small, large, 1e-8).ok


@pytest.mark.parametrize("omega", [0.8, 1.0])
def test_frequency_independence(omega):
    ref = oracle_eigenvalues(build_hamiltonian_matrix(0.0, 100, omega=1.25, precision_digits=40), 3)
    other = oracle_eigenvalues(build_hamiltonian_matrix(0.0, 100, omega=omega, precision_digits=40), 3)
    assert match_roots(ref, other, 1e-8).ok


def test_match_identical_lists():
    roots = [1.0, 2 + 1j, 2 - 1j]
    rep = match_roots(roots, list(reversed(roots)), 1e-12)
    assert rep.ok and rep.max_distance == 0
    assert [(i, j) for i, j, _ in rep.pairs] == [(0, 2), (1, 1), (2, 0)]


def test_match_disjoint_lists():
    rep = match_roots([1.0, 2.0], [5.0], 0.1)
    assert not rep.ok
    assert rep.unmatched_a == (0, 1) and rep.unmatched_b == (0,)


def test_match_accepts_mp_values():
    with mpmath.workdps(30):
        rep = match_roots([mpmath.mpf("1.5")], [1.5 + 1e-10j], 1e-9)
    assert rep.ok
