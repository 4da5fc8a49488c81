"""Exact linear algebra: frozen examples, sympy oracle, and property tests."""

import random
from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings, strategies as st
from sympy.matrices.normalforms import smith_normal_form as sympy_snf

from gkpsim.exact import (
    RationalMatrix,
    is_symplectic,
    lcm_denominators,
    matmul,
    omega,
    smith_normal_form,
    unimodular_inverse,
)

# -- oracles -----------------------------------------------------------------


def oracle_snf_diagonal(M):
    """Independent diagonal-of-SNF via sympy's own reduction over ZZ."""
    D = sympy_snf(sympy.Matrix(M), domain=sympy.ZZ)
    return [abs(int(D[i, i])) for i in range(min(D.shape))]


def oracle_det(M):
    return int(sympy.Matrix(M).det())


def check_decomposition(M, dec):
    M = [[int(x) for x in row] for row in M]
    r, c = len(M), len(M[0])
    assert matmul(matmul(dec.V, dec.D), dec.U) == M
    assert abs(oracle_det(dec.V)) == 1
    assert abs(oracle_det(dec.U)) == 1
    assert matmul(dec.V, dec.Vinv) == [[int(i == j) for j in range(r)] for i in range(r)]
    assert matmul(dec.U, dec.Uinv) == [[int(i == j) for j in range(c)] for i in range(c)]
    diag = dec.diagonal()
    assert all(d >= 0 for d in diag)
    for a, b in zip(diag, diag[1:]):
        if b:
            assert a != 0 and b % a == 0
    # off-diagonal of D is zero
    for i, row in enumerate(dec.D):
        for j, x in enumerate(row):
            if i != j:
                assert x == 0
    return diag


# -- smith_normal_form -------------------------------------------------------


def test_snf_identity():
    dec = smith_normal_form([[1, 0], [0, 1]])
    assert dec.V == [[1, 0], [0, 1]]
    assert dec.D == [[1, 0], [0, 1]]
    assert dec.U == [[1, 0], [0, 1]]


def test_snf_2x2_example():
    M = [[2, 4], [6, 8]]
    dec = smith_normal_form(M)
    assert check_decomposition(M, dec) == [2, 4]
    assert oracle_snf_diagonal(M) == [2, 4]


def test_snf_column_matrix():
    M = [[0], [1]]
    dec = smith_normal_form(M)
    assert dec.D == [[1], [0]]
    assert dec.V == [[0, 1], [1, 0]]
    check_decomposition(M, dec)


def test_snf_matches_sympy_oracle():
    rng = random.Random(7)
    for _ in range(40):
        r = rng.randint(1, 5)
        c = rng.randint(1, 5)
        M = [[rng.randint(-20, 20) for _ in range(c)] for _ in range(r)]
        diag = check_decomposition(M, smith_normal_form(M))
        assert [d for d in diag if d] == [d for d in oracle_snf_diagonal(M) if d]


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 8).flatmap(
        lambda r: st.integers(1, 8).flatmap(
            lambda c: st.lists(
                st.lists(st.integers(-20, 20), min_size=c, max_size=c),
                min_size=r,
                max_size=r,
            )
        )
    )
)
def test_snf_reconstruction_property(M):
    check_decomposition(M, smith_normal_form(M))


def test_snf_rejects_fractional_entries():
    with pytest.raises(ValueError):
        smith_normal_form([[Fraction(1, 2)]])


# -- lcm_denominators --------------------------------------------------------


def test_lcm_examples():
    assert lcm_denominators([[1, 0], [0, 1]]) == 1
    assert lcm_denominators([[Fraction(1, 2), Fraction(1, 3)]]) == 6
    assert lcm_denominators([[Fraction(3, 2)], [0]]) == 2


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 4).flatmap(
        lambda c: st.lists(
            st.lists(st.fractions(min_value=-40, max_value=40, max_denominator=30), min_size=c, max_size=c),
            min_size=1,
            max_size=4,
        )
    )
)
def test_lcm_scaling_property(rows):
    v = lcm_denominators(rows)
    assert v >= 1
    scaled = [[v * x for x in row] for row in rows]
    assert lcm_denominators(scaled) == 1


# -- is_symplectic -----------------------------------------------------------

SHEAR = [[1, 0], [1, 1]]
FOURIER = [[0, 1], [-1, 0]]


def random_symplectic_1mode(rng):
    """Product of shear/Fourier/squeeze generators; symplectic by construction."""
    gens = [
        SHEAR,
        FOURIER,
        [[Fraction(3, 2), 0], [0, Fraction(2, 3)]],
        [[1, 0], [Fraction(-1, 3), 1]],
    ]
    S = [[Fraction(1), Fraction(0)], [Fraction(0), Fraction(1)]]
    for _ in range(rng.randint(1, 6)):
        S = matmul(rng.choice(gens), S)
    return S


def test_symplectic_examples():
    assert is_symplectic(SHEAR)
    assert is_symplectic(FOURIER)
    assert not is_symplectic([[2, 0], [0, 1]])


def test_symplectic_rejects_odd_dimension():
    with pytest.raises(ValueError):
        is_symplectic([[1, 0, 0], [0, 1, 0], [0, 0, 1]])


def test_symplectic_closed_under_product_and_inverse():
    rng = random.Random(11)
    for _ in range(25):
        S = random_symplectic_1mode(rng)
        T = random_symplectic_1mode(rng)
        assert is_symplectic(S)
        assert is_symplectic(matmul(S, T))
        # symplectic inverse: S^-1 = -Omega S^T Omega
        O = omega(1).data
        Sinv = matmul(matmul(O, [list(r) for r in zip(*S)]), [[-x for x in row] for row in O])
        assert is_symplectic(Sinv)
        assert matmul(S, Sinv) == [[1, 0], [0, 1]]


def test_symplectic_two_mode_form():
    O = omega(2)
    assert is_symplectic(RationalMatrix([[0, 0, 1, 0], [0, 0, 0, 1], [-1, 0, 0, 0], [0, -1, 0, 0]]))
    assert O[0, 2] == 1 and O[2, 0] == -1


# -- unimodular_inverse ------------------------------------------------------


def test_unimodular_inverse_examples():
    assert unimodular_inverse([[1, 0], [0, 1]]) == [[1, 0], [0, 1]]
    assert unimodular_inverse([[0, 1], [1, 0]]) == [[0, 1], [1, 0]]
    assert unimodular_inverse([[1, 1], [0, 1]]) == [[1, -1], [0, 1]]


def test_unimodular_inverse_rejects_non_unimodular():
    with pytest.raises(ValueError):
        unimodular_inverse([[2, 0], [0, 1]])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_unimodular_inverse_roundtrip(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 5)
    # random unimodular: product of elementary row operations on I
    V = [[int(i == j) for j in range(n)] for i in range(n)]
    for _ in range(8):
        i, j = rng.randrange(n), rng.randrange(n)
        if i == j:
            continue
        t = rng.randint(-3, 3)
        for k in range(n):
            V[i][k] += t * V[j][k]
    W = unimodular_inverse(V)
    assert matmul(V, W) == [[int(i == j) for j in range(n)] for i in range(n)]


# -- RationalMatrix ----------------------------------------------------------


def test_rational_matrix_string_roundtrip():
    m = RationalMatrix([["3/2", "-1"], ["0", "7/3"]])
    assert m.to_strings() == [["3/2", "-1"], ["0", "7/3"]]
    assert m[0, 0] == Fraction(3, 2)
    assert m.transpose()[1, 0] == Fraction(-1)
    assert (m @ RationalMatrix.identity(2)) == m
    assert not m.is_integer()
    assert RationalMatrix.identity(3).is_integer()
