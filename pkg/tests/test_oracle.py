from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ozaki_int8.matrix import gen_phi_matrix
from ozaki_int8.oracle import exact_gemm_oracle, exact_residual, fp64_gemm_reference, max_rel_err

U = 2.0**-53


def brute_force(A, B):
    """Independent reference: exact rational dot products, rounded once by float(Fraction)."""
    m, n = A.shape
    p = B.shape[1]
    out = np.empty((m, p))
    for i in range(m):
        for j in range(p):
            out[i, j] = float(sum((Fraction(A[i, l]) * Fraction(B[l, j]) for l in range(n)), Fraction(0)))
    return out


wide_floats = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e150, max_value=1e150, allow_subnormal=True)


def test_identity_reproduces_b():
    B = gen_phi_matrix(9, 6, 1.0, 3)
    assert exact_gemm_oracle(np.eye(9), B).tobytes() == B.tobytes()


def test_catastrophic_cancellation():
    got = exact_gemm_oracle(np.array([[2.0**60, 1.0, -(2.0**60)]]), np.ones((3, 1)))
    assert got[0, 0] == 1.0


def test_random_8x8_against_brute_force():
    rng = np.random.default_rng(8)
    A = rng.standard_normal((8, 8)) * 2.0 ** rng.integers(-40, 40, (8, 8))
    B = rng.standard_normal((8, 8)) * 2.0 ** rng.integers(-40, 40, (8, 8))
    assert np.array_equal(exact_gemm_oracle(A, B), brute_force(A, B))


@given(
    st.integers(1, 5).flatmap(
        lambda n: st.tuples(
            arrays(np.float64, st.tuples(st.integers(1, 4), st.just(n)), elements=wide_floats),
            arrays(np.float64, st.tuples(st.just(n), st.integers(1, 4)), elements=wide_floats),
        )
    )
)
def test_oracle_matches_brute_force(pair):
    A, B = pair
    assert np.array_equal(exact_gemm_oracle(A, B), brute_force(A, B))


@pytest.mark.parametrize(
    "a, expected",
    [
        ([1.0, 2.0**-53], 1.0),  # tie, even neighbour below
        ([1.0 + 2.0**-52, 2.0**-53], 1.0 + 2.0**-51),  # tie, even neighbour above
        ([1.0, 2.0**-53, 2.0**-200], 1.0 + 2.0**-52),  # just above the tie
        ([1.0, -(2.0**-54), -(2.0**-300)], 1.0 - 2.0**-53),  # just below 1, below the tie
        ([2.0**-1074, 2.0**-1074], 2.0**-1073),  # subnormal sum
    ],
)
def test_rounding_cases(a, expected):
    got = exact_gemm_oracle(np.array([a]), np.ones((len(a), 1)))
    assert got[0, 0] == expected


def test_subnormal_tie_rounds_to_even():
    got = exact_gemm_oracle(np.array([[2.0**-1074]]), np.array([[0.5]]))
    assert got[0, 0] == 0.0
    got = exact_gemm_oracle(np.array([[3 * 2.0**-1074]]), np.array([[0.5]]))
    assert got[0, 0] == 2 * 2.0**-1074


def test_overflow_reports_position():
    A = np.array([[1.0, 1.0], [1e308, 1e308]])
    with pytest.raises(OverflowError, match=r"\(1, 0\)"):
        exact_gemm_oracle(A, np.array([[1.0], [1.0]]))


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        exact_gemm_oracle(np.array([[np.nan]]), np.ones((1, 1)))


def test_inner_dimension_mismatch():
    with pytest.raises(ValueError):
        exact_gemm_oracle(np.ones((2, 3)), np.ones((2, 2)))


def test_exact_residual_against_brute_force():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((5, 7))
    B = rng.standard_normal((7, 4))
    T = A @ B
    want = np.empty_like(T)
    for i in range(5):
        for j in range(4):
            exact = sum((Fraction(A[i, l]) * Fraction(B[l, j]) for l in range(7)), Fraction(0)) - Fraction(T[i, j])
            want[i, j] = float(exact)
    assert np.array_equal(exact_residual(T, A, B), want)


def _loop_reference(A, B):
    m, n = A.shape
    C = np.zeros((m, B.shape[1]))
    for i in range(m):
        for j in range(B.shape[1]):
            acc = 0.0
            for l in range(n):
                acc = acc + float(A[i, l]) * float(B[l, j])
            C[i, j] = acc
    return C


def test_fp64_reference_fixed_order():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((70, 9)) * 2.0 ** rng.integers(-20, 20, (70, 9))
    B = rng.standard_normal((9, 5))
    assert fp64_gemm_reference(A, B).tobytes() == _loop_reference(A, B).tobytes()


def test_fp64_reference_trivial():
    assert fp64_gemm_reference(np.array([[2.0]]), np.array([[3.0]]))[0, 0] == 6.0
    assert not fp64_gemm_reference(np.zeros((3, 4)), np.ones((4, 2))).any()


def test_fp64_reference_deterministic_bound_n1024():
    # the sound statement: |fl(AB) - AB| <= n u |A||B| entrywise
    n = 1024
    A = gen_phi_matrix(n, n, 0.0, 0)
    B = gen_phi_matrix(n, n, 0.0, 1)
    F = fp64_gemm_reference(A, B)
    err = np.abs(exact_residual(F, A, B))
    absab = exact_gemm_oracle(np.abs(A), np.abs(B))
    assert np.all(err <= n * U * absab)


def test_max_rel_err_examples():
    R = np.array([[1.0, 2.0], [-4.0, 0.0]])
    assert max_rel_err(R, R) == 0.0
    T = R.copy()
    T[0, 0] = np.nextafter(1.0, 2.0)
    assert max_rel_err(T, R) == 2.0**-52
    T = R.copy()
    T[1, 0] = -4.5
    assert max_rel_err(T, R) == 0.125
    T = R.copy()
    T[1, 1] = 0.5  # zero reference measured against max |R| = 4
    assert max_rel_err(T, R) == 0.125


def test_max_rel_err_errors():
    with pytest.raises(ValueError):
        max_rel_err(np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        max_rel_err(np.zeros((2, 2)), np.ones((2, 3)))
