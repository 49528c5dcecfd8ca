"""Reference products: a correctly rounded exact oracle and a plain FP64 GEMM.

The oracle writes every row of A (and every column of B) as an integer in
fixed point relative to the row's lowest set bit, cuts those integers into
b-bit limbs, and multiplies limb matrices with float64 GEMM. With
n * 2**(2b) <= 2**53 every partial sum is an integer below 2**53, so those
products are exact in any summation order. The limb products are gathered
into int64 digit planes, carry-normalised, and rounded to float64 once.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from .matrix import as_matrix, _require_finite

__all__ = ["exact_gemm_oracle", "exact_residual", "fp64_gemm_reference", "max_rel_err"]

_WINDOW = 62  # significant bits gathered before the final int64 -> float64 rounding


def _limb_bits(n: int) -> int:
    return (53 - (n - 1).bit_length()) // 2


def _fixed_point_limbs(X: np.ndarray, b: int) -> tuple[np.ndarray, np.ndarray]:
    """Split each row of X into signed b-bit limbs.

    Returns (limbs, exps) where limbs has shape (L, m, n), float64 holding
    integers with |v| < 2**b, and row i equals
    sum_l limbs[l, i, :] * 2**(b*l + exps[i]) exactly.
    """
    frac, e = np.frexp(X)
    mant = (frac * 2.0**53).astype(np.int64)  # exact: |frac| * 2**53 is an integer < 2**53
    lsb = e.astype(np.int64) - 53
    nonzero = mant != 0
    big = np.iinfo(np.int64).max
    lsb_nz = np.where(nonzero, lsb, big)
    row_min = lsb_nz.min(axis=1)
    row_min = np.where(row_min == big, 0, row_min)

    shift = np.where(nonzero, lsb - row_min[:, None], 0)
    span = int((shift + 53).max()) if nonzero.any() else 1
    n_limbs = max(1, -(-span // b))

    sign = np.sign(mant)
    mag = np.abs(mant)
    mask = np.int64((1 << b) - 1)
    limbs = np.empty((n_limbs,) + X.shape, dtype=np.float64)
    for l in range(n_limbs):
        lo = b * l - shift
        right = np.clip(lo, 0, 63)
        left = np.clip(-lo, 0, 63)
        keep_bits = np.clip(b + np.minimum(lo, 0), 0, 62)
        from_right = (mag >> right) & mask
        from_left = (mag & ((np.int64(1) << keep_bits) - 1)) << left
        chunk = np.where(lo >= 0, from_right, np.where(-lo < b, from_left, 0))
        limbs[l] = (chunk * sign).astype(np.float64)
    return limbs, row_min


def _normalise(planes: list[np.ndarray], b: int) -> tuple[np.ndarray, np.ndarray]:
    """Carry-propagate int64 digit planes into base-2**b digits.

    Returns (digits, carry) with digits in [0, 2**b) and the final carry in
    {0, -1} (two's-complement sign extension).
    """
    mask = np.int64((1 << b) - 1)
    extra = 64 // b + 2
    carry = np.zeros_like(planes[0])
    digits = []
    for plane in planes + [np.zeros_like(planes[0])] * extra:
        t = plane + carry
        digits.append(t & mask)
        carry = t >> b
    return np.stack(digits), carry


def _round_digits(digits: np.ndarray, b: int):
    """Correctly round non-negative base-2**b digit planes.

    Returns (mantissa, exponent, top) with value ~= mantissa * 2**exponent,
    mantissa a float64 holding the 62-bit window rounded to nearest even,
    and top = -1 where the value is zero.
    """
    nd = digits.shape[0]
    nonzero = digits != 0
    top = np.full(digits.shape[1:], -1, dtype=np.int64)
    for d in range(nd):
        top = np.where(nonzero[d], d, top)
    is_zero = top < 0
    t = np.where(is_zero, 0, top)

    def digit_at(idx):
        valid = idx >= 0
        got = np.take_along_axis(digits, np.clip(idx, 0, nd - 1)[None], axis=0)[0]
        return np.where(valid, got, 0)

    lead = digit_at(t)
    nbits = np.frexp(lead.astype(np.float64))[1].astype(np.int64)
    window = np.zeros_like(lead)
    sticky = np.zeros(lead.shape, dtype=bool)
    j = 0
    while True:
        sh = (_WINDOW - nbits) - j * b
        if np.all(sh <= -b):
            break
        dig = digit_at(t - j)
        up = np.clip(sh, 0, 62)
        down = np.clip(-sh, 0, 62)
        left_part = dig << up
        right_part = dig >> down
        lost = (dig & ((np.int64(1) << down) - 1)) != 0
        window |= np.where(sh >= 0, left_part, np.where(sh > -b, right_part, 0))
        sticky |= np.where(sh >= 0, False, np.where(sh > -b, lost, dig != 0))
        j += 1
    below = t - j
    cum = np.logical_or.accumulate(nonzero, axis=0)
    rest = np.take_along_axis(cum, np.clip(below, 0, nd - 1)[None], axis=0)[0]
    sticky |= (below >= 0) & rest
    window |= sticky.astype(np.int64)
    mantissa = window.astype(np.float64)  # round-to-nearest-even conversion
    exponent = b * t + nbits - _WINDOW
    mantissa[is_zero] = 0.0
    return mantissa, exponent, top


def _digits_to_int(digits: np.ndarray, b: int, idx) -> int:
    return sum(int(digits[d][idx]) << (b * d) for d in range(digits.shape[0]))


def exact_gemm_oracle(A, B) -> np.ndarray:
    """Correctly rounded (nearest-even) FP64 value of every exact dot product of A and B."""
    A = as_matrix(A)
    B = as_matrix(B)
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"inner dimensions differ: {A.shape} x {B.shape}")
    _require_finite(A, "A")
    _require_finite(B, "B")
    n = A.shape[1]
    b = _limb_bits(n)
    la, ea = _fixed_point_limbs(A, b)
    lbt, eb = _fixed_point_limbs(np.ascontiguousarray(B.T), b)
    lb = np.ascontiguousarray(lbt.transpose(0, 2, 1))

    live_a = [p for p in range(la.shape[0]) if np.any(la[p])]
    live_b = [q for q in range(lb.shape[0]) if np.any(lb[q])]
    shape = (A.shape[0], B.shape[1])
    planes = [np.zeros(shape, dtype=np.int64) for _ in range(la.shape[0] + lb.shape[0] - 1)]
    for p in live_a:
        for q in live_b:
            planes[p + q] += (la[p] @ lb[q]).astype(np.int64)

    digits, carry = _normalise(planes, b)
    negative = carry < 0
    if negative.any():
        flipped = [np.where(negative, -pl, pl) for pl in planes]
        digits, carry = _normalise(flipped, b)
    mantissa, exponent, top = _round_digits(digits, b)
    exponent = exponent + ea[:, None] + eb[None, :]

    with np.errstate(over="ignore", under="ignore"):
        out = np.ldexp(mantissa, exponent.astype(np.int32).clip(-3000, 3000))
    # window rounding followed by gradual underflow would round twice
    tiny = (top >= 0) & (np.abs(out) < 2.0**-1022)
    for idx in zip(*np.nonzero(tiny)):
        exact = Fraction(_digits_to_int(digits, b, idx)) * Fraction(2) ** int(ea[idx[0]] + eb[idx[1]])
        out[idx] = float(exact)
    if np.isinf(out).any():
        i, j = (int(v) for v in np.argwhere(np.isinf(out))[0])
        raise OverflowError(f"exact dot product at ({i}, {j}) overflows float64")
    out[negative] = -out[negative]
    return out


def exact_residual(T, A, B) -> np.ndarray:
    """Correctly rounded AB - T, computed as [A, I] @ [B; -T] by the exact oracle."""
    A = as_matrix(A)
    B = as_matrix(B)
    T = as_matrix(T)
    if T.shape != (A.shape[0], B.shape[1]):
        raise ValueError("T must have shape (rows of A, cols of B)")
    aug_a = np.hstack([A, np.eye(A.shape[0])])
    aug_b = np.vstack([B, -T])
    return exact_gemm_oracle(aug_a, aug_b)


def fp64_gemm_reference(A, B) -> np.ndarray:
    """Plain FP64 product, each entry summed in ascending inner index with separate multiply and add."""
    A = as_matrix(A)
    B = as_matrix(B)
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"inner dimensions differ: {A.shape} x {B.shape}")
    C = np.zeros((A.shape[0], B.shape[1]))
    # row blocks keep the running sums in cache; the per-entry order is unchanged
    for i0 in range(0, A.shape[0], 64):
        Ai = A[i0:i0 + 64]
        Ci = C[i0:i0 + 64]
        tmp = np.empty_like(Ci)
        for l in range(A.shape[1]):
            np.multiply(Ai[:, l, None], B[None, l, :], out=tmp)
            Ci += tmp
    return C


def max_rel_err(T, R) -> float:
    """Largest elementwise relative error of T against the reference R.

    Entries where R is zero are measured against max |R| instead.
    """
    T = np.asarray(T, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    if T.shape != R.shape:
        raise ValueError(f"shape mismatch {T.shape} vs {R.shape}")
    scale = np.max(np.abs(R))
    if scale == 0.0:
        raise ValueError("reference matrix is all zero")
    denom = np.where(R != 0.0, np.abs(R), scale)
    return float(np.max(np.abs(T - R) / denom))
