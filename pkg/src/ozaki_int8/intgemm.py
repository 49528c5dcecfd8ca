"""Software model of an INT8 matrix unit with INT32 accumulators."""
from __future__ import annotations

import enum
import os
from contextlib import contextmanager

import numpy as np
from threadpoolctl import threadpool_limits

__all__ = [
    "OverflowMode",
    "Int32OverflowError",
    "i8_gemm",
    "i8_gemm_accumulate",
    "compute_r",
    "blas_threads",
]

INT32_MIN = -(1 << 31)
INT32_MAX = (1 << 31) - 1
_EXACT_LIMIT = 1 << 53
_EXACT_LIMIT_F32 = 1 << 24


class OverflowMode(enum.Enum):
    CHECKED = "checked"
    WRAPPING = "wrapping"


class Int32OverflowError(ArithmeticError):
    """An INT32 accumulator left [-2**31, 2**31 - 1] in checked mode."""

    def __init__(self, row: int, col: int, value: int):
        self.row, self.col, self.value = row, col, value
        super().__init__(f"INT32 overflow at ({row}, {col}): exact value {value}")


@contextmanager
def blas_threads(n=None):
    """Cap BLAS threads; defaults to $OZMM_THREADS when set, otherwise leaves BLAS alone."""
    if n is None:
        env = os.environ.get("OZMM_THREADS")
        n = int(env) if env else None
    if n is None:
        yield
        return
    with threadpool_limits(limits=max(1, int(n)), user_api="blas"):
        yield


def _check_operands(A8: np.ndarray, B8: np.ndarray) -> None:
    for name, x in (("A8", A8), ("B8", B8)):
        if x.dtype != np.int8 or x.ndim != 2:
            raise TypeError(f"{name} must be a 2-D int8 matrix, got {x.dtype} with shape {x.shape}")
    if A8.shape[1] != B8.shape[0]:
        raise ValueError(f"inner dimensions differ: {A8.shape} x {B8.shape}")


def _maxabs(x: np.ndarray) -> int:
    return max(abs(int(x.max())), abs(int(x.min())))


def _product64(A8: np.ndarray, B8: np.ndarray) -> np.ndarray:
    # A floating-point GEMM is exact when every partial sum is an integer that
    # fits the significand, whatever order or FMA use the BLAS picks.
    n = A8.shape[1]
    bound = n * _maxabs(A8) * _maxabs(B8)
    if bound <= _EXACT_LIMIT_F32:
        return (A8.astype(np.float32) @ B8.astype(np.float32)).astype(np.int64)
    if bound <= _EXACT_LIMIT:
        return (A8.astype(np.float64) @ B8.astype(np.float64)).astype(np.int64)
    return A8.astype(np.int64) @ B8.astype(np.int64)


def _finish(acc: np.ndarray, mode: OverflowMode) -> np.ndarray:
    mode = OverflowMode(mode)
    if mode is OverflowMode.CHECKED:
        bad = (acc < INT32_MIN) | (acc > INT32_MAX)
        if bad.any():
            i, j = (int(v) for v in np.argwhere(bad)[0])
            raise Int32OverflowError(i, j, int(acc[i, j]))
    return acc.astype(np.int32)  # wraps modulo 2**32


def i8_gemm(A8: np.ndarray, B8: np.ndarray, mode=OverflowMode.CHECKED) -> np.ndarray:
    """Exact A8 @ B8 delivered as INT32."""
    _check_operands(A8, B8)
    return _finish(_product64(A8, B8), mode)


def i8_gemm_accumulate(C32: np.ndarray, A8: np.ndarray, B8: np.ndarray, mode=OverflowMode.CHECKED) -> np.ndarray:
    """C32 + A8 @ B8 with the same exactness and overflow contract as `i8_gemm`."""
    _check_operands(A8, B8)
    if C32.dtype != np.int32 or C32.shape != (A8.shape[0], B8.shape[1]):
        raise ValueError("C32 must be an int32 matrix matching the product shape")
    return _finish(C32.astype(np.int64) + _product64(A8, B8), mode)


def compute_r(n: int, beta: int) -> int:
    """Number of slice products that can share one INT32 accumulator: max(1, 2**(31 - 2 beta - ceil(log2 n)))."""
    n, beta = int(n), int(beta)
    if n < 1 or beta < 1:
        raise ValueError("n and beta must be positive")
    e = 31 - 2 * beta - (n - 1).bit_length()
    return 1 << e if e > 0 else 1
