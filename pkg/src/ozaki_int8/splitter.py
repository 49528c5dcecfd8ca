"""Error-free splitting of FP64 matrices into INT8 slices.

Three strategies are provided:

``BIT_MASK``
    Slice s holds the s-th chunk of beta mantissa bits of every entry,
    counted from the row's leading bit position (sign-magnitude chunks).
``ROUND_NEAREST``
    Each slice rounds the current residual to nearest on a per-row grid
    recomputed from the residual's row maximum (per-slice shifts).
``ROUND_NEAREST_CONST``
    Round to nearest on grids fixed once from the original row maximum,
    each slice's grid 2**beta finer than the previous one (constant shift).

BIT_MASK and ROUND_NEAREST_CONST produce the constant-shift form
``A = diag(mu) (2**(1-beta) A_1 + ... + 2**(1-k*beta) A_k) + V_k``;
ROUND_NEAREST produces ``A = diag(mu_1) A_1 + ... + diag(mu_k) A_k + V_k``.
Right-hand matrices are split column-wise by splitting the transpose.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .matrix import as_matrix, _require_finite, save_matrix, ufp_array

__all__ = [
    "SliceStrategy",
    "Side",
    "SplitMatrix",
    "compute_beta",
    "rump_next_pow2",
    "next_pow2",
    "split",
    "split_bitmask",
    "split_round_nearest",
    "split_rn_const_shift",
    "reconstruct",
    "dump_split",
    "MAX_N",
]

MAX_N = 1 << 29
_INV_U = 2.0**53
_UNDERFLOW_EXP = -1000
_TINY = 2.0**-1074


class SliceStrategy(enum.Enum):
    BIT_MASK = "bitmask"
    ROUND_NEAREST = "rn"
    ROUND_NEAREST_CONST = "rn-const"

    @property
    def const_shift(self) -> bool:
        return self is not SliceStrategy.ROUND_NEAREST


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


def compute_beta(n: int) -> int:
    """Bits kept per slice: min(7, floor((31 - ceil(log2 n)) / 2)).

    Uses the ceiling of log2 n so that n * (2**beta - 1)**2 < 2**31 holds
    for every n, not only powers of two.
    """
    n = int(n)
    if n < 1:
        raise ValueError("inner dimension must be at least 1")
    if n > MAX_N:
        raise ValueError(f"inner dimension {n} exceeds the supported maximum 2**29")
    return min(7, (31 - (n - 1).bit_length()) // 2)


def rump_next_pow2(alpha: float) -> float:
    """Smallest power of two >= alpha, as fl(fl(alpha/u) + fl((1 - 1/u) * alpha)) with u = 2**-53."""
    alpha = float(alpha)
    if not (alpha >= 0.0) or alpha == float("inf"):
        raise ValueError(f"alpha must be finite and non-negative, got {alpha!r}")
    scaled = _INV_U * alpha
    if scaled == float("inf"):
        raise OverflowError(f"2**53 * {alpha!r} overflows")
    return scaled + (1.0 - _INV_U) * alpha


def next_pow2(alpha: np.ndarray) -> np.ndarray:
    """Vectorised `rump_next_pow2`; falls back to exponent extraction where 2**53 * alpha would overflow."""
    alpha = np.asarray(alpha, dtype=np.float64)
    safe = alpha < 2.0**960
    with np.errstate(over="ignore", invalid="ignore"):
        rump = _INV_U * alpha + (1.0 - _INV_U) * alpha
    frac, e = np.frexp(alpha)
    with np.errstate(over="ignore"):
        fallback = np.where(frac == 0.5, alpha, np.ldexp(1.0, e))
    return np.where(safe, rump, fallback)


def _exponent(pow2: np.ndarray) -> np.ndarray:
    """log2 of exact powers of two (0 where the input is 0)."""
    frac, e = np.frexp(pow2)
    return np.where(pow2 == 0.0, 0, e - 1).astype(np.int64)


@dataclass
class SplitMatrix:
    """k INT8 slices of one FP64 matrix plus power-of-two shifts.

    ``shifts`` has shape (len,) for constant-shift strategies, where slice s
    is scaled by ``shifts * 2**(1 - beta*s)``, and shape (k, len) for
    ROUND_NEAREST, where slice s is scaled by ``shifts[s-1]``. ``len`` is the
    row count for the left side and the column count for the right side.
    """

    side: Side
    k: int
    beta: int
    strategy: SliceStrategy
    slices: list
    shifts: np.ndarray
    residual: Optional[np.ndarray] = None
    _exp_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def shape(self) -> tuple:
        return self.slices[0].shape

    def scale_exponents(self, s: int) -> np.ndarray:
        """Integer log2 of the per-row (left) or per-column (right) scale of slice s (1-based)."""
        if not 1 <= s <= self.k:
            raise IndexError(f"slice index {s} outside 1..{self.k}")
        if self.strategy.const_shift:
            if "const" not in self._exp_cache:
                self._exp_cache["const"] = _exponent(self.shifts)
            return self._exp_cache["const"] + (1 - self.beta * s)
        if s not in self._exp_cache:
            self._exp_cache[s] = _exponent(self.shifts[s - 1])
        return self._exp_cache[s]

    def scaled_slice(self, s: int) -> np.ndarray:
        """Slice s with its shift applied, as float64."""
        e = self.scale_exponents(s)
        v = self.slices[s - 1].astype(np.float64)
        if self.side is Side.LEFT:
            return np.ldexp(v, e[:, None].astype(np.int32))
        return np.ldexp(v, e[None, :].astype(np.int32))


def _check_k(k: int) -> int:
    k = int(k)
    if k < 1:
        raise ValueError("slice count k must be at least 1")
    return k


def _resolve_beta(n: int, beta: Optional[int]) -> int:
    if beta is None:
        return compute_beta(n)
    beta = int(beta)
    if not 1 <= beta <= 7:
        raise ValueError(f"beta must lie in 1..7, got {beta}")
    return beta


def _warn_underflow(rowmax: np.ndarray) -> None:
    live = rowmax > 0
    if np.any(live & (rowmax < 2.0**_UNDERFLOW_EXP)):
        warnings.warn(
            "rows with maximum below 2**-1000 may underflow during splitting",
            RuntimeWarning,
            stacklevel=3,
        )


def _bitmask_rows(X: np.ndarray, k: int, beta: int, early_stop: bool):
    rowmax = np.max(np.abs(X), axis=1)
    _warn_underflow(rowmax)
    mu = ufp_array(rowmax)
    row_exp = _exponent(mu)

    bits = X.view(np.uint64)
    expfield = ((bits >> np.uint64(52)) & np.uint64(0x7FF)).astype(np.int64)
    frac = (bits & np.uint64((1 << 52) - 1)).astype(np.int64)
    mant = np.where(expfield > 0, frac | (1 << 52), frac)
    lsb = np.maximum(expfield, 1) - 1075  # |x| = mant * 2**lsb
    sign = np.where(X < 0, -1, 1).astype(np.int64)
    mask = np.int64((1 << beta) - 1)

    slices = []
    for s in range(1, k + 1):
        # chunk s = floor(|x| / mu * 2**(beta*s - 1)) mod 2**beta
        sh = lsb - row_exp[:, None] + beta * s - 1
        right = np.clip(-sh, 0, 63)
        left = np.clip(sh, 0, beta)
        low = np.clip(beta - sh, 0, beta)
        chunk = np.where(
            sh >= 0,
            np.where(sh < beta, (mant & ((np.int64(1) << low) - 1)) << left, 0),
            np.where(sh > -64, (mant >> right) & mask, 0),
        )
        slices.append((chunk * sign).astype(np.int8))
        if early_stop and s < k and not np.any(sh <= 0):
            slices.extend(np.zeros_like(slices[0]) for _ in range(k - s))
            break
    return slices, mu


def _round_to_grid(a: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Round each row of a to the nearest multiple of 2**e (ties to even).

    Uses fl(fl(a + sigma) - sigma) with sigma = 1.5 * 2**(52 + e), which is
    exact while |a| <= 2**(51 + e). Rows whose sigma would overflow are
    rounded as rint(a * 2**-e) * 2**e instead, which gives the same result.
    """
    e = np.broadcast_to(e, (a.shape[0], 1)).astype(np.int32)
    big = (52 + e) > 1023
    sigma = np.ldexp(1.5, np.where(big, 0, 52 + e))
    out = (a + sigma) - sigma
    if np.any(big):
        rows = big[:, 0]
        eb = e[rows]
        out[rows] = np.ldexp(np.rint(np.ldexp(a[rows], -eb)), eb)
    return out


def _round_nearest_rows(X: np.ndarray, k: int, beta: int, early_stop: bool):
    a = X.copy()
    _warn_underflow(np.max(np.abs(a), axis=1))
    shifts = np.zeros((k, X.shape[0]))
    slices = []
    for s in range(k):
        alpha = np.max(np.abs(a), axis=1)
        mu = np.ldexp(next_pow2(alpha), 1 - beta)
        # a grid below the smallest subnormal would underflow to 0; every FP64 value is a multiple of 2**-1074
        mu = np.where((alpha > 0.0) & (mu == 0.0), _TINY, mu)
        e = _exponent(mu)[:, None]
        extracted = _round_to_grid(a, e)
        extracted[alpha == 0.0] = 0.0
        slices.append(np.ldexp(extracted, (-e).astype(np.int32)).astype(np.int8))
        shifts[s] = mu
        a -= extracted
        if early_stop and s + 1 < k and not a.any():
            slices.extend(np.zeros_like(slices[0]) for _ in range(k - s - 1))
            break
    return slices, shifts, a


def _round_nearest_const_rows(X: np.ndarray, k: int, beta: int, early_stop: bool):
    a = X.copy()
    alpha = np.max(np.abs(a), axis=1)
    _warn_underflow(alpha)
    mu = next_pow2(alpha)
    base = _exponent(mu)[:, None]
    live = (alpha > 0.0)[:, None]
    slices = []
    for s in range(1, k + 1):
        # grid of slice s is 2**(1 - beta*s) * mu
        e = base + (1 - beta * s)
        extracted = np.where(live, _round_to_grid(a, e), 0.0)
        slices.append(np.ldexp(extracted, (-e).astype(np.int32)).astype(np.int8))
        a -= extracted
        if early_stop and s < k and not a.any():
            slices.extend(np.zeros_like(slices[0]) for _ in range(k - s))
            break
    return slices, mu, a


def _split(A, k, side, strategy, beta, early_stop, keep_residual=True) -> SplitMatrix:
    A = as_matrix(A)
    _require_finite(A, "input matrix")
    k = _check_k(k)
    side = Side(side)
    X = A if side is Side.LEFT else np.ascontiguousarray(A.T)
    beta = _resolve_beta(X.shape[1], beta)

    if strategy is not SliceStrategy.BIT_MASK and X.size and np.max(np.abs(X)) > 2.0**1023:
        # the power of two above the row maximum would be 2**1024
        raise OverflowError("round-to-nearest splitting needs |a_ij| <= 2**1023")
    if strategy is SliceStrategy.BIT_MASK:
        slices, shifts = _bitmask_rows(X, k, beta, early_stop)
        residual = None
    elif strategy is SliceStrategy.ROUND_NEAREST:
        slices, shifts, residual = _round_nearest_rows(X, k, beta, early_stop)
    else:
        slices, shifts, residual = _round_nearest_const_rows(X, k, beta, early_stop)

    if side is Side.RIGHT:
        slices = [np.ascontiguousarray(v.T) for v in slices]
        if residual is not None:
            residual = np.ascontiguousarray(residual.T)
    out = SplitMatrix(side=side, k=k, beta=beta, strategy=strategy, slices=slices, shifts=shifts)
    if keep_residual:
        if residual is None:
            residual = A - reconstruct(out)
        out.residual = residual
    return out


def split_bitmask(A, k: int, side=Side.LEFT, *, beta: Optional[int] = None, early_stop: bool = False) -> SplitMatrix:
    """Bit-mask splitting: slice s holds the s-th beta-bit chunk below each row's leading bit.

    Shifts are ufp(max_j |a_ij|); chunks carry the sign of the entry, so
    every slice entry lies in [-(2**beta - 1), 2**beta - 1].
    """
    return _split(A, k, side, SliceStrategy.BIT_MASK, beta, early_stop)


def split_round_nearest(A, k: int, side=Side.LEFT, *, beta: Optional[int] = None, early_stop: bool = False) -> SplitMatrix:
    """Round-to-nearest splitting with per-slice shifts.

    Every step takes mu = 2**ceil(log2 max_j |r_ij|) * 2**(1-beta) from the
    current residual r, extracts (r + sigma) - sigma with
    sigma = 0.75 * 2**53 * mu, and subtracts the extracted part.
    """
    return _split(A, k, side, SliceStrategy.ROUND_NEAREST, beta, early_stop)


def split_rn_const_shift(A, k: int, side=Side.LEFT, *, beta: Optional[int] = None, early_stop: bool = False) -> SplitMatrix:
    """Round-to-nearest splitting on fixed geometric grids (constant-shift form).

    ``shifts`` holds mu = 2**ceil(log2 max_j |a_ij|), computed once; slice s
    is rounded to the grid mu * 2**(1 - beta*s).
    """
    return _split(A, k, side, SliceStrategy.ROUND_NEAREST_CONST, beta, early_stop)


_SPLITTERS = {
    SliceStrategy.BIT_MASK: split_bitmask,
    SliceStrategy.ROUND_NEAREST: split_round_nearest,
    SliceStrategy.ROUND_NEAREST_CONST: split_rn_const_shift,
}


def split(A, k: int, side, strategy: SliceStrategy, *, beta: Optional[int] = None, early_stop: bool = False) -> SplitMatrix:
    return _SPLITTERS[SliceStrategy(strategy)](A, k, side, beta=beta, early_stop=early_stop)


def reconstruct(S: SplitMatrix) -> np.ndarray:
    """Sum of the shifted slices (without the residual)."""
    total = S.scaled_slice(1)
    for s in range(2, S.k + 1):
        total = total + S.scaled_slice(s)
    return total


def dump_split(S: SplitMatrix, directory) -> list:
    """Write slices, shifts and residual of S as OZMM files; returns the paths written."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    tag = S.side.value
    paths = []
    for s, v in enumerate(S.slices, start=1):
        paths.append(out / f"{tag}_slice{s:02d}.ozmm")
        save_matrix(paths[-1], v)
    if S.strategy.const_shift:
        paths.append(out / f"{tag}_shift.ozmm")
        save_matrix(paths[-1], S.shifts[None, :])
    else:
        for s in range(S.k):
            paths.append(out / f"{tag}_shift{s + 1:02d}.ozmm")
            save_matrix(paths[-1], S.shifts[s][None, :])
    if S.residual is not None:
        paths.append(out / f"{tag}_residual.ozmm")
        save_matrix(paths[-1], S.residual)
    return paths
