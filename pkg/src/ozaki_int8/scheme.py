"""Ozaki-scheme drivers: slice products on the INT8 unit, FP64 accumulation, GEMM epilogue."""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Optional

import numpy as np

from .intgemm import OverflowMode, blas_threads, compute_r, i8_gemm_accumulate
from .matrix import as_matrix
from .splitter import MAX_N, Side, SliceStrategy, SplitMatrix, compute_beta, split

__all__ = [
    "Accumulation",
    "ConfigurationError",
    "SchemeConfig",
    "OpCounts",
    "PhaseTimings",
    "AccumulationStats",
    "METHODS",
    "w_count",
    "op_counts",
    "accumulate_per_product",
    "accumulate_groupwise",
    "accumulate_groupwise_simple",
    "split_operands",
    "ozaki_mm",
    "ozaki_mm_ks",
    "ozaki_gemm",
]


class Accumulation(enum.Enum):
    PER_PRODUCT = "per-product"
    GROUPWISE = "groupwise"
    GROUPWISE_SIMPLE = "groupwise-simple"


class ConfigurationError(ValueError):
    pass


METHODS: dict[str, tuple[SliceStrategy, Accumulation]] = {
    "ozIMMU": (SliceStrategy.BIT_MASK, Accumulation.PER_PRODUCT),
    "ozIMMU_RN": (SliceStrategy.ROUND_NEAREST, Accumulation.PER_PRODUCT),
    "ozIMMU_EF": (SliceStrategy.BIT_MASK, Accumulation.GROUPWISE),
    "ozIMMU_H": (SliceStrategy.ROUND_NEAREST_CONST, Accumulation.GROUPWISE),
}


@dataclass(frozen=True)
class SchemeConfig:
    """One emulation setup. ``force_beta`` and ``force_r`` override the derived constants (testing only)."""

    k: int
    strategy: SliceStrategy = SliceStrategy.BIT_MASK
    accumulation: Accumulation = Accumulation.PER_PRODUCT
    overflow: OverflowMode = OverflowMode.CHECKED
    force_beta: Optional[int] = None
    force_r: Optional[int] = None

    @classmethod
    def for_method(cls, name: str, k: int, **kwargs) -> "SchemeConfig":
        try:
            strategy, accumulation = METHODS[name]
        except KeyError:
            raise ConfigurationError(f"unknown method {name!r}; expected one of {sorted(METHODS)}") from None
        return cls(k=k, strategy=strategy, accumulation=accumulation, **kwargs)

    @property
    def method(self) -> Optional[str]:
        for name, pair in METHODS.items():
            if pair == (self.strategy, self.accumulation):
                return name
        return None

    def beta_for(self, n: int) -> int:
        return compute_beta(n) if self.force_beta is None else int(self.force_beta)

    def r_for(self, n: int) -> int:
        return compute_r(n, self.beta_for(n)) if self.force_r is None else int(self.force_r)

    def validate(self, n: int) -> None:
        if self.k < 1:
            raise ConfigurationError("k must be at least 1")
        if not 1 <= n <= MAX_N:
            raise ConfigurationError(f"inner dimension {n} outside 1..2**29")
        if self.force_beta is not None and not 1 <= self.force_beta <= 7:
            raise ConfigurationError("force_beta must lie in 1..7")
        if self.force_r is not None and self.force_r < 1:
            raise ConfigurationError("force_r must be at least 1")
        if self.accumulation is not Accumulation.PER_PRODUCT and not self.strategy.const_shift:
            raise ConfigurationError("group-wise accumulation needs constant-shift slices")
        if self.accumulation is Accumulation.GROUPWISE_SIMPLE and self.r_for(n) < self.k:
            raise ConfigurationError(f"simple group-wise accumulation needs r >= k (r={self.r_for(n)}, k={self.k})")


@dataclass(frozen=True)
class OpCounts:
    int8_gemms: int
    fp64_flushes: int
    r: int
    w: int


@dataclass
class PhaseTimings:
    """Wall-clock seconds per phase of one emulated GEMM."""

    split_a: float = 0.0
    split_b: float = 0.0
    int_gemm: float = 0.0
    accum_fp64: float = 0.0
    copy: float = 0.0


@dataclass
class AccumulationStats:
    int8_gemms: int = 0
    fp64_flushes: int = 0
    int_gemm_seconds: float = 0.0
    accum_seconds: float = 0.0
    flushed_pairs: list = field(default_factory=list)


def w_count(k: int, r: int) -> int:
    """FP64 flush count of group-wise accumulation: ceil(k/r) * (k - (r/2) * floor((k-1)/r))."""
    if k < 1 or r < 1:
        raise ValueError("k and r must be positive")
    w = -(-k // r) * (k - Fraction(r, 2) * ((k - 1) // r))
    assert w.denominator == 1
    return int(w)


def op_counts(k: int, n: int, accumulation, *, beta: Optional[int] = None, r: Optional[int] = None) -> OpCounts:
    accumulation = Accumulation(accumulation)
    beta = compute_beta(n) if beta is None else beta
    r = compute_r(n, beta) if r is None else r
    w = w_count(k, r)
    products = k * (k + 1) // 2
    if accumulation is Accumulation.PER_PRODUCT:
        flushes = products
    elif accumulation is Accumulation.GROUPWISE_SIMPLE:
        flushes = k
    else:
        flushes = w
    return OpCounts(int8_gemms=products, fp64_flushes=flushes, r=r, w=w)


def _check_pair(SA: SplitMatrix, SB: SplitMatrix) -> None:
    if SA.side is not Side.LEFT or SB.side is not Side.RIGHT:
        raise ValueError("expected a left split of A and a right split of B")
    if SA.k != SB.k or SA.beta != SB.beta:
        raise ValueError("splits must share k and beta")
    if SA.shape[1] != SB.shape[0]:
        raise ValueError(f"inner dimensions differ: {SA.shape} x {SB.shape}")


def _exponent_grid(SA: SplitMatrix, SB: SplitMatrix, s: int, t: int) -> np.ndarray:
    return (SA.scale_exponents(s)[:, None] + SB.scale_exponents(t)[None, :]).astype(np.int32)


class _Engine:
    """Shared timing/counting around the INT8 products and FP64 flushes."""

    def __init__(self, SA, SB, mode, stats):
        self.SA, self.SB = SA, SB
        self.mode = OverflowMode(mode)
        self.stats = stats if stats is not None else AccumulationStats()
        self.C = np.zeros((SA.shape[0], SB.shape[1]))
        self.zero32 = np.zeros_like(self.C, dtype=np.int32)

    def product(self, C32, s, t):
        t0 = time.perf_counter()
        out = i8_gemm_accumulate(C32, self.SA.slices[s - 1], self.SB.slices[t - 1], self.mode)
        self.stats.int_gemm_seconds += time.perf_counter() - t0
        self.stats.int8_gemms += 1
        return out

    def flush(self, C32, s, t):
        t0 = time.perf_counter()
        # int32 -> float64 is exact and the power-of-two scaling is exact barring underflow
        self.C += np.ldexp(C32.astype(np.float64), _exponent_grid(self.SA, self.SB, s, t))
        self.stats.accum_seconds += time.perf_counter() - t0
        self.stats.fp64_flushes += 1


def _per_product_groups(SA, SB, mode, stats):
    eng = _Engine(SA, SB, mode, stats)
    for g in range(2, SA.k + 2):
        for s in range(1, g):
            eng.flush(eng.product(eng.zero32, s, g - s), s, g - s)
        yield g, eng.C


def _groupwise_groups(SA, SB, mode, r, stats, on_flush):
    if not (SA.strategy.const_shift and SB.strategy.const_shift):
        raise ConfigurationError("group-wise accumulation needs constant-shift slices")
    eng = _Engine(SA, SB, mode, stats)
    for g in range(2, SA.k + 2):
        q = 0
        C32 = eng.zero32
        pairs = []
        for s in range(1, g):
            q += 1
            C32 = eng.product(C32, s, g - s)
            pairs.append((s, g - s))
            if q == r or s == g - 1:
                if on_flush is not None:
                    on_flush(g, tuple(pairs), C32)
                eng.stats.flushed_pairs.append(tuple(pairs))
                eng.flush(C32, s, g - s)
                q = 0
                C32 = eng.zero32
                pairs = []
        yield g, eng.C


def _last(groups):
    C = None
    for _, C in groups:
        pass
    return C


def _default_r(SA: SplitMatrix, r: Optional[int]) -> int:
    return compute_r(SA.shape[1], SA.beta) if r is None else int(r)


def accumulate_per_product(SA: SplitMatrix, SB: SplitMatrix, mode=OverflowMode.CHECKED, *,
                           stats: Optional[AccumulationStats] = None) -> np.ndarray:
    """Sum every slice product with s + t <= k + 1 into FP64, one flush per product.

    Order is ascending g = s + t, then ascending s.
    """
    _check_pair(SA, SB)
    return _last(_per_product_groups(SA, SB, mode, stats))


def accumulate_groupwise(SA: SplitMatrix, SB: SplitMatrix, mode=OverflowMode.CHECKED, *,
                         r: Optional[int] = None, stats: Optional[AccumulationStats] = None,
                         on_flush: Optional[Callable] = None) -> np.ndarray:
    """Accumulate products of one group (s + t = g) in INT32, flushing to FP64 every r products.

    All products of a group share the scale 2**(2 - beta*g) * mu_i * nu_j, so
    the INT32 chunk sums are exact and only the flushes round. `on_flush`
    receives (g, pairs, C32) just before each flush.
    """
    _check_pair(SA, SB)
    return _last(_groupwise_groups(SA, SB, mode, _default_r(SA, r), stats, on_flush))


def accumulate_groupwise_simple(SA: SplitMatrix, SB: SplitMatrix, mode=OverflowMode.CHECKED, *,
                                r: Optional[int] = None, stats: Optional[AccumulationStats] = None) -> np.ndarray:
    """Group-wise accumulation with exactly one flush per group; requires r >= k."""
    _check_pair(SA, SB)
    r = _default_r(SA, r)
    if r < SA.k:
        raise ConfigurationError(f"simple group-wise accumulation needs r >= k (r={r}, k={SA.k})")
    return _last(_groupwise_groups(SA, SB, mode, SA.k, stats, None))


def split_operands(A, B, cfg: SchemeConfig, timings: Optional[PhaseTimings] = None):
    """Split A row-wise and B column-wise as `cfg` prescribes."""
    A = as_matrix(A)
    B = as_matrix(B)
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"inner dimensions differ: {A.shape} x {B.shape}")
    n = A.shape[1]
    cfg.validate(n)
    beta = cfg.beta_for(n)
    timings = timings if timings is not None else PhaseTimings()
    t0 = time.perf_counter()
    SA = split(A, cfg.k, Side.LEFT, cfg.strategy, beta=beta)
    t1 = time.perf_counter()
    SB = split(B, cfg.k, Side.RIGHT, cfg.strategy, beta=beta)
    t2 = time.perf_counter()
    timings.split_a += t1 - t0
    timings.split_b += t2 - t1
    return SA, SB


def _groups_for(SA, SB, cfg: SchemeConfig, stats):
    n = SA.shape[1]
    if cfg.accumulation is Accumulation.PER_PRODUCT:
        return _per_product_groups(SA, SB, cfg.overflow, stats)
    if cfg.accumulation is Accumulation.GROUPWISE_SIMPLE:
        return _groupwise_groups(SA, SB, cfg.overflow, SA.k, stats, None)
    return _groupwise_groups(SA, SB, cfg.overflow, cfg.r_for(n), stats, None)


def ozaki_mm(A, B, cfg: SchemeConfig, *, threads: Optional[int] = None):
    """Emulated FP64 product A @ B.

    Returns ``(D, OpCounts, PhaseTimings)``. Operation counts are the ones
    observed at run time, not the closed forms.
    """
    timings = PhaseTimings()
    with blas_threads(threads):
        SA, SB = split_operands(A, B, cfg, timings)
        stats = AccumulationStats()
        D = _last(_groups_for(SA, SB, cfg, stats))
    n = SA.shape[1]
    r = cfg.r_for(n)
    timings.int_gemm = stats.int_gemm_seconds
    timings.accum_fp64 = stats.accum_seconds
    counts = OpCounts(int8_gemms=stats.int8_gemms, fp64_flushes=stats.fp64_flushes, r=r, w=w_count(cfg.k, r))
    return D, counts, timings


def ozaki_mm_ks(A, B, cfg: SchemeConfig, ks: Iterable[int], *, threads: Optional[int] = None) -> dict:
    """Results of `ozaki_mm` for several slice counts from one split and one accumulation pass.

    Slices and the accumulation order are prefix-stable in k, so entry k is
    bitwise identical to ``ozaki_mm(A, B, replace(cfg, k=k))[0]``. Returns
    ``{k: (D, OpCounts, PhaseTimings)}``; split times are those of the shared
    split and the other phases are cumulative up to k.
    """
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise ConfigurationError("need at least one k >= 1")
    top = replace(cfg, k=ks[-1])
    for k in ks:
        replace(cfg, k=k).validate(as_matrix(A).shape[1])
    out = {}
    shared = PhaseTimings()
    with blas_threads(threads):
        SA, SB = split_operands(A, B, top, shared)
        n = SA.shape[1]
        r = cfg.r_for(n)
        stats = AccumulationStats()
        want = set(ks)
        for g, C in _groups_for(SA, SB, top, stats):
            k = g - 1
            if k in want:
                t = replace(shared, int_gemm=stats.int_gemm_seconds, accum_fp64=stats.accum_seconds)
                out[k] = (C.copy(), OpCounts(stats.int8_gemms, stats.fp64_flushes, r, w_count(k, r)), t)
    return out


def ozaki_gemm(alpha: float, A, B, beta: float, C, cfg: SchemeConfig, *, threads: Optional[int] = None,
               return_info: bool = False):
    """C <- alpha * (A @ B) + beta * C with the product emulated by `ozaki_mm`.

    Evaluated elementwise as fl(fl(alpha * d) + fl(beta * c)). As in BLAS,
    the product is skipped when alpha == 0 and C is not read when beta == 0.
    """
    A = as_matrix(A)
    B = as_matrix(B)
    C = as_matrix(C)
    if C.shape != (A.shape[0], B.shape[1]):
        raise ValueError(f"C has shape {C.shape}, expected {(A.shape[0], B.shape[1])}")
    alpha, beta = float(alpha), float(beta)
    if alpha != 0.0:
        D, counts, timings = ozaki_mm(A, B, cfg, threads=threads)
    else:
        D, counts, timings = None, OpCounts(0, 0, cfg.r_for(A.shape[1]), 0), PhaseTimings()
    t0 = time.perf_counter()
    if D is None:
        out = beta * C
    elif beta == 0.0:
        out = alpha * D
    else:
        out = alpha * D + beta * C
    timings.copy = time.perf_counter() - t0
    if return_info:
        return out, counts, timings
    return out
