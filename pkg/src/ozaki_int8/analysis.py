"""Deterministic error bounds for the emulated product and helpers to check them."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .matrix import UfpVectors, as_matrix, ufp_vectors
from .oracle import exact_gemm_oracle
from .scheme import Accumulation, SchemeConfig, op_counts, w_count

__all__ = [
    "U",
    "HEADROOM",
    "BoundVariant",
    "ErrorBundle",
    "trunc_bound",
    "kprime_max",
    "accum_coefficient",
    "accum_bound",
    "abs_product",
    "bound_variant",
    "total_bound",
]

U = 2.0**-53
HEADROOM = 1.0 + 2.0**-40


class BoundVariant(enum.Enum):
    NAIVE = "naive"
    IMPROVED = "improved"
    GROUPWISE = "groupwise"


@dataclass(frozen=True)
class ErrorBundle:
    beta: int
    k: int
    r: int
    kprime_max: int
    w: int
    u: float
    trunc_bound: np.ndarray
    accum_bound: np.ndarray
    total_bound: np.ndarray
    variant: BoundVariant = BoundVariant.NAIVE
    sqrt_n_u: float = 0.0  # informational only


def trunc_bound(k: int, beta: int, uf: UfpVectors, n: int) -> np.ndarray:
    """4 (k+1) n 2**(-beta k) g_i f_j, evaluated with exact power-of-two scaling."""
    g = np.asarray(uf.g, dtype=np.float64)
    f = np.asarray(uf.f, dtype=np.float64)
    _, eg = np.frexp(g)
    _, ef = np.frexp(f)
    exps = (eg - 1)[:, None] + (ef - 1)[None, :] - beta * k
    with np.errstate(under="ignore"):
        out = np.ldexp(float(4 * (k + 1) * n), exps.astype(np.int64).clip(-2000, 2000))
    out[(g == 0.0)[:, None] | (f == 0.0)[None, :]] = 0.0
    return out


def kprime_max(n: int, beta: int) -> int:
    """Largest k' whose leading group sums are exact in FP64 (at least 1).

    The condition 2u * ufp(8n) <= 2**(2 - beta (k'+1)) is compared on exponents:
    beta (k'+1) <= 54 - floor(log2(8n)).
    """
    n, beta = int(n), int(beta)
    if n < 1 or beta < 1:
        raise ValueError("n and beta must be positive")
    if beta < 3:
        return 1
    budget = 54 - (8 * n).bit_length() + 1
    return max(1, budget // beta - 1)


def accum_coefficient(k: int, variant, kprime: Optional[int] = None, w: Optional[int] = None) -> Fraction:
    """Integer multiplier of u |A||B| for the FP64 accumulation error."""
    variant = BoundVariant(variant)
    products = Fraction(k * (k + 1), 2)
    if variant is BoundVariant.NAIVE:
        c = products - 1
    elif variant is BoundVariant.IMPROVED:
        if kprime is None:
            raise ValueError("improved variant needs kprime")
        kp = min(int(kprime), k)
        # the first kp(kp+1)/2 terms sum exactly; every later addition may round
        c = products - Fraction(kp * (kp + 1), 2)
    else:
        if w is None:
            raise ValueError("group-wise variant needs w")
        c = Fraction(w) - 1
    return max(c, Fraction(0))


def accum_bound(k: int, variant, params: Optional[dict] = None, absAB=None) -> np.ndarray:
    """coefficient * u * |A||B| elementwise; `params` may carry ``kprime`` and ``w``."""
    params = params or {}
    c = accum_coefficient(k, variant, params.get("kprime"), params.get("w"))
    absAB = np.asarray(absAB, dtype=np.float64)
    return float(c) * U * absAB


def abs_product(A, B, exact: bool = True) -> np.ndarray:
    """|A| |B|, either correctly rounded or via FP64 GEMM nudged upward."""
    A = np.abs(as_matrix(A))
    B = np.abs(as_matrix(B))
    if exact:
        return exact_gemm_oracle(A, B)
    n = A.shape[1]
    # nonnegative sums: any evaluation order is within a factor 1 + n u of the truth
    return (A @ B) * (1.0 + max(2.0**-40, 2.0 * (n + 2) * U))


def bound_variant(cfg: SchemeConfig) -> BoundVariant:
    if cfg.accumulation is not Accumulation.PER_PRODUCT:
        return BoundVariant.GROUPWISE
    # exact leading sums need every slice on a fixed per-row grid
    return BoundVariant.IMPROVED if cfg.strategy.const_shift else BoundVariant.NAIVE


def total_bound(A, B, cfg: SchemeConfig, *, exact: bool = True, absAB=None) -> ErrorBundle:
    """Elementwise bound on |AB - ozaki_mm(A, B, cfg)|."""
    A = as_matrix(A)
    B = as_matrix(B)
    n = A.shape[1]
    cfg.validate(n)
    beta = cfg.beta_for(n)
    r = cfg.r_for(n)
    k = cfg.k
    kp = kprime_max(n, beta)
    counts = op_counts(k, n, cfg.accumulation, beta=beta, r=r)
    variant = bound_variant(cfg)
    if absAB is None:
        absAB = abs_product(A, B, exact=exact)
    tb = trunc_bound(k, beta, ufp_vectors(A, B), n)
    ab = accum_bound(k, variant, {"kprime": kp, "w": counts.fp64_flushes}, absAB)
    total = (tb + ab) * HEADROOM
    return ErrorBundle(
        beta=beta, k=k, r=r, kprime_max=kp, w=w_count(k, r), u=U,
        trunc_bound=tb, accum_bound=ab, total_bound=total,
        variant=variant, sqrt_n_u=math.sqrt(n) * U,
    )
