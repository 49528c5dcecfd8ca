"""FP64 matrix multiplication emulated with the Ozaki scheme on an exact INT8 matrix-unit model."""
from __future__ import annotations

from .analysis import ErrorBundle, accum_bound, kprime_max, total_bound, trunc_bound
from .intgemm import Int32OverflowError, OverflowMode, compute_r, i8_gemm, i8_gemm_accumulate
from .matrix import gen_phi_matrix, load_matrix, save_matrix, ufp, ufp_vectors
from .oracle import exact_gemm_oracle, exact_residual, fp64_gemm_reference, max_rel_err
from .scheme import (
    METHODS,
    Accumulation,
    ConfigurationError,
    OpCounts,
    SchemeConfig,
    op_counts,
    ozaki_gemm,
    ozaki_mm,
    ozaki_mm_ks,
    w_count,
)
from .splitter import (
    Side,
    SliceStrategy,
    SplitMatrix,
    compute_beta,
    reconstruct,
    split,
    split_bitmask,
    split_rn_const_shift,
    split_round_nearest,
)

__version__ = "0.1.0"

__all__ = [
    "ErrorBundle", "accum_bound", "kprime_max", "total_bound", "trunc_bound",
    "Int32OverflowError", "OverflowMode", "compute_r", "i8_gemm", "i8_gemm_accumulate",
    "gen_phi_matrix", "load_matrix", "save_matrix", "ufp", "ufp_vectors",
    "exact_gemm_oracle", "exact_residual", "fp64_gemm_reference", "max_rel_err",
    "METHODS", "Accumulation", "ConfigurationError", "OpCounts", "SchemeConfig",
    "op_counts", "ozaki_gemm", "ozaki_mm", "ozaki_mm_ks", "w_count",
    "Side", "SliceStrategy", "SplitMatrix", "compute_beta", "reconstruct", "split",
    "split_bitmask", "split_rn_const_shift", "split_round_nearest",
]
