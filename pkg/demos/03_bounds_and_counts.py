"""
Error bounds and operation counts
=================================

The deterministic bound versus the measured error, and how group-wise
accumulation cuts the number of FP64 accumulations.
"""

import numpy as np

from ozaki_int8 import SchemeConfig, exact_residual, gen_phi_matrix, harness, ozaki_mm, total_bound

n = 512
A = gen_phi_matrix(64, n, 1.0, 1)
B = gen_phi_matrix(n, 64, 1.0, 2)

print("method      k   max |err|/bound   trunc part   accum part")
for method in harness.METHODS:
    for k in (4, 8, 12):
        cfg = SchemeConfig.for_method(method, k)
        D, _, _ = ozaki_mm(A, B, cfg)
        b = total_bound(A, B, cfg)
        err = np.abs(exact_residual(D, A, B))
        ratio = np.max(err / b.total_bound)
        print(f"{method:>10} {k:3d}   {ratio:15.3e}   {b.trunc_bound.max():.2e}     {b.accum_bound.max():.2e}")

# INT8 products are the same for every method; only the FP64 accumulation
# count changes, and with r products per INT32 chunk it falls to w
print()
print("    n   k   r   int8 GEMMs   flushes (per product)   flushes (group-wise)")
for n, k in ((1024, 8), (1024, 12), (2**14, 12), (2**17, 12)):
    pp = harness.counts_report(n, k, "ozIMMU")
    gw = harness.counts_report(n, k, "ozIMMU_EF")
    print(f"{n:6d} {k:3d} {gw['r']:4d} {pp['int8_gemms']:10d} {pp['fp64_flushes']:20d} {gw['fp64_flushes']:20d}")
