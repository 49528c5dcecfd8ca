"""
Accuracy against the number of slices
=====================================

Median max relative error of the four methods as k grows, next to a plain
FP64 GEMM, on random matrices whose spread is set by phi.
"""

import statistics

from ozaki_int8 import harness

n, phi, trials = 256, 0.5, 5
ks = list(range(3, 11))
records = harness.sweep([n], [phi], ks, list(harness.METHODS), trials, seed=0)

med = {}
for rec in records:
    med.setdefault((rec.method, rec.k), []).append(rec.max_rel_err)
med = {key: statistics.median(v) for key, v in med.items()}

print(f"n={n} phi={phi}, median over {trials} seeds")
print(f"{'method':>10} " + " ".join(f"{'k=' + str(k):>9}" for k in ks))
for method in harness.METHODS:
    print(f"{method:>10} " + " ".join(f"{med[(method, k)]:9.2e}" for k in ks))
print(f"{'FP64':>10} {med[(harness.FP64, None)]:9.2e}")

# the error drops by roughly 2**-7 per extra slice until it meets the FP64
# level; round-to-nearest slicing usually needs about one slice fewer
