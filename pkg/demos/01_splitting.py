"""
Splitting a float into INT8 slices
==================================

Each strategy turns an FP64 matrix into k INT8 slices plus power-of-two
shifts, and what is left over is kept as an exact residual.
"""

import numpy as np

from ozaki_int8 import Side, SliceStrategy, reconstruct, split

# a 9-bit integer, split into three 3-bit slices
x = np.array([[float(0b101011111)]])

for strategy in SliceStrategy:
    S = split(x, 3, Side.LEFT, strategy, beta=3)
    parts = [float(S.scaled_slice(s)[0, 0]) for s in (1, 2, 3)]
    ints = [int(v[0, 0]) for v in S.slices]
    print(f"{strategy.value:>9}: slices {ints} -> parts {parts}, residual {float(S.residual[0, 0])}")

# the bit-mask slices are plain binary digits; round-to-nearest slices may be
# negative, which lets them use the sign bit and carry one more bit of value

# on a real matrix the split is exact: slices + residual give back A bitwise
rng = np.random.default_rng(0)
A = rng.standard_normal((5, 7)) * 2.0 ** rng.integers(-20, 20, (5, 7))
for strategy in SliceStrategy:
    for k in (1, 4, 8):
        S = split(A, k, Side.LEFT, strategy)
        back = reconstruct(S) + S.residual
        rel = np.max(np.abs(S.residual)) / np.max(np.abs(A))
        print(f"{strategy.value:>9} k={k}: exact={back.tobytes() == A.tobytes()}  max|residual|/max|A| = {rel:.2e}")
