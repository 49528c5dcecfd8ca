"""Dense matrix helpers, ufp machinery, phi-matrix generation and the OZMM file format.

Matrices are plain 2-D, C-ordered numpy arrays. Four element kinds are
supported: float64, int8, int32 and int64.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from os import PathLike
from typing import BinaryIO, Union

import numpy as np

__all__ = [
    "ELEMENT_KINDS",
    "UfpVectors",
    "as_matrix",
    "ufp",
    "ufp_array",
    "ufp_vectors",
    "gen_phi_matrix",
    "save_matrix",
    "load_matrix",
    "write_matrix",
    "read_matrix",
]

# OZMM element-kind codes
ELEMENT_KINDS: dict[int, np.dtype] = {
    0: np.dtype("<f8"),
    1: np.dtype("i1"),
    2: np.dtype("<i4"),
    3: np.dtype("<i8"),
}
_KIND_OF = {dt.newbyteorder("="): code for code, dt in ELEMENT_KINDS.items()}

MAGIC = b"OZMM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sBB6sQQ")


def as_matrix(x, dtype=np.float64) -> np.ndarray:
    """Return `x` as a C-contiguous 2-D array of `dtype`, validating the shape."""
    a = np.ascontiguousarray(x, dtype=dtype)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"matrix must have at least one row and column, got {a.shape}")
    return a


def _require_finite(a: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")


def ufp(c: float) -> float:
    """Unit in the first place: 0 for 0, else the power of two 2**e with 2**e <= |c| < 2**(e+1).

    Uses exponent extraction rather than a logarithm.
    """
    c = float(c)
    if not math.isfinite(c):
        raise ValueError(f"ufp is undefined for non-finite input {c!r}")
    if c == 0.0:
        return 0.0
    _, e = math.frexp(c)
    return math.ldexp(1.0, e - 1)


def ufp_array(x: np.ndarray) -> np.ndarray:
    """Elementwise ufp of a float64 array."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("ufp is undefined for non-finite input")
    _, e = np.frexp(x)
    out = np.ldexp(np.ones_like(x), e - 1)
    out[x == 0.0] = 0.0
    return out


@dataclass(frozen=True)
class UfpVectors:
    """Row-wise ufp of max|A| (``g``) and column-wise ufp of max|B| (``f``)."""

    g: np.ndarray
    f: np.ndarray


def ufp_vectors(A, B) -> UfpVectors:
    A = as_matrix(A)
    B = as_matrix(B)
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"inner dimensions differ: {A.shape} x {B.shape}")
    g = ufp_array(np.max(np.abs(A), axis=1))
    f = ufp_array(np.max(np.abs(B), axis=0))
    return UfpVectors(g=g, f=f)


def gen_phi_matrix(m: int, n: int, phi: float, seed: int) -> np.ndarray:
    """Random test matrix with entries (U - 0.5) * exp(phi * N).

    U is uniform on the open interval (0, 1) and N is standard normal. Both
    come from numpy's counter-based Philox generator keyed by `seed`: U takes
    the top 53 bits of one 64-bit draw as (i + 0.5) / 2**53, and N is formed
    by Box-Muller from two further draws of the same kind. Output is
    bitwise reproducible on one platform; libm differences in log/cos/exp
    may change low bits across platforms.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    if not (phi >= 0.0):
        raise ValueError("phi must be non-negative")
    bitgen = np.random.Philox(int(seed) % (1 << 64))
    raw = bitgen.random_raw(3 * m * n).astype(np.uint64).reshape(3, m, n)
    unit = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    u, u1, u2 = unit
    normal = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    return np.ascontiguousarray((u - 0.5) * np.exp(phi * normal))


# --- OZMM container -------------------------------------------------------

def write_matrix(fh: BinaryIO, a: np.ndarray) -> None:
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError("only 2-D matrices can be stored")
    try:
        code = _KIND_OF[a.dtype.newbyteorder("=")]
    except KeyError:
        raise ValueError(f"unsupported element kind {a.dtype}") from None
    rows, cols = a.shape
    fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, code, bytes(6), rows, cols))
    fh.write(np.ascontiguousarray(a, dtype=ELEMENT_KINDS[code]).tobytes())


def read_matrix(fh: BinaryIO) -> np.ndarray:
    header = fh.read(_HEADER.size)
    if len(header) != _HEADER.size:
        raise ValueError("truncated OZMM header")
    magic, version, code, reserved, rows, cols = _HEADER.unpack(header)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}, not an OZMM file")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported OZMM version {version}")
    if code not in ELEMENT_KINDS:
        raise ValueError(f"unknown element kind code {code}")
    if reserved != bytes(6):
        raise ValueError("reserved header bytes must be zero")
    if rows < 1 or cols < 1:
        raise ValueError(f"invalid shape {rows}x{cols}")
    dtype = ELEMENT_KINDS[code]
    nbytes = rows * cols * dtype.itemsize
    payload = fh.read(nbytes)
    if len(payload) != nbytes:
        raise ValueError("truncated OZMM payload")
    a = np.frombuffer(payload, dtype=dtype).reshape(rows, cols)
    return a.astype(dtype.newbyteorder("="), copy=True)


def save_matrix(path: Union[str, PathLike], a: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_matrix(fh, a)


def load_matrix(path: Union[str, PathLike]) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_matrix(fh)
