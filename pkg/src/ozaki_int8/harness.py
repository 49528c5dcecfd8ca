"""Sweep, count and bound-verification drivers behind the command line.

Everything numeric is delegated to the library modules; this layer only
generates inputs, orders records and formats them.
"""
from __future__ import annotations

import csv
import io
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .analysis import abs_product, kprime_max, total_bound
from .matrix import gen_phi_matrix
from .oracle import exact_gemm_oracle, exact_residual, fp64_gemm_reference, max_rel_err
from .scheme import METHODS, SchemeConfig, op_counts, ozaki_mm_ks

__all__ = [
    "CSV_COLUMNS",
    "FP64",
    "SweepRecord",
    "trial_matrices",
    "sweep",
    "write_csv",
    "plot_data",
    "counts_report",
    "BoundCell",
    "verify_bounds",
]

CSV_COLUMNS = (
    "n", "phi", "k", "method", "seed", "max_rel_err", "int8_gemms", "fp64_flushes",
    "r", "w", "kprime_max", "t_split_a", "t_split_b", "t_int_gemm", "t_accum", "t_copy",
)
TIMING_COLUMNS = CSV_COLUMNS[-5:]
FP64 = "FP64"


@dataclass(frozen=True)
class SweepRecord:
    n: int
    phi: float
    k: Optional[int]
    method: str
    seed: int
    max_rel_err: float
    int8_gemms: int = 0
    fp64_flushes: int = 0
    r: Optional[int] = None
    w: Optional[int] = None
    kprime_max: Optional[int] = None
    t_split_a: float = 0.0
    t_split_b: float = 0.0
    t_int_gemm: float = 0.0
    t_accum: float = 0.0
    t_copy: float = 0.0

    def row(self) -> list:
        def cell(v):
            if v is None:
                return ""
            return repr(float(v)) if isinstance(v, float) else str(v)

        return [cell(getattr(self, c)) for c in CSV_COLUMNS]


def trial_matrices(n: int, phi: float, seed: int):
    """The (A, B) pair used for one trial: both n x n, keyed by seed."""
    return gen_phi_matrix(n, n, phi, 2 * seed), gen_phi_matrix(n, n, phi, 2 * seed + 1)


def _pool_size(workers: Optional[int]) -> int:
    if workers is None:
        env = os.environ.get("OZMM_THREADS")
        workers = int(env) if env else 1
    return max(1, int(workers))


def _ordered_map(fn, cells: Sequence, workers: Optional[int]) -> list:
    # executor.map yields in submission order whatever the completion order
    size = _pool_size(workers)
    if size == 1:
        return [fn(c) for c in cells]
    with ThreadPoolExecutor(max_workers=size) as pool:
        return list(pool.map(fn, cells))


def _sweep_cell(args) -> list:
    n, phi, seed, ks, methods, cfg_kw = args
    A, B = trial_matrices(n, phi, seed)
    R = exact_gemm_oracle(A, B)
    out = [SweepRecord(n=n, phi=phi, k=None, method=FP64, seed=seed,
                       max_rel_err=max_rel_err(fp64_gemm_reference(A, B), R))]
    for method in methods:
        cfg = SchemeConfig.for_method(method, max(ks), **cfg_kw)
        beta = cfg.beta_for(n)
        kp = kprime_max(n, beta)
        for k, (D, counts, t) in ozaki_mm_ks(A, B, cfg, ks).items():
            out.append(SweepRecord(
                n=n, phi=phi, k=k, method=method, seed=seed, max_rel_err=max_rel_err(D, R),
                int8_gemms=counts.int8_gemms, fp64_flushes=counts.fp64_flushes,
                r=counts.r, w=counts.w, kprime_max=kp,
                t_split_a=t.split_a, t_split_b=t.split_b, t_int_gemm=t.int_gemm,
                t_accum=t.accum_fp64, t_copy=t.copy,
            ))
    return out


def sweep(ns: Iterable[int], phis: Iterable[float], ks: Iterable[int], methods: Iterable[str],
          trials: int, seed: int, *, workers: Optional[int] = None, **cfg_kw) -> list:
    """Accuracy records for every (n, phi, trial), with one FP64 baseline row each.

    Trial t uses seed + t. Rows come out ordered by n, phi, trial, then
    method and k, independent of how many workers run the cells.
    """
    ks = sorted(set(int(k) for k in ks))
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    cells = [(int(n), float(phi), seed + t, ks, methods, cfg_kw)
             for n in ns for phi in phis for t in range(trials)]
    return [rec for chunk in _ordered_map(_sweep_cell, cells, workers) for rec in chunk]


def write_csv(records: Iterable[SweepRecord], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in records:
        w.writerow(rec.row())


def plot_data(records: Iterable[SweepRecord]) -> str:
    """Median max_rel_err per (n, phi, method, k) as whitespace-separated columns."""
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec.n, rec.phi, rec.method, rec.k), []).append(rec.max_rel_err)
    buf = io.StringIO()
    buf.write("# n phi method k median_max_rel_err trials\n")
    for (n, phi, method, k), errs in groups.items():
        kk = "-" if k is None else str(k)
        buf.write(f"{n} {phi!r} {method} {kk} {statistics.median(errs)!r} {len(errs)}\n")
    return buf.getvalue()


def counts_report(n: int, k: int, method: str, **cfg_kw) -> dict:
    cfg = SchemeConfig.for_method(method, k, **cfg_kw)
    cfg.validate(n)
    beta = cfg.beta_for(n)
    c = op_counts(k, n, cfg.accumulation, beta=beta, r=cfg.r_for(n))
    per_product = k * (k + 1) // 2
    return {
        "n": n, "k": k, "method": method, "beta": beta, "r": c.r, "w": c.w,
        "kprime_max": kprime_max(n, beta), "int8_gemms": c.int8_gemms,
        "fp64_flushes": c.fp64_flushes, "flush_ratio": c.fp64_flushes / per_product,
    }


@dataclass(frozen=True)
class BoundCell:
    n: int
    phi: float
    k: int
    method: str
    max_ratio: float
    worst_seed: int

    @property
    def ok(self) -> bool:
        return self.max_ratio <= 1.0


def _ratio(err: np.ndarray, bound: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(err == 0.0, 0.0, err / bound)
    return float(np.max(q))


def _bound_trial(args) -> dict:
    n, phi, seed, ks, methods, inject, cfg_kw = args
    A, B = trial_matrices(n, phi, seed)
    absAB = abs_product(A, B)
    out = {}
    for method in methods:
        cfg = SchemeConfig.for_method(method, max(ks), **cfg_kw)
        for k, (D, _, _) in ozaki_mm_ks(A, B, cfg, ks).items():
            bundle = total_bound(A, B, SchemeConfig.for_method(method, k, **cfg_kw), absAB=absAB)
            if inject:
                # negative control: push one entry well past its bound
                D = D.copy()
                D[0, 0] += 4.0 * bundle.total_bound[0, 0] + abs(D[0, 0]) + 1.0
            out[(method, k)] = _ratio(np.abs(exact_residual(D, A, B)), bundle.total_bound)
    return out


def verify_bounds(ns: Iterable[int], phis: Iterable[float], ks: Iterable[int], trials: int, seed: int,
                  methods: Optional[Iterable[str]] = None, *, workers: Optional[int] = None,
                  inject_error: bool = False, **cfg_kw) -> list:
    """Largest observed |AB - D| / total_bound per (n, phi, k, method) over the trials."""
    ks = sorted(set(int(k) for k in ks))
    methods = list(methods) if methods is not None else list(METHODS)
    cells = []
    keys = []
    for n in ns:
        for phi in phis:
            keys.append((int(n), float(phi)))
            cells.extend((int(n), float(phi), seed + t, ks, methods, inject_error, cfg_kw) for t in range(trials))
    results = _ordered_map(_bound_trial, cells, workers)
    report = []
    for idx, (n, phi) in enumerate(keys):
        chunk = results[idx * trials:(idx + 1) * trials]
        for method in methods:
            for k in ks:
                ratios = [res[(method, k)] for res in chunk]
                worst = int(np.argmax(ratios))
                report.append(BoundCell(n, phi, k, method, ratios[worst], seed + worst))
    return report
