"""Command-line front end: ``ozaki-int8 {gemm,sweep,counts,verify-bounds}``."""
from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

import numpy as np

from . import harness
from .analysis import kprime_max
from .intgemm import Int32OverflowError, OverflowMode
from .matrix import load_matrix, save_matrix
from .scheme import METHODS, ConfigurationError, SchemeConfig, ozaki_gemm, split_operands
from .splitter import dump_split


class _Fail(Exception):
    def __init__(self, msg: str, code: int = 2):
        super().__init__(msg)
        self.code = code


def _int_list(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _float_list(text: str) -> list:
    try:
        out = [float(p) for p in text.split(",") if p.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _method_list(text: str) -> list:
    names = list(METHODS) if text == "all" else [p.strip() for p in text.split(",") if p.strip()]
    for n in names:
        if n not in METHODS:
            raise argparse.ArgumentTypeError(f"unknown method {n!r}; choose from {', '.join(METHODS)}")
    return names


def _cfg_kwargs(args) -> dict:
    return {
        "overflow": OverflowMode(args.overflow_mode),
        "force_beta": args.force_beta,
        "force_r": args.force_r,
    }


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--overflow-mode", choices=[m.value for m in OverflowMode], default="checked")
    p.add_argument("--force-beta", type=int, default=None, help="override beta (testing only)")
    p.add_argument("--force-r", type=int, default=None, help="override r (testing only)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ozaki-int8", description="FP64 GEMM emulation on an exact INT8 unit model")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gemm", help="C <- alpha*A@B + beta*C on OZMM files")
    g.add_argument("a", help="OZMM file holding A")
    g.add_argument("b", help="OZMM file holding B")
    g.add_argument("--c", dest="c_in", default=None, help="OZMM file holding C (needed when --beta != 0)")
    g.add_argument("--out", "-o", required=True)
    g.add_argument("--k", type=int, default=8)
    g.add_argument("--method", choices=list(METHODS), default="ozIMMU_H")
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--beta", type=float, default=0.0)
    g.add_argument("--threads", type=int, default=None)
    g.add_argument("--dump-splits", default=None, help=argparse.SUPPRESS)
    _add_config_flags(g)

    s = sub.add_parser("sweep", help="accuracy and count records as CSV")
    s.add_argument("--n", type=_int_list, default=[256])
    s.add_argument("--phi", type=_float_list, default=[0.5])
    s.add_argument("--k", type=_int_list, default=list(range(4, 13)))
    s.add_argument("--method", type=_method_list, default=list(METHODS))
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", "-o", default="-", help="CSV path, '-' for standard output")
    s.add_argument("--plot-data", default=None, help="also write per-cell medians to this path ('-' for stdout)")
    s.add_argument("--workers", type=int, default=None)
    _add_config_flags(s)

    c = sub.add_parser("counts", help="derived constants and operation counts")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--method", choices=list(METHODS), default="ozIMMU_EF")
    _add_config_flags(c)

    v = sub.add_parser("verify-bounds", help="check measured error against the deterministic bound")
    v.add_argument("--n", type=_int_list, default=[64])
    v.add_argument("--phi", type=_float_list, default=[0.0, 0.5, 1.0, 2.0])
    v.add_argument("--k", type=_int_list, default=list(range(2, 11)))
    v.add_argument("--method", type=_method_list, default=list(METHODS))
    v.add_argument("--trials", type=int, default=20)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--workers", type=int, default=None)
    v.add_argument("--inject-error", action="store_true", help=argparse.SUPPRESS)
    _add_config_flags(v)
    return parser


def _load(path: str) -> np.ndarray:
    try:
        return load_matrix(path)
    except FileNotFoundError:
        raise _Fail(f"no such file: {path}") from None
    except OSError as e:
        raise _Fail(f"cannot read {path}: {e}") from None
    except ValueError as e:
        raise _Fail(f"{path}: {e}") from None


def cmd_gemm(args) -> int:
    A = _load(args.a).astype(np.float64)
    B = _load(args.b).astype(np.float64)
    if args.beta != 0.0:
        if args.c_in is None:
            raise _Fail("--c is required when --beta is nonzero")
        C = _load(args.c_in).astype(np.float64)
    else:
        C = np.zeros((A.shape[0], B.shape[1]))
    cfg = SchemeConfig.for_method(args.method, args.k, **_cfg_kwargs(args))
    if args.dump_splits:
        SA, SB = split_operands(A, B, cfg)
        dump_split(SA, args.dump_splits)
        dump_split(SB, args.dump_splits)
    out, counts, timings = ozaki_gemm(args.alpha, A, B, args.beta, C, cfg, threads=args.threads, return_info=True)
    try:
        save_matrix(args.out, out)
    except OSError as e:
        raise _Fail(f"cannot write {args.out}: {e}") from None
    n = A.shape[1]
    beta = cfg.beta_for(n)
    record = {
        "method": args.method, "k": args.k, "m": A.shape[0], "n": n, "p": B.shape[1],
        "beta": beta, "r": counts.r, "w": counts.w, "kprime_max": kprime_max(n, beta),
        "int8_gemms": counts.int8_gemms, "fp64_flushes": counts.fp64_flushes,
        "timings": {
            "split_a": timings.split_a, "split_b": timings.split_b, "int_gemm": timings.int_gemm,
            "accum_fp64": timings.accum_fp64, "copy": timings.copy,
        },
        "out": args.out,
    }
    print(json.dumps(record))
    return 0


def _write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


def cmd_sweep(args) -> int:
    records = harness.sweep(args.n, args.phi, args.k, args.method, args.trials, args.seed,
                            workers=args.workers, **_cfg_kwargs(args))
    if args.out == "-":
        harness.write_csv(records, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            harness.write_csv(records, fh)
    if args.plot_data:
        _write_text(args.plot_data, harness.plot_data(records))
    return 0


def cmd_counts(args) -> int:
    print(json.dumps(harness.counts_report(args.n, args.k, args.method, **_cfg_kwargs(args))))
    return 0


def cmd_verify_bounds(args) -> int:
    report = harness.verify_bounds(args.n, args.phi, args.k, args.trials, args.seed, args.method,
                                   workers=args.workers, inject_error=args.inject_error, **_cfg_kwargs(args))
    print("n phi k method max_ratio worst_seed status")
    bad = []
    for cell in report:
        status = "ok" if cell.ok else "VIOLATION"
        print(f"{cell.n} {cell.phi!r} {cell.k} {cell.method} {cell.max_ratio:.3e} {cell.worst_seed} {status}")
        if not cell.ok:
            bad.append(cell)
    for cell in bad:
        print(f"bound violated: n={cell.n} phi={cell.phi} k={cell.k} method={cell.method} "
              f"ratio={cell.max_ratio:.3e} seed={cell.worst_seed}", file=sys.stderr)
    return 1 if bad else 0


_COMMANDS = {"gemm": cmd_gemm, "sweep": cmd_sweep, "counts": cmd_counts, "verify-bounds": cmd_verify_bounds}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _Fail as e:
        print(f"ozaki-int8: {e}", file=sys.stderr)
        return e.code
    except (ConfigurationError, Int32OverflowError, ValueError) as e:
        print(f"ozaki-int8: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
