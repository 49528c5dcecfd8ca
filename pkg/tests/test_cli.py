from __future__ import annotations

import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from ozaki_int8 import harness
from ozaki_int8.cli import main
from ozaki_int8.matrix import gen_phi_matrix, load_matrix, save_matrix
from ozaki_int8.scheme import SchemeConfig, ozaki_gemm


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_counts_json(capsys):
    code, out, _ = run(capsys, "counts", "--n", "1024", "--k", "8", "--method", "ozIMMU_EF")
    assert code == 0
    rec = json.loads(out)
    assert (rec["beta"], rec["r"], rec["w"], rec["int8_gemms"], rec["fp64_flushes"]) == (7, 128, 8, 36, 8)
    assert rec["kprime_max"] == 4
    assert rec["flush_ratio"] == pytest.approx(8 / 36)


def test_counts_large_n_and_forced_r(capsys):
    _, out, _ = run(capsys, "counts", "--n", str(2**17), "--k", "8")
    assert json.loads(out)["r"] == 1 and json.loads(out)["fp64_flushes"] == 36
    _, out, _ = run(capsys, "counts", "--n", "64", "--k", "8", "--force-r", "3")
    assert json.loads(out)["fp64_flushes"] == 15


def test_counts_rejects_bad_r(capsys):
    code, _, err = run(capsys, "counts", "--n", "1024", "--k", "8", "--force-r", "0")
    assert code == 2 and err


def _sweep_rows(capsys, *extra):
    code, out, _ = run(capsys, "sweep", "--n", "32", "--phi", "0.5", "--k", "4,6", "--method", "ozIMMU_H",
                       "--trials", "2", "--seed", "3", *extra)
    assert code == 0
    return list(csv.reader(io.StringIO(out)))


def test_sweep_header_and_rows(capsys):
    rows = _sweep_rows(capsys)
    assert tuple(rows[0]) == harness.CSV_COLUMNS
    body = rows[1:]
    assert len(body) == 6
    assert [(r[2], r[3], r[4]) for r in body] == [
        ("", "FP64", "3"), ("4", "ozIMMU_H", "3"), ("6", "ozIMMU_H", "3"),
        ("", "FP64", "4"), ("4", "ozIMMU_H", "4"), ("6", "ozIMMU_H", "4"),
    ]
    fp64 = body[0]
    assert fp64[8:11] == ["", "", ""]
    assert body[1][8:11] == ["4096", "4", "5"]


def test_sweep_deterministic_except_timings(capsys):
    ncols = len(harness.CSV_COLUMNS) - len(harness.TIMING_COLUMNS)
    a = [r[:ncols] for r in _sweep_rows(capsys)]
    b = [r[:ncols] for r in _sweep_rows(capsys, "--workers", "3")]
    assert a == b


def test_sweep_matches_api(capsys):
    rows = _sweep_rows(capsys)[1:]
    A, B = harness.trial_matrices(32, 0.5, 3)
    from ozaki_int8.oracle import exact_gemm_oracle, max_rel_err
    from ozaki_int8.scheme import ozaki_mm

    D, _, _ = ozaki_mm(A, B, SchemeConfig.for_method("ozIMMU_H", 6))
    assert float(rows[2][5]) == max_rel_err(D, exact_gemm_oracle(A, B))


def test_sweep_files_and_plot_data(tmp_path, capsys):
    out = tmp_path / "s.csv"
    plot = tmp_path / "p.dat"
    code, _, _ = run(capsys, "sweep", "--n", "16", "--phi", "0,1", "--k", "3..4", "--method", "all",
                     "--trials", "3", "--out", str(out), "--plot-data", str(plot))
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert len(rows) == 1 + 2 * 3 * (1 + 4 * 2)
    lines = [ln for ln in plot.read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 2 * (1 + 4 * 2)
    assert all(ln.split()[-1] == "3" for ln in lines)


def test_sweep_bad_method_exits_2():
    with pytest.raises(SystemExit) as info:
        main(["sweep", "--method", "nope"])
    assert info.value.code == 2


def test_gemm_roundtrip(tmp_path, capsys):
    A = gen_phi_matrix(7, 20, 1.0, 1)
    B = gen_phi_matrix(20, 5, 1.0, 2)
    C = gen_phi_matrix(7, 5, 1.0, 3)
    for name, M in (("a", A), ("b", B), ("c", C)):
        save_matrix(tmp_path / f"{name}.ozmm", M)
    out = tmp_path / "out.ozmm"
    code, text, _ = run(capsys, "gemm", str(tmp_path / "a.ozmm"), str(tmp_path / "b.ozmm"), "--c",
                        str(tmp_path / "c.ozmm"), "-o", str(out), "--k", "6", "--method", "ozIMMU_RN",
                        "--alpha", "2", "--beta", "-0.5")
    assert code == 0
    rec = json.loads(text)
    assert (rec["m"], rec["n"], rec["p"], rec["int8_gemms"]) == (7, 20, 5, 21)
    want = ozaki_gemm(2.0, A, B, -0.5, C, SchemeConfig.for_method("ozIMMU_RN", 6))
    assert load_matrix(out).tobytes() == want.tobytes()


def test_gemm_alpha_zero_returns_scaled_c(tmp_path, capsys):
    C = gen_phi_matrix(4, 4, 0.5, 9)
    save_matrix(tmp_path / "a.ozmm", np.eye(4))
    save_matrix(tmp_path / "c.ozmm", C)
    out = tmp_path / "o.ozmm"
    code, _, _ = run(capsys, "gemm", str(tmp_path / "a.ozmm"), str(tmp_path / "a.ozmm"), "--c",
                     str(tmp_path / "c.ozmm"), "-o", str(out), "--alpha", "0", "--beta", "1")
    assert code == 0
    assert load_matrix(out).tobytes() == C.tobytes()


def test_gemm_identity_exact(tmp_path, capsys):
    B = gen_phi_matrix(8, 3, 0.0, 4)
    save_matrix(tmp_path / "i.ozmm", np.eye(8))
    save_matrix(tmp_path / "b.ozmm", B)
    out = tmp_path / "o.ozmm"
    assert run(capsys, "gemm", str(tmp_path / "i.ozmm"), str(tmp_path / "b.ozmm"), "-o", str(out), "--k", "9")[0] == 0
    assert load_matrix(out).tobytes() == B.tobytes()


def test_gemm_errors(tmp_path, capsys):
    save_matrix(tmp_path / "a.ozmm", np.eye(3))
    code, _, err = run(capsys, "gemm", str(tmp_path / "missing.ozmm"), str(tmp_path / "a.ozmm"), "-o",
                       str(tmp_path / "o.ozmm"))
    assert code == 2 and "no such file" in err
    (tmp_path / "junk.ozmm").write_bytes(b"not a matrix")
    code, _, _ = run(capsys, "gemm", str(tmp_path / "junk.ozmm"), str(tmp_path / "a.ozmm"), "-o",
                     str(tmp_path / "o.ozmm"))
    assert code == 2
    code, _, err = run(capsys, "gemm", str(tmp_path / "a.ozmm"), str(tmp_path / "a.ozmm"), "-o",
                       str(tmp_path / "o.ozmm"), "--beta", "1")
    assert code == 2 and "--c" in err
    save_matrix(tmp_path / "b.ozmm", np.ones((4, 2)))
    code, _, _ = run(capsys, "gemm", str(tmp_path / "a.ozmm"), str(tmp_path / "b.ozmm"), "-o",
                     str(tmp_path / "o.ozmm"))
    assert code == 2


def test_gemm_dump_splits(tmp_path, capsys):
    save_matrix(tmp_path / "a.ozmm", gen_phi_matrix(4, 4, 0.5, 0))
    dump = tmp_path / "dump"
    code, _, _ = run(capsys, "gemm", str(tmp_path / "a.ozmm"), str(tmp_path / "a.ozmm"), "-o",
                     str(tmp_path / "o.ozmm"), "--k", "3", "--dump-splits", str(dump),
                     "--method", "ozIMMU_EF")
    assert code == 0
    names = sorted(p.name for p in dump.iterdir())
    assert "left_slice03.ozmm" in names and "right_slice01.ozmm" in names
    assert load_matrix(dump / "left_slice01.ozmm").dtype == np.int8


def test_verify_bounds_passes(capsys):
    code, out, err = run(capsys, "verify-bounds", "--n", "64", "--phi", "0,2", "--k", "2,8", "--trials", "2")
    assert code == 0 and not err
    assert out.count(" ok") == 2 * 2 * 4


def test_verify_bounds_negative_control(capsys):
    code, out, err = run(capsys, "verify-bounds", "--n", "16", "--phi", "1", "--k", "4", "--trials", "1",
                         "--method", "ozIMMU", "--inject-error")
    assert code == 1
    assert "VIOLATION" in out and "bound violated" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ozaki_int8", "counts", "--n", "256", "--k", "3"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["int8_gemms"] == 6
