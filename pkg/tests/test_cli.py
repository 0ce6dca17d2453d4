import csv
import io
import os
import subprocess
import sys
from pathlib import Path

import pytest

from egap.cli import main

GOLDEN = Path(__file__).parent / "golden"


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


def synth(tmp, *extra, shape="16x16x8"):
    code, _ = run("synth", "--seed", 7, "--shape", shape, "--true", "gauss:1.3", "--learned", "gauss:2.0", "--out", tmp, *extra)
    assert code == 0
    return tmp


def test_synth_writes_three_deterministic_files(tmp_path):
    a = synth(tmp_path / "a")
    b = synth(tmp_path / "b")
    names = sorted(p.name for p in a.iterdir())
    assert names == ["main.latb", "side.latb", "tables.pmft"]
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


@pytest.mark.parametrize("flag, value", [("--true", "gauss:-1"), ("--learned", "cauchy:1"), ("--shape", "4x4")])
def test_synth_rejects_bad_specs(tmp_path, flag, value, capsys):
    argv = ["synth", "--shape", "4x4x2", "--true", "gauss:1", "--learned", "gauss:2", "--out", str(tmp_path)]
    argv[argv.index(flag) + 1] = value
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_gap_report_and_csv(tmp_path):
    d = synth(tmp_path / "x")
    csv_path = tmp_path / "r.csv"
    code, text = run("gap", "--main", d / "main.latb", "--side", d / "side.latb", "--tables", d / "tables.pmft", "--csv", csv_path)
    assert code == 0 and "hyperprior" in text and "total" in text
    rows = list(csv.DictReader(csv_path.open()))
    assert len(rows) == 1 and float(rows[0]["Total Gap"]) > 0


def test_gap_rows_fixture_matches_report_arithmetic():
    code, text = run("gap", "--rows", "factorized:3.5:10.0,hyperprior:96.5:4.5")
    assert code == 0
    total_line = [ln for ln in text.splitlines() if ln.startswith("total")][0]
    assert total_line.split()[2] == "4.69"


def test_gap_on_empty_file_fails(tmp_path, capsys):
    empty = tmp_path / "empty.latb"
    empty.write_bytes(b"")
    d = synth(tmp_path / "x")
    code, _ = run("gap", "--main", empty, "--tables", d / "tables.pmft")
    assert code != 0
    assert "error" in capsys.readouterr().err


def _encode(d, out, *method):
    return run("encode", "--main", d / "main.latb", "--side", d / "side.latb", "--tables", d / "tables.pmft", "-o", out, *method)


def test_encode_decode_verify(tmp_path):
    d = synth(tmp_path / "x")
    code, text = _encode(d, tmp_path / "a.egap")
    assert code == 0 and "total_bits" in text
    code, text = run(
        "decode", tmp_path / "a.egap", "--tables", d / "tables.pmft", "--main", d / "main.latb",
        "--side", d / "side.latb", "--verify", "-o", tmp_path / "back.latb",
    )
    assert code == 0 and "OK, lossless" in text
    assert (tmp_path / "back.latb").read_bytes() == (d / "main.latb").read_bytes()


def test_adapted_container_is_smaller(tmp_path):
    d = synth(tmp_path / "x", shape="32x32x16")
    assert _encode(d, tmp_path / "none.egap", "--method", "none")[0] == 0
    assert _encode(d, tmp_path / "gmm.egap", "--method", "gmm", "--K", 2, "--T", 64)[0] == 0
    assert (tmp_path / "gmm.egap").stat().st_size < (tmp_path / "none.egap").stat().st_size


def test_wrong_tables_never_pass_verify(tmp_path, capsys):
    d = synth(tmp_path / "x")
    other = tmp_path / "y"
    run("synth", "--seed", 1, "--shape", "16x16x8", "--true", "gauss:1.3", "--learned", "gauss:0.7", "--out", other)
    _encode(d, tmp_path / "a.egap")
    code, text = run(
        "decode", tmp_path / "a.egap", "--tables", other / "tables.pmft", "--main", d / "main.latb",
        "--side", d / "side.latb", "--verify",
    )
    assert code == 1 and "OK" not in text
    assert "error" in capsys.readouterr().err


def test_factorized_mode_round_trip(tmp_path):
    d = synth(tmp_path / "f", "--mode", "factorized")
    assert sorted(p.name for p in d.iterdir()) == ["main.latb", "tables.pmft"]
    code, _ = run("encode", "--main", d / "main.latb", "--tables", d / "tables.pmft", "-o", tmp_path / "f.egap",
                  "--method", "center-bin", "--T", 8)
    assert code == 0
    code, text = run("decode", tmp_path / "f.egap", "--tables", d / "tables.pmft", "--main", d / "main.latb", "--verify")
    assert code == 0 and "OK, lossless" in text


def test_bench_csv_and_config(tmp_path):
    cfg = tmp_path / "sweep.toml"
    cfg.write_text('[bench]\nlevels = [1.0, 2.0]\nmethods = ["none", "zero-mean-gaussian"]\nT = [4]\nshape = "8x8x8"\n')
    code, text = run("bench", "--config", cfg)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(text)))
    assert [(r["mismatch"], r["method"]) for r in rows] == [
        ("1.000000", "none"), ("1.000000", "zero-mean-gaussian"), ("2.000000", "none"), ("2.000000", "zero-mean-gaussian"),
    ]
    for r in rows:
        assert float(r["gain_pct"]) <= float(r["gap_pct"])


def test_bench_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("speed = 3\n")
    with pytest.raises(SystemExit):
        main(["bench", "--config", str(cfg)])


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["gap", "--frobnicate"])
    assert exc.value.code == 2


def test_golden_files_regenerate_byte_identically(tmp_path):
    run("synth", "--seed", 7, "--shape", "8x8x4", "--true", "gauss:1.3", "--learned", "gauss:2.0", "--out", tmp_path)
    for name in ("main.latb", "side.latb", "tables.pmft"):
        assert (tmp_path / name).read_bytes() == (GOLDEN / name).read_bytes(), name
    _encode(tmp_path, tmp_path / "adapted.egap")
    assert (tmp_path / "adapted.egap").read_bytes() == (GOLDEN / "adapted.egap").read_bytes()

    f = tmp_path / "fact"
    run("synth", "--seed", 5, "--shape", "16x16x4", "--true", "laplace:1.0", "--learned", "gauss:2.5",
        "--mode", "factorized", "--out", f)
    for name in ("main.latb", "tables.pmft"):
        assert (f / name).read_bytes() == (GOLDEN / "fact" / name).read_bytes(), name
    run("encode", "--main", f / "main.latb", "--tables", f / "tables.pmft", "--method", "center-bin", "--T", 4,
        "-o", f / "center.egap")
    assert (f / "center.egap").read_bytes() == (GOLDEN / "fact" / "center.egap").read_bytes()


def test_golden_containers_decode():
    code, text = run("decode", GOLDEN / "adapted.egap", "--tables", GOLDEN / "tables.pmft", "--main",
                     GOLDEN / "main.latb", "--side", GOLDEN / "side.latb", "--verify")
    assert code == 0 and "OK, lossless" in text
    code, text = run("decode", GOLDEN / "fact" / "center.egap", "--tables", GOLDEN / "fact" / "tables.pmft",
                     "--main", GOLDEN / "fact" / "main.latb", "--verify")
    assert code == 0 and "OK, lossless" in text


def test_console_script_and_fallback_agree(tmp_path):
    """The installed entry point, run with the interpreted kernels, writes the same container."""
    env = dict(os.environ, EGAP_DISABLE_NUMBA="1")
    out = tmp_path / "slow.egap"
    g = GOLDEN
    subprocess.run(
        [sys.executable, "-m", "egap.cli", "encode", "--main", g / "main.latb", "--side", g / "side.latb",
         "--tables", g / "tables.pmft", "-o", out],
        env=env, check=True, capture_output=True,
    )
    assert out.read_bytes() == (g / "adapted.egap").read_bytes()
