import json
import subprocess
import sys

import numpy as np
import pytest

from octrecon.cli import main
from octrecon.io import load_spectra, read_manifest, read_table


def run(capsys, *argv):
    status = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return status, out, err


def test_psf_reports_calibrated_fwhm(tmp_path, capsys):
    status, out, _ = run(capsys, "psf", "--out", tmp_path)
    assert status == 0
    assert float(out.strip().split("=")[1]) == pytest.approx(3.40, abs=0.005)
    _, cols, rows = read_table(tmp_path / "psf_summary.csv")
    summary = {q: float(v) for q, v in rows}
    assert summary["idft_step_m"] == pytest.approx(1.94285127397017e-06, rel=1e-9)
    assert (tmp_path / "manifest.json").exists()


def test_psf_with_wavelength_fwhm_reports_analytic_value(tmp_path, capsys):
    status, out, _ = run(capsys, "psf", "--out", tmp_path, "--fwhm-lambda", "103.4nm")
    assert status == 0
    _, _, rows = read_table(tmp_path / "psf_summary.csv")
    summary = {q: float(v) for q, v in rows}
    assert summary["analytic_fwhm_m"] == pytest.approx(3.4016796227307797e-06, rel=1e-12)
    assert summary["fwhm_m"] > summary["analytic_fwhm_m"]


def test_simulate_then_sparse_recon(tmp_path, capsys):
    sim = tmp_path / "sim"
    assert run(capsys, "simulate", "--out", sim)[0] == 0
    lines, ref = load_spectra(sim / "spectra.octspec")
    assert len(lines) == 1 and ref is not None
    _, _, truth = read_table(sim / "truth.csv")
    depths = sorted(float(r[1]) for r in truth)

    rec = tmp_path / "rec"
    status, out, _ = run(capsys, "recon", "--input", sim / "spectra.octspec", "--out", rec,
                         "--method", "admm", "--lambda", "1000")
    assert status == 0 and "8 nonzero samples" in out
    _, cols, rows = read_table(rec / "profile.csv")
    support = sorted(float(r[1]) for r in rows if float(r[4]) > 0)
    np.testing.assert_allclose(support, depths, atol=0.5e-6)


def test_recon_idft_and_deconv(tmp_path, capsys):
    sim = tmp_path / "sim"
    run(capsys, "simulate", "--out", sim, "--lines", 2, "--noise", "0.5", "--seed", 4)
    for method in ("idft", "idft-deconv"):
        status, out, _ = run(capsys, "recon", "--input", sim / "spectra.octspec", "--out", tmp_path / method,
                             "--method", method, "--oversample", 2, "--lines", "1")
        assert status == 0, method
        _, _, rows = read_table(tmp_path / method / "profile.csv")
        assert len(rows) == 2048 and {r[0] for r in rows} == {"1"}


def test_bench_wedge_two_methods(tmp_path, capsys):
    status, out, _ = run(capsys, "bench-wedge", "--out", tmp_path, "--methods", "idft,admm", "--noise", "none",
                         "--lines", 12, "--min-sep", "1.25um", "--max-sep", "6.75um")
    assert status == 0
    assert sorted(p.name for p in tmp_path.glob("resolution_*.csv")) == ["resolution_admm.csv",
                                                                         "resolution_idft.csv"]
    config, _, rows = read_table(tmp_path / "summary.csv")
    res = {m: float(v) for m, v in rows}
    assert res["admm"] < res["idft"]
    assert config["methods"] == ["idft", "admm"] and "out" not in config


def test_rerun_is_bit_identical(tmp_path, capsys):
    first = tmp_path / "first"
    run(capsys, "bench-wedge", "--out", first, "--methods", "idft,idft-deconv", "--noise", "0.3",
        "--lines", 4, "--seed", 9)
    status, out, _ = run(capsys, "rerun", first / "manifest.json", "--out", tmp_path / "second")
    assert status == 0
    report = json.loads(out.strip().splitlines()[-1])
    assert report["identical"] and report["mismatched"] == []
    assert read_manifest(first / "manifest.json")["seed"] == 9


def test_rerun_detects_changes(tmp_path, capsys):
    first = tmp_path / "first"
    run(capsys, "psf", "--out", first)
    m = json.loads((first / "manifest.json").read_text())
    m["outputs"]["psf.csv"] = "0" * 64
    (first / "manifest.json").write_text(json.dumps(m))
    status, out, _ = run(capsys, "rerun", first / "manifest.json", "--out", tmp_path / "second")
    assert status == 2
    assert json.loads(out.strip().splitlines()[-1])["mismatched"] == ["psf.csv"]


def test_dirichlet_map(tmp_path, capsys):
    assert run(capsys, "dirichlet", "--out", tmp_path)[0] == 0
    _, cols, rows = read_table(tmp_path / "kernel_map.csv")
    assert len(rows) == 5 * 16
    assert cols[:2] == ["z_source_m", "bin"]


def test_truncate_with_input(tmp_path, capsys):
    sim = tmp_path / "sim"
    run(capsys, "simulate", "--out", sim)
    status, out, _ = run(capsys, "truncate", "--out", tmp_path / "t", "--input", sim / "spectra.octspec",
                         "--fractions", "1,0.25")
    assert status == 0
    lines, ref = load_spectra(tmp_path / "t" / "truncated_0.25.octspec")
    assert ref.k_grid.m_count == 512 and lines[0].values.size == 512
    _, _, rows = read_table(tmp_path / "t" / "truncation.csv")
    assert float(rows[0][5]) == pytest.approx(1.0)
    assert float(rows[1][5]) > 2


@pytest.mark.parametrize("argv,fragment", [
    (["psf", "--out", "X", "--center", "892.8"], "unit"),
    (["recon", "--out", "X", "--input", "Y", "--lambda", "1", "--lambda-rel", "0.1"], "not allowed"),
    (["psf", "--out", "X", "--frobnicate"], "unrecognized"),
    (["bench-wedge", "--out", "X", "--methods", "svd"], "svd"),
    (["recon", "--out", "X", "--input", "does-not-exist.octspec"], "cannot read"),
])
def test_user_errors_exit_one_with_json(tmp_path, capsys, argv, fragment):
    argv = [str(tmp_path / a) if a in ("X", "Y") else a for a in argv]
    status, _, err = run(capsys, *argv)
    assert status == 1
    record = json.loads(err.strip().splitlines()[-1])
    assert record["exit_status"] == 1 and fragment in record["message"]


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "octrecon.cli", "psf", "--out", str(tmp_path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.startswith("fwhm_um=")
