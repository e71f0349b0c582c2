import csv
import io
import math

import numpy as np
import pytest

from qoipress import codec
from qoipress.cli import main
from qoipress.codec import Archive
from qoipress.fixtures import lognormal, smooth_sinusoid
from qoipress.pipeline import Bounds, BoundError, baseline_search, compress_fields
from qoipress.qoi import QoiSpec

SHAPE = (24, 24, 24)
SHAPE_ARG = "24,24,24"


@pytest.fixture
def raw(tmp_path):
    x = smooth_sinusoid(SHAPE, seed=3)
    p = tmp_path / "x.f32"
    x.tofile(p)
    return x, p


def kv(out: str) -> dict:
    return dict(line.split("=", 1) for line in out.splitlines() if "=" in line)


def test_compress_verify_decompress(raw, tmp_path, capsys):
    x, p = raw
    arc = tmp_path / "x.qpkt"
    rc = main(["compress", "--input", str(p), "--shape", SHAPE_ARG, "--eb-rel", "1e-2",
               "--qoi-tol-rel", "1e-3", "--qoi", "x^2", "--out", str(arc), "--report", "kv"])
    rep = kv(capsys.readouterr().out)
    assert rc == 0 and rep["passed"] == "True"
    assert float(rep["max_data_err_rel"]) <= 1e-2 and float(rep["max_qoi_err_rel"]) <= 1e-3
    assert float(rep["cr"]) * float(rep["br"]) == pytest.approx(32.0, rel=1e-9)

    assert main(["verify", "--input", str(p), "--archive", str(arc)]) == 0
    assert capsys.readouterr().out.strip().endswith("PASS")

    out = tmp_path / "x.out"
    assert main(["decompress", "--input", str(arc), "--out", str(out)]) == 0
    d = np.fromfile(out, dtype=np.float32).reshape(SHAPE)
    assert d.tobytes() == codec.decompress(arc.read_bytes()).tobytes()


def test_archives_byte_identical_across_runs(raw, tmp_path, capsys):
    _, p = raw
    blobs = []
    for i in range(2):
        arc = tmp_path / f"r{i}.qpkt"
        main(["compress", "--input", str(p), "--shape", SHAPE_ARG, "--eb-rel", "1e-3",
              "--qoi-tol-rel", "1e-4", "--qoi", "log2(x)", "--out", str(arc)])
        blobs.append(arc.read_bytes())
    capsys.readouterr()
    assert blobs[0] == blobs[1]


def test_tampered_header_fails_verify(raw, tmp_path, capsys):
    _, p = raw
    arc = tmp_path / "x.qpkt"
    main(["compress", "--input", str(p), "--shape", SHAPE_ARG, "--eb-rel", "1e-2",
          "--qoi-tol-rel", "1e-3", "--out", str(arc)])
    a = Archive.from_bytes(arc.read_bytes())
    a.header["tau_abs"] = a.header["tau_abs"] * 1e-6
    arc.write_bytes(a.to_bytes())
    capsys.readouterr()
    assert main(["verify", "--input", str(p), "--archive", str(arc), "--report", "kv"]) == 1
    out = capsys.readouterr().out
    assert "FAIL" in out and "max_qoi_err=" in out


def test_corrupted_corrections_fail_checksum(raw, tmp_path, capsys):
    _, p = raw
    arc = tmp_path / "x.qpkt"
    main(["compress", "--input", str(p), "--shape", SHAPE_ARG, "--eb-rel", "1e-2",
          "--qoi-tol-rel", "1e-3", "--out", str(arc)])
    blob = bytearray(arc.read_bytes())
    blob[-2] ^= 0x55  # the correction stream is stored last
    arc.write_bytes(bytes(blob))
    capsys.readouterr()
    assert main(["verify", "--input", str(p), "--archive", str(arc)]) == 2
    assert "checksum" in capsys.readouterr().err


def test_vector_writes_one_archive_per_field(tmp_path, capsys):
    paths = []
    for j in range(3):
        q = tmp_path / f"v{j}.f32"
        lognormal(SHAPE, seed=j).tofile(q)
        paths.append(str(q))
    out = tmp_path / "v.qpkt"
    rc = main(["compress", "--fields", ",".join(paths), "--shape", SHAPE_ARG, "--eb-rel", "1e-2",
               "--qoi-tol-rel", "1e-3", "--qoi-kind", "vector", "--qoi", "sqrt(x^2+y^2+z^2)",
               "--out", str(out)])
    assert rc == 0
    arcs = [f"{out}.{j}" for j in range(3)]
    assert main(["verify", "--fields", ",".join(paths), "--archive", ",".join(arcs)]) == 0
    h = Archive.from_bytes(open(arcs[2], "rb").read()).header
    assert h["field_index"] == 2 and h["n_fields"] == 3 and h["qoi"]["kind"] == "vector"
    capsys.readouterr()


def test_regional_and_deterministic_only_flags(raw, tmp_path, capsys):
    _, p = raw
    arc = tmp_path / "r.qpkt"
    rc = main(["compress", "--input", str(p), "--shape", SHAPE_ARG, "--eb-rel", "1e-2",
               "--qoi-tol-rel", "1e-3", "--qoi-kind", "region", "--qoi", "x^3", "--block", "4,4,4",
               "--no-theorem4", "--c0", "0.9", "--report", "csv", "--out", str(arc)])
    out = capsys.readouterr().out
    assert rc == 0 and out.startswith("cr,br,")
    (row,) = csv.DictReader(io.StringIO(out))
    assert row["cfg.block"] == "4,4,4" and row["cfg.prob_threshold"] == "False" and row["passed"] == "True"


def test_relative_bound_on_constant_field_rejected(tmp_path, capsys):
    p = tmp_path / "c.f32"
    np.full(SHAPE, 2.5, np.float32).tofile(p)
    rc = main(["compress", "--input", str(p), "--shape", SHAPE_ARG, "--eb-rel", "1e-2",
               "--qoi-tol-rel", "inf", "--out", str(tmp_path / "c.qpkt")])
    assert rc == 2 and "--eb-abs" in capsys.readouterr().err


def test_bad_inputs_exit_nonzero(raw, tmp_path, capsys):
    _, p = raw
    common = ["--eb-rel", "1e-2", "--qoi-tol-rel", "1e-3", "--out", str(tmp_path / "o")]
    assert main(["compress", "--input", str(p), "--shape", "10,10", *common]) == 2
    assert main(["compress", "--input", str(p), "--shape", SHAPE_ARG, "--qoi", "x^", *common]) == 2
    assert main(["compress", "--input", str(tmp_path / "nope"), "--shape", SHAPE_ARG, *common]) == 2
    with pytest.raises(SystemExit):
        main(["compress", "--input", str(p), "--shape", SHAPE_ARG, "--eb-rel", "1e-2", "--eb-abs", "1",
              "--qoi-tol-rel", "1e-3", "--out", "o"])
    capsys.readouterr()


def test_baseline_command(raw, capsys):
    _, p = raw
    rc = main(["baseline", "--input", str(p), "--shape", SHAPE_ARG, "--eb-rel", "1e-2",
               "--qoi-tol-rel", "1e-3", "--report", "kv"])
    rep = kv(capsys.readouterr().out)
    assert rc == 0 and int(rep["cfg.probes"]) >= 1 and float(rep["max_qoi_err_rel"]) <= 1e-3


def test_benchmark_uses_seed(monkeypatch, capsys):
    monkeypatch.setenv("QPET_SEED", "7")
    assert main(["benchmark", "--fixtures", "sinusoid", "--qois", "x^2", "--shape", "16,16,16"]) == 0
    (row,) = csv.DictReader(io.StringIO(capsys.readouterr().out))
    assert row["cfg.seed"] == "7" and row["passed"] == "True"


# -- pipeline-level ----------------------------------------------------------

def test_infinite_tolerance_is_uniform_compression():
    x = smooth_sinusoid(SHAPE, seed=1)
    res = compress_fields(x, QoiSpec.point("x^2"), Bounds(eb_abs=0.01, tau_abs=math.inf))
    plan = res.plans[0]
    assert np.all(plan.eps == 0.01) and plan.eps_g == 0.01 and res.n_corrections == 0
    assert res.archives[0].header["tau_abs"] is None


def test_baseline_early_exit():
    x = smooth_sinusoid(SHAPE, seed=1)
    res = baseline_search(x, QoiSpec.point("x^2"), Bounds(eb_abs=0.01, tau_abs=10.0))
    assert res.probes == 1 and res.eps == 0.01


def test_bounds_validation():
    with pytest.raises(BoundError):
        Bounds(eb_rel=1e-2, eb_abs=1.0, tau_rel=1e-3)
    with pytest.raises(BoundError):
        Bounds(eb_rel=-1.0, tau_rel=1e-3)
    with pytest.raises(BoundError):
        Bounds(eb_rel=1e-2, tau_abs=0.0)
