import csv
import json
import shutil
import struct
import zlib
from pathlib import Path

import numpy as np
import pytest

from dualct.cli import main
from dualct.geometry import Volume, load_projections, load_volume, save_volume
from dualct.metrics import psnr, ssim

SCRIPTS = Path(__file__).resolve().parents[1] / "scripts"
GEOM = SCRIPTS / "tiny_geometry.json"
TRAIN = SCRIPTS / "tiny_train.json"


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert _run("simulate", "--geometry", GEOM, "--views", 2, "--count", 2, "--seed", 4, "--out", d) == 0
    return d


@pytest.fixture(scope="module")
def trained(sim, tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    assert _run("train", "--config", TRAIN, "--data", sim, "--epochs", 1, "--out", d, "--quiet") == 0
    return d


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_angles_and_manifest(tmp_path):
    assert _run("simulate", "--geometry", GEOM, "--views", 6, "--out", tmp_path) == 0
    proj = load_projections(tmp_path / "case_000_proj.raw")
    assert proj.angles_deg == (0.0, 30.0, 60.0, 90.0, 120.0, 150.0)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["seed"] == 0
    assert set(man) >= {"config_hash", "tool_version", "inputs", "outputs", "wall_time_s"}


def test_simulate_single_view(tmp_path):
    assert _run("simulate", "--geometry", GEOM, "--views", 1, "--out", tmp_path) == 0
    assert load_projections(tmp_path / "case_000_proj.raw").angles_deg == (0.0,)


def test_simulate_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert _run("simulate", "--geometry", GEOM, "--seed", 9, "--out", tmp_path / d) == 0
    for name in ("case_000_proj.raw", "case_000_vol.raw", "case_000_proj.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bad_geometry_exits_2(tmp_path, capsys):
    g = json.loads(GEOM.read_text())
    del g["dso_mm"]
    (tmp_path / "g.json").write_text(json.dumps(g))
    assert _run("simulate", "--geometry", tmp_path / "g.json", "--out", tmp_path / "o") == 2
    assert "dso_mm" in capsys.readouterr().err
    g = json.loads(GEOM.read_text())
    g["dsd_mm"] = 10
    (tmp_path / "g.json").write_text(json.dumps(g))
    assert _run("simulate", "--geometry", tmp_path / "g.json", "--out", tmp_path / "o") == 2
    assert _run("simulate", "--geometry", tmp_path / "missing.json", "--out", tmp_path / "o") == 2


def test_missing_config_key_exits_2(sim, tmp_path, capsys):
    cfg = json.loads(TRAIN.read_text())
    del cfg["model"]["heads"]
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert _run("train", "--config", tmp_path / "c.json", "--data", sim, "--out", tmp_path / "r") == 2
    assert "heads" in capsys.readouterr().err


def test_usage_errors_exit_2(capsys):
    assert main(["frobnicate"]) == 2
    assert _run("count-params") == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_runtime_failure_exits_1(sim, tmp_path, capsys):
    cfg = json.loads(TRAIN.read_text())
    cfg["lr"] = 1e300
    cfg["model"]["dtype"] = "float64"
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert _run("train", "--config", tmp_path / "c.json", "--data", sim, "--out", tmp_path / "r", "--quiet") == 1
    assert "non-finite" in capsys.readouterr().err


def test_train_epochs_zero(sim, tmp_path):
    assert _run("train", "--config", TRAIN, "--data", sim, "--epochs", 0, "--out", tmp_path, "--quiet") == 0
    assert (tmp_path / "checkpoint.json").exists()
    assert (tmp_path / "loss.csv").read_text() == "step,epoch,lr,loss\n"
    assert json.loads((tmp_path / "manifest.json").read_text())["steps"] == 0


def test_train_smoke(trained):
    rows = _rows(trained / "loss.csv")
    assert len(rows) == 2 and all(float(r["loss"]) > 0 for r in rows)
    assert json.loads((trained / "manifest.json").read_text())["command"] == "train"


def test_reconstruct_chunk_invariance_and_evaluate(sim, trained, tmp_path):
    ck = trained / "checkpoint.json"
    proj = sim / "case_000_proj.raw"
    assert _run("reconstruct", "--ckpt", ck, "--proj", proj, "--out", tmp_path / "a.raw") == 0
    assert _run("reconstruct", "--ckpt", ck, "--proj", proj, "--out", tmp_path / "b.raw", "--chunk", 7) == 0
    assert (tmp_path / "a.raw").read_bytes() == (tmp_path / "b.raw").read_bytes()
    assert (tmp_path / "a.raw.manifest.json").exists()
    gt = sim / "case_000_vol.raw"
    assert _run("evaluate", "--pred", tmp_path / "a.raw", "--gt", gt, "--out", tmp_path / "m.csv") == 0
    row = _rows(tmp_path / "m.csv")[0]
    pred, truth = load_volume(tmp_path / "a.raw"), load_volume(gt)
    assert float(row["psnr_db"]) == psnr(pred, truth)
    assert float(row["ssim_pct"]) == ssim(pred, truth)
    assert row["case_id"] == "a"


def test_reconstruct_shape_mismatch_exits_2(trained, tmp_path):
    g = json.loads(GEOM.read_text())
    g["det_pixels"] = [12, 12]
    g["angles_deg"] = [0.0, 90.0]
    (tmp_path / "g.json").write_text(json.dumps(g))
    assert _run("simulate", "--geometry", tmp_path / "g.json", "--out", tmp_path / "d") == 0
    assert _run("reconstruct", "--ckpt", trained / "checkpoint.json", "--proj", tmp_path / "d" / "case_000_proj.raw",
                "--out", tmp_path / "x.raw") == 2


def test_evaluate_identical_and_uniform_roi(sim, tmp_path):
    gt = sim / "case_001_vol.raw"
    save_volume(Volume(np.full(load_volume(gt).shape, 0.5)), tmp_path / "roi.raw")
    assert _run("evaluate", "--pred", gt, "--gt", gt, "--roi", tmp_path / "roi.raw", "--case-id", "c1",
                "--out", tmp_path / "m.csv") == 0
    row = _rows(tmp_path / "m.csv")[0]
    assert row["case_id"] == "c1" and row["psnr_db"] == "inf" and float(row["ssim_pct"]) == 100.0
    assert row["w_psnr_db"] == row["psnr_db"] and row["w_ssim_pct"] == row["ssim_pct"]


def test_sart_zero_projections(sim, tmp_path):
    for name in ("case_000_proj.raw", "case_000_proj.json"):
        shutil.copy(sim / name, tmp_path / name)
    raw = tmp_path / "case_000_proj.raw"
    raw.write_bytes(b"\0" * raw.stat().st_size)
    assert _run("baseline-sart", "--proj", raw, "--iters", 3, "--out", tmp_path / "s.raw") == 0
    assert np.all(load_volume(tmp_path / "s.raw").data == 0)
    assert _run("baseline-sart", "--proj", raw, "--lambda", 2.5, "--out", tmp_path / "s.raw") == 2


def test_count_params_single_layer(tmp_path, capsys):
    assert _run("count-params", "--layer", 512, 1024, 16, 16, "--out", tmp_path / "c.csv") == 0
    rows = _rows(tmp_path / "c.csv")
    assert rows[0]["full"] == "268435456" and rows[0]["scf"] == "1310720" and rows[0]["ratio"] == "0.49%"
    assert _run("count-params", "--layer", 4, 1, 1, 1) == 0
    out = capsys.readouterr().out
    assert "200.00%" in out


def test_count_params_totals(tmp_path):
    assert _run("count-params", "--config", TRAIN, "--out", tmp_path / "c.csv") == 0
    rows = _rows(tmp_path / "c.csv")
    layers = [r for r in rows if r["layer"] not in ("total", "model_total")]
    total = next(r for r in rows if r["layer"] == "total")
    assert int(total["full"]) == sum(int(r["full"]) for r in layers)
    assert int(total["scf"]) == sum(int(r["scf"]) for r in layers)
    assert any(r["layer"] == "model_total" for r in rows)


def _png_size(data):
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    w, h = struct.unpack(">II", data[16:24])
    return w, h


def test_plot_outputs(trained, tmp_path):
    loss = trained / "loss.csv"
    assert _run("plot", "--metrics", loss, "--out", tmp_path / "a.png", "--points", 5) == 0
    assert _run("plot", "--metrics", loss, "--out", tmp_path / "b.png", "--points", 5) == 0
    a = (tmp_path / "a.png").read_bytes()
    assert a == (tmp_path / "b.png").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    w, h = _png_size(a)
    idat = a[a.index(b"IDAT") + 4:a.index(b"IEND") - 8]
    assert len(zlib.decompress(idat)) == h * (3 * w + 1)
    rows = _rows(tmp_path / "a.csv")
    assert list(rows[0]) == ["series", "step", "value"] and len(rows) == 2


def test_plot_metrics_vs_views(tmp_path):
    (tmp_path / "m.csv").write_text("views,psnr_db,ssim_pct\n4,20,70\n6,22,75\n8,23,80\n")
    assert _run("plot", "--metrics", tmp_path / "m.csv", "--out", tmp_path / "q.png", "--points", 3) == 0
    rows = _rows(tmp_path / "q.csv")
    assert {r["series"] for r in rows} == {"psnr_db", "ssim_pct"}
    assert [float(r["views"]) for r in rows[:3]] == [4.0, 6.0, 8.0]


def test_plot_empty_csv_exits_2(tmp_path):
    (tmp_path / "e.csv").write_text("step,epoch,lr,loss\n")
    assert _run("plot", "--metrics", tmp_path / "e.csv", "--out", tmp_path / "e.png") == 2
    assert not (tmp_path / "e.png").exists()


def test_ablate_lhif_rows(sim, tmp_path):
    out = tmp_path / "abl.csv"
    assert _run("ablate", "--config", TRAIN, "--sweep", "lhif", "--data", sim, "--epochs", 1,
                "--out", out, "--quiet") == 0
    rows = _rows(out)
    assert [r["value"] for r in rows] == ["True", "False"]
    assert int(rows[1]["num_parameters"]) < int(rows[0]["num_parameters"])
    assert all(r["sweep"] == "lhif" for r in rows)
