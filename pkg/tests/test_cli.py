import csv
import json

import numpy as np
import pytest

from heatstress.cli import main
from heatstress.meteo import write_met_csv
from heatstress.raster import Grid, LandCoverGrid, ZoneGrid, read_grid, write_grid
from heatstress.synthetic import synthetic_scene

TINY = {"tile": 16, "patch": 4, "geo_width": 8, "geo_depth": 1, "heads": 2, "sem_width": 4,
        "film_hidden": 16}


def _run(argv, capsys=None):
    code = main([str(a) for a in argv])
    err = capsys.readouterr().err if capsys else ""
    return code, [json.loads(line) for line in err.splitlines() if line.startswith("{")]


@pytest.fixture(scope="module")
def scene_files(tmp_path_factory, met_day):
    d = tmp_path_factory.mktemp("scene")
    dsm, lc = synthetic_scene(32, seed=2)
    write_grid(dsm, d / "dsm.f32")
    write_grid(lc, d / "lc.f32")
    write_met_csv(met_day, d / "met.csv")
    return d


@pytest.fixture(scope="module")
def simulated(scene_files):
    out = scene_files / "sim"
    code, _ = _run(["simulate", "--dsm", scene_files / "dsm.f32", "--landcover",
                    scene_files / "lc.f32", "--met", scene_files / "met.csv", "--out", out])
    assert code == 0
    return out


def test_simulate_outputs(simulated):
    rasters = sorted(p.name for p in simulated.glob("*.f32"))
    assert len(rasters) == 14  # 12 hourly maps, the daytime mean, the category map
    assert "utci_mean.f32" in rasters and "utci_08.f32" in rasters and "utci_19.f32" in rasters
    man = json.loads((simulated / "manifest.json").read_text())
    assert man["subcommand"] == "simulate"
    assert set(man["inputs"]) == {"dsm", "landcover", "met"}
    assert len(man["inputs"]["dsm"]["sha256"]) == 64
    assert "utci_mean.f32" in man["outputs"] and "qa" in man
    legend = json.loads((simulated / "utci_category_legend.json").read_text())
    assert len(legend) == 10


def test_simulate_rerun_byte_identical(scene_files, simulated):
    out = scene_files / "sim2"
    assert _run(["--threads", 1, "simulate", "--dsm", scene_files / "dsm.f32", "--landcover",
                 scene_files / "lc.f32", "--met", scene_files / "met.csv", "--out", out])[0] == 0
    for p in simulated.glob("*.f32"):
        assert (out / p.name).read_bytes() == p.read_bytes(), p.name


def test_simulate_misaligned_exit_2(scene_files, tmp_path, capsys):
    lc = read_grid(scene_files / "lc.f32")
    write_grid(LandCoverGrid(lc.values.astype(np.int16), cellsize=2.0), tmp_path / "lc2.f32")
    code, diag = _run(["simulate", "--dsm", scene_files / "dsm.f32", "--landcover",
                       tmp_path / "lc2.f32", "--met", scene_files / "met.csv",
                       "--out", tmp_path / "o"], capsys)
    assert code == 2
    assert diag[-1]["code"] == "misaligned" and "cellsize" in diag[-1]["message"]
    assert not (tmp_path / "o").exists()


def test_simulate_bad_met_and_missing_file(scene_files, tmp_path, capsys):
    lines = (scene_files / "met.csv").read_text().splitlines()
    (tmp_path / "short.csv").write_text("\n".join(lines[:-1]) + "\n")
    code, diag = _run(["simulate", "--dsm", scene_files / "dsm.f32", "--landcover",
                       scene_files / "lc.f32", "--met", tmp_path / "short.csv",
                       "--out", tmp_path / "o"], capsys)
    assert code == 2 and diag[-1]["code"].startswith("met_")
    code, diag = _run(["simulate", "--dsm", tmp_path / "nope.f32", "--landcover",
                       scene_files / "lc.f32", "--met", scene_files / "met.csv",
                       "--out", tmp_path / "o"], capsys)
    assert code in (2, 4) and diag[-1]["level"] == "error"


def test_threads_env_validation(scene_files, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("UHI_THREADS", "zero")
    code, diag = _run(["params"], capsys)
    assert code == 2 and diag[-1]["code"] == "bad_threads"


# -- scenario ---------------------------------------------------------------

@pytest.fixture(scope="module")
def bare_field(tmp_path_factory, met_day):
    d = tmp_path_factory.mktemp("field")
    n = 24
    lc = np.full((n, n), 3, np.int16)
    h = np.zeros((n, n), np.float32)
    lc[:4, :4] = 1
    h[:4, :4] = 8.0
    write_grid(Grid(h, units="m"), d / "dsm.f32")
    write_grid(LandCoverGrid(lc), d / "lc.f32")
    zones = np.ones((n, n), np.int32)
    zones[:, n // 2:] = 2
    zones[n // 2:, n // 2:] = 3
    write_grid(ZoneGrid(zones), d / "zones.f32")
    write_met_csv(met_day, d / "met.csv")
    return d


def test_scenario_bare_to_tree_cools(bare_field, tmp_path):
    out = tmp_path / "scn"
    code, _ = _run(["scenario", "--dsm", bare_field / "dsm.f32", "--landcover",
                    bare_field / "lc.f32", "--met", bare_field / "met.csv",
                    "--source-class", "bare_earth", "--zones", bare_field / "zones.f32",
                    "--tile-size", 8, "--out", out])
    assert code == 0
    with open(out / "summary.csv") as fh:
        row = next(csv.DictReader(fh))
    assert float(row["avg_delta_utci"]) < 0
    delta = read_grid(out / "delta_utci.f32")
    assert delta.values[:4, :4].max() == 0.0  # existing canopy untouched
    with open(out / "zonal.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 3
    man = json.loads((out / "manifest.json").read_text())
    assert man["qa"]["substituted_cells"] == 24 * 24 - 16


def test_scenario_reuses_baseline(bare_field, tmp_path):
    base = tmp_path / "base"
    assert _run(["simulate", "--dsm", bare_field / "dsm.f32", "--landcover", bare_field / "lc.f32",
                 "--met", bare_field / "met.csv", "--out", base])[0] == 0
    out = tmp_path / "scn"
    assert _run(["scenario", "--dsm", bare_field / "dsm.f32", "--landcover",
                 bare_field / "lc.f32", "--met", bare_field / "met.csv", "--source-class", 3,
                 "--baseline-dir", base, "--out", out])[0] == 0
    assert not (out / "baseline_utci_mean.f32").exists()
    assert "baseline" in json.loads((out / "manifest.json").read_text())["inputs"]


def test_scenario_rejects_tree_source(bare_field, tmp_path, capsys):
    code, diag = _run(["scenario", "--dsm", bare_field / "dsm.f32", "--landcover",
                       bare_field / "lc.f32", "--met", bare_field / "met.csv",
                       "--source-class", "tree_canopy", "--out", tmp_path / "x"], capsys)
    assert code == 2 and diag[-1]["level"] == "error"


# -- train / predict / evaluate ---------------------------------------------

@pytest.fixture(scope="module")
def dataset(tmp_path_factory, met_day):
    d = tmp_path_factory.mktemp("data")
    samples = []
    for seed in (0, 1):
        s = d / f"s{seed}"
        dsm, lc = synthetic_scene(32, seed=seed)
        write_grid(dsm, s.with_suffix(".dsm.f32"))
        write_grid(lc, s.with_suffix(".lc.f32"))
        write_met_csv(met_day, d / "met.csv")
        assert _run(["simulate", "--dsm", s.with_suffix(".dsm.f32"), "--landcover",
                     s.with_suffix(".lc.f32"), "--met", d / "met.csv", "--out", s])[0] == 0
        samples.append({"ndsm": f"s{seed}.dsm.f32", "landcover": f"s{seed}.lc.f32",
                        "met": "met.csv", "utci": f"s{seed}/utci_mean.f32"})
    (d / "dataset.json").write_text(json.dumps({"samples": samples}))
    (d / "config.json").write_text(json.dumps({"model": TINY,
                                               "train": {"epochs": 2, "batch_size": 2}}))
    return d


@pytest.fixture(scope="module")
def trained(dataset):
    out = dataset / "model"
    assert _run(["train", "--dataset-manifest", dataset / "dataset.json", "--config",
                 dataset / "config.json", "--out", out])[0] == 0
    return out


def test_train_outputs_and_split(trained):
    split = json.loads((trained / "split.json").read_text())
    n = split["n_samples"]
    assert n == 8
    assert abs(split["n_train"] - 0.7 * n) <= 1 and abs(split["n_test"] - 0.3 * n) <= 1
    assert not set(split["train"]) & set(split["test"])
    assert (trained / "params.bin").exists() and (trained / "params.bin.json").exists()
    with open(trained / "loss.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 2
    man = json.loads((trained / "manifest.json").read_text())
    assert "test_metrics" in man["qa"] and man["parameter_file_version"] >= 1


def test_predict_aligned_and_deterministic(trained, scene_files, tmp_path):
    args = ["predict", "--params", trained / "params.bin", "--dsm", scene_files / "dsm.f32",
            "--landcover", scene_files / "lc.f32", "--met", scene_files / "met.csv"]
    assert _run(args + ["--out", tmp_path / "a.f32"])[0] == 0
    assert _run(args + ["--out", tmp_path / "b.f32"])[0] == 0
    a, ref = read_grid(tmp_path / "a.f32"), read_grid(scene_files / "dsm.f32")
    assert a.shape == ref.shape and (a.cellsize, a.origin_x, a.origin_y) == \
        (ref.cellsize, ref.origin_x, ref.origin_y)
    assert (tmp_path / "a.f32").read_bytes() == (tmp_path / "b.f32").read_bytes()
    assert (tmp_path / "a.f32.manifest.json").exists()


def test_train_missing_dataset_fields(dataset, tmp_path, capsys):
    (tmp_path / "bad.json").write_text(json.dumps({"samples": [{"ndsm": "x"}]}))
    code, diag = _run(["train", "--dataset-manifest", tmp_path / "bad.json",
                       "--out", tmp_path / "m"], capsys)
    assert code == 2 and "lacks" in diag[-1]["message"]


def test_evaluate_identity_and_modes(simulated, tmp_path, capsys):
    ref = simulated / "utci_mean.f32"
    code = main(["evaluate", "--ref", str(ref), "--pred", str(ref), "--tile", "16",
                 "--out", str(tmp_path / "r.json")])
    assert code == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["r2"] == 1.0 and rep["mae"] == 0.0 and rep["mode"] == "tilemean"
    assert rep["n"] > 0 and "mape_skipped" in rep
    assert json.loads((tmp_path / "r.json").read_text()) == rep
    g = read_grid(ref)
    write_grid(Grid(g.values + np.float32(0.5), g.cellsize, g.origin_x, g.origin_y,
                    g.nodata, g.units), tmp_path / "p.f32")
    main(["evaluate", "--ref", str(ref), "--pred", str(tmp_path / "p.f32"), "--mode", "pooled"])
    rep = json.loads(capsys.readouterr().out)
    assert rep["mode"] == "pooled" and rep["mae"] == pytest.approx(0.5, abs=1e-5)


def test_params_dump(capsys):
    assert main(["params", "--dump"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert set(doc) == {"radiation", "view_factors"}
