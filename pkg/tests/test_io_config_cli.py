import filecmp
import shutil
import subprocess
import sys

import numpy as np
import pytest
from conftest import SMALL_RUN, SMALL_RUN_INI

from billoc import io
from billoc.classical import ChaoticGrid, PhasePoint
from billoc.cli import main
from billoc.config import STAGES, load_config, make_config
from billoc.errors import ConfigError, MissingArtifact
from billoc.husimi import HusimiGrid
from billoc.pipeline import Pipeline
from billoc.quantum import NORMALIZATION_TAG, EigenstateRecord


def _write_ini(path, body):
    path.write_text(body)
    return path


# ------------------------------------------------------------ round trips

def test_json_roundtrip(tmp_path):
    obj = {"b": np.float64(0.1), "a": [np.int64(3), float("nan")], "c": {"x": np.bool_(True)}}
    io.write_json(tmp_path / "x.json", obj)
    back = io.read_json(tmp_path / "x.json")
    assert back == {"a": [3, None], "b": 0.1, "c": {"x": True}}
    assert list(back) == ["a", "b", "c"]


def test_jsonl_and_csv_roundtrip(tmp_path):
    rows = [{"k": 60.123456789012345, "A": 0.5}, {"k": 61.0, "A": 1e-17}]
    io.write_jsonl(tmp_path / "r.jsonl", rows)
    assert io.read_jsonl(tmp_path / "r.jsonl") == rows
    io.write_csv(tmp_path / "r.csv", ["k", "A"], [(r["k"], r["A"]) for r in rows])
    back = io.read_csv(tmp_path / "r.csv")
    assert [float(r["k"]) for r in back] == [r["k"] for r in rows]
    assert float(back[1]["A"]) == 1e-17


def test_read_column(tmp_path):
    (tmp_path / "h.csv").write_text("A\n0.1\n0.25\n")
    (tmp_path / "n.csv").write_text("0.1\n0.25\n\n")
    np.testing.assert_array_equal(io.read_column(tmp_path / "h.csv"), [0.1, 0.25])
    np.testing.assert_array_equal(io.read_column(tmp_path / "n.csv"), [0.1, 0.25])


def test_missing_artifacts(tmp_path):
    for fn in (io.read_json, io.read_jsonl, io.read_csv, io.read_column, io.read_chaotic_grid):
        with pytest.raises(MissingArtifact):
            fn(tmp_path / "nope")


def test_chaotic_grid_roundtrip(tmp_path, rng):
    g = np.where(rng.random((30, 20)) < 0.7, 1, -1).astype(np.int8)
    K = ChaoticGrid(g, 0.2, 6.5, 3, 12345, PhasePoint(0.3, 0.2))
    path = io.write_chaotic_grid(tmp_path / "g.bin", K)
    assert path.stat().st_size == 600
    back = io.read_chaotic_grid(path)
    np.testing.assert_array_equal(back.grid, g)
    assert (back.lam, back.perimeter, back.seed, back.n_collisions) == (0.2, 6.5, 3, 12345)
    assert back.start == PhasePoint(0.3, 0.2)
    assert io.read_json(path.with_suffix(".json"))["chi_c"] == pytest.approx(K.chi_c)


def test_boundary_functions_roundtrip(tmp_path, rng):
    recs = [EigenstateRecord(60.0 + i, rng.standard_normal(100 + 7 * i), 0.25, 7.1, "even", i % 2)
            for i in range(3)]
    path = io.write_boundary_functions(tmp_path / "u.bin", recs)
    back = io.read_boundary_functions(path)
    assert io.read_json(path.with_suffix(".json"))["normalization"] == NORMALIZATION_TAG
    for a, b in zip(recs, back):
        assert (a.k, a.lam, a.perimeter, a.parity, a.window_id) == (b.k, b.lam, b.perimeter, b.parity, b.window_id)
        np.testing.assert_array_equal(a.u_samples, b.u_samples)
    assert io.read_boundary_functions(io.write_boundary_functions(tmp_path / "e.bin", [])) == []


def test_husimi_and_spectrum_roundtrip(tmp_path, rng):
    v = rng.random((12, 8))
    H = HusimiGrid(v / v.sum(), 70.0, 0.2, 6.6)
    back = io.read_husimi(io.write_husimi(tmp_path / "h.bin", H))
    np.testing.assert_array_equal(back.values, H.values)
    assert (back.k, back.lam, back.perimeter, back.normalized) == (70.0, 0.2, 6.6, True)
    recs = [EigenstateRecord(k, np.empty(0), 0.2, 6.6) for k in (60.1, 60.35, 60.9)]
    np.testing.assert_array_equal(io.read_spectrum(io.write_spectrum(tmp_path / "s.csv", recs)), [60.1, 60.35, 60.9])


# ----------------------------------------------------------------- config

def test_load_config(tmp_path):
    cfg = load_config(_write_ini(tmp_path / "c.ini", SMALL_RUN_INI), seed=7)
    assert cfg.lambdas == (0.25,)
    assert cfg.k_windows[0] == (60.0, 65.0)
    assert cfg.A0 == "max"
    assert cfg.seed == 7
    assert cfg.stages == STAGES
    assert cfg == make_config(**SMALL_RUN, seed=7)


@pytest.mark.parametrize(
    "body",
    [
        "[run]\nlambdas = 0.6\n",
        "[run]\nlambdas = 0.2\nunknown_key = 1\n",
        "[run]\nlambdas = 0.2\nk_windows = 60-65\n",
        "[run]\nlambdas = 0.2\nk_windows = 65:60\n",
        "[run]\nlambdas = 0.2\nensemble_size = 100\n",
        "[run]\nlambdas = 0.2\nA0 = -1\n",
        "[run]\nlambdas = 0.2\nstages = solve, nonsense\n",
        "[run]\nlambdas = 0.2\nmin_spacings = 100\n",
        "[run]\nlambdas = 0.2\nalpha_criterion = 0.6\n",
        "[other]\nlambdas = 0.2\n",
        "not an ini file",
    ],
)
def test_config_errors(tmp_path, body):
    with pytest.raises(ConfigError):
        load_config(_write_ini(tmp_path / "c.ini", body))


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


def test_stage_hashes_follow_dependencies():
    a = Pipeline(make_config(**SMALL_RUN))
    b = Pipeline(make_config(**{**SMALL_RUN, "M_t": 0.4}))
    same = {"geometry", "transport", "chaotic-grid", "solve", "husimi", "spectra-fit"}
    for st in STAGES:
        assert (a.hashes[st] == b.hashes[st]) == (st in same)


# -------------------------------------------------------------------- CLI

def test_cli_config_error_exit_2(tmp_path, capsys):
    ini = _write_ini(tmp_path / "c.ini", "[run]\nlambdas = 0.9\n")
    assert main(["--config", str(ini)]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_missing_upstream_exit_2(tmp_path):
    ini = _write_ini(tmp_path / "c.ini", SMALL_RUN_INI)
    assert main(["--config", str(ini), "--out", str(tmp_path / "o"), "--stage", "husimi"]) == 2
    assert not (tmp_path / "o" / "husimi").exists()


def test_cli_numerical_failure_exit_3(tmp_path):
    # two short windows give far fewer than 500 spacings
    body = SMALL_RUN_INI.replace("60:65, 65:70, 70:75, 75:80, 80:85, 85:90", "40:41")
    ini = _write_ini(tmp_path / "c.ini", body)
    assert main(["--config", str(ini), "--out", str(tmp_path / "o"), "--stage", "solve",
                 "--stage", "chaotic-grid", "--stage", "spectra-fit"]) == 3
    # completed stages keep their artifacts, the failed one leaves nothing behind
    assert list((tmp_path / "o" / "solve").glob("*/stage.json"))
    assert not list((tmp_path / "o" / "spectra-fit").glob("*"))


def test_cli_module_entry_point(tmp_path):
    ini = _write_ini(tmp_path / "c.ini", SMALL_RUN_INI)
    res = subprocess.run([sys.executable, "-m", "billoc", "--config", str(ini), "--out", str(tmp_path / "o"),
                          "--stage", "geometry"], capture_output=True, text=True)
    assert res.returncode == 0
    stage, path = res.stdout.strip().split("\t")
    assert stage == "geometry"
    assert (tmp_path / "o" / "geometry").exists() and path.endswith(Pipeline(load_config(ini)).hashes["geometry"])


def test_bad_threads(tmp_path):
    ini = _write_ini(tmp_path / "c.ini", SMALL_RUN_INI)
    assert main(["--config", str(ini), "--out", str(tmp_path / "o"), "--threads", "0"]) == 2


# --------------------------------------------------------------- pipeline

def test_small_run_layout(small_run):
    pipe = Pipeline(make_config(**SMALL_RUN), small_run)
    for st in STAGES:
        assert pipe.is_done(st)
        assert not list(small_run.glob(f"{st}/*.tmp"))
    manifest = io.read_json(small_run / "manifest.json")
    assert set(manifest["stages"]) == set(STAGES)
    fits = io.read_json(pipe.stage_dir("spectra-fit") / "fits.json")["0.25"]
    assert fits["n_spacings"] >= 500
    assert fits["mean_spacing"] == pytest.approx(1.0, abs=0.05)
    for row in io.read_jsonl(pipe.stage_dir("localize") / "localization_0.25.jsonl"):
        assert 1 / 100 ** 2 <= row["A"] <= 1


def test_rerun_reuses_stages(small_run):
    pipe = Pipeline(make_config(**SMALL_RUN), small_run)
    stamp = (pipe.stage_dir("solve") / "stage.json").stat().st_mtime_ns
    pipe.run()
    assert (pipe.stage_dir("solve") / "stage.json").stat().st_mtime_ns == stamp


def test_report_from_persisted_artifacts(small_run, tmp_path):
    copy = tmp_path / "copy"
    shutil.copytree(small_run, copy)
    pipe = Pipeline(make_config(**SMALL_RUN), copy)
    shutil.rmtree(pipe.stage_dir("report"))
    # a fresh process sees only the files on disk
    ini = _write_ini(tmp_path / "c.ini", SMALL_RUN_INI)
    assert main(["--config", str(ini), "--out", str(copy), "--stage", "report"]) == 0
    cmp = filecmp.dircmp(pipe.stage_dir("report"), Pipeline(make_config(**SMALL_RUN), small_run).stage_dir("report"))
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    summary = io.read_json(pipe.stage_dir("report") / "summary.json")
    assert "0.25" in summary["beta_fits"]
