import subprocess
import sys

import numpy as np
import pytest

from defocuskit import DepthMap, load_depth, load_raster, save_depth, save_raster
from defocuskit.cli import main
from defocuskit.dataset import load_defocus
from helpers import two_plane_depth


@pytest.fixture
def inputs(tmp_path, rng):
    save_raster(rng.random((16, 16, 3)), tmp_path / "aif.pfm")
    save_depth(two_plane_depth(16, 16), tmp_path / "depth.pfm")
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def test_defocus_in_focus_is_zero(tmp_path):
    save_depth(DepthMap(np.full((6, 6), 700.0)), tmp_path / "d.pfm")
    assert run("defocus", "--depth", tmp_path / "d.pfm", "--focus-mm", 700, "--out", tmp_path / "j.pfm") == 0
    assert np.all(load_defocus(tmp_path / "j.pfm").values == 0.0)


def test_eval_identity_row(inputs, capsys):
    d = inputs / "depth.pfm"
    assert run("eval", "--pred", d, "--gt", d) == 0
    assert capsys.readouterr().out == "1,1,1,0,0,0,0,0\n"


def test_eval_header_and_record(inputs):
    d = inputs / "depth.pfm"
    assert run("eval", "--pred", d, "--gt", d, "--header", "--out", inputs / "m.csv", "--record", inputs / "m.txt") == 0
    lines = (inputs / "m.csv").read_text().splitlines()
    assert lines[0] == "delta_1_05,delta_1_15,delta_1_25,abs_rel,sq_rel,rmse,rmse_log,log10_err"
    assert "rmse=0" in (inputs / "m.txt").read_text()


def test_eval_defocus_normalized(inputs):
    for name, fd in (("a", 650), ("b", 750)):
        assert run("defocus", "--depth", inputs / "depth.pfm", "--focus-mm", fd, "--out", inputs / f"{name}.pfm") == 0
    assert run("eval", "--kind", "defocus", "--normalize", "--pred", inputs / "a.pfm", "--gt", inputs / "b.pfm",
               "--out", inputs / "e.csv") == 0
    assert len((inputs / "e.csv").read_text().strip().split(",")) == 8


def test_render_and_stack_and_compose(inputs):
    assert run("render", "--aif", inputs / "aif.pfm", "--depth", inputs / "depth.pfm",
               "--focus-mm", 600, "--out", inputs / "f.png") == 0
    assert load_raster(inputs / "f.png").shape == (16, 16, 3)
    assert run("stack", "--aif", inputs / "aif.pfm", "--depth", inputs / "depth.pfm",
               "--focus-min", 550, "--focus-max", 950, "--focus-count", 12, "--out", inputs / "st") == 0
    assert run("compose", "--stack", inputs / "st", "--out-aif", inputs / "c.png", "--out-depth", inputs / "c.pfm") == 0
    depth = load_depth(inputs / "c.pfm")
    assert set(np.unique(depth.values)) <= set(np.linspace(550, 950, 12).astype(np.float32).tolist())


def test_stack_default_200(inputs):
    save_raster(np.random.default_rng(0).random((6, 6)), inputs / "small.pfm")
    save_depth(two_plane_depth(6, 6), inputs / "small_d.pfm")
    assert run("stack", "--aif", inputs / "small.pfm", "--depth", inputs / "small_d.pfm",
               "--focus-min", 550, "--focus-max", 950, "--format", "pfm", "--out", inputs / "st") == 0
    assert len(list((inputs / "st").glob("*_img.pfm"))) == 200


def test_refine_auto_mask(tmp_path):
    v = np.full((4, 4), 100.0)
    v[1, 2] = np.nan
    save_depth(DepthMap(v), tmp_path / "p.pfm")
    save_depth(DepthMap(np.full((4, 4), 200.0)), tmp_path / "f.pfm")
    assert run("refine", "--depth", tmp_path / "p.pfm", "--fill", tmp_path / "f.pfm", "--out", tmp_path / "r.pfm") == 0
    r = load_depth(tmp_path / "r.pfm")
    assert r.fully_valid and r.values[1, 2] == 200.0 and r.values[0, 0] == 100.0


def test_refine_explicit_mask(tmp_path):
    save_depth(DepthMap(np.full((4, 4), 100.0)), tmp_path / "p.pfm")
    save_depth(DepthMap(np.full((4, 4), 200.0)), tmp_path / "f.pfm")
    mask = np.zeros((4, 4))
    mask[0] = 1.0
    save_raster(mask, tmp_path / "m.png")
    assert run("refine", "--depth", tmp_path / "p.pfm", "--fill", tmp_path / "f.pfm",
               "--mask", tmp_path / "m.png", "--out", tmp_path / "r.pfm") == 0
    assert load_depth(tmp_path / "r.pfm").values[:, 0].tolist() == [200.0, 100.0, 100.0, 100.0]


def test_gen_scene(inputs):
    assert run("gen-scene", "--aif", inputs / "aif.pfm", "--depth", inputs / "depth.pfm",
               "--focus-min", 600, "--focus-max", 900, "--focus-count", 3, "--out", inputs / "scene") == 0
    assert (inputs / "scene" / "manifest.json").exists()


def test_usage_error_exit_2(capsys):
    assert run("render") == 2
    err = capsys.readouterr().err
    assert err.startswith("error kind=usage") and err.count("\n") == 1
    assert run() == 2
    assert run("bogus") == 2


def test_lens_forms_mutually_exclusive(tmp_path, capsys):
    save_depth(DepthMap(np.full((3, 3), 700.0)), tmp_path / "d.pfm")
    rc = run("defocus", "--depth", tmp_path / "d.pfm", "--focus-mm", 700, "--out", tmp_path / "j.pfm",
             "--coc-scale", 800, "--pixel-mm", 0.005, "--output-scale", 1)
    assert rc == 2
    rc = run("defocus", "--depth", tmp_path / "d.pfm", "--focus-mm", 700, "--out", tmp_path / "j.pfm",
             "--pixel-mm", 0.005, "--output-scale", 1)
    assert rc == 0


def test_data_error_exit_3(inputs, capsys):
    assert run("defocus", "--depth", inputs / "depth.pfm", "--focus-mm", 20, "--out", inputs / "j.pfm") == 3
    assert capsys.readouterr().err.startswith("error kind=data")


def test_io_error_exit_4(tmp_path, capsys):
    assert run("defocus", "--depth", tmp_path / "missing.pfm", "--focus-mm", 700, "--out", tmp_path / "j.pfm") == 4
    (tmp_path / "bad.pfm").write_bytes(b"garbage")
    assert run("defocus", "--depth", tmp_path / "bad.pfm", "--focus-mm", 700, "--out", tmp_path / "j.pfm") == 4
    assert all(line.startswith("error kind=io") for line in capsys.readouterr().err.splitlines())


def test_verbose_echoes_defaults(tmp_path, capsys):
    save_depth(DepthMap(np.full((3, 3), 700.0)), tmp_path / "d.pfm")
    run("defocus", "--depth", tmp_path / "d.pfm", "--focus-mm", 700, "--out", tmp_path / "j.pfm", "--verbose")
    err = capsys.readouterr().err
    assert '"focal_mm": 50.0' in err and '"f_number": 1.4' in err


def test_module_entry_point(tmp_path):
    save_depth(DepthMap(np.full((3, 3), 700.0)), tmp_path / "d.pfm")
    res = subprocess.run([sys.executable, "-m", "defocuskit", "eval", "--pred", str(tmp_path / "d.pfm"),
                          "--gt", str(tmp_path / "d.pfm")], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout == "1,1,1,0,0,0,0,0\n"
