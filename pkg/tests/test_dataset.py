import json

import cv2
import numpy as np
import pytest

from defocuskit import (
    DepthMap,
    FormatError,
    LensConfig,
    RenderOptions,
    SceneManifest,
    generate_scene,
    load_depth,
    load_raster,
    save_depth,
    save_raster,
    validate_scene,
)
from defocuskit.dataset import Shot, load_defocus, read_pfm, write_pfm
from helpers import two_plane_depth


@pytest.mark.parametrize("shape", [(5, 7), (5, 7, 3)])
def test_pfm_round_trip_bit_exact(tmp_path, rng, shape):
    a = rng.random(shape).astype(np.float32)
    write_pfm(tmp_path / "a.pfm", a)
    b = read_pfm(tmp_path / "a.pfm")
    assert b.dtype == np.float32 and np.array_equal(a, b)


def test_pfm_header_and_row_order(tmp_path):
    a = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    write_pfm(tmp_path / "a.pfm", a)
    raw = (tmp_path / "a.pfm").read_bytes()
    assert raw.startswith(b"Pf\n2 2\n-1.0\n")
    # bottom row first, little endian
    assert np.frombuffer(raw[-16:], "<f4").tolist() == [3.0, 4.0, 1.0, 2.0]


def test_pfm_big_endian_read(tmp_path):
    a = np.arange(6, dtype=np.float32).reshape(2, 3)
    (tmp_path / "b.pfm").write_bytes(b"Pf\n3 2\n1.0\n" + np.flipud(a).astype(">f4").tobytes())
    assert np.array_equal(read_pfm(tmp_path / "b.pfm"), a)


@pytest.mark.parametrize("payload", [b"P6\n1 1\n255\n\x00\x00\x00", b"Pf\n2 2\n-1.0\n\x00\x00", b"Pf\nx y\n"])
def test_pfm_corrupt(tmp_path, payload):
    (tmp_path / "c.pfm").write_bytes(payload)
    with pytest.raises(FormatError):
        read_pfm(tmp_path / "c.pfm")


def test_raster_pfm_round_trip(tmp_path, rng):
    a = rng.random((6, 4, 3)).astype(np.float32).astype(np.float64)
    save_raster(a, tmp_path / "r.pfm")
    assert np.array_equal(load_raster(tmp_path / "r.pfm"), a)


@pytest.mark.parametrize("c", [1, 3])
def test_png16_round_trip(tmp_path, rng, c):
    a = rng.random((9, 11, c))
    save_raster(a, tmp_path / "r.png")
    b = load_raster(tmp_path / "r.png")
    assert b.shape == a.shape
    assert np.max(np.abs(a - b)) <= 1 / (2 * 65535) + 1e-15


def test_png8_maps_to_unit_range(tmp_path):
    a = np.array([[0, 128, 255]], dtype=np.uint8)
    cv2.imwrite(str(tmp_path / "g.png"), a)
    np.testing.assert_allclose(load_raster(tmp_path / "g.png")[:, :, 0], [[0, 128 / 255, 1]])


def test_png_rgb_channel_order(tmp_path):
    a = np.zeros((2, 2, 3))
    a[..., 0] = 1.0
    save_raster(a, tmp_path / "red.png")
    assert cv2.imread(str(tmp_path / "red.png"), cv2.IMREAD_UNCHANGED)[0, 0].tolist() == [0, 0, 65535]
    assert np.array_equal(load_raster(tmp_path / "red.png"), a)


def test_large_image_dimensions(tmp_path):
    img = np.zeros((2056, 2452, 3), dtype=np.uint8)
    cv2.imwrite(str(tmp_path / "big.png"), img)
    assert load_raster(tmp_path / "big.png").shape == (2056, 2452, 3)


def test_unsupported_format(tmp_path):
    with pytest.raises(FormatError):
        save_raster(np.zeros((2, 2)), tmp_path / "x.jpg")
    (tmp_path / "y.png").write_bytes(b"not a png")
    with pytest.raises(FormatError):
        load_raster(tmp_path / "y.png")


def test_depth_png_zero_is_invalid(tmp_path):
    cv2.imwrite(str(tmp_path / "d.png"), np.array([[0, 500], [700, 0]], dtype=np.uint16))
    d = load_depth(tmp_path / "d.png", unit_scale=2.0)
    assert d.valid.tolist() == [[False, True], [True, False]]
    assert d.values[0, 1] == 1000.0


def test_depth_png_round_trip(tmp_path, rng):
    d = DepthMap(rng.uniform(300, 3000, (5, 5)))
    save_depth(d, tmp_path / "d.png", unit_scale=0.1)
    back = load_depth(tmp_path / "d.png", unit_scale=0.1)
    assert np.max(np.abs(back.values - d.values)) <= 0.05 + 1e-9


def test_depth_pfm_round_trip(tmp_path, rng):
    v = rng.uniform(300, 3000, (5, 5)).astype(np.float32).astype(np.float64)
    valid = np.ones((5, 5), bool)
    valid[2, 3] = False
    save_depth(DepthMap(v, valid), tmp_path / "d.pfm")
    back = load_depth(tmp_path / "d.pfm")
    assert np.array_equal(back.valid, valid)
    assert np.array_equal(back.values[valid], v[valid])


def test_manifest_json_round_trip(tmp_path):
    m = SceneManifest(
        "s1", LensConfig(35.0, 2.0, pixel_size_mm=0.004, output_scale=1.5), "depth.pfm", "aif.png",
        [Shot("shots/000_img.png", 600.5, "shots/000_defocus.pfm")], 0.25, str(tmp_path),
    )
    back = SceneManifest.from_json(m.to_json(), root=str(tmp_path))
    assert back == m
    assert json.loads(m.to_json())["schema_version"] == 1


def test_manifest_schema_checked():
    with pytest.raises(FormatError):
        SceneManifest.from_json('{"schema_version": 99}')


@pytest.fixture
def scene_inputs(rng):
    return rng.random((24, 24, 3)), two_plane_depth(24, 24), LensConfig.reference_rig()


def test_generate_scene_files(tmp_path, scene_inputs):
    img, depth, lens = scene_inputs
    m = generate_scene(img, depth, lens, [620.0, 880.0], tmp_path / "scene")
    assert len(m.shots) == 2
    files = sorted(p.relative_to(tmp_path / "scene").as_posix() for p in (tmp_path / "scene").rglob("*") if p.is_file())
    assert files == [
        "aif.png", "depth.pfm", "manifest.json",
        "shots/000_defocus.pfm", "shots/000_img.png", "shots/001_defocus.pfm", "shots/001_img.png",
    ]
    assert validate_scene(tmp_path / "scene") == []
    assert SceneManifest.load(tmp_path / "scene") == m


def test_generate_scene_deterministic(tmp_path, scene_inputs):
    img, depth, lens = scene_inputs
    generate_scene(img, depth, lens, [600.0, 700.0], tmp_path / "a", scene_id="x")
    generate_scene(img, depth, lens, [600.0, 700.0], tmp_path / "b", scene_id="x", threads=4)
    for p in (tmp_path / "a").rglob("*"):
        if p.is_file():
            assert p.read_bytes() == (tmp_path / "b" / p.relative_to(tmp_path / "a")).read_bytes()


def test_generated_defocus_is_physically_consistent(tmp_path, scene_inputs):
    from defocuskit import FocusSetting, physical_consistency

    img, depth, lens = scene_inputs
    m = generate_scene(img, depth, lens, [650.0], tmp_path / "s", aif_format="pfm")
    J = load_defocus(m.path(m.shots[0].defocus_map_path))
    D = load_depth(m.path(m.depth_path))
    assert physical_consistency(J, D, FocusSetting(650.0), lens) <= 1e-6


def test_validate_flags_tampered_focus(tmp_path, scene_inputs):
    img, depth, lens = scene_inputs
    m = generate_scene(img, depth, lens, [620.0, 880.0], tmp_path / "s")
    m.shots[1].focus_depth_mm += 10.0
    findings = validate_scene(m)
    assert len(findings) == 1 and findings[0].startswith("shot 1: defocus inconsistent")
    # stored maps were made at 880 mm; the manifest now claims 890 mm
    offset = float(findings[0].split("focus error of ")[1].split(" mm")[0])
    assert offset == pytest.approx(-10.0, rel=0.05)


def test_validate_flags_missing_file(tmp_path, scene_inputs):
    img, depth, lens = scene_inputs
    generate_scene(img, depth, lens, [620.0, 880.0], tmp_path / "s")
    (tmp_path / "s" / "shots" / "000_img.png").unlink()
    findings = validate_scene(tmp_path / "s")
    assert len(findings) == 1 and "load error" in findings[0]


def test_validate_flags_unsorted_focus(tmp_path, scene_inputs):
    img, depth, lens = scene_inputs
    m = generate_scene(img, depth, lens, [620.0, 880.0], tmp_path / "s")
    m.shots.reverse()
    assert any("strictly increasing" in f for f in validate_scene(m))


def test_generate_scene_rejects_invalid_depth(tmp_path, rng):
    from defocuskit import DataError

    v = np.full((4, 4), 600.0)
    v[0, 0] = np.nan
    with pytest.raises(DataError):
        generate_scene(rng.random((4, 4)), DepthMap(v), LensConfig.reference_rig(), [600.0], tmp_path, RenderOptions())
