import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from caextract import raster
from caextract.raster import LabelGrid, Raster


def _write(path, data: bytes):
    path.write_bytes(data)
    return path


def test_pgm_endpoint_scaling(tmp_path):
    p = _write(tmp_path / "a.pgm", b"P5\n2 2\n255\n" + bytes([0, 255, 0, 255]))
    r = raster.load_raster(p)
    assert r.bands == 1 and r.height == 2 and r.width == 2
    np.testing.assert_array_equal(r.samples, [0, 1, 0, 1])


def test_ppm_single_red_pixel(tmp_path):
    p = _write(tmp_path / "a.ppm", b"P6 1 1 255\n" + bytes([255, 0, 0]))
    r = raster.load_raster(p)
    assert r.bands == 3
    np.testing.assert_array_equal(r.samples, [1, 0, 0])


def test_pgm_header_comments_and_16_bit(tmp_path):
    payload = np.array([0, 1000, 65535], dtype=">u2").tobytes()
    p = _write(tmp_path / "a.pgm", b"P5\n# made by hand\n3 1\n# max\n65535\n" + payload)
    r = raster.load_raster(p)
    np.testing.assert_allclose(r.samples, [0, 1000 / 65535, 1])


def test_mbr_round_trip_byte_exact(tmp_path, rng):
    data = rng.random((4, 2, 3)).astype(np.float32)
    header = b"MBR 3 2 4\n"
    src = _write(tmp_path / "a.mbr", header + data.astype("<f4").tobytes())
    r = raster.load_raster(src)
    assert (r.width, r.height, r.bands) == (3, 2, 4)
    out = tmp_path / "b.mbr"
    raster.save_mbr(out, r)
    assert out.read_bytes() == src.read_bytes()


@pytest.mark.parametrize("data", [
    b"P4\n2 2\n255\n" + bytes(4),
    b"P5\n2\n",
    b"P5\n2 x\n255\n" + bytes(4),
    b"P5\n2 2\n70000\n" + bytes(8),
    b"MBR 2 2\n",
    b"XYZ",
])
def test_malformed_header(tmp_path, data):
    p = _write(tmp_path / "bad.img", data)
    with pytest.raises(raster.RasterFormatError):
        raster.load_raster(p)


@pytest.mark.parametrize("data", [
    b"P5\n2 2\n255\n" + bytes(3),
    b"P6\n1 1\n255\n" + bytes(2),
    b"MBR 3 2 4\n" + bytes(4 * 23),
])
def test_truncated_payload(tmp_path, data):
    p = _write(tmp_path / "short.img", data)
    with pytest.raises(raster.RasterLengthError):
        raster.load_raster(p)


def test_raster_rejects_nonfinite():
    with pytest.raises(ValueError):
        Raster(np.array([[[np.nan]]]))


def test_save_mask_two_class(tmp_path):
    p = tmp_path / "m.pgm"
    raster.save_mask(p, LabelGrid(np.array([[0, 1]]), k=2))
    assert p.read_bytes().endswith(bytes([0, 255]))


def test_save_mask_single_class(tmp_path):
    p = tmp_path / "m.pgm"
    raster.save_mask(p, LabelGrid(np.zeros((2, 2), dtype=np.int64), k=1))
    assert p.read_bytes().endswith(bytes(4))


def test_save_mask_three_class(tmp_path):
    p = tmp_path / "m.pgm"
    raster.save_mask(p, LabelGrid(np.array([[0, 1, 2]]), k=3))
    # floor(255*i/2) by hand
    assert p.read_bytes().endswith(bytes([0, 127, 255]))


@settings(max_examples=30, deadline=None)
@given(k=st.integers(1, 9), data=st.data())
def test_mask_round_trip(tmp_path_factory, k, data):
    labels = data.draw(arrays(np.int64, (5, 7), elements=st.integers(0, k - 1)))
    p = tmp_path_factory.mktemp("m") / "m.pgm"
    raster.save_mask(p, LabelGrid(labels, k=k))
    np.testing.assert_array_equal(raster.load_mask(p, k=k).labels, labels)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float32, (2, 3, 4), elements=st.floats(-1e6, 1e6, width=32)))
def test_mbr_round_trip_property(tmp_path_factory, data):
    p = tmp_path_factory.mktemp("r") / "r.mbr"
    raster.save_mbr(p, Raster(data.astype(np.float64)))
    np.testing.assert_array_equal(raster.load_raster(p).data, data)


def test_window_features_constant():
    r = Raster(np.full((2, 6, 5), 0.3))
    for w in (1, 3, 5):
        f = raster.window_features(r, w)
        np.testing.assert_allclose(f.spatial[..., :2], 0.3)
        np.testing.assert_array_equal(f.spatial[..., 2:], 0.0)


def test_window_features_w1_is_identity(rng):
    r = Raster(rng.random((3, 4, 4)))
    f = raster.window_features(r, 1)
    np.testing.assert_allclose(f.spatial[..., :3], f.spectral)
    np.testing.assert_array_equal(f.spatial[..., 3:], 0.0)
    assert f.spatial.shape == (4, 4, 6)


def test_window_features_hand_computed():
    r = Raster(np.arange(1, 10, dtype=float).reshape(1, 3, 3))
    f = raster.window_features(r, 3)
    assert f.spatial[1, 1, 0] == pytest.approx(5.0)
    assert f.spatial[1, 1, 1] == pytest.approx(np.sqrt(60 / 9))
    assert round(float(f.spatial[1, 1, 1]), 3) == 2.582


def test_window_features_clamped_border():
    r = Raster(np.arange(1, 10, dtype=float).reshape(1, 3, 3))
    f = raster.window_features(r, 3)
    # corner window with replicated edges: 1 1 2 / 1 1 2 / 4 4 5
    vals = np.array([1, 1, 2, 1, 1, 2, 4, 4, 5], dtype=float)
    assert f.spatial[0, 0, 0] == pytest.approx(vals.mean())
    assert f.spatial[0, 0, 1] == pytest.approx(vals.std())


def test_window_features_even_window():
    with pytest.raises(ValueError):
        raster.window_features(Raster(np.zeros((1, 3, 3))), 2)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (1, 9, 9), elements=st.floats(0, 1)), st.integers(1, 2))
def test_window_features_translation_equivariant(img, shift):
    a = raster.window_features(Raster(img), 3).spatial
    b = raster.window_features(Raster(np.roll(img, shift, axis=2)), 3).spatial
    # interior pixels whose windows stay away from the border and the wrap seam
    np.testing.assert_allclose(b[1:-1, 1 + shift : -1], a[1:-1, 1 : -1 - shift], atol=1e-12)
    assert np.all(a[..., 1] >= 0)
