import numpy as np
import pytest
from PIL import Image

from topoedge.errors import ConfigError
from topoedge.fileio import (
    dump_toml,
    load_toml,
    read_field,
    read_field_csv,
    read_image,
    resize_box,
    write_field_csv,
    write_overlay,
    write_pgm,
    write_png,
)
from topoedge.grid import Grid
from topoedge.stripes import Stripe, StripeSet


def test_csv_round_trip_is_exact(tmp_path, rng):
    a = rng.normal(size=(7, 9)) * 1e-3
    write_field_csv(tmp_path / "a.csv", a)
    np.testing.assert_array_equal(read_field_csv(tmp_path / "a.csv"), a)
    np.testing.assert_array_equal(read_field(tmp_path / "a.csv"), a)


def test_csv_rejects_non_finite(tmp_path):
    (tmp_path / "bad.csv").write_text("1,nan\n2,3\n")
    with pytest.raises(ConfigError):
        read_field_csv(tmp_path / "bad.csv")


@pytest.mark.parametrize("bits,tol", [(16, 0.5 / 65535), (8, 0.5 / 255)])
def test_pgm_round_trip(tmp_path, rng, bits, tol):
    a = rng.random((11, 13))
    assert write_pgm(tmp_path / "a.pgm", a, bits=bits) == 1.0
    b = read_image(tmp_path / "a.pgm")
    assert b.shape == a.shape
    assert np.max(np.abs(a - b)) <= tol * (1 + 1e-9)


def test_pgm_scales_large_values(tmp_path):
    a = np.array([[0.0, 2.0], [4.0, 1.0]])
    assert write_pgm(tmp_path / "a.pgm", a) == 4.0
    np.testing.assert_allclose(read_image(tmp_path / "a.pgm") * 4.0, a, atol=1e-4)


def test_image_row_order(tmp_path):
    # array row j = 0 is the bottom of the picture
    a = np.zeros((4, 3))
    a[0, 0] = 1.0
    write_png(tmp_path / "a.png", a)
    pix = np.asarray(Image.open(tmp_path / "a.png"))
    assert pix[-1, 0] == 255 and pix.sum() == 255
    np.testing.assert_array_equal(read_image(tmp_path / "a.png"), a)
    np.testing.assert_array_equal(read_field(tmp_path / "a.png"), a)


def test_pgm_depth_and_format(tmp_path):
    with pytest.raises(ConfigError):
        write_pgm(tmp_path / "a.pgm", np.zeros((2, 2)), bits=12)
    with pytest.raises(ConfigError):
        read_field(tmp_path / "a.tiff")


def test_overlay(tmp_path):
    g = Grid(20, 10)
    ss = StripeSet(g, [Stripe((10.0, 5.0), (1.0, 0.0), 2.0)])
    write_overlay(tmp_path / "o.png", np.zeros(g.shape), ss, zoom=4)
    im = np.asarray(Image.open(tmp_path / "o.png"))
    assert im.shape == (40, 80, 3)
    red = np.argwhere(im[..., 0] > 200)
    assert red[:, 1].min() >= 30 and red[:, 1].max() <= 50
    assert np.all(np.abs(red[:, 0] - 20) <= 2)


def test_toml_round_trip(tmp_path):
    d = {"a": 1, "b": {"c": [1.5, 2.5], "d": None}, "e": "x"}
    dump_toml(d, tmp_path / "c.toml")
    assert load_toml(tmp_path / "c.toml") == {"a": 1, "b": {"c": [1.5, 2.5]}, "e": "x"}
    (tmp_path / "bad.toml").write_text("a = = 1")
    with pytest.raises(ConfigError):
        load_toml(tmp_path / "bad.toml")


def test_resize_box(rng):
    a = rng.random((12, 12))
    np.testing.assert_allclose(resize_box(a, 12), a, atol=1e-15)
    half = resize_box(a, 6)
    np.testing.assert_allclose(half, a.reshape(6, 2, 6, 2).mean(axis=(1, 3)), atol=1e-15)
    assert resize_box(a, 5).mean() == pytest.approx(a.mean(), rel=1e-12)
    with pytest.raises(ConfigError):
        resize_box(a, 0)
