import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topoedge.errors import ConfigError, EmptyRegionError
from topoedge.grid import Grid
from topoedge.stripes import (
    Stripe,
    StripeSet,
    admissible_region,
    box_area,
    caps_area,
    dilate,
    rasterize,
    stripe_area,
)


def brute_segment_distance(px, py, y, tau, eps):
    """Distance from one point to the segment, by projection and clamping."""
    rho = (px - y[0]) * tau[0] + (py - y[1]) * tau[1]
    rho = min(max(rho, -eps), eps)
    return np.hypot(px - (y[0] + rho * tau[0]), py - (y[1] + rho * tau[1]))


def brute_rasterize(s, g):
    out = np.zeros(g.shape, dtype=bool)
    width = max(s.eps**2, g.h / 2)
    for j in range(g.ny):
        for i in range(g.nx):
            d = brute_segment_distance((i + 0.5) * g.h, (j + 0.5) * g.h, s.y, s.tau, s.eps)
            out[j, i] = d <= width * (1 + 1e-9)
    return out


def brute_dilate(mask, r):
    out = np.zeros_like(mask)
    pts = np.argwhere(mask)
    for j in range(mask.shape[0]):
        for i in range(mask.shape[1]):
            out[j, i] = any((j - q[0]) ** 2 + (i - q[1]) ** 2 <= r * r for q in pts)
    return out


# ---------------------------------------------------------------------------
# areas


def test_area_examples():
    assert stripe_area(0.1) == pytest.approx(0.001 * (4 + 0.1 * np.pi), rel=1e-15)
    assert stripe_area(0.1) == pytest.approx(4.31416e-3, rel=1e-6)
    assert stripe_area(Stripe((0, 0), (1, 0), 1.0)) == pytest.approx(4 + np.pi, rel=1e-15)
    assert caps_area(1e-3) / stripe_area(1e-3) == pytest.approx(7.853e-4, rel=1e-3)
    assert box_area(0.5) == pytest.approx(0.5)


def test_area_parts_sum(rng):
    eps = rng.uniform(1e-3, 2.0, size=1000)
    for e in eps:
        assert box_area(e) + caps_area(e) == pytest.approx(e**3 * (4 + np.pi * e), rel=1e-14)


# ---------------------------------------------------------------------------
# Stripe


def test_stripe_validation():
    with pytest.raises(ConfigError):
        Stripe((0, 0), (1, 1), 1.0)
    with pytest.raises(ConfigError):
        Stripe((0, 0), (1, 0), 0.0)
    s = Stripe((1, 2), (0, 1), 0.5)
    assert s.half_width == 0.25
    a, b = s.endpoints
    np.testing.assert_allclose(a, [1, 1.5])
    np.testing.assert_allclose(b, [1, 2.5])


# ---------------------------------------------------------------------------
# rasterize


def test_rasterize_horizontal():
    g = Grid(12, 12, 0.1)  # eps = 2h and eps^2 < h/2: one pixel wide
    mask = rasterize(Stripe(tuple(g.center(5, 5)), (1.0, 0.0), 0.2), g)
    expected = np.zeros(g.shape, dtype=bool)
    expected[5, 3:8] = True
    np.testing.assert_array_equal(mask, expected)


def test_rasterize_vertical():
    g = Grid(12, 12, 0.1)  # eps = 2h and eps^2 < h/2: one pixel wide
    mask = rasterize(Stripe(tuple(g.center(5, 5)), (0.0, 1.0), 0.2), g)
    expected = np.zeros(g.shape, dtype=bool)
    expected[3:8, 5] = True
    np.testing.assert_array_equal(mask, expected)


def test_rasterize_matches_brute_force_at_width_boundary(rng):
    g = Grid(40, 40, 0.005)
    for _ in range(10):
        a = rng.uniform(0, np.pi)
        y = tuple(rng.uniform(0.08, 0.12, size=2))
        s = Stripe(y, (np.cos(a), np.sin(a)), 0.05)
        np.testing.assert_array_equal(rasterize(s, g), brute_rasterize(s, g))


def test_rasterize_wide_stripe_matches_brute_force(rng):
    g = Grid(60, 60, 0.01)
    for _ in range(5):
        a = rng.uniform(0, np.pi)
        s = Stripe(tuple(rng.uniform(0.25, 0.35, size=2)), (np.cos(a), np.sin(a)), 0.2)
        np.testing.assert_array_equal(rasterize(s, g), brute_rasterize(s, g))


def test_rasterize_escaping_grid():
    g = Grid(10, 10, 1.0)
    with pytest.raises(ConfigError):
        rasterize(Stripe((0.5, 5.0), (1.0, 0.0), 2.0), g)


@pytest.mark.parametrize("eps", [0.2, 0.3])
def test_rasterized_area_converges(rng, eps):
    h = eps**2 / 4
    n = int(np.ceil(3 * eps / h)) + 4
    g = Grid(n, n, h)
    for _ in range(5):
        a = rng.uniform(0, np.pi)
        s = Stripe((n * h / 2 + rng.uniform(-h, h), n * h / 2 + rng.uniform(-h, h)), (np.cos(a), np.sin(a)), eps)
        area = rasterize(s, g).sum() * h * h
        assert abs(area / stripe_area(s) - 1) <= 0.10


def test_rasterize_is_connected_when_thin():
    from scipy import ndimage

    g = Grid(30, 30, 1.0)
    for a in np.linspace(0, np.pi, 13):
        mask = rasterize(Stripe((15.0, 15.0), (np.cos(a), np.sin(a)), 3.0), g)
        _, n = ndimage.label(mask, structure=np.ones((3, 3)))
        assert n == 1 and mask.sum() >= 1


# ---------------------------------------------------------------------------
# dilate


def test_dilate_single_pixel_plus():
    m = np.zeros((7, 7), dtype=bool)
    m[3, 3] = True
    out = dilate(m, 1.0)
    expected = np.zeros_like(m)
    expected[3, 2:5] = True
    expected[2:5, 3] = True
    np.testing.assert_array_equal(out, expected)


def test_dilate_zero_is_identity(rng):
    m = rng.random((9, 11)) < 0.3
    np.testing.assert_array_equal(dilate(m, 0.0), m)


def test_dilate_matches_brute_force(rng):
    m = rng.random((20, 17)) < 0.05
    np.testing.assert_array_equal(dilate(m, 2.5), brute_dilate(m, 2.5))


def test_dilate_respects_pixel_size(rng):
    m = rng.random((15, 15)) < 0.05
    np.testing.assert_array_equal(dilate(m, 0.25, h=0.1), brute_dilate(m, 2.5))


def test_dilate_negative_radius():
    with pytest.raises(ConfigError):
        dilate(np.zeros((3, 3), dtype=bool), -1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), r1=st.floats(0, 3), r2=st.floats(0, 3))
def test_dilate_extensive_and_increasing(seed, r1, r2):
    m = np.random.default_rng(seed).random((12, 12)) < 0.1
    lo, hi = sorted((r1, r2))
    a, b = dilate(m, lo), dilate(m, hi)
    assert np.all(a >= m) and np.all(b >= a)


# ---------------------------------------------------------------------------
# admissible region


def test_admissible_region_default_size():
    L = admissible_region(Grid(130, 130, 1.0), 12.0)
    rows, cols = np.nonzero(L)
    assert L.sum() == 106 * 106
    assert rows.min() == 12 and rows.max() == 117 and cols.min() == 12 and cols.max() == 117


def test_admissible_region_no_margin():
    assert admissible_region(Grid(10, 7), 0.0).all()


def test_admissible_region_scales_with_h():
    L = admissible_region(Grid(130, 130, 0.01), 0.12)
    assert L.sum() == 106 * 106


def test_admissible_region_exclusion():
    g = Grid(40, 40)
    L0 = admissible_region(g, 5.0)
    fp = dilate(rasterize(Stripe((20.5, 20.5), (1.0, 0.0), 1.0), g), 1.0)
    L1 = admissible_region(g, 5.0, fp)
    np.testing.assert_array_equal(L1, L0 & ~fp)


def test_admissible_region_empty():
    with pytest.raises(EmptyRegionError):
        admissible_region(Grid(20, 20), 10.0)
    with pytest.raises(ConfigError):
        admissible_region(Grid(20, 20), -1.0)


# ---------------------------------------------------------------------------
# StripeSet


def random_stripes(rng, g, k):
    out = []
    for _ in range(k):
        a = rng.uniform(0, np.pi)
        out.append(Stripe(tuple(rng.uniform(5, 25, size=2)), (np.cos(a), np.sin(a)), 1.0))
    return out


def test_stripeset_mask_is_union(rng):
    g = Grid(30, 30)
    stripes = random_stripes(rng, g, 12)
    ss = StripeSet(g)
    expected = np.zeros(g.shape, dtype=bool)
    for s in stripes:
        fp = ss.insert(s)
        expected |= rasterize(s, g)
        np.testing.assert_array_equal(fp, rasterize(s, g))
        np.testing.assert_array_equal(ss.mask, expected)
    assert list(ss) == stripes
    np.testing.assert_allclose(ss.midpoints(), [s.y for s in stripes])
    coef = ss.coefficient(0.01)
    assert set(np.unique(coef)) <= {0.01, 1.0}
    np.testing.assert_array_equal(coef == 0.01, ss.mask)


def test_stripeset_csv_json_round_trip(rng):
    g = Grid(30, 30)
    ss = StripeSet(g, random_stripes(rng, g, 8))
    text = ss.to_csv()
    assert text.splitlines()[0] == "y_x,y_y,tau_x,tau_y,eps"
    assert "\r\n" in text
    back = StripeSet.from_csv(text, g)
    assert back.stripes == ss.stripes
    np.testing.assert_array_equal(back.mask, ss.mask)
    back = StripeSet.from_json(ss.to_json(), g)
    assert back.stripes == ss.stripes


def test_stripeset_csv_bad_header():
    with pytest.raises(ConfigError):
        StripeSet.from_csv("x,y\r\n1,2\r\n", Grid(10, 10))


def test_empty_stripeset():
    ss = StripeSet(Grid(10, 10))
    assert len(ss) == 0 and not ss.mask.any()
    assert ss.midpoints().shape == (0, 2)
    assert StripeSet.from_csv(ss.to_csv(), Grid(10, 10)).stripes == []
