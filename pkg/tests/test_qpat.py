import numpy as np
import pytest

from topoedge.errors import ConfigError
from topoedge.grid import Grid
from topoedge.qpat import (
    Illumination,
    Phantom,
    QpatData,
    Shape,
    add_noise,
    default_phantom,
    default_shapes,
    forward,
    illumination_field,
    make_phantom,
)


# ---------------------------------------------------------------------------
# phantoms


def test_empty_phantom_is_constant():
    p = make_phantom([], Grid(20, 20), mu0=0.02, D0=0.7)
    np.testing.assert_array_equal(p.mu, 0.02)
    np.testing.assert_array_equal(p.D, 0.7)


def test_disk_covers_pixel_centres_inside():
    g = Grid(30, 30)
    p = make_phantom([Shape("disk", (15.0, 15.0, 6.0), mu=0.5)], g, mu0=0.01)
    for j in range(30):
        for i in range(30):
            inside = (i + 0.5 - 15) ** 2 + (j + 0.5 - 15) ** 2 <= 36
            assert p.mu[j, i] == (0.5 if inside else 0.01)
    np.testing.assert_array_equal(p.D, 1.0)


def test_overlapping_shapes_last_writer_wins():
    g = Grid(40, 40)
    shapes = [
        Shape("disk", (15.0, 15.0, 10.0), mu=0.1, D=2.0),
        Shape("rect", (12.0, 10.0, 30.0, 22.0), mu=0.3),
        Shape("disk", (20.0, 18.0, 5.0), D=0.5),
    ]
    p = make_phantom(shapes, g, mu0=0.01, D0=1.0)
    mu = np.full(g.shape, 0.01)
    D = np.full(g.shape, 1.0)
    for j in range(40):
        for i in range(40):
            x, y = i + 0.5, j + 0.5
            if (x - 15) ** 2 + (y - 15) ** 2 <= 100:
                mu[j, i], D[j, i] = 0.1, 2.0
            if 12 <= x <= 30 and 10 <= y <= 22:
                mu[j, i] = 0.3
            if (x - 20) ** 2 + (y - 18) ** 2 <= 25:
                D[j, i] = 0.5
    np.testing.assert_array_equal(p.mu, mu)
    np.testing.assert_array_equal(p.D, D)


def test_out_of_domain_shape():
    with pytest.raises(ConfigError):
        make_phantom([Shape("disk", (5.0, 5.0, 6.0), mu=1.0)], Grid(20, 20))
    with pytest.raises(ConfigError):
        make_phantom([Shape("rect", (1.0, 1.0, 25.0, 5.0), mu=1.0)], Grid(20, 20))


def test_shape_validation_and_round_trip():
    with pytest.raises(ConfigError):
        Shape("triangle", (0, 0, 1))
    with pytest.raises(ConfigError):
        Shape("disk", (1, 2))
    with pytest.raises(ConfigError):
        Shape("disk", (1, 2, -1))
    with pytest.raises(ConfigError):
        Shape("rect", (2, 2, 1, 3))
    with pytest.raises(ConfigError):
        Shape("disk", (1, 1, 1), D=0.0)
    with pytest.raises(ConfigError):
        Shape.from_dict({"kind": "disk", "params": [1, 1, 1], "colour": 3})
    s = Shape("rect", (1, 2, 3, 4), mu=0.2)
    assert Shape.from_dict(s.to_dict()) == s


def test_background_validation():
    with pytest.raises(ConfigError):
        make_phantom([], Grid(10, 10), mu0=0.0)
    with pytest.raises(ConfigError):
        make_phantom([], Grid(10, 10), D0=-1.0)


def test_boundary_distance():
    d = Shape("disk", (0.0, 0.0, 2.0)).boundary_distance(np.array([0.0, 3.0]), np.array([0.0, 0.0]))
    np.testing.assert_allclose(d, [2.0, 1.0])
    r = Shape("rect", (0.0, 0.0, 4.0, 2.0))
    np.testing.assert_allclose(r.boundary_distance(np.array([1.0, 5.0, 5.0]), np.array([1.0, 1.0, 3.0])),
                               [1.0, 1.0, np.sqrt(2)])


def test_default_phantom_layout(phantom):
    assert phantom.grid.shape == (130, 130)
    kinds = [(s.mu is not None, s.D is not None) for s in phantom.shapes]
    assert kinds == [(True, False), (True, False), (False, True), (False, True)]
    mu0, D0 = phantom.mu0, phantom.D0
    assert phantom.mu.min() == mu0 and phantom.D.min() < D0 < phantom.D.max()
    # the smaller absorption disk lies in the lower-left quadrant (j = 0 is the bottom row)
    small = min((s for s in phantom.shapes if s.mu is not None), key=lambda s: s.params[2])
    assert small.params[0] < 65 and small.params[1] < 65


def test_default_phantom_rescales():
    p = default_phantom(65)
    assert p.grid.shape == (65, 65)
    assert p.shapes[0].params == pytest.approx(tuple(0.5 * v for v in default_shapes()[0].params))


def test_jump_mask_selectors(phantom):
    m_mu = phantom.jump_mask(1.0, "mu")
    m_d = phantom.jump_mask(1.0, "D")
    m_all = phantom.jump_mask(1.0)
    np.testing.assert_array_equal(m_all, m_mu | m_d)
    with pytest.raises(ConfigError):
        phantom.jump_mask(1.0, "gamma")


# ---------------------------------------------------------------------------
# forward model


def test_no_absorption_gives_unit_fluence():
    g = Grid(25, 25)
    p = Phantom(g, np.zeros(g.shape), np.full(g.shape, 2.0), Gamma=1.0)
    d = forward(p)
    np.testing.assert_allclose(d.fluence, 1.0, atol=1e-10)
    np.testing.assert_array_equal(d.energy, 0.0)


def test_maximum_principle_constant_coefficients():
    g = Grid(41, 41)
    p = make_phantom([], g, mu0=0.05, D0=1.0)
    u = forward(p).fluence
    assert u.max() <= 1.0 + 1e-12
    interior = u[1:-1, 1:-1]
    assert np.unravel_index(np.argmin(u), u.shape) == (20, 20)
    assert interior.min() > 0


def test_energy_is_gamma_mu_fluence(phantom, qpat_clean):
    np.testing.assert_array_equal(qpat_clean.energy, phantom.Gamma * phantom.mu * qpat_clean.fluence)
    assert qpat_clean.fluence.min() >= 0
    assert qpat_clean.fluence.max() <= 1.0 + 10 * 1e-12


def test_absorption_disks_make_jumps(qpat_clean):
    E = qpat_clean.energy
    # large absorption disk centred at (80, 80), radius 16: faces at x = 64 and x = 96 on row y = 80.5
    s = np.diff(E[80])
    for face in (63, 95):
        neighbours = np.abs(np.r_[s[face - 3:face], s[face + 1:face + 4]])
        assert abs(s[face]) >= 3 * neighbours.max()


def test_diffusion_disks_make_kinks(qpat_clean):
    E = qpat_clean.energy
    # D x 3 disk at (24, 70), radius 12: flux continuity makes the slope drop about threefold inside
    s = np.diff(E[70])
    outside, inside = s[10], s[12]
    assert abs(outside) / abs(inside) >= 2.0
    assert abs(s[11]) <= 2 * max(abs(outside), abs(inside))  # continuous: no jump at the face
    # D x 0.25 disk at (104, 100), radius 12: the slope grows inside
    s = np.diff(E[100])
    outside, inside = s[90], s[92]
    assert abs(inside) / abs(outside) >= 2.0


def test_illumination_sides():
    g = Grid(6, 5)
    G = illumination_field(g, Illumination(left=1, right=2, bottom=3, top=4))
    assert G[2, 0] == 1 and G[2, -1] == 2 and G[0, 2] == 3 and G[-1, 2] == 4
    np.testing.assert_array_equal(illumination_field(g, 0.5), 0.5)
    with pytest.raises(ConfigError):
        Illumination(left=-1)


# ---------------------------------------------------------------------------
# noise


def test_zero_noise_is_identity(qpat_clean):
    d = add_noise(qpat_clean, 0.0, seed=3)
    np.testing.assert_array_equal(d.noisy_energy, qpat_clean.energy)
    assert d.noise_sigma == 0.0


def test_noise_sigma_definition():
    E = np.full((10, 10), 10.0)
    d = add_noise(QpatData(np.ones_like(E), E), 2.0, seed=0)
    assert d.noise_sigma == pytest.approx(0.2, rel=1e-15)


def test_noise_statistics():
    E = np.full((400, 400), 3.0)
    d = add_noise(QpatData(np.ones_like(E), E), 0.1, seed=11)
    assert np.std(d.noisy_energy - E) == pytest.approx(d.noise_sigma, rel=0.05)


def test_noise_determinism(qpat_clean):
    a = add_noise(qpat_clean, 2.0, seed=7).noisy_energy
    b = add_noise(qpat_clean, 2.0, seed=7).noisy_energy
    c = add_noise(qpat_clean, 2.0, seed=8).noisy_energy
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)
    assert add_noise(qpat_clean, 2.0, seed=7).data is not qpat_clean.energy


def test_negative_noise_rejected(qpat_clean):
    with pytest.raises(ConfigError):
        add_noise(qpat_clean, -1.0)
