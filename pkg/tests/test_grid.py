import math

import numpy as np
import pytest

from dipgpe import GridError, make_grid


def test_spacings_1d():
    g = make_grid(1, [16.0], [64])
    assert g.steps == (0.25,)
    assert g.freq_steps[0] == pytest.approx(math.pi / 8, rel=0, abs=1e-15)
    assert g.cell_volume == 0.25
    assert g.size == 64


def test_total_points_3d():
    g = make_grid(3, [16.0, 16.0, 16.0], [32, 32, 32])
    assert g.size == 32768
    assert g.shape == (32, 32, 32)


def test_rejects_bad_construction():
    with pytest.raises(GridError):
        make_grid(4, [1.0] * 4, [8] * 4)
    with pytest.raises(GridError):
        make_grid(2, [8.0], [16, 16])
    with pytest.raises(GridError):
        make_grid(1, [8.0], [15])
    with pytest.raises(GridError):
        make_grid(1, [8.0], [4])
    with pytest.raises(GridError):
        make_grid(1, [-8.0], [16])
    with pytest.raises(GridError):
        make_grid(1, [math.inf], [16])


def test_coordinates_cover_half_open_box():
    g = make_grid(1, [10.0], [20])
    x = g.coords[0]
    assert x[0] == -5.0
    assert x[-1] == pytest.approx(4.5)
    assert np.allclose(np.diff(x), 0.5)


def test_frequencies_match_fftfreq_layout():
    g = make_grid(1, [8.0], [16])
    xi = g.freqs[0]
    expected = 2.0 * np.pi * np.fft.fftfreq(16, d=0.5)
    assert np.array_equal(xi, expected)
    # every positive frequency has its negative partner except Nyquist
    assert xi[1] == pytest.approx(np.pi / 4)
    assert xi[8] == pytest.approx(-2.0 * np.pi)


def test_forward_constant_field():
    g = make_grid(2, [12.0, 12.0], [32, 32])
    u = np.full(g.shape, 2.5, dtype=complex)
    uh = g.forward_transform(u)
    assert uh[0, 0] == pytest.approx(2.5 * 144.0, rel=1e-13)
    rest = np.abs(uh).sum() - abs(uh[0, 0])
    assert rest <= 1e-9 * abs(uh[0, 0])


def test_forward_plane_wave_hits_single_mode():
    g = make_grid(1, [16.0], [64])
    k = 4 * 2.0 * np.pi / 16.0
    u = np.exp(1j * k * g.coords[0])
    uh = g.forward_transform(u)
    assert abs(uh[4]) == pytest.approx(16.0, rel=1e-12)
    others = np.abs(np.delete(uh, 4))
    assert others.max() < 1e-10


def test_forward_gaussian_matches_continuum():
    # exp(-x^2/2) has transform sqrt(2 pi) exp(-xi^2/2)
    g = make_grid(1, [32.0], [256])
    u = np.exp(-0.5 * g.coords[0] ** 2).astype(complex)
    uh = g.forward_transform(u)
    xi = g.freqs[0]
    expected = math.sqrt(2.0 * math.pi) * np.exp(-0.5 * xi**2)
    window = np.abs(xi) <= 4.0
    assert np.max(np.abs(uh[window] - expected[window])) < 1e-8


def test_roundtrip_and_plancherel():
    rng = np.random.default_rng(7)
    g = make_grid(2, [10.0, 14.0], [32, 48])
    u = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    uh = g.forward_transform(u)
    back = g.inverse_transform(uh)
    assert np.max(np.abs(back - u)) < 1e-12 * np.max(np.abs(u))
    phys = np.sum(np.abs(u) ** 2) * g.cell_volume
    spec = np.sum(np.abs(uh) ** 2) * np.prod(g.freq_steps) / (2.0 * np.pi) ** 2
    assert phys == pytest.approx(spec, rel=1e-12)


def test_forward_matches_direct_sum():
    rng = np.random.default_rng(3)
    g = make_grid(1, [5.0], [8])
    u = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    x = g.coords[0]
    xi = g.freqs[0]
    direct = g.steps[0] * np.array(
        [np.sum(u * np.exp(-1j * k * x)) for k in xi]
    )
    uh = g.forward_transform(u)
    assert np.max(np.abs(uh - direct)) < 1e-12


def test_inverse_matches_direct_sum():
    rng = np.random.default_rng(4)
    g = make_grid(1, [5.0], [8])
    uh = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    x = g.coords[0]
    xi = g.freqs[0]
    dxi = g.freq_steps[0] / (2.0 * np.pi)
    direct = dxi * np.array([np.sum(uh * np.exp(1j * xi * p)) for p in x])
    u = g.inverse_transform(uh)
    assert np.max(np.abs(u - direct)) < 1e-12


def test_transform_rejects_wrong_shape():
    g = make_grid(2, [8.0, 8.0], [16, 16])
    with pytest.raises(GridError):
        g.forward_transform(np.zeros((16, 8), dtype=complex))
    with pytest.raises(GridError):
        g.inverse_transform(np.zeros((8, 16), dtype=complex))


def test_ksq_is_sum_of_squares():
    g = make_grid(3, [8.0, 10.0, 12.0], [16, 16, 16])
    xi1, xi2, xi3 = np.meshgrid(*g.freqs, indexing="ij")
    assert np.allclose(g.ksq, xi1**2 + xi2**2 + xi3**2, atol=1e-12)


def test_top_octave_mask_counts():
    g = make_grid(1, [8.0], [16])
    # indices with |k| >= 4 out of k in -8..7: k = -8..-4 and 4..7
    assert int(g.top_octave_mask.sum()) == 9
    g2 = make_grid(2, [8.0, 8.0], [8, 8])
    # per axis |k| >= 2 leaves a 3x3 block of False
    assert int((~g2.top_octave_mask).sum()) == 9


def test_sign_mesh_alternates():
    g = make_grid(2, [4.0, 4.0], [8, 8])
    s = g.sign_mesh
    assert s[0, 0] == 1.0
    assert s[1, 0] == -1.0
    assert s[0, 1] == -1.0
    assert s[3, 5] == 1.0
