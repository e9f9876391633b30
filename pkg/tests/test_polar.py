import numpy as np
import pytest

from gansemble.polar import (
    PolarRenderConfig,
    angle_of_wavenumber,
    apply_colormap,
    load_png,
    normalize_absorbance,
    save_png,
    to_polar_image,
)
from gansemble.spectra_io import CANONICAL_GRID, Spectrum


def peak_spectrum(center, width=4.0):
    y = 0.01 + np.exp(-0.5 * ((CANONICAL_GRID - center) / width) ** 2)
    return Spectrum(CANONICAL_GRID.copy(), y, sample_id=f"peak{center}")


def ink(img):
    return (255 - img.astype(int)).sum(axis=-1)


def test_angle_endpoints_exact():
    assert angle_of_wavenumber(975.0) == 0.0
    assert angle_of_wavenumber(1800.0) == 360.0
    assert angle_of_wavenumber(1387.5) == 180.0
    with pytest.raises(ValueError):
        angle_of_wavenumber(974.5)


def test_colormap_ink_increases():
    c = apply_colormap(np.linspace(0, 1, 101))
    assert np.all(np.diff(ink(c)) >= 0)
    assert ink(c)[-1] > ink(c)[0]


def test_normalize_flat():
    assert np.all(normalize_absorbance(np.full(5, 0.3)) == 1.0)
    assert np.all(normalize_absorbance(np.zeros(5)) == 0.0)
    t = normalize_absorbance(np.array([1.0, 3.0, 2.0]))
    assert list(t) == [0.0, 1.0, 0.5]


def test_render_deterministic(tmp_path, fixture_spectra):
    a = to_polar_image(fixture_spectra[0])
    b = to_polar_image(fixture_spectra[0])
    assert a.shape == (128, 128, 3) and a.dtype == np.uint8
    assert a.tobytes() == b.tobytes()
    save_png(a, tmp_path / "x.png")
    assert np.array_equal(load_png(tmp_path / "x.png"), a)


def hottest_angle(img):
    res = img.shape[0]
    k = ink(img)
    r, c = np.unravel_index(np.argmax(k), k.shape)
    center = (res - 1) / 2
    return np.degrees(np.arctan2(center - r, c - center)) % 360, np.hypot(center - r, c - center)


@pytest.mark.parametrize("center", [1100.0, 1250.5, 1400.0, 1622.0, 1750.0])
def test_single_peak_position(center):
    cfg = PolarRenderConfig()
    img = to_polar_image(peak_spectrum(center), cfg)
    got, radius = hottest_angle(img)
    want = angle_of_wavenumber(center)
    tol = np.degrees(1.0 / radius) + 1e-9  # one pixel of arc
    diff = abs((got - want + 180) % 360 - 180)
    assert diff <= tol
    assert radius == pytest.approx(cfg.max_radius, abs=1.0)


def test_rotation_correspondence():
    # moving a peak by 90 degrees of wavenumber rotates the drawing by a quarter turn
    a = to_polar_image(peak_spectrum(1100.0))
    b = to_polar_image(peak_spectrum(1100.0 + 825 / 4))
    ga, _ = hottest_angle(a)
    gb, _ = hottest_angle(b)
    assert abs(((gb - ga) - 90 + 180) % 360 - 180) < 2.0


def test_requires_canonical():
    s = Spectrum(np.array([975.0, 1800.0]), np.array([0.0, 1.0]))
    with pytest.raises(ValueError, match="resample"):
        to_polar_image(s)


def test_thickness_and_bounds():
    cfg = PolarRenderConfig(resolution=64, line_thickness=3)
    img = to_polar_image(peak_spectrum(1300.0), cfg)
    assert img.shape == (64, 64, 3)
    # outer frame stays background
    assert ink(img)[0].sum() == 0 and ink(img)[:, -1].sum() == 0
