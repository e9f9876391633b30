"""Spectrum -> polar-coordinate colour raster.

Wavenumber sets the angle (975 cm^-1 at 0 degrees, 1800 at 360, counter-
clockwise from the positive x axis) and normalised absorbance sets both the
radius and the colour. Rasterisation is integer-only so renders are
byte-stable.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .spectra_io import WAVENUMBER_MAX, WAVENUMBER_MIN, Spectrum

# (position, RGB) stops, low absorbance -> high absorbance
WHITE_BLUE_RED = (
    (0.0, (235, 235, 255)),
    (0.5, (0, 0, 255)),
    (1.0, (200, 0, 0)),
)
COLORMAPS = {"white_blue_red": WHITE_BLUE_RED}


@dataclass(frozen=True)
class PolarRenderConfig:
    resolution: int = 128
    background: tuple[int, int, int] = (255, 255, 255)
    colormap_id: str = "white_blue_red"
    line_thickness: int = 1
    margin: int = 2

    def __post_init__(self):
        if self.resolution < 16:
            raise ValueError(f"resolution must be >= 16, got {self.resolution}")
        if self.line_thickness < 1:
            raise ValueError("line_thickness must be >= 1")
        if self.colormap_id not in COLORMAPS:
            raise ValueError(f"unknown colormap {self.colormap_id!r}")
        if self.max_radius <= 0:
            raise ValueError("margin and thickness leave no room to draw")

    @property
    def max_radius(self) -> float:
        return self.resolution / 2 - self.margin - (self.line_thickness - 1) / 2 - 1


def angle_of_wavenumber(w: float) -> float:
    """Degrees in [0, 360] for a wavenumber in [975, 1800]."""
    if not (WAVENUMBER_MIN <= w <= WAVENUMBER_MAX):
        raise ValueError(f"wavenumber {w} outside [{WAVENUMBER_MIN}, {WAVENUMBER_MAX}]")
    return 360.0 * (w - WAVENUMBER_MIN) / (WAVENUMBER_MAX - WAVENUMBER_MIN)


def apply_colormap(t, colormap_id: str = "white_blue_red") -> np.ndarray:
    """Map values in [0, 1] to uint8 RGB rows."""
    stops = COLORMAPS[colormap_id]
    pos = np.array([p for p, _ in stops])
    rgb = np.array([c for _, c in stops], dtype=np.float64)
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    out = np.stack([np.interp(t, pos, rgb[:, ch]) for ch in range(3)], axis=-1)
    return np.rint(out).astype(np.uint8)


def normalize_absorbance(a: np.ndarray) -> np.ndarray:
    lo, hi = float(a.min()), float(a.max())
    if hi > lo:
        return (a - lo) / (hi - lo)
    # flat spectrum: a positive constant sits on the outer ring, all-zero collapses to the centre
    return np.full_like(a, 1.0 if hi > 0 else 0.0, dtype=np.float64)


def _line_pixels(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Bresenham line, endpoints included."""
    pts = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        pts.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return pts
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def polar_points(s: Spectrum, cfg: PolarRenderConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integer pixel columns, rows and normalised intensity per spectrum point."""
    t = normalize_absorbance(s.absorbances)
    theta = np.deg2rad(360.0 * (s.wavenumbers - WAVENUMBER_MIN) / (WAVENUMBER_MAX - WAVENUMBER_MIN))
    radius = t * cfg.max_radius
    center = (cfg.resolution - 1) / 2
    cols = np.rint(center + radius * np.cos(theta)).astype(int)
    rows = np.rint(center - radius * np.sin(theta)).astype(int)
    return cols, rows, t


def to_polar_image(s: Spectrum, cfg: PolarRenderConfig | None = None) -> np.ndarray:
    """Render ``s`` as an (H, W, 3) uint8 image.

    Consecutive points are joined by straight segments. Each segment takes the
    colour of its hotter endpoint, and segments are painted cool-to-hot so the
    peaks stay visible where the curve crosses itself.
    """
    cfg = cfg or PolarRenderConfig()
    if not s.is_canonical:
        raise ValueError(f"{s.sample_id or 'spectrum'}: not on the canonical grid; resample first")
    res = cfg.resolution
    img = np.empty((res, res, 3), dtype=np.uint8)
    img[:] = cfg.background
    cols, rows, t = polar_points(s, cfg)
    seg_t = np.maximum(t[:-1], t[1:])
    colors = apply_colormap(seg_t, cfg.colormap_id)
    lo = -((cfg.line_thickness - 1) // 2)
    hi = cfg.line_thickness // 2
    for i in np.argsort(seg_t, kind="stable"):
        for x, y in _line_pixels(cols[i], rows[i], cols[i + 1], rows[i + 1]):
            img[max(y + lo, 0):min(y + hi + 1, res), max(x + lo, 0):min(x + hi + 1, res)] = colors[i]
    return img


def save_png(img: np.ndarray, path) -> Path:
    path = Path(path)
    Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8)).save(path, format="PNG", optimize=False)
    return path


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
