"""Corner-density filter for generated images.

Each image is scored by the summed content of its four r x r corner
squares; per class, the t images with the lowest scores are kept. With the
default ``ink`` convention a pixel contributes ``255 - value`` per channel,
so pure-background (white) corners score 0. The ``raw`` convention sums the
pixel values themselves.
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CONVENTIONS = ("ink", "raw")


@dataclass(frozen=True)
class FilterConfig:
    corner_side: int = 16
    keep_count: int = 100
    pool_per_class: int = 5000
    convention: str = "ink"

    def __post_init__(self):
        if self.corner_side < 1:
            raise ValueError("corner_side must be >= 1")
        if not 1 <= self.keep_count <= self.pool_per_class:
            raise ValueError(f"keep_count must be in [1, pool_per_class={self.pool_per_class}]")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")


def corner_masks(height: int, width: int, r: int) -> np.ndarray:
    """(4, H, W) boolean masks for the top-left, top-right, bottom-left, bottom-right squares."""
    masks = np.zeros((4, height, width), dtype=bool)
    masks[0, :r, :r] = True
    masks[1, :r, width - r:] = True
    masks[2, height - r:, :r] = True
    masks[3, height - r:, width - r:] = True
    return masks


def corner_density(img: np.ndarray, r: int, convention: str = "ink") -> int:
    h, w = img.shape[:2]
    if not 1 <= r <= min(h, w) // 2:
        raise ValueError(f"corner side {r} outside [1, {min(h, w) // 2}] for a {h}x{w} image")
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    values = img.astype(np.int64)
    if convention == "ink":
        values = 255 - values
    corners = (values[:r, :r], values[:r, w - r:], values[h - r:, :r], values[h - r:, w - r:])
    return int(sum(int(c.sum()) for c in corners))


def lowest_t(densities, t: int) -> list[int]:
    """Indices of the ``t`` smallest densities, ordered by (density, index)."""
    densities = np.asarray(densities)
    if t < 0 or t > len(densities):
        raise ValueError(f"cannot keep {t} of {len(densities)} images")
    order = np.lexsort((np.arange(len(densities)), densities))
    return [int(i) for i in order[:t]]


def filter_top_t(images: list[np.ndarray], cfg: FilterConfig) -> list[int]:
    if len(images) < cfg.keep_count:
        raise ValueError(f"need at least {cfg.keep_count} images, got {len(images)}")
    densities = [corner_density(img, cfg.corner_side, cfg.convention) for img in images]
    return lowest_t(densities, cfg.keep_count)


@dataclass
class FilterRow:
    class_name: str
    index: int
    density: int
    selected: bool


def filter_by_class(pools: dict[str, list[np.ndarray]], cfg: FilterConfig) -> list[FilterRow]:
    """Score every pool and mark the kept images; rows keep (class, generation index) provenance."""
    rows = []
    for name, images in pools.items():
        densities = [corner_density(img, cfg.corner_side, cfg.convention) for img in images]
        if len(images) < cfg.keep_count:
            raise ValueError(f"class {name!r}: need at least {cfg.keep_count} images, got {len(images)}")
        keep = set(lowest_t(densities, cfg.keep_count))
        rows.extend(FilterRow(name, i, d, i in keep) for i, d in enumerate(densities))
    return rows


def write_filter_report(rows: list[FilterRow], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "index", "density", "selected"])
        for r in rows:
            w.writerow([r.class_name, r.index, r.density, int(r.selected)])
    return path


_SAMPLE_NAME = re.compile(r"^(?P<cls>.+)_(?P<idx>\d+)\.png$")


def read_sample_dir(directory) -> dict[str, list[np.ndarray]]:
    """Load ``<class>_<index>.png`` files into per-class lists ordered by index."""
    from .polar import load_png

    found: dict[str, dict[int, Path]] = {}
    for p in sorted(Path(directory).glob("*.png")):
        m = _SAMPLE_NAME.match(p.name)
        if m:
            found.setdefault(m["cls"], {})[int(m["idx"])] = p
    if not found:
        raise FileNotFoundError(f"no <class>_<index>.png files in {directory}")
    pools = {}
    for cls, by_idx in sorted(found.items()):
        if sorted(by_idx) != list(range(len(by_idx))):
            raise ValueError(f"class {cls!r}: generation indices are not contiguous from 0")
        pools[cls] = [load_png(by_idx[i]) for i in range(len(by_idx))]
    return pools
