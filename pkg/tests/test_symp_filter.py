import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gansemble.polar import save_png
from gansemble.symp_filter import (
    FilterConfig,
    corner_density,
    filter_by_class,
    filter_top_t,
    lowest_t,
    read_sample_dir,
    write_filter_report,
)


def naive_density(img, r, convention="ink"):
    h, w, c = img.shape
    total = 0
    for y0, x0 in ((0, 0), (0, w - r), (h - r, 0), (h - r, w - r)):
        for y in range(y0, y0 + r):
            for x in range(x0, x0 + r):
                for ch in range(c):
                    v = int(img[y, x, ch])
                    total += 255 - v if convention == "ink" else v
    return total


def sort_take(densities, t):
    return [i for _, i in sorted((d, i) for i, d in enumerate(densities))][:t]


def test_density_matches_naive():
    rng = np.random.default_rng(0)
    for _ in range(5):
        img = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        for r in (1, 4, 16):
            assert corner_density(img, r) == naive_density(img, r)
            assert corner_density(img, r, "raw") == naive_density(img, r, "raw")


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(2, 12), st.integers(2, 12), st.just(3))), st.data())
def test_density_property(img, data):
    r = data.draw(st.integers(1, min(img.shape[:2]) // 2))
    assert corner_density(img, r) == naive_density(img, r)


def test_white_and_black():
    white = np.full((128, 128, 3), 255, np.uint8)
    assert corner_density(white, 16) == 0
    assert corner_density(np.zeros_like(white), 16) == 4 * 16 * 16 * 3 * 255
    assert corner_density(white, 16, "raw") == 4 * 16 * 16 * 3 * 255


def test_density_rejects_bad_r():
    img = np.zeros((8, 8, 3), np.uint8)
    for r in (0, 5):
        with pytest.raises(ValueError):
            corner_density(img, r)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=1, max_size=50), st.data())
def test_lowest_t_is_sort_take(densities, data):
    t = data.draw(st.integers(0, len(densities)))
    assert lowest_t(densities, t) == sort_take(densities, t)


def test_filter_top_t_oracle():
    rng = np.random.default_rng(1)
    imgs = [rng.integers(200, 256, size=(16, 16, 3), dtype=np.uint8) for _ in range(12)]
    cfg = FilterConfig(corner_side=4, keep_count=5, pool_per_class=12)
    want = sort_take([naive_density(i, 4) for i in imgs], 5)
    assert filter_top_t(imgs, cfg) == want


def test_filter_config_validation():
    with pytest.raises(ValueError):
        FilterConfig(keep_count=10, pool_per_class=5)
    with pytest.raises(ValueError):
        FilterConfig(convention="dark")


def test_directory_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    for cls in ("a", "b"):
        for i in range(6):
            save_png(rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8), tmp_path / f"{cls}_{i:05d}.png")
    pools = read_sample_dir(tmp_path)
    assert sorted(pools) == ["a", "b"] and len(pools["a"]) == 6
    rows = filter_by_class(pools, FilterConfig(2, 3, 6))
    assert sum(r.selected for r in rows) == 6
    text = write_filter_report(rows, tmp_path / "d.csv").read_text().splitlines()
    assert text[0] == "class,index,density,selected" and len(text) == 13


def test_noncontiguous_indices(tmp_path):
    img = np.zeros((4, 4, 3), np.uint8)
    save_png(img, tmp_path / "a_00000.png")
    save_png(img, tmp_path / "a_00002.png")
    with pytest.raises(ValueError, match="contiguous"):
        read_sample_dir(tmp_path)
