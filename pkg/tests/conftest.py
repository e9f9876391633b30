import numpy as np
import pytest

from gansemble.augmentation import LabeledImage
from gansemble.polar import PolarRenderConfig, to_polar_image
from gansemble.spectra_io import generate_fixture_spectra


@pytest.fixture(scope="session")
def fixture_spectra():
    return generate_fixture_spectra(3, 8, seed=11)


@pytest.fixture(scope="session")
def small_images(fixture_spectra):
    cfg = PolarRenderConfig(resolution=32, margin=1)
    return [LabeledImage(to_polar_image(s, cfg), s.class_label.index, s.sample_id)
            for s in fixture_spectra]


def make_labeled(counts, size=16, seed=0):
    """Random real images with ``counts[c]`` members of class c."""
    rng = np.random.default_rng(seed)
    out = []
    for c, n in enumerate(counts):
        for k in range(n):
            img = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
            out.append(LabeledImage(img, c, f"c{c}_{k:03d}"))
    return out
