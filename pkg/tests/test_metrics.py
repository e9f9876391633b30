import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gansemble.metrics import (
    GaussianStats,
    compute_fid,
    compute_is,
    fit_gaussian,
    random_projection_extractor,
    score_image_sets,
    write_table2,
    TABLE2_COLUMNS,
)


def test_fid_self_is_zero():
    x = np.random.default_rng(0).standard_normal((500, 6))
    s = fit_gaussian(x)
    assert compute_fid(s, s) <= 1e-6


def test_fid_symmetric():
    rng = np.random.default_rng(1)
    a = fit_gaussian(rng.standard_normal((300, 5)))
    b = fit_gaussian(rng.standard_normal((300, 5)) * 2 + 1)
    assert abs(compute_fid(a, b) - compute_fid(b, a)) <= 1e-6


def test_fid_closed_form():
    # identical covariances: FID reduces to ||mu_a - mu_b||^2
    cov = np.diag([1.0, 2.0, 3.0])
    a = GaussianStats(np.zeros(3), cov)
    b = GaussianStats(np.array([1.0, 2.0, 2.0]), cov)
    assert compute_fid(a, b) == pytest.approx(9.0, abs=1e-9)
    # scalar case: (s_a - s_b)^2 with s the std
    c = GaussianStats(np.zeros(1), np.array([[4.0]]))
    d = GaussianStats(np.zeros(1), np.array([[9.0]]))
    assert compute_fid(c, d) == pytest.approx(1.0, abs=1e-9)


def test_fid_shifted_gaussian_sampled():
    rng = np.random.default_rng(2)
    mu = np.full(8, 0.75)
    a = fit_gaussian(rng.standard_normal((5000, 8)))
    b = fit_gaussian(rng.standard_normal((5000, 8)) + mu)
    assert compute_fid(a, b) == pytest.approx(mu @ mu, rel=0.05)


def test_fid_dimension_mismatch():
    with pytest.raises(ValueError):
        compute_fid(GaussianStats(np.zeros(2), np.eye(2)), GaussianStats(np.zeros(3), np.eye(3)))


def test_is_uniform_and_onehot():
    assert compute_is(np.full((100, 5), 0.2), splits=10)[0] == pytest.approx(1.0, abs=1e-6)
    onehot = np.eye(5)[np.arange(100) % 5]
    mean, std = compute_is(onehot, splits=10)
    assert mean == pytest.approx(5.0, abs=1e-6) and std == pytest.approx(0.0, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(1, 5), st.integers(0, 10_000))
def test_is_bounds(classes, splits, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.full(classes, 0.3), size=splits * 7)
    mean, std = compute_is(p, splits)
    assert 1.0 - 1e-9 <= mean <= classes + 1e-9 and std >= 0


def test_is_split_semantics():
    # contiguous splits and population std, computed by hand
    p = np.vstack([np.full((4, 2), 0.5), np.eye(2)[[0, 1, 0, 1]]])
    mean, std = compute_is(p, splits=2)
    assert mean == pytest.approx(1.5) and std == pytest.approx(0.5)


def test_is_too_few():
    with pytest.raises(ValueError):
        compute_is(np.full((3, 2), 0.5), splits=10)


def test_score_and_table(tmp_path):
    rng = np.random.default_rng(3)
    real = [rng.integers(0, 256, (8, 8, 3), dtype=np.uint8) for _ in range(20)]
    ext = random_projection_extractor((8, 8, 3), dim=4, num_classes=3, seed=0)
    r = score_image_sets(real, real, ext, splits=2)
    assert r.fid <= 1e-6 and 1 <= r.is_mean <= 3
    path = write_table2([{"dataset": "Aug*", "regular": r, "filtered": r}], tmp_path / "t.csv")
    header = path.read_text().splitlines()[0].split(",")
    assert tuple(header[:7]) == TABLE2_COLUMNS
