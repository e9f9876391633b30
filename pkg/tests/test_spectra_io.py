import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gansemble.spectra_io import (
    CANONICAL_GRID,
    CANONICAL_POINTS,
    ClassLabel,
    DatasetManifest,
    DomainError,
    ManifestRecord,
    Spectrum,
    SpectrumError,
    SpectrumParseError,
    generate_fixture_spectra,
    load_spectrum_csv,
    nearest_centroid_accuracy,
    resample_spectrum,
    split_dataset,
    write_spectrum_csv,
)


def naive_interp(xs, ys, x):
    # walk the segments; independent of np.interp
    for i in range(len(xs) - 1):
        if xs[i] <= x <= xs[i + 1]:
            if x == xs[i]:
                return ys[i]
            if x == xs[i + 1]:
                return ys[i + 1]
            f = (x - xs[i]) / (xs[i + 1] - xs[i])
            return ys[i] + f * (ys[i + 1] - ys[i])
    raise ValueError(x)


def test_canonical_grid():
    assert CANONICAL_POINTS == 1651
    assert CANONICAL_GRID[0] == 975.0 and CANONICAL_GRID[-1] == 1800.0
    assert np.all(np.diff(CANONICAL_GRID) == 0.5)


def test_resample_matches_naive_oracle():
    rng = np.random.default_rng(3)
    xs = np.sort(np.concatenate([[970.0, 1805.0], rng.uniform(970, 1805, 60)]))
    ys = rng.uniform(0, 2, len(xs))
    out = resample_spectrum(Spectrum(xs, ys))
    assert out.is_canonical
    for i in range(0, CANONICAL_POINTS, 37):
        assert out.absorbances[i] == pytest.approx(naive_interp(xs, ys, CANONICAL_GRID[i]), abs=1e-12)


def test_resample_identity_on_grid():
    ys = np.linspace(0, 1, CANONICAL_POINTS) ** 2
    out = resample_spectrum(Spectrum(CANONICAL_GRID.copy(), ys))
    assert np.array_equal(out.absorbances, ys)


def test_resample_rejects_short_domain():
    with pytest.raises(DomainError):
        resample_spectrum(Spectrum(np.array([1000.0, 1800.0]), np.array([0.1, 0.2])))


@pytest.mark.parametrize("w,a", [
    ([1.0, 1.0], [0.1, 0.2]),
    ([2.0, 1.0], [0.1, 0.2]),
    ([1.0, 2.0], [0.1, -0.2]),
    ([1.0, np.nan], [0.1, 0.2]),
])
def test_invalid_spectra(w, a):
    with pytest.raises(SpectrumError):
        Spectrum(np.array(w), np.array(a))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1e6, allow_nan=False, allow_infinity=False), min_size=2, max_size=40))
def test_csv_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("csv") / "s.csv"
    s = Spectrum(np.arange(len(values), dtype=float) * 0.5 + 975, np.array(values), sample_id="s")
    back = load_spectrum_csv(write_spectrum_csv(s, path))
    assert np.array_equal(back.wavenumbers, s.wavenumbers)
    assert np.array_equal(back.absorbances, s.absorbances)


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("wavenumber,absorbance\n975,0.1\n976,oops\n")
    with pytest.raises(SpectrumParseError) as err:
        load_spectrum_csv(p)
    assert err.value.line == 3


def _manifest(counts):
    recs = []
    for c, n in enumerate(counts):
        label = ClassLabel(c, f"k{c}")
        recs += [ManifestRecord(f"k{c}_{i:02d}", label, f"k{c}_{i:02d}.png") for i in range(n)]
    return DatasetManifest(recs)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(2, 9), min_size=2, max_size=5), st.integers(0, 2), st.integers(0, 2**32))
def test_split_is_stratified_partition(counts, per_class, seed):
    out = split_dataset(_manifest(counts), per_class, seed)
    assert sorted(r.sample_id for r in out.records) == sorted(r.sample_id for r in _manifest(counts).records)
    for c in range(len(counts)):
        test = [r for r in out.by_split("test") if r.class_label.index == c]
        assert len(test) == per_class
    assert split_dataset(_manifest(counts), per_class, seed).to_json() == out.to_json()


def test_split_too_few():
    with pytest.raises(ValueError, match="k0"):
        split_dataset(_manifest([1, 4]), 2, 0)


def test_manifest_json_round_trip(tmp_path):
    m = split_dataset(_manifest([3, 3]), 1, 5)
    path = m.save(tmp_path / "manifest.json", check_files=False)
    assert DatasetManifest.load(path).to_json() == m.to_json()
    assert {"sample_id", "class", "class_index", "file", "split"} <= set(json.loads(m.to_json())[0])


def test_fixture_spectra_separable():
    spectra = generate_fixture_spectra(10, 5, seed=0)
    assert len(spectra) == 50 and all(s.is_canonical for s in spectra)
    assert nearest_centroid_accuracy(spectra) == 1.0
