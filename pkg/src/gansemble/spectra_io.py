"""Labeled spectra: CSV ingestion, canonical resampling, splitting, fixtures."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .seeding import derive_rng

WAVENUMBER_MIN = 975.0
WAVENUMBER_MAX = 1800.0
WAVENUMBER_STEP = 0.5
CANONICAL_POINTS = int(round((WAVENUMBER_MAX - WAVENUMBER_MIN) / WAVENUMBER_STEP)) + 1
CANONICAL_GRID = WAVENUMBER_MIN + WAVENUMBER_STEP * np.arange(CANONICAL_POINTS)

SPLITS = ("train", "test")


class SpectrumError(ValueError):
    """Invalid spectrum content."""


class SpectrumParseError(SpectrumError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class DomainError(SpectrumError):
    pass


@dataclass(frozen=True)
class ClassLabel:
    index: int
    name: str

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"class index must be non-negative, got {self.index}")


@dataclass(eq=False)
class Spectrum:
    wavenumbers: np.ndarray
    absorbances: np.ndarray
    class_label: ClassLabel | None = None
    sample_id: str = ""

    def __post_init__(self):
        self.wavenumbers = np.asarray(self.wavenumbers, dtype=np.float64)
        self.absorbances = np.asarray(self.absorbances, dtype=np.float64)
        validate_spectrum(self)

    def __len__(self):
        return len(self.wavenumbers)

    @property
    def is_canonical(self) -> bool:
        return len(self) == CANONICAL_POINTS and np.array_equal(self.wavenumbers, CANONICAL_GRID)


def validate_spectrum(s: Spectrum) -> None:
    w, a = s.wavenumbers, s.absorbances
    if w.ndim != 1 or a.ndim != 1 or len(w) != len(a):
        raise SpectrumError(
            f"{s.sample_id or 'spectrum'}: wavenumbers and absorbances must be 1-D and equal length")
    if len(w) == 0:
        raise SpectrumError(f"{s.sample_id or 'spectrum'}: empty spectrum")
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(a))):
        raise SpectrumError(f"{s.sample_id or 'spectrum'}: non-finite values")
    if np.any(np.diff(w) <= 0):
        bad = int(np.argmax(np.diff(w) <= 0))
        raise SpectrumError(
            f"{s.sample_id or 'spectrum'}: wavenumbers not strictly ascending at index {bad + 1}")
    if np.any(a < 0):
        bad = int(np.argmax(a < 0))
        raise SpectrumError(
            f"{s.sample_id or 'spectrum'}: negative absorbance {a[bad]!r} at index {bad}")


def load_spectrum_csv(path, class_label: ClassLabel | None = None,
                      sample_id: str | None = None) -> Spectrum:
    """Read a two-column ``wavenumber,absorbance`` CSV.

    A single non-numeric header row is tolerated. Rows must already be in
    strictly ascending wavenumber order.
    """
    path = Path(path)
    wn, ab = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise SpectrumParseError(path, lineno, f"expected 2 columns, got {len(row)}")
            try:
                w, a = float(row[0]), float(row[1])
            except ValueError:
                if lineno == 1 and not wn:
                    continue  # header
                raise SpectrumParseError(path, lineno, f"non-numeric row {row!r}") from None
            wn.append(w)
            ab.append(a)
    if not wn:
        raise SpectrumParseError(path, 0, "no data rows")
    return Spectrum(np.array(wn), np.array(ab), class_label,
                    sample_id if sample_id is not None else path.stem)


def write_spectrum_csv(s: Spectrum, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["wavenumber", "absorbance"])
        for w, a in zip(s.wavenumbers, s.absorbances):
            writer.writerow([repr(float(w)), repr(float(a))])
    return path


def resample_spectrum(s: Spectrum) -> Spectrum:
    """Linear interpolation onto the canonical 975-1800 cm^-1 grid (0.5 steps)."""
    w = s.wavenumbers
    if w[0] > WAVENUMBER_MIN or w[-1] < WAVENUMBER_MAX:
        raise DomainError(
            f"{s.sample_id or 'spectrum'}: domain [{w[0]}, {w[-1]}] does not cover "
            f"[{WAVENUMBER_MIN}, {WAVENUMBER_MAX}]")
    values = np.interp(CANONICAL_GRID, w, s.absorbances)
    # np.interp can differ from the stored sample by an ulp at shared grid points
    idx = np.searchsorted(w, CANONICAL_GRID)
    idx = np.minimum(idx, len(w) - 1)
    exact = w[idx] == CANONICAL_GRID
    values[exact] = s.absorbances[idx[exact]]
    return Spectrum(CANONICAL_GRID.copy(), values, s.class_label, s.sample_id)


# ---------------------------------------------------------------- manifest

@dataclass
class ManifestRecord:
    sample_id: str
    class_label: ClassLabel
    file_path: str
    split: str = "train"
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"sample_id": self.sample_id, "class": self.class_label.name,
               "class_index": self.class_label.index, "file": self.file_path,
               "split": self.split}
        out.update(self.extra)
        return out

    @classmethod
    def from_json(cls, d: dict) -> "ManifestRecord":
        known = {"sample_id", "class", "class_index", "file", "split"}
        return cls(d["sample_id"], ClassLabel(int(d["class_index"]), d["class"]),
                   d["file"], d.get("split", "train"),
                   {k: v for k, v in d.items() if k not in known})


@dataclass
class DatasetManifest:
    records: list[ManifestRecord]

    def __post_init__(self):
        seen = set()
        for r in self.records:
            if r.sample_id in seen:
                raise ValueError(f"duplicate sample_id {r.sample_id!r} in manifest")
            if r.split not in SPLITS:
                raise ValueError(f"{r.sample_id}: unknown split {r.split!r}")
            seen.add(r.sample_id)

    def __len__(self):
        return len(self.records)

    def classes(self) -> list[ClassLabel]:
        return sorted({r.class_label for r in self.records}, key=lambda c: c.index)

    def by_split(self, split: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == split]

    def to_json(self) -> str:
        return json.dumps([r.to_json() for r in self.records], indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        return cls([ManifestRecord.from_json(d) for d in json.loads(text)])

    def save(self, path, check_files: bool = True) -> Path:
        path = Path(path)
        if check_files:
            self.check_files(path.parent)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def check_files(self, root) -> None:
        root = Path(root)
        missing = [r.file_path for r in self.records if not (root / r.file_path).exists()]
        if missing:
            raise FileNotFoundError(f"manifest references missing files: {missing[:5]}")


def split_dataset(manifest: DatasetManifest, per_class_test: int, seed: int) -> DatasetManifest:
    """Stratified split holding out exactly ``per_class_test`` records per class."""
    if per_class_test < 0:
        raise ValueError("per_class_test must be non-negative")
    by_class: dict[ClassLabel, list[ManifestRecord]] = {}
    for r in manifest.records:
        by_class.setdefault(r.class_label, []).append(r)
    test_ids: set[str] = set()
    for label in sorted(by_class, key=lambda c: c.index):
        members = sorted(by_class[label], key=lambda r: r.sample_id)
        if len(members) < per_class_test:
            raise ValueError(
                f"class {label.name!r} has {len(members)} samples, fewer than "
                f"per_class_test={per_class_test}")
        if per_class_test == 0:
            continue
        rng = derive_rng(seed, "split", label.index)
        picks = rng.choice(len(members), size=per_class_test, replace=False)
        test_ids.update(members[i].sample_id for i in picks)
    return DatasetManifest([
        ManifestRecord(r.sample_id, r.class_label, r.file_path,
                       "test" if r.sample_id in test_ids else "train", dict(r.extra))
        for r in manifest.records])


# ---------------------------------------------------------------- fixtures

def fixture_peaks(class_index: int, classes: int) -> list[tuple[float, float, float]]:
    """(center, width, height) triples defining a fixture class.

    Centers are spread over the canonical domain so that every class has a
    distinct dominant peak; two shoulders make the shapes less trivial.
    """
    span = WAVENUMBER_MAX - WAVENUMBER_MIN
    main = WAVENUMBER_MIN + span * (class_index + 0.5) / classes
    shoulder = WAVENUMBER_MIN + span * ((class_index * 0.37 + 0.21) % 1.0)
    tail = WAVENUMBER_MIN + span * ((class_index * 0.61 + 0.73) % 1.0)
    return [(main, 12.0 + 3.0 * (class_index % 4), 1.0),
            (shoulder, 25.0, 0.35),
            (tail, 40.0, 0.2)]


def generate_fixture_spectra(classes: int, per_class: int, seed: int) -> list[Spectrum]:
    """Synthetic Gaussian-peak spectra on the canonical grid."""
    if classes < 2:
        raise ValueError("classes must be >= 2")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    out = []
    x = CANONICAL_GRID
    for c in range(classes):
        label = ClassLabel(c, f"class{c:02d}")
        peaks = fixture_peaks(c, classes)
        for k in range(per_class):
            rng = derive_rng(seed, "fixture", c, k)
            y = np.full_like(x, 0.02)
            for center, width, height in peaks:
                jitter = rng.normal(0.0, 2.0)
                scale = height * rng.uniform(0.85, 1.15)
                y += scale * np.exp(-0.5 * ((x - center - jitter) / width) ** 2)
            y += np.abs(rng.normal(0.0, 0.01, size=x.shape))
            out.append(Spectrum(x.copy(), y, label, f"{label.name}_{k:03d}"))
    return out


def nearest_centroid_accuracy(spectra: list[Spectrum]) -> float:
    """Train accuracy of a nearest-centroid classifier on raw absorbances."""
    labels = np.array([s.class_label.index for s in spectra])
    X = np.stack([s.absorbances for s in spectra])
    classes = np.unique(labels)
    centroids = np.stack([X[labels == c].mean(axis=0) for c in classes])
    d = ((X[:, None, :] - centroids[None]) ** 2).sum(axis=-1)
    return float(np.mean(classes[np.argmin(d, axis=1)] == labels))
