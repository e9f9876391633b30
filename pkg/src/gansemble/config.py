"""Pipeline configuration: one JSON document determines a run.

Two built-in profiles: ``smoke`` (fixture corpus, 32x32, tiny backbone,
minutes on a CPU) and ``full`` (real corpus, 128x128, the published
settings). A config file overrides profile defaults field by field.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .seeding import derive_seed

VARIANTS = ("augstar", "aug1", "aug7", "oversampling_no_aug", "no_oversampling")
VARIANT_LABELS = {"augstar": "Aug*", "aug1": "Aug 1", "aug7": "Aug 7",
                  "oversampling_no_aug": "Oversampling No Aug", "no_oversampling": "No Oversampling"}


@dataclass
class CorpusSettings:
    corpus_dir: str | None = None
    fixture_counts: list[int] = field(default_factory=lambda: [5, 8, 12])
    per_class_test: int = 2
    resolution: int = 32
    line_thickness: int = 1
    margin: int = 1


@dataclass
class ChooserSettings:
    bases: list[str] = field(default_factory=lambda: ["FLIP_SHIFT", "MASK"])
    steps: int = 2
    repetitions: int = 2
    target_per_class: int = 12
    epochs: int = 15
    backbone: str = "tiny_test"
    learning_rate: float = 1e-3
    batch_size: int = 32
    weights_path: str | None = None
    workers: int = 1


@dataclass
class GanSettings:
    variants: list[str] = field(default_factory=lambda: list(VARIANTS))
    target_per_class: int = 12
    base_channels: int = 16
    latent_dim: int = 100
    epochs: int = 8
    unstable_epochs: int = 8  # budget for Aug 1 / Aug 7, which collapse sooner
    max_attempts: int = 2
    generator_lr: float = 0.002
    discriminator_lr: float = 0.0002
    dropout_rate: float = 0.3
    collapse_window: int = 10
    variance_floor: float = 1e-4
    disc_acc_ceiling: float = 0.995


@dataclass
class FilterSettings:
    corner_side: int = 4
    keep_count: int = 10
    pool_per_class: int = 40
    convention: str = "ink"


@dataclass
class MetricsSettings:
    extractor: str = "random_projection"
    splits: int = 2
    projection_dim: int = 16
    projection_classes: int = 10
    inception_weights: str | None = None


@dataclass
class SweepSettings:
    sizes_per_class: list[int] = field(default_factory=lambda: [4, 8])
    backbones: list[str] = field(default_factory=lambda: ["tiny_test"])
    repetitions: int = 1
    epochs: int = 10
    strategy: list[int] = field(default_factory=lambda: [1])


@dataclass
class PipelineConfig:
    profile: str = "smoke"
    workdir: str = "work"
    global_seed: int = 0
    corpus: CorpusSettings = field(default_factory=CorpusSettings)
    chooser: ChooserSettings = field(default_factory=ChooserSettings)
    gan: GanSettings = field(default_factory=GanSettings)
    filter: FilterSettings = field(default_factory=FilterSettings)
    metrics: MetricsSettings = field(default_factory=MetricsSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)

    def stage_seed(self, stage: str) -> int:
        return derive_seed(self.global_seed, stage)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:16]


FULL_OVERRIDES = {
    "corpus": {"fixture_counts": [], "resolution": 128, "line_thickness": 1, "margin": 2},
    "chooser": {"bases": ["FLIP_SHIFT", "BLUR_ROTATE", "ZOOM_ROTATE", "MASK"], "steps": 4,
                "repetitions": 10, "target_per_class": 50, "epochs": 150,
                "backbone": "resnet50_pretrained"},
    "gan": {"target_per_class": 50, "base_channels": 32, "epochs": 150, "unstable_epochs": 80,
            "max_attempts": 10},
    "filter": {"corner_side": 16, "keep_count": 1000, "pool_per_class": 5000},
    "metrics": {"extractor": "inception", "splits": 10},
    "sweep": {"sizes_per_class": [10, 20, 30, 40, 50, 60, 70, 80, 90, 100],
              "backbones": ["small_cnn", "resnet50_scratch", "resnet50_pretrained"],
              "repetitions": 5, "epochs": 150, "strategy": [1]},
}


def _merge(obj, overrides: dict, path: str = ""):
    known = {f.name: f for f in fields(obj)}
    for key, value in overrides.items():
        if key not in known:
            raise ValueError(f"unknown config key {path + key!r}")
        current = getattr(obj, key)
        if is_dataclass(current):
            if not isinstance(value, dict):
                raise ValueError(f"config key {path + key!r} must be an object")
            _merge(current, value, f"{path}{key}.")
        else:
            setattr(obj, key, value)
    return obj


def build_config(profile: str = "smoke", overrides: dict | None = None) -> PipelineConfig:
    if profile not in ("smoke", "full"):
        raise ValueError(f"unknown profile {profile!r}")
    cfg = PipelineConfig(profile=profile)
    if profile == "full":
        _merge(cfg, FULL_OVERRIDES)
    if overrides:
        overrides = dict(overrides)
        if overrides.pop("profile", profile) != profile:
            raise ValueError("profile in config file disagrees with --profile")
        _merge(cfg, overrides)
    return cfg


def load_config(path, profile: str | None = None) -> PipelineConfig:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return build_config(profile or data.get("profile", "smoke"), data)
