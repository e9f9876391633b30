"""Image-classifier harness: backbones, seeded training, metrics, size sweep.

The chooser uses :func:`make_evaluator` as its scoring function. Training
uses Adam at a single constant learning rate with cross-entropy loss.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch import nn

from .augmentation import CompositeStrategy, LabeledImage, purely_augmented
from .seeding import derive_seed

BACKBONES = ("tiny_test", "small_cnn", "resnet50_scratch", "resnet50_pretrained")

# trainable parameter counts reported for the published configurations (10 classes)
REPORTED_PARAMETER_COUNTS = {"small_cnn": 13_804_510, "resnet50": 23_528_522}


@dataclass
class ClassifierSpec:
    backbone_id: str
    num_classes: int
    learning_rate: float = 1e-3
    batch_size: int = 32
    weights_path: str | None = None  # checkpoint for resnet50_pretrained

    def __post_init__(self):
        if self.backbone_id not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone_id!r}; choose from {BACKBONES}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")

    @property
    def trainable_parameter_count(self) -> int:
        return count_trainable(build_backbone(self, load_weights=False))


@dataclass
class EvalMetrics:
    accuracy: float
    precision: float
    runtime_seconds: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0 and 0.0 <= self.precision <= 1.0):
            raise ValueError(f"metrics out of [0, 1]: {self}")
        if self.runtime_seconds < 0:
            raise ValueError("runtime must be non-negative")


class TinyNet(nn.Module):
    """A few-thousand-parameter CNN for desk-scale runs."""

    def __init__(self, num_classes: int):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 8, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(8, 16, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(16, 16, 3, padding=1), nn.ReLU(), nn.AdaptiveAvgPool2d(4),
        )
        self.head = nn.Linear(16 * 16, num_classes)

    def forward(self, x):
        return self.head(torch.flatten(self.features(x), 1))


class SmallCNN(nn.Module):
    """Three conv blocks and a wide dense layer, about 13.7M parameters for 10 classes."""

    def __init__(self, num_classes: int, hidden: int = 416):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 32, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(32, 64, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(64, 128, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            # fixed 16x16 grid keeps the parameter count independent of input size
            nn.AdaptiveAvgPool2d(16),
        )
        self.head = nn.Sequential(nn.Flatten(), nn.Linear(128 * 16 * 16, hidden), nn.ReLU(),
                                  nn.Dropout(0.5), nn.Linear(hidden, num_classes))

    def forward(self, x):
        return self.head(self.features(x))


def build_backbone(spec: ClassifierSpec, load_weights: bool = True) -> nn.Module:
    if spec.backbone_id == "tiny_test":
        return TinyNet(spec.num_classes)
    if spec.backbone_id == "small_cnn":
        return SmallCNN(spec.num_classes)
    from torchvision.models import resnet50

    if spec.backbone_id == "resnet50_scratch":
        return resnet50(num_classes=spec.num_classes)
    model = resnet50()
    if load_weights and spec.weights_path:
        model.load_state_dict(torch.load(spec.weights_path, map_location="cpu"))
    elif load_weights:
        from torchvision.models import ResNet50_Weights
        try:
            model = resnet50(weights=ResNet50_Weights.IMAGENET1K_V1)
        except Exception as exc:  # noqa: BLE001 - no network or cache
            raise RuntimeError(
                "resnet50_pretrained needs ImageNet weights: set weights_path to a local "
                "torchvision resnet50 state_dict or make the torchvision cache reachable") from exc
    model.fc = nn.Linear(model.fc.in_features, spec.num_classes)
    return model


def count_trainable(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def to_tensor(images: list[np.ndarray]) -> torch.Tensor:
    arr = np.stack(images).astype(np.float32) / 255.0
    return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()


@dataclass
class ClassifierModel:
    spec: ClassifierSpec
    module: nn.Module
    epochs: int
    seed: int
    train_seconds: float = 0.0
    loss_history: list[float] = field(default_factory=list)

    @torch.no_grad()
    def predict(self, images: list[np.ndarray], batch_size: int = 64) -> np.ndarray:
        self.module.eval()
        preds = []
        for i in range(0, len(images), batch_size):
            logits = self.module(to_tensor(images[i:i + batch_size]))
            preds.append(logits.argmax(dim=1).numpy())
        return np.concatenate(preds)


def train_classifier(train_images: list[LabeledImage], spec: ClassifierSpec, epochs: int,
                     seed: int) -> ClassifierModel:
    if not train_images:
        raise ValueError("empty training set")
    labels = np.array([it.label for it in train_images])
    if labels.min() < 0 or labels.max() >= spec.num_classes:
        raise ValueError(f"labels must lie in [0, {spec.num_classes}), got "
                         f"[{labels.min()}, {labels.max()}]")
    torch.manual_seed(derive_seed(seed, "init"))
    module = build_backbone(spec)
    model = ClassifierModel(spec, module, epochs, seed)
    if epochs == 0:
        return model
    x = to_tensor([it.image for it in train_images])
    y = torch.from_numpy(labels).long()
    opt = torch.optim.Adam(module.parameters(), lr=spec.learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    gen = torch.Generator().manual_seed(derive_seed(seed, "shuffle"))
    start = time.perf_counter()
    module.train()
    for _ in range(epochs):
        order = torch.randperm(len(y), generator=gen)
        total = 0.0
        for i in range(0, len(y), spec.batch_size):
            idx = order[i:i + spec.batch_size]
            opt.zero_grad()
            loss = loss_fn(module(x[idx]), y[idx])
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        model.loss_history.append(total / len(y))
    model.train_seconds = time.perf_counter() - start
    return model


def compute_metrics(y_true, y_pred, num_classes: int) -> tuple[float, float]:
    """Accuracy and macro precision; a class never predicted contributes precision 0."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if len(y_true) == 0:
        raise ValueError("empty evaluation set")
    accuracy = float(np.mean(y_true == y_pred))
    precisions = []
    for c in range(num_classes):
        predicted = y_pred == c
        precisions.append(float(np.sum(predicted & (y_true == c)) / predicted.sum())
                          if predicted.any() else 0.0)
    return accuracy, float(np.mean(precisions))


def evaluate(model: ClassifierModel, test_images: list[LabeledImage]) -> EvalMetrics:
    if not test_images:
        raise ValueError("empty test set")
    preds = model.predict([it.image for it in test_images])
    acc, prec = compute_metrics([it.label for it in test_images], preds, model.spec.num_classes)
    return EvalMetrics(acc, prec, model.train_seconds)


Evaluator = Callable[[list[LabeledImage], list[LabeledImage], int], EvalMetrics]


def make_evaluator(spec: ClassifierSpec, epochs: int) -> Evaluator:
    """Train-then-evaluate closure with the signature the chooser expects."""

    def evaluator(train_set, test_set, seed):
        model = train_classifier(train_set, spec, epochs, seed)
        return evaluate(model, test_set)

    evaluator.description = f"{spec.backbone_id}, Adam lr={spec.learning_rate}, " \
                            f"batch={spec.batch_size}, epochs={epochs}, cross-entropy"
    return evaluator


# ---------------------------------------------------------------- size sweep

SWEEP_COLUMNS = ("size", "backbone", "mean_acc", "mean_prec", "norm_runtime")


@dataclass
class SweepCell:
    size: int
    backbone: str
    accuracies: list[float] = field(default_factory=list)
    precisions: list[float] = field(default_factory=list)
    runtimes: list[float] = field(default_factory=list)
    error: str | None = None
    norm_runtime: float = float("nan")

    @property
    def mean_acc(self) -> float:
        return float(np.mean(self.accuracies)) if self.accuracies else float("nan")

    @property
    def mean_prec(self) -> float:
        return float(np.mean(self.precisions)) if self.precisions else float("nan")

    @property
    def mean_runtime(self) -> float:
        return float(np.mean(self.runtimes)) if self.runtimes else float("nan")


def minmax_normalize(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    finite = np.isfinite(v)
    out = np.full_like(v, np.nan)
    if not finite.any():
        return out
    lo, hi = v[finite].min(), v[finite].max()
    out[finite] = (v[finite] - lo) / (hi - lo) if hi > lo else 0.0
    return out


def run_size_sweep(real_train: list[LabeledImage], test_set: list[LabeledImage], sizes: list[int],
                   specs: list[ClassifierSpec], strat: CompositeStrategy, repetitions: int,
                   seed: int, epochs: int, num_classes: int | None = None,
                   trainer=train_classifier) -> list[SweepCell]:
    """Purely augmented, class-balanced datasets of each total size x backbone.

    Runtime is min-max normalised across every completed cell. A failing cell
    is recorded with its error instead of aborting the sweep.
    """
    num_classes = num_classes or len({it.label for it in real_train})
    for size in sizes:
        if size <= 0 or size % num_classes:
            raise ValueError(f"size {size} is not a positive multiple of {num_classes} classes")
    cells = []
    for size in sizes:
        data = purely_augmented(real_train, strat, size // num_classes, derive_seed(seed, "sweep", size))
        for spec in specs:
            cell = SweepCell(size, spec.backbone_id)
            try:
                for rep in range(repetitions):
                    model = trainer(data, spec, epochs, derive_seed(seed, spec.backbone_id, size, rep))
                    m = evaluate(model, test_set)
                    cell.accuracies.append(m.accuracy)
                    cell.precisions.append(m.precision)
                    cell.runtimes.append(m.runtime_seconds)
            except Exception as exc:  # noqa: BLE001 - recorded per cell
                cell.error = f"{type(exc).__name__}: {exc}"
            cells.append(cell)
    norm = minmax_normalize([c.mean_runtime if c.error is None else np.nan for c in cells])
    for c, n in zip(cells, norm):
        c.norm_runtime = float(n)
    return cells


def write_sweep_csv(cells: list[SweepCell], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS + ("error",))
        for c in cells:
            w.writerow([c.size, c.backbone, f"{c.mean_acc:.6f}", f"{c.mean_prec:.6f}",
                        f"{c.norm_runtime:.6f}", c.error or ""])
    return path


def plot_sweep(cells: list[SweepCell], path) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax_acc, ax_prec) = plt.subplots(1, 2, figsize=(10, 4), sharex=True)
    for backbone in dict.fromkeys(c.backbone for c in cells):
        rows = [c for c in cells if c.backbone == backbone]
        ax_acc.plot([c.size for c in rows], [c.mean_acc for c in rows], marker="o", label=backbone)
        ax_prec.plot([c.size for c in rows], [c.mean_prec for c in rows], marker="o", label=backbone)
    sizes = sorted({c.size for c in cells})
    runtime = [np.nanmean([c.norm_runtime for c in cells if c.size == s]) for s in sizes]
    for ax, title in ((ax_acc, "accuracy"), (ax_prec, "precision")):
        ax.plot(sizes, runtime, "k:", label="normalized runtime")
        ax.set_xlabel("augmented dataset size")
        ax.set_title(title)
        ax.set_ylim(0, 1.05)
    ax_acc.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)
