"""Frechet distance and Inception Score over an injected feature extractor."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

TABLE2_COLUMNS = ("dataset", "fid_regular", "fid_filtered", "is_mean_regular", "is_mean_filtered",
                  "is_stdev_regular", "is_stdev_filtered")


@dataclass
class FeatureExtractor:
    """``features`` maps a batch of uint8 HxWx3 images to (n, d); ``probabilities`` to (n, C)."""

    features: Callable[[list[np.ndarray]], np.ndarray]
    probabilities: Callable[[list[np.ndarray]], np.ndarray]
    name: str = "custom"


@dataclass
class GaussianStats:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.mean)


def fit_gaussian(features) -> GaussianStats:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) < 2:
        raise ValueError("need at least 2 feature vectors")
    cov = np.cov(x, rowvar=False, ddof=1).reshape(x.shape[1], x.shape[1])
    return GaussianStats(x.mean(axis=0), (cov + cov.T) / 2)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((m + m.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T


def compute_fid(a: GaussianStats, b: GaussianStats) -> float:
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    tr((S_a S_b)^(1/2)) is evaluated as the sum of square roots of the
    eigenvalues of S_a^(1/2) S_b S_a^(1/2), which is symmetric; negative
    eigenvalues from round-off are clamped to zero.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    root_a = _psd_sqrt(a.covariance)
    inner = root_a @ b.covariance @ root_a
    cross = np.sqrt(np.clip(np.linalg.eigvalsh((inner + inner.T) / 2), 0, None)).sum()
    diff = a.mean - b.mean
    fid = float(diff @ diff + np.trace(a.covariance) + np.trace(b.covariance) - 2 * cross)
    if not np.isfinite(fid):
        raise FloatingPointError("FID is not finite")
    return max(fid, 0.0)


def compute_is(probabilities, splits: int = 10) -> tuple[float, float]:
    """Mean and population std over contiguous splits of exp(E[KL(p(y|x) || p(y))])."""
    p = np.asarray(probabilities, dtype=np.float64)
    if splits < 1:
        raise ValueError("splits must be >= 1")
    if p.ndim != 2 or len(p) < splits:
        raise ValueError(f"need at least {splits} probability vectors, got {len(p)}")
    scores = []
    for part in np.array_split(p, splits):
        marginal = part.mean(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(part > 0, part * (np.log(part) - np.log(marginal)), 0.0)
        scores.append(np.exp(terms.sum(axis=1).mean()))
    scores = np.array(scores)
    return float(scores.mean()), float(scores.std())


@dataclass
class ScoreReport:
    fid: float
    is_mean: float
    is_stdev: float
    extractor: str
    n_real: int
    n_synth: int


def score_image_sets(real_images: list[np.ndarray], synth_images: list[np.ndarray],
                     extractor: FeatureExtractor, splits: int = 10) -> ScoreReport:
    if not real_images or not synth_images:
        raise ValueError("both image sets must be non-empty")
    real = fit_gaussian(extractor.features(real_images))
    synth = fit_gaussian(extractor.features(synth_images))
    is_mean, is_std = compute_is(extractor.probabilities(synth_images), splits)
    return ScoreReport(compute_fid(real, synth), is_mean, is_std, extractor.name,
                       len(real_images), len(synth_images))


def write_table2(rows: list[dict], path) -> Path:
    """``rows`` carry a ``dataset`` name plus ``regular`` / ``filtered`` ScoreReports."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE2_COLUMNS + ("collapsed", "extractor"))
        for row in rows:
            reg, fil = row["regular"], row["filtered"]
            w.writerow([row["dataset"], f"{reg.fid:.4f}", f"{fil.fid:.4f}", f"{reg.is_mean:.4f}",
                        f"{fil.is_mean:.4f}", f"{reg.is_stdev:.4f}", f"{fil.is_stdev:.4f}",
                        int(bool(row.get("collapsed", False))), reg.extractor])
    return path


# ---------------------------------------------------------------- extractors

def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def random_projection_extractor(input_shape: tuple[int, int, int], dim: int = 64,
                                num_classes: int = 10, seed: int = 0,
                                temperature: float = 1.0) -> FeatureExtractor:
    """Fixed Gaussian projection of centred pixels; softmax of a second projection for IS."""
    rng = np.random.default_rng(seed)
    n_in = int(np.prod(input_shape))
    proj = rng.standard_normal((n_in, dim)) / np.sqrt(n_in)
    head = rng.standard_normal((dim, num_classes))

    def features(images):
        x = np.stack(images).reshape(len(images), -1).astype(np.float64) / 127.5 - 1.0
        return x @ proj

    def probabilities(images):
        return _softmax(features(images) @ head / temperature)

    return FeatureExtractor(features, probabilities, f"random_projection(d={dim},C={num_classes},seed={seed})")


def inception_extractor(weights_path: str | None = None, pretrained: bool = True,
                        batch_size: int = 32) -> FeatureExtractor:
    """torchvision Inception-v3: 2048-d pool features and 1000-way softmax."""
    import torch
    import torch.nn.functional as F
    from torchvision.models import Inception_V3_Weights, inception_v3

    if weights_path:
        net = inception_v3(weights=None, aux_logits=True, init_weights=False)
        net.load_state_dict(torch.load(weights_path, map_location="cpu"))
    elif pretrained:
        net = inception_v3(weights=Inception_V3_Weights.IMAGENET1K_V1)
    else:
        net = inception_v3(weights=None, aux_logits=True, init_weights=True)
    net.eval()
    pooled = {}
    net.avgpool.register_forward_hook(lambda m, i, o: pooled.__setitem__("x", o))
    mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
    std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)

    @torch.no_grad()
    def run(images):
        feats, probs = [], []
        for i in range(0, len(images), batch_size):
            x = torch.from_numpy(np.stack(images[i:i + batch_size]).astype(np.float32) / 255.0)
            x = F.interpolate(x.permute(0, 3, 1, 2), size=(299, 299), mode="bilinear",
                              align_corners=False)
            logits = net((x - mean) / std)
            feats.append(torch.flatten(pooled["x"], 1).numpy())
            probs.append(F.softmax(logits, dim=1).numpy())
        return np.concatenate(feats).astype(np.float64), np.concatenate(probs).astype(np.float64)

    return FeatureExtractor(lambda ims: run(ims)[0], lambda ims: run(ims)[1],
                            "inception_v3" + ("" if pretrained or weights_path else "(random init)"))
