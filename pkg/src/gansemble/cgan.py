"""Class-conditional GAN: models, training with collapse detection, restarts, sampling.

Each discriminator step sees 64 real and 64 generated images under binary
cross-entropy. The generator step pushes 64 fresh samples through the
frozen discriminator. A seeded 0.86/0.14 split of the real images reserves
a holdout used only to monitor the discriminator.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch import nn

from .augmentation import LabeledImage
from .seeding import derive_rng, derive_seed
from .spectra_io import ClassLabel


class GANTrainingError(RuntimeError):
    pass


@dataclass
class GeneratorConfig:
    num_classes: int
    latent_dim: int = 100
    upsample_stages: int = 4
    base_channels: int = 32
    embed_dim: int = 50
    leaky_slope: float = 0.2
    learning_rate: float = 0.002

    def __post_init__(self):
        if self.num_classes < 1 or self.latent_dim < 1 or self.upsample_stages < 1:
            raise ValueError("num_classes, latent_dim and upsample_stages must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")

    @property
    def resolution(self) -> int:
        return 8 * 2 ** self.upsample_stages


@dataclass
class DiscriminatorConfig:
    downsample_stages: int = 4
    base_channels: int = 32
    embed_dim: int = 50
    dropout_rate: float = 0.3
    leaky_slope: float = 0.2
    learning_rate: float = 0.0002

    def __post_init__(self):
        if not 0 < self.dropout_rate < 1:
            raise ValueError("dropout_rate must be in (0, 1)")
        if self.leaky_slope <= 0 or self.learning_rate <= 0:
            raise ValueError("leaky_slope and learning_rate must be > 0")


@dataclass
class CollapseConfig:
    window: int = 10
    variance_floor: float = 1e-4
    disc_acc_ceiling: float = 0.995

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")


@dataclass
class TrainState:
    epoch: int = 0
    gen_loss_history: list[float] = field(default_factory=list)
    disc_loss_history: list[float] = field(default_factory=list)
    probe_variance_history: list[float] = field(default_factory=list)
    disc_acc_history: list[float] = field(default_factory=list)
    collapsed: bool = False
    collapse_epoch: int | None = None


# ---------------------------------------------------------------- models

class Generator(nn.Module):
    """(z, class embedding) -> 8x8 feature map -> stride-2 upsampling to full size."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        stages = cfg.upsample_stages
        self.start_channels = cfg.base_channels * 2 ** (stages - 1)
        self.embed = nn.Embedding(cfg.num_classes, cfg.embed_dim)
        self.project = nn.Sequential(
            nn.Linear(cfg.latent_dim + cfg.embed_dim, self.start_channels * 8 * 8),
            nn.LeakyReLU(cfg.leaky_slope))
        layers: list[nn.Module] = []
        ch = self.start_channels
        for _ in range(stages - 1):
            layers += [nn.ConvTranspose2d(ch, ch // 2, 4, stride=2, padding=1),
                       nn.LeakyReLU(cfg.leaky_slope)]
            ch //= 2
        layers += [nn.ConvTranspose2d(ch, 3, 4, stride=2, padding=1), nn.Tanh()]
        self.body = nn.Sequential(*layers)

    def forward(self, z, labels):
        h = self.project(torch.cat([z, self.embed(labels)], dim=1))
        return self.body(h.view(-1, self.start_channels, 8, 8))


class Discriminator(nn.Module):
    """Image plus a label plane -> stride-2 downsampling -> sigmoid score in [0, 1]."""

    def __init__(self, cfg: DiscriminatorConfig, num_classes: int, resolution: int):
        super().__init__()
        if resolution % 2 ** cfg.downsample_stages:
            raise ValueError(f"resolution {resolution} not divisible by 2^{cfg.downsample_stages}")
        self.resolution = resolution
        self.embed = nn.Embedding(num_classes, cfg.embed_dim)
        self.label_plane = nn.Linear(cfg.embed_dim, resolution * resolution)
        layers: list[nn.Module] = []
        ch_in, ch = 4, cfg.base_channels
        for _ in range(cfg.downsample_stages):
            layers += [nn.Conv2d(ch_in, ch, 4, stride=2, padding=1),
                       nn.LeakyReLU(cfg.leaky_slope), nn.Dropout(cfg.dropout_rate)]
            ch_in, ch = ch, ch * 2
        self.body = nn.Sequential(*layers)
        side = resolution // 2 ** cfg.downsample_stages
        self.head = nn.Sequential(nn.Flatten(), nn.Linear(ch_in * side * side, 1), nn.Sigmoid())

    def forward(self, x, labels):
        plane = self.label_plane(self.embed(labels)).view(-1, 1, self.resolution, self.resolution)
        return self.head(self.body(torch.cat([x, plane], dim=1))).squeeze(1)


def build_models(gcfg: GeneratorConfig, dcfg: DiscriminatorConfig) -> tuple[Generator, Discriminator]:
    return Generator(gcfg), Discriminator(dcfg, gcfg.num_classes, gcfg.resolution)


def images_to_tensor(images: list[np.ndarray]) -> torch.Tensor:
    arr = np.stack(images).astype(np.float32) / 127.5 - 1.0
    return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()


def tensor_to_images(x: torch.Tensor) -> list[np.ndarray]:
    arr = ((x.detach().permute(0, 2, 3, 1).numpy() + 1.0) * 127.5).round().clip(0, 255)
    return [a.astype(np.uint8) for a in arr]


# ---------------------------------------------------------------- one-step updates

_bce = nn.BCELoss()


def discriminator_step(gen: Generator, disc: Discriminator, opt_d, real: torch.Tensor,
                       real_labels: torch.Tensor, z: torch.Tensor, fake_labels: torch.Tensor) -> float:
    """One update of the discriminator on a real+generated batch; generator untouched."""
    with torch.no_grad():
        fake = gen(z, fake_labels)
    x = torch.cat([real, fake])
    labels = torch.cat([real_labels, fake_labels])
    target = torch.cat([torch.ones(len(real)), torch.zeros(len(fake))])
    opt_d.zero_grad()
    loss = _bce(disc(x, labels), target)
    loss.backward()
    opt_d.step()
    return float(loss.detach())


def generator_step(gen: Generator, disc: Discriminator, opt_g, z: torch.Tensor,
                   labels: torch.Tensor) -> float:
    """One update of the generator through the frozen discriminator."""
    for p in disc.parameters():
        p.requires_grad_(False)
    try:
        opt_g.zero_grad()
        loss = _bce(disc(gen(z, labels), labels), torch.ones(len(z)))
        loss.backward()
        opt_g.step()
    finally:
        for p in disc.parameters():
            p.requires_grad_(True)
    return float(loss.detach())


def make_optimizers(gen, disc, gcfg: GeneratorConfig, dcfg: DiscriminatorConfig):
    return (torch.optim.Adam(gen.parameters(), lr=gcfg.learning_rate, betas=(0.5, 0.999)),
            torch.optim.Adam(disc.parameters(), lr=dcfg.learning_rate, betas=(0.5, 0.999)))


# ---------------------------------------------------------------- collapse

def detect_collapse(state: TrainState, window: int, variance_floor: float,
                    disc_acc_ceiling: float) -> bool:
    """True when the last ``window`` epochs all show a degenerate generator or a saturated critic."""
    if window < 1:
        raise ValueError("window must be >= 1")
    var = state.probe_variance_history
    acc = state.disc_acc_history
    if len(var) < window and len(acc) < window:
        return False
    low_variance = len(var) >= window and all(v < variance_floor for v in var[-window:])
    saturated = len(acc) >= window and all(a > disc_acc_ceiling for a in acc[-window:])
    return low_variance or saturated


# ---------------------------------------------------------------- checkpoints

@dataclass
class GANCheckpoint:
    generator_state: dict
    discriminator_state: dict
    gcfg: GeneratorConfig
    dcfg: DiscriminatorConfig
    seed: int
    epoch: int
    attempt_index: int = 0
    collapsed: bool = False
    state: TrainState = field(default_factory=TrainState)

    def generator(self) -> Generator:
        gen = Generator(self.gcfg)
        gen.load_state_dict(self.generator_state)
        gen.eval()
        return gen

    def discriminator(self) -> Discriminator:
        disc = Discriminator(self.dcfg, self.gcfg.num_classes, self.gcfg.resolution)
        disc.load_state_dict(self.discriminator_state)
        disc.eval()
        return disc

    def meta(self) -> dict:
        return {"gcfg": asdict(self.gcfg), "dcfg": asdict(self.dcfg), "seed": self.seed,
                "epoch": self.epoch, "attempt": self.attempt_index, "collapsed": self.collapsed,
                "state": asdict(self.state)}


def save_checkpoint(ckpt: GANCheckpoint, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(ckpt.generator_state, directory / "generator.pt")
    torch.save(ckpt.discriminator_state, directory / "discriminator.pt")
    (directory / "meta.json").write_text(json.dumps(ckpt.meta(), indent=2) + "\n", encoding="utf-8")
    return directory


def load_checkpoint(directory) -> GANCheckpoint:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    return GANCheckpoint(
        torch.load(directory / "generator.pt", map_location="cpu"),
        torch.load(directory / "discriminator.pt", map_location="cpu"),
        GeneratorConfig(**meta["gcfg"]), DiscriminatorConfig(**meta["dcfg"]),
        meta["seed"], meta["epoch"], meta["attempt"], meta["collapsed"],
        TrainState(**meta["state"]))


# ---------------------------------------------------------------- training

@dataclass
class TrainResult:
    """Outcome of one training attempt; a collapse report when ``collapsed`` is set."""

    checkpoint: GANCheckpoint
    state: TrainState

    @property
    def collapsed(self) -> bool:
        return self.state.collapsed


def split_holdout(n: int, seed: int, holdout_fraction: float = 0.14) -> tuple[np.ndarray, np.ndarray]:
    order = derive_rng(seed, "holdout").permutation(n)
    n_hold = int(round(n * holdout_fraction))
    if n - n_hold < 1:
        n_hold = 0
    return np.sort(order[n_hold:]), np.sort(order[:n_hold])


def probe_variance(images: torch.Tensor, labels: torch.Tensor) -> float:
    """Mean per-pixel variance within each class, averaged over classes ([0, 1] pixel scale).

    Within-class so that a generator emitting one image per label still reads as collapsed.
    """
    per_class = [images[labels == c].var(dim=0, unbiased=False).mean()
                 for c in torch.unique(labels) if int((labels == c).sum()) > 1]
    if not per_class:
        return 0.0
    return float(torch.stack(per_class).mean())


def _state_copy(module: nn.Module) -> dict:
    return {k: v.detach().clone() for k, v in module.state_dict().items()}


def train_cgan(images: list[LabeledImage], gcfg: GeneratorConfig, dcfg: DiscriminatorConfig,
               epochs: int, seed: int, collapse: CollapseConfig | None = None,
               half_batch: int = 64, probe_size: int = 16, attempt_index: int = 0,
               on_epoch: Callable[[TrainState], None] | None = None) -> TrainResult:
    """Train one cGAN; stops early and flags the result when collapse is detected."""
    collapse = collapse or CollapseConfig()
    if not images:
        raise ValueError("no training images")
    res = gcfg.resolution
    for it in images:
        if it.image.shape != (res, res, 3):
            raise ValueError(f"{it.sample_id}: image shape {it.image.shape} does not match "
                             f"generator resolution {res}x{res}x3")
        if not 0 <= it.label < gcfg.num_classes:
            raise ValueError(f"{it.sample_id}: label {it.label} outside [0, {gcfg.num_classes})")

    torch.manual_seed(derive_seed(seed, "torch"))
    gen, disc = build_models(gcfg, dcfg)
    opt_g, opt_d = make_optimizers(gen, disc, gcfg, dcfg)
    noise = torch.Generator().manual_seed(derive_seed(seed, "noise"))

    x_all = images_to_tensor([it.image for it in images])
    y_all = torch.tensor([it.label for it in images], dtype=torch.long)
    train_idx, hold_idx = split_holdout(len(images), seed)
    x_train, y_train = x_all[train_idx], y_all[train_idx]
    x_hold, y_hold = (x_all[hold_idx], y_all[hold_idx]) if len(hold_idx) else (x_train, y_train)

    probe_rng = torch.Generator().manual_seed(derive_seed(seed, "probe"))
    probe_z = torch.randn(probe_size, gcfg.latent_dim, generator=probe_rng)
    probe_labels = torch.arange(probe_size) % gcfg.num_classes

    state = TrainState()
    iters = max(1, math.ceil(len(x_train) / half_batch))
    cursor, order = 0, torch.randperm(len(x_train), generator=noise)
    for epoch in range(1, epochs + 1):
        gen.train()
        disc.train()
        g_losses, d_losses = [], []
        for _ in range(iters):
            take, have = [], 0
            while have < half_batch:  # cycle through reshuffled epochs when data < batch
                if cursor == len(order):
                    cursor, order = 0, torch.randperm(len(x_train), generator=noise)
                n = min(half_batch - have, len(order) - cursor)
                take.append(order[cursor:cursor + n])
                cursor += n
                have += n
            idx = torch.cat(take)
            z = torch.randn(half_batch, gcfg.latent_dim, generator=noise)
            fake_labels = torch.randint(0, gcfg.num_classes, (half_batch,), generator=noise)
            d_losses.append(discriminator_step(gen, disc, opt_d, x_train[idx], y_train[idx], z, fake_labels))
            z = torch.randn(half_batch, gcfg.latent_dim, generator=noise)
            labels = torch.randint(0, gcfg.num_classes, (half_batch,), generator=noise)
            g_losses.append(generator_step(gen, disc, opt_g, z, labels))

        gen.eval()
        disc.eval()
        with torch.no_grad():
            probe = (gen(probe_z, probe_labels) + 1) / 2
            variance = probe_variance(probe, probe_labels)
            hold_z = torch.randn(len(x_hold), gcfg.latent_dim, generator=noise)
            fake = gen(hold_z, y_hold)
            correct = (disc(x_hold, y_hold) > 0.5).sum() + (disc(fake, y_hold) <= 0.5).sum()
            disc_acc = float(correct) / (2 * len(x_hold))
        state.epoch = epoch
        state.gen_loss_history.append(float(np.mean(g_losses)))
        state.disc_loss_history.append(float(np.mean(d_losses)))
        state.probe_variance_history.append(variance)
        state.disc_acc_history.append(disc_acc)
        if on_epoch is not None:
            on_epoch(state)
        if not all(math.isfinite(v) for v in (state.gen_loss_history[-1], state.disc_loss_history[-1])):
            state.collapsed, state.collapse_epoch = True, epoch
            break
        if detect_collapse(state, collapse.window, collapse.variance_floor, collapse.disc_acc_ceiling):
            state.collapsed, state.collapse_epoch = True, epoch
            break

    ckpt = GANCheckpoint(_state_copy(gen), _state_copy(disc), gcfg, dcfg, seed, state.epoch,
                         attempt_index, state.collapsed, state)
    return TrainResult(ckpt, state)


@dataclass
class RestartResult:
    best: TrainResult
    attempts: list[TrainResult]
    converged: bool

    @property
    def checkpoint(self) -> GANCheckpoint:
        return self.best.checkpoint


def train_with_restarts(images, gcfg: GeneratorConfig, dcfg: DiscriminatorConfig, epochs: int,
                        max_attempts: int = 10, seed: int = 0, trainer: Callable = train_cgan,
                        **trainer_kwargs) -> RestartResult:
    """Retry with seeds (seed, attempt) until an attempt finishes without collapsing.

    If every attempt collapses, the one that lasted longest is returned with
    ``converged=False``.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    attempts = []
    for attempt in range(max_attempts):
        result = trainer(images, gcfg, dcfg, epochs, derive_seed(seed, "attempt", attempt),
                         attempt_index=attempt, **trainer_kwargs)
        attempts.append(result)
        if not result.collapsed:
            return RestartResult(result, attempts, True)
    survivors = [r for r in attempts if r.state.epoch >= 1]
    if not survivors:
        raise GANTrainingError(f"all {max_attempts} attempts failed before completing an epoch")
    best = max(survivors, key=lambda r: (r.state.collapse_epoch or r.state.epoch, -r.checkpoint.attempt_index))
    return RestartResult(best, attempts, False)


# ---------------------------------------------------------------- sampling

def latent_vectors(latent_dim: int, count: int, seed: int) -> np.ndarray:
    if count == 0:
        return np.zeros((0, latent_dim), dtype=np.float32)
    return np.stack([derive_rng(seed, "z", i).standard_normal(latent_dim)
                     for i in range(count)]).astype(np.float32)


@torch.no_grad()
def generate_samples(ckpt: GANCheckpoint, class_label: ClassLabel | int, count: int, seed: int,
                     batch_size: int = 64, generator: Generator | None = None) -> list[np.ndarray]:
    """``count`` images of one class; image i uses z drawn from (seed, i)."""
    label = class_label.index if isinstance(class_label, ClassLabel) else int(class_label)
    if not 0 <= label < ckpt.gcfg.num_classes:
        raise ValueError(f"class label {label} outside [0, {ckpt.gcfg.num_classes})")
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return []
    gen = generator or ckpt.generator()
    gen.eval()
    z_all = torch.from_numpy(latent_vectors(ckpt.gcfg.latent_dim, count, seed))
    out: list[np.ndarray] = []
    for i in range(0, count, batch_size):
        z = z_all[i:i + batch_size]
        out.extend(tensor_to_images(gen(z, torch.full((len(z),), label, dtype=torch.long))))
    return out


@torch.no_grad()
def discriminate(ckpt: GANCheckpoint, images: list[np.ndarray], labels) -> np.ndarray:
    disc = ckpt.discriminator()
    return disc(images_to_tensor(images), torch.as_tensor(labels, dtype=torch.long)).numpy()
