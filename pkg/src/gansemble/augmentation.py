"""Base augmentation strategies, composites, enumeration and oversampling."""
from __future__ import annotations

import enum
import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .seeding import derive_rng

BACKGROUND = (255, 255, 255)


class StrategyKind(enum.IntEnum):
    FLIP_SHIFT = 1
    BLUR_ROTATE = 2
    ZOOM_ROTATE = 3
    MASK = 4

    @property
    def label(self) -> str:
        return {1: "FlipShift", 2: "BlurRotate", 3: "ZoomRotate", 4: "Mask"}[self.value]


@dataclass(frozen=True)
class AugmentationParams:
    blur_alpha_range: tuple[float, float] = (10.0, 23.0)
    blur_sigma_range: tuple[float, float] = (2.8, 3.82)
    zoom_range: tuple[float, float] = (1.0, 1.34)
    rotation_range: tuple[float, float] = (-180.0, 180.0)  # half-open
    shift_fraction_max: float = 0.10
    mask_count_range: tuple[int, int] = (1, 3)  # inclusive
    mask_size_fraction_range: tuple[float, float] = (0.05, 0.15)

    def __post_init__(self):
        for name in ("blur_alpha_range", "blur_sigma_range", "zoom_range", "rotation_range",
                     "mask_count_range", "mask_size_fraction_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty: [{lo}, {hi}]")
        if self.rotation_range[0] == self.rotation_range[1]:
            raise ValueError("rotation_range is empty")
        if not 0 <= self.shift_fraction_max < 1:
            raise ValueError("shift_fraction_max must be in [0, 1)")
        if self.mask_count_range[0] < 0:
            raise ValueError("mask_count_range must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationParams":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(frozen=True)
class BaseStrategy:
    kind: StrategyKind
    params: AugmentationParams = field(default_factory=AugmentationParams)


@dataclass(frozen=True)
class CompositeStrategy:
    members: tuple[StrategyKind, ...]
    strategy_id: int = 0

    def __post_init__(self):
        members = tuple(StrategyKind(m) for m in self.members)
        if not members:
            raise ValueError("a composite needs at least one member")
        if len(set(members)) != len(members):
            raise ValueError(f"duplicate members in {members}")
        object.__setattr__(self, "members", tuple(sorted(members)))

    @property
    def name(self) -> str:
        if len(self.members) == 1:
            return f"Aug {self.strategy_id}"
        nums = [str(int(m)) for m in self.members]
        joined = " & ".join(nums) if len(nums) == 2 else ", ".join(nums[:-1]) + ", & " + nums[-1]
        return f"Aug {self.strategy_id} ({joined})"

    @property
    def member_string(self) -> str:
        return "+".join(str(int(m)) for m in self.members)

    def to_json(self) -> dict:
        return {"strategy_id": self.strategy_id,
                "members": [int(m) for m in self.members],
                "member_names": [m.label for m in self.members]}

    @classmethod
    def from_json(cls, d: dict) -> "CompositeStrategy":
        return cls(tuple(d["members"]), int(d["strategy_id"]))


DEFAULT_BASES = tuple(BaseStrategy(k) for k in StrategyKind)


def enumerate_strategies(base_count: int, steps: int,
                         kinds: tuple[StrategyKind, ...] | None = None) -> list[CompositeStrategy]:
    """All non-empty composites of at most ``steps`` bases.

    Numbering follows size first, then lexicographic order, so (4, 4) gives
    ids 1-4 for the singletons and id 15 for the full set.
    """
    if kinds is None:
        kinds = tuple(StrategyKind)[:base_count]
    if base_count < 1 or len(kinds) != base_count:
        raise ValueError(f"base_count={base_count} does not match {len(kinds)} kinds")
    if not 1 <= steps <= base_count:
        raise ValueError(f"steps must be in [1, {base_count}], got {steps}")
    out = []
    for size in range(1, steps + 1):
        for combo in itertools.combinations(sorted(kinds), size):
            out.append(CompositeStrategy(combo, len(out) + 1))
    return out


# ---------------------------------------------------------------- parameter draws

def _uniform(rng, lo_hi):
    lo, hi = lo_hi
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def _rotation(rng, params: AugmentationParams) -> float:
    lo, hi = params.rotation_range
    return float(lo + (hi - lo) * rng.random())  # half-open [lo, hi)


def draw_params(kind: StrategyKind, rng: np.random.Generator, params: AugmentationParams,
                width: int) -> dict:
    """Random parameters for one application of ``kind`` to a ``width``-wide image."""
    kind = StrategyKind(kind)
    if kind is StrategyKind.FLIP_SHIFT:
        max_shift = int(np.floor(params.shift_fraction_max * width))
        return {"flip": bool(rng.random() < 0.5),
                "shift": int(rng.integers(-max_shift, max_shift + 1))}
    if kind is StrategyKind.BLUR_ROTATE:
        return {"alpha": _uniform(rng, params.blur_alpha_range),
                "sigma": _uniform(rng, params.blur_sigma_range),
                "angle": _rotation(rng, params)}
    if kind is StrategyKind.ZOOM_ROTATE:
        return {"zoom": _uniform(rng, params.zoom_range), "angle": _rotation(rng, params)}
    lo, hi = params.mask_count_range
    masks = []
    for _ in range(int(rng.integers(lo, hi + 1))):
        circle = bool(rng.random() < 0.5)
        w = _uniform(rng, params.mask_size_fraction_range) * width
        h = w if circle else _uniform(rng, params.mask_size_fraction_range) * width
        masks.append({"circle": circle, "width": w, "height": h,
                      "cx": float(rng.uniform(0, width)), "cy": float(rng.uniform(0, width))})
    return {"masks": masks}


# ---------------------------------------------------------------- primitives

def flip_shift(img: np.ndarray, flip: bool, shift: int, background=BACKGROUND) -> np.ndarray:
    out = img[:, ::-1] if flip else img
    if shift == 0:
        return out.copy()
    res = np.empty_like(img)
    res[:] = background
    w = img.shape[1]
    if abs(shift) >= w:
        return res
    if shift > 0:
        res[:, shift:] = out[:, :w - shift]
    else:
        res[:, :w + shift] = out[:, -shift:]
    return res


def blur_kernel_radius(alpha: float) -> int:
    """Half-width in pixels of the blur kernel for intensity ``alpha``."""
    return max(1, int(np.floor(alpha / 2)))


def gaussian_blur(img: np.ndarray, alpha: float, sigma: float) -> np.ndarray:
    """Gaussian convolution with std ``sigma`` truncated at ``blur_kernel_radius(alpha)``."""
    radius = blur_kernel_radius(alpha)
    out = ndimage.gaussian_filter(img.astype(np.float64), sigma=(sigma, sigma, 0),
                                  mode="nearest", radius=(radius, radius, 0))
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def rotate_zoom(img: np.ndarray, angle: float, zoom: float = 1.0,
                background=BACKGROUND) -> np.ndarray:
    """Rotate counter-clockwise by ``angle`` degrees and magnify by ``zoom`` about the centre."""
    h, w = img.shape[:2]
    center = np.array([(h - 1) / 2, (w - 1) / 2])
    a = np.deg2rad(angle)
    # output (row, col) -> input (row, col); rows point down so CCW on screen flips the sine
    rot = np.array([[np.cos(a), np.sin(a)], [-np.sin(a), np.cos(a)]]) / zoom
    offset = center - rot @ center
    out = np.empty_like(img)
    for ch in range(img.shape[2]):
        plane = ndimage.affine_transform(img[..., ch].astype(np.float64), rot, offset=offset,
                                         order=1, mode="constant", cval=float(background[ch]))
        out[..., ch] = np.clip(np.rint(plane), 0, 255).astype(np.uint8)
    return out


def apply_masks(img: np.ndarray, masks: list[dict], background=BACKGROUND) -> np.ndarray:
    out = img.copy()
    h, w = img.shape[:2]
    rows, cols = np.mgrid[0:h, 0:w]
    for m in masks:
        if m["circle"]:
            r = m["width"] / 2
            inside = (cols - m["cx"]) ** 2 + (rows - m["cy"]) ** 2 <= r * r
        else:
            inside = (np.abs(cols - m["cx"]) <= m["width"] / 2) & (np.abs(rows - m["cy"]) <= m["height"] / 2)
        out[inside] = background
    return out


def apply_base(img: np.ndarray, kind: StrategyKind, drawn: dict, background=BACKGROUND) -> np.ndarray:
    kind = StrategyKind(kind)
    if kind is StrategyKind.FLIP_SHIFT:
        return flip_shift(img, drawn["flip"], drawn["shift"], background)
    if kind is StrategyKind.BLUR_ROTATE:
        blurred = gaussian_blur(img, drawn["alpha"], drawn["sigma"])
        return rotate_zoom(blurred, drawn["angle"], 1.0, background)
    if kind is StrategyKind.ZOOM_ROTATE:
        return rotate_zoom(img, drawn["angle"], drawn["zoom"], background)
    return apply_masks(img, drawn["masks"], background)


def apply_strategy(img: np.ndarray, strat: CompositeStrategy, seed: int,
                   params: AugmentationParams | None = None, background=BACKGROUND) -> np.ndarray:
    """Apply every member of ``strat`` in ascending base order.

    Member ``i`` draws its parameters from a generator keyed by (seed, i), so
    the result is a pure function of the inputs.
    """
    if img.size == 0:
        raise ValueError("empty image")
    params = params or AugmentationParams()
    out = img
    for position, kind in enumerate(strat.members):
        rng = derive_rng(seed, "member", position)
        out = apply_base(out, kind, draw_params(kind, rng, params, img.shape[1]), background)
    return out


# ---------------------------------------------------------------- labeled collections

ORIGINS = ("real", "augmented", "duplicate", "generated")


@dataclass(eq=False)
class LabeledImage:
    image: np.ndarray
    label: int
    sample_id: str
    origin: str = "real"
    source_id: str | None = None

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")


def class_counts(items: list[LabeledImage]) -> dict[int, int]:
    counts: dict[int, int] = {}
    for it in items:
        counts[it.label] = counts.get(it.label, 0) + 1
    return dict(sorted(counts.items()))


def _group(items: list[LabeledImage]) -> dict[int, list[LabeledImage]]:
    groups: dict[int, list[LabeledImage]] = {}
    for it in items:
        if it.origin != "real":
            raise ValueError(f"{it.sample_id}: oversampling input must be real images")
        groups.setdefault(it.label, []).append(it)
    return dict(sorted(groups.items()))


def _check_target(groups, target_per_class):
    for label, members in groups.items():
        if len(members) > target_per_class:
            raise ValueError(
                f"class {label} has {len(members)} real images, more than "
                f"target_per_class={target_per_class}")


def oversample_dataset(images: list[LabeledImage], strat: CompositeStrategy, target_per_class: int,
                       seed: int, params: AugmentationParams | None = None,
                       background=BACKGROUND) -> list[LabeledImage]:
    """Top every class up to ``target_per_class`` with augmented copies.

    Sources are taken round-robin over the class's real images; the k-th
    augmented image of class c uses seed (seed, c, k).
    """
    groups = _group(images)
    _check_target(groups, target_per_class)
    out: list[LabeledImage] = []
    for label, reals in groups.items():
        out.extend(reals)
        for k in range(target_per_class - len(reals)):
            src = reals[k % len(reals)]
            aug_seed = int(derive_rng(seed, "oversample", label, k).integers(0, 2**63 - 1))
            out.append(LabeledImage(apply_strategy(src.image, strat, aug_seed, params, background),
                                    label, f"{src.sample_id}_aug{k:04d}", "augmented", src.sample_id))
    return out


def oversample_no_aug(images: list[LabeledImage], target_per_class: int, seed: int) -> list[LabeledImage]:
    """Top every class up with exact duplicates of uniformly chosen real images."""
    groups = _group(images)
    _check_target(groups, target_per_class)
    out: list[LabeledImage] = []
    for label, reals in groups.items():
        out.extend(reals)
        need = target_per_class - len(reals)
        if need == 0:
            continue
        picks = derive_rng(seed, "duplicate", label).integers(0, len(reals), size=need)
        for k, p in enumerate(picks):
            src = reals[int(p)]
            out.append(LabeledImage(src.image.copy(), label, f"{src.sample_id}_dup{k:04d}",
                                    "duplicate", src.sample_id))
    return out


def purely_augmented(images: list[LabeledImage], strat: CompositeStrategy, per_class: int,
                     seed: int, params: AugmentationParams | None = None) -> list[LabeledImage]:
    """``per_class`` augmented images per class with no real images kept."""
    groups = _group(images)
    out = []
    for label, reals in groups.items():
        for k in range(per_class):
            src = reals[k % len(reals)]
            aug_seed = int(derive_rng(seed, "pure", label, k).integers(0, 2**63 - 1))
            out.append(LabeledImage(apply_strategy(src.image, strat, aug_seed, params),
                                    label, f"{src.sample_id}_aug{k:04d}", "augmented", src.sample_id))
    return out


def save_labeled(items: list[LabeledImage], directory, class_names: dict[int, str] | None = None) -> Path:
    """Write PNGs plus ``manifest.json`` with origin/source_id provenance."""
    from .polar import save_png

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    records = []
    for it in items:
        fname = f"{it.sample_id}.png"
        save_png(it.image, directory / fname)
        records.append({"sample_id": it.sample_id,
                        "class": (class_names or {}).get(it.label, str(it.label)),
                        "class_index": it.label, "file": fname, "split": "train",
                        "origin": it.origin, "source_id": it.source_id})
    path = directory / "manifest.json"
    path.write_text(json.dumps(records, indent=2) + "\n", encoding="utf-8")
    return path


def load_labeled(directory) -> list[LabeledImage]:
    from .polar import load_png

    directory = Path(directory)
    records = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    return [LabeledImage(load_png(directory / r["file"]), int(r["class_index"]), r["sample_id"],
                         r.get("origin", "real"), r.get("source_id")) for r in records]


def strategy_config_json(strat: CompositeStrategy, params: AugmentationParams | None = None) -> str:
    return json.dumps({**strat.to_json(), "params": asdict(params or AugmentationParams())},
                      indent=2) + "\n"


def load_strategy_config(text: str) -> tuple[CompositeStrategy, AugmentationParams]:
    d = json.loads(text)
    return CompositeStrategy.from_json(d), AugmentationParams.from_dict(d.get("params", {}))

