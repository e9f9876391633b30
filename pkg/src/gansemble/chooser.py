"""Data chooser: exhaustive search over composite strategies of bounded size.

Every composite with at most ``steps`` members is used to oversample the
training set, scored by an injected evaluator over ``repetitions`` seeded
runs, and ranked by mean accuracy. The top composite is Aug*.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .augmentation import (
    DEFAULT_BASES,
    BaseStrategy,
    CompositeStrategy,
    LabeledImage,
    enumerate_strategies,
    oversample_dataset,
    oversample_no_aug,
)
from .seeding import derive_seed

NO_OVERSAMPLING_ID = -1
OVERSAMPLING_NO_AUG_ID = -2
BASELINE_NAMES = {NO_OVERSAMPLING_ID: "No Oversampling", OVERSAMPLING_NO_AUG_ID: "Oversampling No Aug"}

REPORT_COLUMNS = ("strategy_id", "members", "mean_accuracy", "stdev", "mean_precision", "runtime_s")


class DataLeakageError(ValueError):
    """A test sample is in the training set or was used as an augmentation source."""


class SearchError(RuntimeError):
    def __init__(self, strategy_id: int, run_index: int, cause: BaseException):
        super().__init__(f"evaluator failed on strategy {strategy_id}, run {run_index}: "
                         f"{type(cause).__name__}: {cause}")
        self.strategy_id = strategy_id
        self.run_index = run_index


@dataclass
class ChooserConfig:
    steps: int = 4
    repetitions: int = 10
    target_per_class: int = 50
    train_epochs: int = 150
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class StrategyScore:
    strategy_id: int
    members: tuple[int, ...]
    per_run_accuracy: list[float]
    mean_accuracy: float
    stdev: float
    mean_precision: float
    runtime_seconds: float
    name: str = ""
    per_run_precision: list[float] = field(default_factory=list)

    @property
    def is_baseline(self) -> bool:
        return self.strategy_id < 0

    @property
    def member_string(self) -> str:
        if self.strategy_id == NO_OVERSAMPLING_ID:
            return "none"
        if self.strategy_id == OVERSAMPLING_NO_AUG_ID:
            return "duplicate"
        return "+".join(str(m) for m in self.members)


def aggregate_scores(per_run: list[tuple[float, float, float]]) -> dict:
    """Means over runs plus the population standard deviation of accuracy."""
    if not per_run:
        raise ValueError("cannot aggregate an empty list of runs")
    acc = np.array([r[0] for r in per_run], dtype=np.float64)
    prec = np.array([r[1] for r in per_run], dtype=np.float64)
    rt = np.array([r[2] for r in per_run], dtype=np.float64)
    return {"per_run_accuracy": acc.tolist(),
            "per_run_precision": prec.tolist(),
            "mean_accuracy": float(acc.mean()),
            "stdev": float(acc.std()),
            "mean_precision": float(prec.mean()),
            "runtime_seconds": float(rt.mean())}


def check_leakage(train_set: list[LabeledImage], test_set: list[LabeledImage]) -> None:
    test_ids = {it.sample_id for it in test_set}
    for it in train_set:
        if it.sample_id in test_ids:
            raise DataLeakageError(f"test sample {it.sample_id!r} appears in the training set")
        if it.source_id is not None and it.source_id in test_ids:
            raise DataLeakageError(
                f"{it.origin} image {it.sample_id!r} was derived from test sample {it.source_id!r}")


def search_size(base_count: int, steps: int) -> int:
    return sum(math.comb(base_count, k) for k in range(1, steps + 1))


@dataclass
class SearchResult:
    ranked: list[StrategyScore]
    baselines: list[StrategyScore]
    aug_star: CompositeStrategy
    config: ChooserConfig
    evaluator_description: str = ""

    def all_rows(self) -> list[StrategyScore]:
        """Composites in id order followed by the two baselines."""
        return sorted(self.ranked, key=lambda s: s.strategy_id) + self.baselines


def _rank_key(score: StrategyScore):
    return (-score.mean_accuracy, len(score.members), score.strategy_id)


def run_search(train_set: list[LabeledImage], test_set: list[LabeledImage],
               bases: list[BaseStrategy] | tuple[BaseStrategy, ...], cfg: ChooserConfig,
               evaluator: Callable, include_baselines: bool = True) -> SearchResult:
    """Score every composite and pick Aug*.

    ``evaluator(train, test, seed)`` returns an object with ``accuracy``,
    ``precision`` and ``runtime_seconds``. Run ``k`` of strategy ``s`` uses
    seed (base_seed, s, k); results are aggregated in id order, so a parallel
    schedule (``cfg.workers > 1``) cannot change them.
    """
    bases = tuple(bases) or DEFAULT_BASES
    kinds = tuple(b.kind for b in bases)
    params = bases[0].params
    if any(b.params != params for b in bases):
        raise ValueError("all bases must share one AugmentationParams")
    check_leakage(train_set, test_set)
    strategies = enumerate_strategies(len(kinds), cfg.steps, kinds)

    builders: list[tuple[int, tuple[int, ...], str, Callable[[], list[LabeledImage]]]] = []
    for strat in strategies:
        builders.append((strat.strategy_id, tuple(int(m) for m in strat.members), strat.name,
                         lambda s=strat: oversample_dataset(
                             train_set, s, cfg.target_per_class,
                             derive_seed(cfg.base_seed, "oversample", s.strategy_id), params)))
    if include_baselines:
        builders.append((NO_OVERSAMPLING_ID, (), BASELINE_NAMES[NO_OVERSAMPLING_ID],
                         lambda: list(train_set)))
        builders.append((OVERSAMPLING_NO_AUG_ID, (), BASELINE_NAMES[OVERSAMPLING_NO_AUG_ID],
                         lambda: oversample_no_aug(train_set, cfg.target_per_class,
                                                   derive_seed(cfg.base_seed, "duplicate"))))

    def score(builder) -> StrategyScore:
        sid, members, name, build = builder
        data = build()
        runs = []
        for k in range(cfg.repetitions):
            check_leakage(data, test_set)
            try:
                m = evaluator(data, test_set, derive_seed(cfg.base_seed, sid, k))
            except Exception as exc:  # noqa: BLE001 - re-raised with context
                raise SearchError(sid, k, exc) from exc
            runs.append((m.accuracy, m.precision, m.runtime_seconds))
        agg = aggregate_scores(runs)
        return StrategyScore(sid, members, agg["per_run_accuracy"], agg["mean_accuracy"],
                             agg["stdev"], agg["mean_precision"], agg["runtime_seconds"], name,
                             agg["per_run_precision"])

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            scores = list(pool.map(score, builders))
    else:
        scores = [score(b) for b in builders]

    composite = [s for s in scores if not s.is_baseline]
    ranked = sorted(composite, key=_rank_key)
    best = ranked[0]
    aug_star = next(s for s in strategies if s.strategy_id == best.strategy_id)
    return SearchResult(ranked, [s for s in scores if s.is_baseline], aug_star, cfg,
                        getattr(evaluator, "description", getattr(evaluator, "__name__", "")))


def write_search_report(result: SearchResult, csv_path, json_path=None) -> tuple[Path, Path]:
    """CSV with one row per composite and baseline, plus a JSON summary naming Aug*."""
    csv_path = Path(csv_path)
    json_path = Path(json_path) if json_path else csv_path.with_name("augstar.json")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for s in result.all_rows():
            w.writerow([s.strategy_id, s.member_string, f"{s.mean_accuracy:.6f}", f"{s.stdev:.6f}",
                        f"{s.mean_precision:.6f}", f"{s.runtime_seconds:.6f}"])
    best = result.ranked[0]
    summary = {
        "aug_star": result.aug_star.to_json() | {"name": result.aug_star.name},
        "mean_accuracy": best.mean_accuracy,
        "ranking": [s.strategy_id for s in result.ranked],
        "config": asdict(result.config),
        "evaluator": result.evaluator_description,
    }
    json_path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return csv_path, json_path


def load_aug_star(json_path) -> CompositeStrategy:
    d = json.loads(Path(json_path).read_text(encoding="utf-8"))
    return CompositeStrategy.from_json(d["aug_star"])

