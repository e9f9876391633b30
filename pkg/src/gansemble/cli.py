"""``gansemble`` command line: convert, augment, choose, train-gan, generate, filter, score, reproduce.

Every stage reads and writes inside ``--workdir``::

    corpus/<class>/<sample>.csv        fixture corpus (smoke profile)
    images/<sample>.png, manifest.json polar renders with the train/test split
    choose/search_report.csv           strategy ranking; choose/augstar.json names Aug*
    datasets/<variant>/                cGAN training sets (PNGs + manifest)
    gan/<variant>/                     checkpoints (weights + meta.json)
    samples/<variant>/<class>_<i>.png  generated pools
    filter/<variant>/densities.csv     corner densities and selection
    score/table2.csv                   FID / IS, regular vs filtered
    sweep/figure2.csv                  size sweep

Each CSV/JSON output gets a ``.provenance.json`` sidecar.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from . import __version__
from .augmentation import (
    BaseStrategy,
    CompositeStrategy,
    LabeledImage,
    StrategyKind,
    load_labeled,
    oversample_dataset,
    oversample_no_aug,
    save_labeled,
)
from .chooser import ChooserConfig, DataLeakageError, check_leakage, load_aug_star, run_search, write_search_report
from .classifier import ClassifierSpec, EvalMetrics, compute_metrics, make_evaluator, plot_sweep, run_size_sweep, write_sweep_csv
from .cgan import CollapseConfig, DiscriminatorConfig, GeneratorConfig, generate_samples, load_checkpoint, save_checkpoint, train_with_restarts
from .config import VARIANT_LABELS, VARIANTS, PipelineConfig, build_config, load_config
from .metrics import inception_extractor, random_projection_extractor, score_image_sets, write_table2
from .polar import PolarRenderConfig, load_png, save_png, to_polar_image
from .spectra_io import (
    ClassLabel,
    DatasetManifest,
    ManifestRecord,
    generate_fixture_spectra,
    load_spectrum_csv,
    resample_spectrum,
    split_dataset,
    write_spectrum_csv,
)
from .symp_filter import FilterConfig, filter_by_class, read_sample_dir, write_filter_report

log = logging.getLogger("gansemble")

UNSTABLE_VARIANTS = ("aug1", "aug7")


class PipelineError(RuntimeError):
    pass


# ---------------------------------------------------------------- helpers

def workdir(cfg: PipelineConfig) -> Path:
    return Path(cfg.workdir)


def write_provenance(path: Path, cfg: PipelineConfig, stage: str) -> Path:
    side = path.with_name(path.name + ".provenance.json")
    side.write_text(json.dumps({
        "file": path.name, "stage": stage, "config_hash": cfg.config_hash(),
        "seed": cfg.stage_seed(stage), "global_seed": cfg.global_seed,
        "code_version": __version__, "config": cfg.to_dict(),
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return side


def render_config(cfg: PipelineConfig) -> PolarRenderConfig:
    c = cfg.corpus
    return PolarRenderConfig(resolution=c.resolution, line_thickness=c.line_thickness, margin=c.margin)


def load_real_images(cfg: PipelineConfig) -> tuple[DatasetManifest, list[LabeledImage], list[LabeledImage]]:
    img_dir = workdir(cfg) / "images"
    if not (img_dir / "manifest.json").exists():
        raise PipelineError(f"{img_dir / 'manifest.json'} not found; run `convert` first")
    manifest = DatasetManifest.load(img_dir / "manifest.json")
    train, test = [], []
    for r in manifest.records:
        item = LabeledImage(load_png(img_dir / r.file_path), r.class_label.index, r.sample_id)
        (test if r.split == "test" else train).append(item)
    return manifest, train, test


def class_names(manifest: DatasetManifest) -> dict[int, str]:
    return {c.index: c.name for c in manifest.classes()}


def selected_variants(cfg: PipelineConfig, variants: list[str] | None) -> list[str]:
    chosen = variants or cfg.gan.variants
    unknown = [v for v in chosen if v not in VARIANTS]
    if unknown:
        raise PipelineError(f"unknown variants {unknown}; choose from {list(VARIANTS)}")
    return list(chosen)


# ---------------------------------------------------------------- convert

def write_fixture_corpus(cfg: PipelineConfig, directory: Path) -> Path:
    counts = cfg.corpus.fixture_counts
    spectra = generate_fixture_spectra(len(counts), max(counts), cfg.stage_seed("fixture"))
    for s in spectra:
        k = int(s.sample_id.rsplit("_", 1)[1])
        if k >= counts[s.class_label.index]:
            continue
        class_dir = directory / s.class_label.name
        class_dir.mkdir(parents=True, exist_ok=True)
        write_spectrum_csv(s, class_dir / f"{s.sample_id}.csv")
    return directory


def cmd_convert(cfg: PipelineConfig, corpus_dir: str | None = None) -> Path:
    """Render every ``<corpus>/<class>/<sample>.csv`` and write a split manifest."""
    wd = workdir(cfg)
    corpus = corpus_dir or cfg.corpus.corpus_dir
    if corpus is None:
        if cfg.profile == "full":
            raise PipelineError("the full profile needs the original corpus: pass --corpus-dir "
                                "<dir with one sub-directory of wavenumber,absorbance CSVs per class>")
        corpus = write_fixture_corpus(cfg, wd / "corpus")
    corpus = Path(corpus)
    class_dirs = sorted(p for p in corpus.iterdir() if p.is_dir()) if corpus.is_dir() else []
    files = [(d, f) for d in class_dirs for f in sorted(d.glob("*.csv"))]
    if not files:
        raise PipelineError(f"no spectra found under {corpus} (expected <class>/<sample>.csv)")
    labels = {d.name: ClassLabel(i, d.name) for i, d in enumerate(class_dirs)}
    rcfg = render_config(cfg)
    rendered = []
    for d, f in files:
        try:
            s = resample_spectrum(load_spectrum_csv(f, labels[d.name], f.stem))
        except ValueError as exc:
            raise PipelineError(str(exc) if str(f) in str(exc) else f"{f}: {exc}") from exc
        rendered.append((s, to_polar_image(s, rcfg)))
    img_dir = wd / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for s, img in rendered:
        save_png(img, img_dir / f"{s.sample_id}.png")
        records.append(ManifestRecord(s.sample_id, s.class_label, f"{s.sample_id}.png"))
    manifest = split_dataset(DatasetManifest(records), cfg.corpus.per_class_test, cfg.stage_seed("split"))
    path = manifest.save(img_dir / "manifest.json")
    write_provenance(path, cfg, "convert")
    log.info("converted %d spectra into %s", len(records), img_dir)
    return path


# ---------------------------------------------------------------- choose

def centroid_evaluator(train_set, test_set, seed) -> EvalMetrics:
    """Nearest-centroid classifier on raw pixels; deterministic and instant."""
    labels = np.array([it.label for it in train_set])
    x = np.stack([it.image.reshape(-1) for it in train_set]).astype(np.float64)
    classes = np.unique(labels)
    cent = np.stack([x[labels == c].mean(axis=0) for c in classes])
    xt = np.stack([it.image.reshape(-1) for it in test_set]).astype(np.float64)
    pred = classes[((xt[:, None, :] - cent[None]) ** 2).sum(-1).argmin(axis=1)]
    num_classes = int(max(labels.max(), max(it.label for it in test_set))) + 1
    acc, prec = compute_metrics([it.label for it in test_set], pred, num_classes)
    return EvalMetrics(acc, prec, 0.0)


centroid_evaluator.description = "nearest-centroid on raw pixels"


def cmd_choose(cfg: PipelineConfig, evaluator_kind: str = "classifier") -> tuple[Path, Path]:
    manifest, train, test = load_real_images(cfg)
    c = cfg.chooser
    bases = [BaseStrategy(StrategyKind[name]) for name in c.bases]
    if evaluator_kind == "centroid":
        evaluator = centroid_evaluator
    else:
        spec = ClassifierSpec(c.backbone, len(manifest.classes()), c.learning_rate, c.batch_size,
                              c.weights_path)
        evaluator = make_evaluator(spec, c.epochs)
    ccfg = ChooserConfig(c.steps, c.repetitions, c.target_per_class, c.epochs,
                         cfg.stage_seed("choose"), c.workers)
    result = run_search(train, test, bases, ccfg, evaluator)
    out = workdir(cfg) / "choose"
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = write_search_report(result, out / "search_report.csv", out / "augstar.json")
    write_provenance(csv_path, cfg, "choose")
    write_provenance(json_path, cfg, "choose")
    log.info("Aug* = %s (mean accuracy %.3f)", result.aug_star.name, result.ranked[0].mean_accuracy)
    return csv_path, json_path


# ---------------------------------------------------------------- augment

def variant_strategy(cfg: PipelineConfig, variant: str) -> CompositeStrategy | None:
    if variant == "augstar":
        path = workdir(cfg) / "choose" / "augstar.json"
        if not path.exists():
            raise PipelineError(f"{path} not found; run `choose` first")
        return load_aug_star(path)
    if variant == "aug1":
        return CompositeStrategy((StrategyKind.FLIP_SHIFT,), 1)
    if variant == "aug7":
        return CompositeStrategy((StrategyKind.FLIP_SHIFT, StrategyKind.MASK), 7)
    return None


def build_variant(cfg: PipelineConfig, variant: str, real: list[LabeledImage]) -> list[LabeledImage]:
    seed = cfg.stage_seed(f"augment/{variant}")
    target = cfg.gan.target_per_class
    if variant == "no_oversampling":
        return list(real)
    if variant == "oversampling_no_aug":
        return oversample_no_aug(real, target, seed)
    return oversample_dataset(real, variant_strategy(cfg, variant), target, seed)


def cmd_augment(cfg: PipelineConfig, variants: list[str] | None = None) -> list[Path]:
    """Build the cGAN training sets; the held-out test images join training here."""
    manifest, train, test = load_real_images(cfg)
    names = class_names(manifest)
    out = []
    for v in selected_variants(cfg, variants):
        items = build_variant(cfg, v, train + test)
        path = save_labeled(items, workdir(cfg) / "datasets" / v, names)
        write_provenance(path, cfg, f"augment/{v}")
        out.append(path)
    return out


# ---------------------------------------------------------------- train-gan / generate

def gan_configs(cfg: PipelineConfig, num_classes: int) -> tuple[GeneratorConfig, DiscriminatorConfig, CollapseConfig]:
    res = cfg.corpus.resolution
    stages = int(round(np.log2(res / 8)))
    if 8 * 2 ** stages != res:
        raise PipelineError(f"resolution {res} is not 8 * 2^k")
    g = cfg.gan
    return (GeneratorConfig(num_classes, g.latent_dim, stages, g.base_channels, learning_rate=g.generator_lr),
            DiscriminatorConfig(stages, g.base_channels, dropout_rate=g.dropout_rate,
                                learning_rate=g.discriminator_lr),
            CollapseConfig(g.collapse_window, g.variance_floor, g.disc_acc_ceiling))


def cmd_train_gan(cfg: PipelineConfig, variants: list[str] | None = None) -> list[Path]:
    manifest = DatasetManifest.load(workdir(cfg) / "images" / "manifest.json")
    gcfg, dcfg, ccfg = gan_configs(cfg, len(manifest.classes()))
    out = []
    for v in selected_variants(cfg, variants):
        data_dir = workdir(cfg) / "datasets" / v
        if not (data_dir / "manifest.json").exists():
            cmd_augment(cfg, [v])
        items = load_labeled(data_dir)
        epochs = cfg.gan.unstable_epochs if v in UNSTABLE_VARIANTS else cfg.gan.epochs
        result = train_with_restarts(items, gcfg, dcfg, epochs, cfg.gan.max_attempts,
                                     cfg.stage_seed(f"train-gan/{v}"), collapse=ccfg)
        ckpt_dir = save_checkpoint(result.checkpoint, workdir(cfg) / "gan" / v)
        summary = ckpt_dir / "restarts.json"
        summary.write_text(json.dumps({
            "variant": v, "converged": result.converged,
            "chosen_attempt": result.checkpoint.attempt_index,
            "attempts": [{"attempt": r.checkpoint.attempt_index, "epochs": r.state.epoch,
                          "collapsed": r.collapsed, "collapse_epoch": r.state.collapse_epoch}
                         for r in result.attempts],
        }, indent=2) + "\n", encoding="utf-8")
        write_provenance(summary, cfg, f"train-gan/{v}")
        log.info("%s: %s after %d attempt(s)", v, "converged" if result.converged else "collapsed",
                 len(result.attempts))
        out.append(ckpt_dir)
    return out


def cmd_generate(cfg: PipelineConfig, variants: list[str] | None = None, count: int | None = None) -> list[Path]:
    manifest = DatasetManifest.load(workdir(cfg) / "images" / "manifest.json")
    count = cfg.filter.pool_per_class if count is None else count
    out = []
    for v in selected_variants(cfg, variants):
        ckpt = load_checkpoint(workdir(cfg) / "gan" / v)
        gen = ckpt.generator()
        sample_dir = workdir(cfg) / "samples" / v
        sample_dir.mkdir(parents=True, exist_ok=True)
        for label in manifest.classes():
            seed = cfg.stage_seed(f"generate/{v}/{label.index}")
            for i, img in enumerate(generate_samples(ckpt, label, count, seed, generator=gen)):
                save_png(img, sample_dir / f"{label.name}_{i:05d}.png")
        out.append(sample_dir)
    return out


# ---------------------------------------------------------------- filter / score

def run_filter_dir(input_dir, fcfg: FilterConfig, report, output_dir=None) -> Path:
    pools = read_sample_dir(input_dir)
    rows = filter_by_class(pools, fcfg)
    report = write_filter_report(rows, report)
    if output_dir is not None:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        for r in rows:
            if r.selected:
                save_png(pools[r.class_name][r.index], output_dir / f"{r.class_name}_{r.index:05d}.png")
    return report


def filter_config(cfg: PipelineConfig, pool: int | None = None) -> FilterConfig:
    f = cfg.filter
    return FilterConfig(f.corner_side, f.keep_count, max(pool or f.pool_per_class, f.keep_count), f.convention)


def cmd_filter(cfg: PipelineConfig, variants: list[str] | None = None) -> list[Path]:
    out = []
    for v in selected_variants(cfg, variants):
        report_dir = workdir(cfg) / "filter" / v
        report_dir.mkdir(parents=True, exist_ok=True)
        path = run_filter_dir(workdir(cfg) / "samples" / v, filter_config(cfg), report_dir / "densities.csv")
        write_provenance(path, cfg, f"filter/{v}")
        out.append(path)
    return out


def make_extractor(cfg: PipelineConfig):
    m = cfg.metrics
    if m.extractor == "random_projection":
        res = cfg.corpus.resolution
        return random_projection_extractor((res, res, 3), m.projection_dim, m.projection_classes,
                                           cfg.stage_seed("metrics"))
    if m.extractor == "inception":
        return inception_extractor(m.inception_weights)
    raise PipelineError(f"unknown extractor {m.extractor!r}")


def _read_selection(report: Path) -> dict[str, list[int]]:
    import csv

    selected: dict[str, list[tuple[int, int]]] = {}
    with open(report, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["selected"] == "1":
                selected.setdefault(row["class"], []).append((int(row["density"]), int(row["index"])))
    return {c: [i for _, i in sorted(v)] for c, v in selected.items()}


def cmd_score(cfg: PipelineConfig, variants: list[str] | None = None) -> Path:
    """Table-2 rows: regular = first t samples per class, filtered = the t kept by the filter."""
    _, train, test = load_real_images(cfg)
    real = [it.image for it in train + test]
    extractor = make_extractor(cfg)
    t = cfg.filter.keep_count
    rows = []
    for v in selected_variants(cfg, variants):
        pools = read_sample_dir(workdir(cfg) / "samples" / v)
        report = workdir(cfg) / "filter" / v / "densities.csv"
        if not report.exists():
            cmd_filter(cfg, [v])
        selection = _read_selection(report)
        regular = [img for cls in pools for img in pools[cls][:t]]
        filtered = [pools[cls][i] for cls in pools for i in selection.get(cls, [])]
        meta = json.loads((workdir(cfg) / "gan" / v / "meta.json").read_text(encoding="utf-8"))
        rows.append({"dataset": VARIANT_LABELS[v],
                     "regular": score_image_sets(real, regular, extractor, cfg.metrics.splits),
                     "filtered": score_image_sets(real, filtered, extractor, cfg.metrics.splits),
                     "collapsed": meta["collapsed"]})
    out = workdir(cfg) / "score"
    out.mkdir(parents=True, exist_ok=True)
    path = write_table2(rows, out / "table2.csv")
    write_provenance(path, cfg, "score")
    return path


# ---------------------------------------------------------------- reproduce

def cmd_sweep(cfg: PipelineConfig) -> Path:
    manifest, train, test = load_real_images(cfg)
    check_leakage(train, test)
    s = cfg.sweep
    n = len(manifest.classes())
    specs = [ClassifierSpec(b, n, cfg.chooser.learning_rate, cfg.chooser.batch_size, cfg.chooser.weights_path)
             for b in s.backbones]
    strat = CompositeStrategy(tuple(s.strategy), 0)
    cells = run_size_sweep(train, test, [k * n for k in s.sizes_per_class], specs, strat,
                           s.repetitions, cfg.stage_seed("sweep"), s.epochs, n)
    out = workdir(cfg) / "sweep"
    out.mkdir(parents=True, exist_ok=True)
    path = write_sweep_csv(cells, out / "figure2.csv")
    plot_sweep(cells, out / "figure2.png")
    write_provenance(path, cfg, "sweep")
    return path


def ensure_converted(cfg: PipelineConfig) -> None:
    if not (workdir(cfg) / "images" / "manifest.json").exists():
        cmd_convert(cfg)


def cmd_reproduce(cfg: PipelineConfig, target: str, evaluator_kind: str = "classifier",
                  variants: list[str] | None = None) -> Path:
    ensure_converted(cfg)
    if target == "table1":
        return cmd_choose(cfg, evaluator_kind)[0]
    if target == "figure2":
        return cmd_sweep(cfg)
    if target == "table2":
        if not (workdir(cfg) / "choose" / "augstar.json").exists():
            cmd_choose(cfg, evaluator_kind)
        cmd_augment(cfg, variants)
        cmd_train_gan(cfg, variants)
        cmd_generate(cfg, variants)
        cmd_filter(cfg, variants)
        return cmd_score(cfg, variants)
    raise PipelineError(f"unknown reproduce target {target!r}")


# ---------------------------------------------------------------- argparse

def _common(parser: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    parser.add_argument("--config", default=s, help="JSON config document")
    parser.add_argument("--profile", choices=("smoke", "full"), default=s)
    parser.add_argument("--workdir", default=s)
    parser.add_argument("--seed", type=int, default=s, help="global seed")
    parser.add_argument("-v", "--verbose", action="store_true", default=s)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gansemble", description=__doc__.split("\n")[0])
    _common(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _common(p)
        return p

    def variants_flag(p):
        p.add_argument("--variants", nargs="+", choices=VARIANTS)

    def chooser_flags(p):
        p.add_argument("--steps", type=int)
        p.add_argument("--repetitions", type=int)
        p.add_argument("--target-per-class", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--evaluator", choices=("classifier", "centroid"), default="classifier",
                       help="centroid = deterministic stand-in evaluator for CI")

    p = add("convert", "render spectra CSVs to polar images and split train/test")
    p.add_argument("--corpus-dir")
    p = add("augment", "build oversampled cGAN training sets")
    variants_flag(p)
    p = add("choose", "run the strategy search and name Aug*")
    chooser_flags(p)
    p = add("train-gan", "train one cGAN per dataset variant, with restarts")
    variants_flag(p)
    p.add_argument("--gan-epochs", type=int)
    p.add_argument("--max-attempts", type=int)
    p = add("generate", "sample per-class pools from trained cGANs")
    variants_flag(p)
    p.add_argument("--count", type=int)
    p = add("filter", "corner-density filter over <class>_<index>.png pools")
    variants_flag(p)
    p.add_argument("--input-dir")
    p.add_argument("--corner-side", type=int)
    p.add_argument("--keep", type=int)
    p.add_argument("--report", default="densities.csv")
    p.add_argument("--output-dir")
    p.add_argument("--convention", choices=("ink", "raw"))
    p = add("score", "FID / IS table, regular vs filtered")
    variants_flag(p)
    p = add("reproduce", "rerun a published experiment at the chosen profile")
    p.add_argument("target", choices=("figure2", "table1", "table2"))
    variants_flag(p)
    chooser_flags(p)
    return parser


def config_from_args(args) -> PipelineConfig:
    profile = getattr(args, "profile", None)
    if getattr(args, "config", None):
        cfg = load_config(args.config, profile)
    else:
        cfg = build_config(profile or "smoke")
    if getattr(args, "workdir", None):
        cfg.workdir = args.workdir
    if getattr(args, "seed", None) is not None:
        cfg.global_seed = args.seed
    for flag, section, key in (("steps", "chooser", "steps"), ("repetitions", "chooser", "repetitions"),
                               ("target_per_class", "chooser", "target_per_class"),
                               ("epochs", "chooser", "epochs"), ("gan_epochs", "gan", "epochs"),
                               ("max_attempts", "gan", "max_attempts"),
                               ("corner_side", "filter", "corner_side"), ("keep", "filter", "keep_count"),
                               ("convention", "filter", "convention"), ("corpus_dir", "corpus", "corpus_dir")):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(getattr(cfg, section), key, value)
    if getattr(args, "gan_epochs", None) is not None:
        cfg.gan.unstable_epochs = args.gan_epochs
    return cfg


def dispatch(args, cfg: PipelineConfig):
    cmd = args.command
    if cmd == "convert":
        return cmd_convert(cfg, args.corpus_dir)
    if cmd == "augment":
        return cmd_augment(cfg, args.variants)
    if cmd == "choose":
        return cmd_choose(cfg, args.evaluator)
    if cmd == "train-gan":
        return cmd_train_gan(cfg, args.variants)
    if cmd == "generate":
        return cmd_generate(cfg, args.variants, args.count)
    if cmd == "filter":
        if args.input_dir:
            return run_filter_dir(args.input_dir, filter_config(cfg, pool=10**9), args.report, args.output_dir)
        return cmd_filter(cfg, args.variants)
    if cmd == "score":
        return cmd_score(cfg, args.variants)
    return cmd_reproduce(cfg, args.target, args.evaluator, args.variants)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        wd = workdir(cfg)
        wd.mkdir(parents=True, exist_ok=True)
        with FileLock(str(wd / ".gansemble.lock"), timeout=0):
            result = dispatch(args, cfg)
    except Timeout:
        _fail(args, "WorkdirBusy", f"another gansemble command holds {cfg.workdir}")
        return 3
    except (PipelineError, DataLeakageError, ValueError, FileNotFoundError, RuntimeError) as exc:
        _fail(args, type(exc).__name__, str(exc))
        return 1
    paths = result if isinstance(result, (list, tuple)) else [result]
    for p in paths:
        print(p)
    return 0


def _fail(args, kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"command": getattr(args, "command", None), "error": kind,
                                 "message": message}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
