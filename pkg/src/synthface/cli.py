"""Command-line interface: ``synthface <command> [options]``.

Exit status is 0 on success, 1 for invalid input or configuration and 2
for runtime failures.  Errors go to standard error prefixed with
``synthface: invalid:`` or ``synthface: failed:``.

Environment variables ``SYNTHFACE_OUTPUT_DIR`` and ``SYNTHFACE_WORKERS``
supply defaults for ``--out`` and ``--workers``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import adapt, layers, metrics
from .augment import AugmentationConfig, apply_to_image, apply_to_labels, sample_augmentation
from .config import GenerationConfig, load_config
from .dataset import RunConfig, generate_dataset, validate_dataset, write_sample
from .desk import DeskAssets, desk_assets, synthetic_scan_corpus
from .errors import SynthFaceError
from .learning import (fit_identity_basis, fit_identity_distribution, load_corpus, load_distribution,
                       save_corpus, save_distribution, topology_hash)
from .raster import render_scene
from .rig import load_rig, save_rig
from .scene import assemble_scene
from .semantic import DOWN_MAP, NUM_CLASSES
from .streams import rng_for

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
ENV_OUTPUT = "SYNTHFACE_OUTPUT_DIR"
ENV_WORKERS = "SYNTHFACE_WORKERS"


class UsageError(Exception):
    """Bad arguments or inputs (exit status 1)."""


def _emit(args, doc, text=None):
    if args.json:
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        print(text if text is not None else "\n".join(f"{k}: {v}" for k, v in doc.items()))


def _out_dir(args, default_name):
    if args.out:
        return Path(args.out)
    base = os.environ.get(ENV_OUTPUT)
    if base:
        return Path(base) / default_name
    raise UsageError(f"--out is required (or set {ENV_OUTPUT})")


def _workers(args):
    if args.workers is not None:
        return args.workers
    value = os.environ.get(ENV_WORKERS)
    if value is None:
        return 1
    try:
        return int(value)
    except ValueError:
        raise UsageError(f"{ENV_WORKERS} must be an integer, got {value!r}") from None


def _config(args):
    return load_config(args.config) if args.config else GenerationConfig()


def _assets(args):
    """Bundled desk assets, optionally with a rig and identity distribution from disk."""
    base = desk_assets()
    rig_path = getattr(args, "rig", None)
    dist_path = getattr(args, "distribution", None)
    if not rig_path and not dist_path:
        return base
    rig = load_rig(rig_path) if rig_path else base.rig
    dist = load_distribution(dist_path) if dist_path else base.identity
    if dist.dim != rig.num_identity:
        raise UsageError(f"distribution has {dist.dim} components but the rig has {rig.num_identity}")
    if rig.num_expression != base.library.entries.shape[1]:
        raise UsageError("rig expression basis does not match the bundled expression library")
    return DeskAssets(rig, dist, base.library, None)


def _check_input(path, what):
    if not Path(path).exists():
        raise UsageError(f"{what} {path} does not exist")
    return Path(path)


# -- subcommands ----------------------------------------------------------------


def cmd_synth_corpus(args):
    corpus = synthetic_scan_corpus(args.count, seed=args.seed, noise=args.noise)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_corpus(out, corpus)
    _emit(args, {"corpus": str(out), "scans": int(corpus.scans.shape[0]),
                 "vertices": int(corpus.scans.shape[1])})


def cmd_fit_model(args):
    rig = load_rig(args.rig) if args.rig else desk_assets().rig
    corpus = load_corpus(_check_input(args.corpus, "corpus"))
    if corpus.topology_hash != topology_hash(rig.faces):
        raise UsageError("corpus scans are registered to a different topology than the rig")
    basis, betas, report = fit_identity_basis(corpus, args.components, rig.template_vertices)
    dist = fit_identity_distribution(betas)
    out = _out_dir(args, "model")
    out.mkdir(parents=True, exist_ok=True)
    save_rig(out / "rig.npz", rig.with_identity_basis(basis))
    save_distribution(out / "identity.json", dist)
    doc = {
        "rig": str(out / "rig.npz"),
        "distribution": str(out / "identity.json"),
        "components": int(args.components),
        "residual_rms": report.rms,
        "explained_variance": float(np.sum(report.explained_variance_ratio)),
    }
    _emit(args, doc)


def cmd_gen_dataset(args):
    config = _config(args)
    run = RunConfig(
        output_dir=str(_out_dir(args, "dataset")),
        count=args.count,
        resolution_px=args.resolution or config.render.resolution_px,
        workers=_workers(args),
        global_seed=args.seed,
        hair_enabled=config.hair_enabled and not args.no_hair,
        clothing_enabled=config.clothing_enabled and not args.no_clothing,
    )
    if args.run:
        doc = json.loads(_check_input(args.run, "run file").read_text())
        config = GenerationConfig.from_dict(doc["config"])
        run = RunConfig(output_dir=run.output_dir, count=doc["count"], resolution_px=doc["resolution_px"],
                        workers=run.workers, global_seed=doc.get("global_seed", args.seed),
                        hair_enabled=config.hair_enabled, clothing_enabled=config.clothing_enabled)
    run.validate()
    manifest = generate_dataset(run, _assets(args), config)
    doc = {"output": run.output_dir, "samples": manifest.count, "failures": len(manifest.header["failures"]),
           "config_hash": manifest.header["config_hash"]}
    _emit(args, doc)
    if manifest.header["failures"]:
        for failure in manifest.header["failures"]:
            print(f"synthface: failed: sample {failure['index']}: {failure['error']}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_validate(args):
    problems = validate_dataset(_check_input(args.dataset, "dataset"))
    _emit(args, {"dataset": args.dataset, "valid": not problems, "problems": problems},
          "valid" if not problems else "\n".join(problems))
    return EXIT_OK if not problems else EXIT_INVALID


def cmd_preview(args):
    config = _config(args)
    if args.resolution:
        config = config.replace(render=config.render.__class__(
            **{**vars(config.render), "resolution_px": args.resolution}))
    assets = _assets(args)
    scene = assemble_scene(config, assets, args.seed)
    bundle = render_scene(scene, assets.rig, config)
    out = _out_dir(args, "preview")
    out.mkdir(parents=True, exist_ok=True)
    record = write_sample(out, 0, bundle, scene)
    (out / "scene.json").write_text(json.dumps(scene.to_dict(), indent=2, sort_keys=True) + "\n")
    _emit(args, {"output": str(out), "files": record["files"],
                 "visible_landmarks": int(bundle.landmark_visible.sum())})


def cmd_augment(args):
    root = _check_input(args.sample, "sample directory")
    name = args.name
    config = _config(args)
    aug = config.augmentation
    if args.mode:
        aug = AugmentationConfig(**{**vars(aug), "mode": args.mode})
        aug.validate()
    spec = sample_augmentation(aug, rng_for(args.seed, "augment"))
    color = layers.read_rgb(_check_input(root / "color" / f"{name}.png", "color layer"))
    mask = layers.read_mask(_check_input(root / "mask" / f"{name}.png", "mask layer"))
    points, visible = layers.read_landmarks(_check_input(root / "landmarks" / f"{name}.txt", "landmark file"))
    out = _out_dir(args, "augmented")
    for sub in ("color", "mask", "landmarks"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    new_color = apply_to_image(spec, color)
    new_mask, new_points, new_visible = apply_to_labels(spec, mask, points, visible)
    layers.write_rgb(out / "color" / f"{name}.png", new_color)
    layers.write_mask(out / "mask" / f"{name}.png", new_mask)
    layers.write_landmarks(out / "landmarks" / f"{name}.txt", new_points, new_visible)
    (out / f"{name}.spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    _emit(args, {"output": str(out), "mode": aug.mode, "spec": spec.to_dict()})


def _load_pairs(path):
    with np.load(_check_input(path, "pairs file"), allow_pickle=False) as data:
        if "sources" not in data.files or "targets" not in data.files:
            raise UsageError(f"{path}: pairs file needs 'sources' and 'targets' arrays")
        sources, targets = data["sources"], data["targets"]
    sources = sources.reshape(len(sources), -1)
    targets = targets.reshape(len(targets), -1)
    if sources.shape != targets.shape:
        raise UsageError(f"{path}: sources {sources.shape} and targets {targets.shape} differ")
    return sources, targets


def cmd_train_adapt(args):
    sources, targets = _load_pairs(args.pairs)
    hyper = adapt.AdapterHyper(hidden=args.hidden, lr=args.lr, batch_size=args.batch_size,
                               epochs=args.epochs, validation_fraction=args.validation, seed=args.seed)
    result = adapt.train_adapter(sources, targets, hyper)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    adapt.save_adapter(out, result.model, hyper)
    log = out.with_suffix(".log")
    log.write_text(result.log_text())
    _emit(args, {"model": str(out), "log": str(log), "best_epoch": result.best_epoch,
                 "best_val_mse": result.best_val})


def _landmark_files(directory):
    directory = _check_input(directory, "landmark directory")
    if directory.is_file():
        return {directory.stem: directory}
    files = {p.stem: p for p in sorted(directory.glob("*.txt"))}
    if not files:
        raise UsageError(f"{directory}: no landmark files (*.txt)")
    return files


def cmd_apply_adapt(args):
    model = adapt.load_adapter(_check_input(args.model, "model file"))
    files = _landmark_files(args.input)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for name, path in files.items():
        points, visible = layers.read_landmarks(path)
        vec = adapt.normalize_landmarks(points[None, :, :2], args.width, args.height)
        if vec.shape[1] != model.input_dim:
            raise UsageError(f"{path}: {vec.shape[1] // 2} points, model expects {model.input_dim // 2}")
        new = adapt.denormalize_landmarks(adapt.forward(model, vec), args.width, args.height)[0]
        adapted = points.copy()
        adapted[:, :2] = new
        layers.write_landmarks(out / f"{name}.txt", adapted, visible)
    _emit(args, {"output": str(out), "files": len(files)})


def cmd_eval_landmarks(args):
    pred = _landmark_files(args.pred)
    gt = _landmark_files(args.gt)
    missing = sorted(set(gt) - set(pred))
    if missing:
        raise UsageError(f"no prediction for {len(missing)} image(s), first: {missing[0]}")
    report = metrics.MetricsReport(threshold=args.threshold)
    for name in sorted(gt):
        g, _ = layers.read_landmarks(gt[name])
        p, _ = layers.read_landmarks(pred[name])
        report.per_image_nme[name] = metrics.nme(p, g)
    _emit(args, report.to_dict(), report.to_table())


def cmd_eval_parsing(args):
    pred_dir = _check_input(args.pred, "prediction directory")
    gt_dir = _check_input(args.gt, "ground-truth directory")
    gt_files = sorted(gt_dir.glob("*.png"))
    if not gt_files:
        raise UsageError(f"{gt_dir}: no mask files (*.png)")
    counts = None
    for path in gt_files:
        other = pred_dir / path.name
        if not other.is_file():
            raise UsageError(f"no predicted mask for {path.name}")
        g, p = layers.read_mask(path), layers.read_mask(other)
        if args.down_map:
            g, p = DOWN_MAP[g], DOWN_MAP[p]
        c = metrics.confusion_counts(p, g, NUM_CLASSES)
        counts = c if counts is None else counts + c
    report = metrics.MetricsReport(f1=metrics.f1_scores(counts))
    _emit(args, report.to_dict(), report.to_table())


def cmd_sweep(args):
    config = _config(args)
    out = _out_dir(args, "sweep")
    out.mkdir(parents=True, exist_ok=True)
    runs = {}
    for count in args.counts:
        runs[f"size_{count}"] = (count, config)
    if args.ablations:
        count = args.counts[-1]
        runs["full"] = (count, config)
        runs["no_clothing"] = (count, config.replace(clothing_enabled=False))
        runs["no_hair_no_clothing"] = (count, config.replace(hair_enabled=False, clothing_enabled=False))
        for mode in ("none", "appearance", "full"):
            aug = AugmentationConfig(**{**vars(config.augmentation), "mode": mode})
            runs[f"augment_{mode}"] = (count, config.replace(augmentation=aug))
    written = []
    for name, (count, cfg) in runs.items():
        doc = {"name": name, "count": int(count), "resolution_px": cfg.render.resolution_px,
               "global_seed": args.seed, "config": cfg.to_dict()}
        path = out / f"{name}.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        written.append({"name": name, "path": str(path), "count": int(count)})
    _emit(args, {"runs": written}, "\n".join(f"{w['name']}: {w['count']} -> {w['path']}" for w in written))


# -- parser -------------------------------------------------------------------------


def _positive(value):
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _count_list(value):
    try:
        counts = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from None
    if not counts or min(counts) < 1:
        raise argparse.ArgumentTypeError("counts must be positive integers")
    return counts


def build_parser():
    def global_flags(suppress):
        # Subcommands repeat the global flags with suppressed defaults so a
        # value given before the subcommand is not overwritten.
        def default(value):
            return argparse.SUPPRESS if suppress else value

        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--seed", type=int, default=default(0), help="global random seed (default 0)")
        g.add_argument("--config", default=default(None), help="generation config JSON file")
        g.add_argument("--workers", type=_positive, default=default(None),
                       help=f"worker processes (default ${ENV_WORKERS} or 1)")
        g.add_argument("--json", action="store_true", default=default(False), help="machine-readable output")
        return g

    common = global_flags(True)
    parser = argparse.ArgumentParser(prog="synthface", description="Synthetic face data generation and evaluation.",
                                     parents=[global_flags(False)])
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, parents=[common])
        p.set_defaults(func=func)
        return p

    def assets_args(p):
        p.add_argument("--rig", help="rig file (default: bundled desk rig)")
        p.add_argument("--distribution", help="identity distribution file")

    p = add("synth-corpus", cmd_synth_corpus, "write a synthetic registered scan corpus for the desk rig")
    p.add_argument("--count", type=_positive, default=200)
    p.add_argument("--noise", type=float, default=2e-4, help="per-coordinate scan noise in metres")
    p.add_argument("--output", required=True, help="corpus file (.npz)")

    p = add("fit-model", cmd_fit_model, "fit an identity basis and distribution to a scan corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--components", type=_positive, default=50, help="identity basis size")
    p.add_argument("--rig", help="rig supplying template and topology (default: desk rig)")
    p.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT}/model)")

    p = add("gen-dataset", cmd_gen_dataset, "render a labelled dataset")
    p.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT}/dataset)")
    p.add_argument("--count", type=_positive, default=1000)
    p.add_argument("--resolution", type=int, help="image size in pixels (default from config)")
    p.add_argument("--no-hair", action="store_true")
    p.add_argument("--no-clothing", action="store_true")
    p.add_argument("--run", help="run file emitted by 'sweep' (overrides count, resolution and config)")
    assets_args(p)

    p = add("validate", cmd_validate, "check that a dataset manifest and its files are complete")
    p.add_argument("dataset")

    p = add("preview", cmd_preview, "render one seed to files")
    p.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT}/preview)")
    p.add_argument("--resolution", type=int)
    assets_args(p)

    p = add("augment", cmd_augment, "apply a seeded augmentation to one sample on disk")
    p.add_argument("--sample", required=True, help="dataset directory holding color/, mask/, landmarks/")
    p.add_argument("--name", default="000000", help="sample name (default 000000)")
    p.add_argument("--mode", choices=("none", "appearance", "full"))
    p.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT}/augmented)")

    p = add("train-adapt", cmd_train_adapt, "train a landmark label adapter on (source, target) pairs")
    p.add_argument("--pairs", required=True, help=".npz with 'sources' and 'targets' in [0, 1] coordinates")
    p.add_argument("--output", required=True, help="model file (.json); the log goes next to it")
    p.add_argument("--hidden", type=_positive, default=128)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=_positive, default=64)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--validation", type=float, default=0.1, help="validation fraction")

    p = add("apply-adapt", cmd_apply_adapt, "adapt landmark files with a trained adapter")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="landmark file or directory of *.txt")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--width", type=_positive, required=True)
    p.add_argument("--height", type=_positive, required=True)

    p = add("eval-landmarks", cmd_eval_landmarks, "NME and failure rate of predicted landmarks")
    p.add_argument("--pred", required=True, help="directory of predicted landmark files")
    p.add_argument("--gt", required=True, help="directory of ground-truth landmark files")
    p.add_argument("--threshold", type=float, default=metrics.FAILURE_THRESHOLD)

    p = add("eval-parsing", cmd_eval_parsing, "per-class and merged F1 of predicted masks")
    p.add_argument("--pred", required=True, help="directory of predicted masks")
    p.add_argument("--gt", required=True, help="directory of ground-truth masks")
    p.add_argument("--down-map", action="store_true", help="map extra classes to the 11-class scheme first")

    p = add("sweep", cmd_sweep, "emit run files for dataset-size and ablation studies")
    p.add_argument("--counts", type=_count_list, default=[1000, 10000, 100000], help="comma-separated sizes")
    p.add_argument("--ablations", action="store_true",
                   help="also emit hair/clothing and augmentation-mode ablations at the largest size")
    p.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT}/sweep)")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    try:
        status = args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"synthface: invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SynthFaceError, OSError, RuntimeError) as exc:
        print(f"synthface: failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK if status is None else status


if __name__ == "__main__":
    sys.exit(main())
