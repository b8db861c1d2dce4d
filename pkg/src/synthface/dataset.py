"""Dataset generation, per-sample persistence and the line-delimited manifest.

Layout of a dataset directory::

    manifest.jsonl          header record, then one record per sample
    config.json             the generation config
    color/000000.png ...    one subdirectory per layer

Sample ``i`` is rendered from ``sample_seed(global_seed, i)``, so the
output does not depend on the number of workers or their scheduling.  The
manifest is written last through an atomic rename.
"""

from __future__ import annotations

import json
import multiprocessing
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import layers
from .config import GenerationConfig
from .errors import ConfigurationError, SynthFaceError
from .raster import render_scene
from .scene import SceneDescription, assemble_scene
from .streams import sample_seed

MANIFEST_NAME = "manifest.jsonl"
MANIFEST_FORMAT = "synthface-dataset"
MANIFEST_VERSION = 1

# layer name -> (subdirectory, extension)
LAYERS = {
    "color": ("color", ".png"),
    "albedo": ("albedo", ".png"),
    "mask": ("mask", ".png"),
    "depth": ("depth", ".png"),
    "normals": ("normals", ".f32"),
    "uvs": ("uvs", ".f32"),
    "vertex_map": ("vertex_map", ".f32"),
    "landmarks": ("landmarks", ".txt"),
}
PLANE_TAGS = {"normals": "nrm", "uvs": "uv", "vertex_map": "vmap"}


class DatasetError(SynthFaceError):
    pass


def sample_name(index):
    return f"{index:06d}"


def write_sample(root, index, bundle, scene, create_dirs=True):
    """Write every layer of ``bundle``; returns the manifest record."""
    root = Path(root)
    name = sample_name(index)
    files = {}
    layer_list = dict(LAYERS)
    if bundle.dense_landmarks is not None:
        layer_list["dense_landmarks"] = ("dense_landmarks", ".txt")
    for layer, (sub, ext) in layer_list.items():
        directory = root / sub
        if create_dirs:
            directory.mkdir(parents=True, exist_ok=True)
        elif not directory.is_dir():
            raise DatasetError(f"{directory}: directory does not exist")
        rel = f"{sub}/{name}{ext}"
        path = root / rel
        try:
            if layer in ("color", "albedo"):
                layers.write_rgb(path, getattr(bundle, layer))
            elif layer == "mask":
                layers.write_mask(path, bundle.mask)
            elif layer == "depth":
                layers.write_depth(path, bundle.depth)
            elif layer in PLANE_TAGS:
                layers.write_plane(path, getattr(bundle, layer), PLANE_TAGS[layer])
            elif layer == "landmarks":
                layers.write_landmarks(path, bundle.landmarks, bundle.landmark_visible)
            else:
                layers.write_landmarks(path, bundle.dense_landmarks, bundle.dense_visible)
        except OSError as exc:
            raise DatasetError(f"{path}: cannot write layer {layer} ({exc.strerror or exc})") from exc
        files[layer] = rel
    return {"index": int(index), "seed": int(scene.seed), "scene": scene.to_dict(), "files": files}


def read_layer(path, layer):
    path = Path(path)
    if layer in ("color", "albedo"):
        return layers.read_rgb(path)
    if layer == "mask":
        return layers.read_mask(path)
    if layer == "depth":
        return layers.read_depth(path)
    if layer in PLANE_TAGS:
        return layers.read_plane(path, PLANE_TAGS[layer])
    if layer in ("landmarks", "dense_landmarks"):
        return layers.read_landmarks(path)
    raise DatasetError(f"unknown layer {layer!r}")


def read_sample(root, record):
    """All layers of one manifest record as a dict of arrays."""
    root = Path(root)
    return {layer: read_layer(root / rel, layer) for layer, rel in record["files"].items()}


# -- manifest -----------------------------------------------------------------


@dataclass
class Manifest:
    header: dict
    records: list = field(default_factory=list)

    @property
    def count(self):
        return len(self.records)


def _dumps(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def write_manifest(root, manifest):
    """Write atomically: a temporary file renamed over the final name."""
    root = Path(root)
    final = root / MANIFEST_NAME
    tmp = root / (MANIFEST_NAME + ".tmp")
    with open(tmp, "w") as fh:
        fh.write(_dumps(manifest.header) + "\n")
        for record in manifest.records:
            fh.write(_dumps(record) + "\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, final)
    return final


def read_manifest(root):
    path = Path(root) / MANIFEST_NAME
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DatasetError(f"{path}: cannot read manifest ({exc.strerror or exc})") from None
    if not lines:
        raise DatasetError(f"{path}: empty manifest")
    try:
        header = json.loads(lines[0])
        records = [json.loads(line) for line in lines[1:] if line.strip()]
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: malformed manifest line ({exc})") from None
    if header.get("format") != MANIFEST_FORMAT or header.get("version") != MANIFEST_VERSION:
        raise DatasetError(f"{path}: not a version-{MANIFEST_VERSION} {MANIFEST_FORMAT} manifest")
    return Manifest(header, records)


def validate_dataset(root, parse_layers=True):
    """List of problems found in a dataset directory (empty when valid)."""
    root = Path(root)
    problems = []
    try:
        manifest = read_manifest(root)
    except DatasetError as exc:
        return [str(exc)]
    header = manifest.header
    try:
        config = GenerationConfig.from_dict(header["config"])
        if config.hash() != header.get("config_hash"):
            problems.append("config hash does not match the stored config")
    except (KeyError, ConfigurationError) as exc:
        problems.append(f"stored config is invalid: {exc}")
    if header.get("count") != manifest.count:
        problems.append(f"header count {header.get('count')} != {manifest.count} records")
    seeds = [r.get("seed") for r in manifest.records]
    if len(set(seeds)) != len(seeds):
        problems.append("sample seeds are not unique")
    global_seed = header.get("global_seed")
    for record in manifest.records:
        idx = record.get("index")
        if global_seed is not None and record.get("seed") != sample_seed(global_seed, idx):
            problems.append(f"sample {idx}: seed does not follow from the global seed")
        for layer, rel in record.get("files", {}).items():
            path = root / rel
            if not path.is_file():
                problems.append(f"sample {idx}: missing {layer} file {rel}")
                continue
            if parse_layers:
                try:
                    read_layer(path, layer)
                except (ValueError, OSError) as exc:
                    problems.append(f"sample {idx}: {layer} does not parse ({exc})")
    return problems


# -- generation ---------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    output_dir: str
    count: int = 1000
    resolution_px: int = 256
    workers: int = 1
    global_seed: int = 0
    hair_enabled: bool = True
    clothing_enabled: bool = True

    def validate(self):
        if self.count < 1:
            raise ConfigurationError("count must be >= 1")
        if self.resolution_px < 16:
            raise ConfigurationError("resolution must be >= 16")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")

    def generation_config(self, base=None):
        base = GenerationConfig() if base is None else base
        render = base.render.__class__(**{**vars(base.render), "resolution_px": self.resolution_px})
        return base.replace(render=render, hair_enabled=self.hair_enabled,
                            clothing_enabled=self.clothing_enabled)


_WORKER = {}


def _init_worker(assets, config, root):
    _WORKER.update(assets=assets, config=config, root=root)


def _render_one(task):
    index, seed = task
    assets, config, root = _WORKER["assets"], _WORKER["config"], _WORKER["root"]
    try:
        scene = assemble_scene(config, assets, seed)
        bundle = render_scene(scene, assets.rig, config)
        return write_sample(root, index, bundle, scene), None
    except Exception as exc:  # recorded in the manifest diagnostics
        return None, {"index": index, "seed": seed, "error": f"{type(exc).__name__}: {exc}",
                      "trace": traceback.format_exc(limit=3)}


def generate_dataset(run, assets, config=None, progress=None):
    """Render ``run.count`` samples into ``run.output_dir`` and write the manifest.

    Returns the :class:`Manifest`.  Failed samples are left out of the
    manifest and listed under ``failures`` in its header.
    """
    run.validate()
    config = run.generation_config(config)
    root = Path(run.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    stale = root / MANIFEST_NAME
    if stale.exists():
        stale.unlink()
    (root / "config.json").write_text(config.to_json() + "\n")
    for sub, _ in LAYERS.values():
        (root / sub).mkdir(exist_ok=True)
    tasks = [(i, sample_seed(run.global_seed, i)) for i in range(run.count)]
    records, failures = [], []

    def collect(results):
        for n, (record, failure) in enumerate(results, 1):
            if record is not None:
                records.append(record)
            else:
                failures.append(failure)
            if progress is not None:
                progress(n, run.count)

    if run.workers == 1:
        _init_worker(assets, config, root)
        collect(map(_render_one, tasks))
    else:
        methods = multiprocessing.get_all_start_methods()
        ctx = multiprocessing.get_context("fork" if "fork" in methods else "spawn")
        with ProcessPoolExecutor(run.workers, mp_context=ctx, initializer=_init_worker,
                                 initargs=(assets, config, root)) as pool:
            chunk = max(1, min(16, run.count // (4 * run.workers)))
            collect(pool.map(_render_one, tasks, chunksize=chunk))
    header = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "rig_hash": assets.rig.content_hash(),
        "global_seed": int(run.global_seed),
        "count": len(records),
        "requested": int(run.count),
        "resolution_px": int(run.resolution_px),
        "failures": [{k: f[k] for k in ("index", "seed", "error")} for f in failures],
    }
    manifest = Manifest(header, records)
    write_manifest(root, manifest)
    return manifest


def scene_of(record):
    return SceneDescription.from_dict(record["scene"])


def landmark_stack(root, manifest, layer="landmarks"):
    """(N, L, 2) landmark pixels and (N, L) visibility for every sample."""
    pts, vis = [], []
    for record in manifest.records:
        p, v = read_layer(Path(root) / record["files"][layer], layer)
        pts.append(p[:, :2])
        vis.append(v)
    return np.array(pts), np.array(vis)
