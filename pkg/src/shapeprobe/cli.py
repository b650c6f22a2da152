"""Command-line surface.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 validation
error. Every command refuses to write into a non-empty output directory
unless --force is given.
"""
from __future__ import annotations

import functools
import importlib.resources
import os
import sys
from pathlib import Path

import click

from . import io
from .augments import AUGMENT_KINDS, AugmentationSpec, augment_dataset
from .corruptions import CORRUPTION_KINDS, CorruptionSpec, corrupt_dataset
from .errors import ConfigError, ProbeError, ShapeProbeError, StorageError
from .generate import (FeatureConfig, SWEEP_SIZES, generate_dataset,
                       generate_size_sweep, regenerate_from_manifest)
from .metrics import LayerSpec, evaluate_run, evaluate_set, receptive_field
from .oracles import ORACLE_KINDS, make_oracle
from .probes import (BRIGHTNESS_GAINS, brightness_grid, elastic_series,
                     invert_aff, invert_shuf, make_aff, make_brightness,
                     make_elastic, make_rm, make_shuf)
from .textures import pool_from_origin

ATLAS_ENV = "SHAPEPROBE_TEXTURE_DIR"
DEFAULT_SEEN_POOL = "procedural:7:112"
DEFAULT_UNSEEN_POOL = "procedural:99:61"


def _exit_code(err: ShapeProbeError) -> int:
    if isinstance(err, ConfigError):
        return 2
    if isinstance(err, StorageError):
        return 3
    return 4


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ShapeProbeError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(_exit_code(e))
    return wrapper


def _atlas_root() -> str | None:
    return os.environ.get(ATLAS_ENV)


def _load_pool(origin: str):
    return pool_from_origin(origin, atlas_root=_atlas_root())


def _load_feature_config(path: str | None) -> FeatureConfig:
    if path is None:
        return FeatureConfig()
    obj = io.read_json(path)
    if not isinstance(obj, dict):
        raise ConfigError(f"{path} does not hold a config object")
    base = FeatureConfig().to_json()
    unknown = set(obj) - set(base)
    if unknown:
        raise ConfigError(f"unknown config keys in {path}: {sorted(unknown)}")
    base.update(obj)
    return FeatureConfig.from_json(base)


@click.group()
def main():
    """Synthetic segmentation scenes with controllable discriminative
    features, probing sets, and the shape-bias index."""


# --------------------------------------------------------------------------
@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Feature-config JSON; missing keys take defaults.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n", type=int, default=200, show_default=True,
              help="Scenes per dataset.")
@click.option("--out", required=True, type=click.Path())
@click.option("--pool", "pool_id", default=DEFAULT_SEEN_POOL, show_default=True,
              help="Seen texture pool (procedural:<seed>:<count> or atlas dir).")
@click.option("--sweep", is_flag=True,
              help=f"Render the same seeds at canvas sides {SWEEP_SIZES[0]}.."
                   f"{SWEEP_SIZES[-1]} step 32 into per-size subdirectories.")
@click.option("--from-manifest", "manifest_path", type=click.Path(), default=None,
              help="Regenerate a dataset from an existing manifest.json.")
@click.option("--force", is_flag=True, help="Overwrite non-empty output.")
@handle_errors
def gen(config_path, seed, n, out, pool_id, sweep, manifest_path, force):
    """Generate a scene dataset (or regenerate one from a manifest)."""
    if manifest_path is not None:
        manifest = io.read_json(manifest_path)
        io.require_empty_or_force(out, force)
        regenerate_from_manifest(manifest, out)
        click.echo(f"regenerated {len(manifest['scenes'])} scenes into {out}")
        return
    cfg = _load_feature_config(config_path)
    if n < 1:
        raise ConfigError("--n must be >= 1")
    pool = _load_pool(pool_id)
    io.require_empty_or_force(out, force)
    if sweep:
        manifests = generate_size_sweep(cfg, seed, out, pool, n=n)
        click.echo(f"wrote {len(manifests)} datasets of {n} scenes under {out}")
    else:
        generate_dataset(cfg, n, seed, out, pool)
        click.echo(f"wrote {n} scenes to {out}")


# --------------------------------------------------------------------------
def _parse_degrees(text: str) -> list[int]:
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        if "," in text:
            return [int(t) for t in text.split(",")]
        return [int(text)]
    except ValueError as e:
        raise ConfigError(f"cannot parse degrees {text!r}: {e}") from e


def _invert_probe(probe_dir: Path, out: Path, force: bool) -> None:
    meta = io.read_probe_meta(probe_dir)
    kind = meta.get("kind")
    if kind not in ("aff", "shuf"):
        raise ProbeError(f"probe kind {kind!r} is not invertible")
    io.require_empty_or_force(out, force)
    io.ensure_dataset_dirs(out)
    for rec in meta["scenes"]:
        index = int(rec["index"])
        paths = io.scene_paths(probe_dir, index)
        image = io.load_image(paths["image"])
        mask = io.load_mask(paths["mask"])
        if kind == "aff":
            image = invert_aff(image, rec["tag"])
            mask = invert_aff(mask, rec["tag"])
        else:
            image = invert_shuf(image, rec["permutation"])
            mask = invert_shuf(mask, rec["permutation"])
        out_paths = io.scene_paths(out, index)
        io.save_image(out_paths["image"], image)
        io.save_mask(out_paths["mask"], mask)
    click.echo(f"inverted {kind} probe into {out}")


@main.command()
@click.argument("val_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--kind", type=click.Choice(["rm", "aff", "shuf", "brightness",
                                           "elastic"]), default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--unseen", "unseen_id", default=DEFAULT_UNSEEN_POOL,
              show_default=True, help="Unseen pool for --kind rm.")
@click.option("--degrees", default="1..10", show_default=True,
              help="Deformation degrees for --kind elastic.")
@click.option("--fg-gain", type=float, default=None,
              help="Single brightness pair instead of the full grid.")
@click.option("--bg-gain", type=float, default=None)
@click.option("--invert", is_flag=True,
              help="VAL_DIR is a probe dir; reconstruct its source pixels.")
@click.option("--force", is_flag=True)
@handle_errors
def probe(val_dir, kind, out, seed, unseen_id, degrees, fg_gain, bg_gain,
          invert, force):
    """Derive probing sets (rm/aff/shuf) or perturbation series from VAL_DIR."""
    val_dir, out = Path(val_dir), Path(out)
    if invert:
        _invert_probe(val_dir, out, force)
        return
    if kind is None:
        raise ConfigError("--kind is required unless --invert is given")
    if kind == "rm":
        make_rm(val_dir, out, _load_pool(unseen_id), seed=seed, force=force)
        click.echo(f"wrote rm probe (unseen pool {unseen_id}) to {out}")
    elif kind == "aff":
        make_aff(val_dir, out, seed=seed, force=force)
        click.echo(f"wrote aff probe to {out}")
    elif kind == "shuf":
        make_shuf(val_dir, out, seed=seed, force=force)
        click.echo(f"wrote shuf probe to {out}")
    elif kind == "brightness":
        if (fg_gain is None) != (bg_gain is None):
            raise ConfigError("--fg-gain and --bg-gain must be given together")
        if fg_gain is not None:
            make_brightness(val_dir, out, fg_gain, bg_gain, force=force)
            click.echo(f"wrote brightness set (fg {fg_gain}, bg {bg_gain}) to {out}")
        else:
            metas = brightness_grid(val_dir, out, force=force)
            click.echo(f"wrote {len(metas)} brightness sets under {out} "
                       f"(gains {BRIGHTNESS_GAINS[0]}..{BRIGHTNESS_GAINS[-1]})")
    else:
        degree_list = _parse_degrees(degrees)
        if len(degree_list) == 1:
            make_elastic(val_dir, out, degree_list[0], seed=seed, force=force)
            click.echo(f"wrote elastic degree {degree_list[0]} to {out}")
        else:
            elastic_series(val_dir, out, tuple(degree_list), seed=seed, force=force)
            click.echo(f"wrote {len(degree_list)} elastic sets under {out}")


# --------------------------------------------------------------------------
@main.command()
@click.argument("val_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--kind", type=click.Choice(list(CORRUPTION_KINDS)), required=True)
@click.option("--severity", type=int, default=3, show_default=True)
@click.option("--angle", type=float, default=None, help="Motion-blur angle.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--force", is_flag=True)
@handle_errors
def perturb(val_dir, kind, severity, angle, seed, out, force):
    """Write a corrupted copy of VAL_DIR (images only; labels untouched)."""
    spec = CorruptionSpec(kind=kind, severity=severity, angle_deg=angle)
    corrupt_dataset(val_dir, out, spec, seed=seed, force=force)
    click.echo(f"wrote {kind} severity {severity} corruption to {out}")


# --------------------------------------------------------------------------
@main.command()
@click.argument("val_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--kind", type=click.Choice(list(AUGMENT_KINDS)), required=True)
@click.option("--prob", type=float, default=1.0, show_default=True)
@click.option("--spec", "spec_path", type=click.Path(), default=None,
              help="JSON with extra AugmentationSpec fields.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--force", is_flag=True)
@handle_errors
def augment(val_dir, kind, prob, spec_path, seed, out, force):
    """Write an augmented copy of VAL_DIR."""
    fields = {"kind": kind, "prob": prob}
    if spec_path is not None:
        extra = io.read_json(spec_path)
        if not isinstance(extra, dict):
            raise ConfigError(f"{spec_path} does not hold a spec object")
        fields.update(extra)
    spec = AugmentationSpec.from_json(fields)
    meta = augment_dataset(val_dir, out, spec, seed=seed, force=force)
    applied = sum(1 for s in meta["scenes"] if s["applied"])
    click.echo(f"wrote {kind} augmentation to {out} "
               f"({applied}/{len(meta['scenes'])} scenes transformed)")


# --------------------------------------------------------------------------
@main.command("eval")
@click.option("--val", nargs=2, type=click.Path(), required=True,
              metavar="GT_DIR PRED_DIR")
@click.option("--rm", nargs=2, type=click.Path(), required=True,
              metavar="GT_DIR PRED_DIR")
@click.option("--aff", nargs=2, type=click.Path(), required=True,
              metavar="GT_DIR PRED_DIR")
@click.option("--shuf", nargs=2, type=click.Path(), required=True,
              metavar="GT_DIR PRED_DIR")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the full JSON report here.")
@click.option("--no-check-sources", is_flag=True,
              help="Skip probe/source manifest-hash verification.")
@handle_errors
def eval_cmd(val, rm, aff, shuf, out_path, no_check_sources):
    """Compute the shape-bias index from four (ground truth, prediction)
    directory pairs."""
    report = evaluate_run(val, rm, aff, shuf, check_sources=not no_check_sources)
    if out_path:
        io.write_json(out_path, report)
    for name in ("val", "rm", "aff", "shuf"):
        click.echo(f"iou_{name} {report['iou'][name]:.4f}")
    click.echo(f"SBI {report['sbi']:.4f}")


# --------------------------------------------------------------------------
@main.command()
@click.argument("datasets", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False))
@click.option("--kind", type=click.Choice(sorted(ORACLE_KINDS)), required=True)
@click.option("--train", "train_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_root", required=True, type=click.Path())
@click.option("--theta", type=float, default=0.8, show_default=True,
              help="Shape-template acceptance threshold.")
@click.option("--mode", type=click.Choice(["id", "signature"]), default="id",
              show_default=True, help="Texture-lookup matching mode.")
@click.option("--tau", type=float, default=25.0, show_default=True,
              help="Texture-lookup signature distance.")
@handle_errors
def oracle(datasets, kind, train_dir, out_root, theta, mode, tau):
    """Fit a reference predictor on TRAIN and write prediction directories
    (one subdirectory per input dataset) under --out."""
    params = {}
    if kind == "shape_template":
        params = {"theta": theta}
    elif kind == "texture_lookup":
        params = {"mode": mode, "tau": tau}
    est = make_oracle(kind, **params).fit(train_dir)
    out_root = Path(out_root)
    for ds in datasets:
        ds = Path(ds)
        n = est.predict_dataset(ds, out_root / ds.name)
        click.echo(f"{kind}: wrote {n} predictions for {ds} -> {out_root / ds.name}")


# --------------------------------------------------------------------------
def _bundled_spec(name: str) -> LayerSpec:
    ref = importlib.resources.files("shapeprobe.data") / f"{name}.json"
    import json
    return LayerSpec.from_json(json.loads(ref.read_text()))


@main.command()
@click.argument("spec_file")
@handle_errors
def rf(spec_file):
    """Receptive field of a staged conv spec (JSON file, or the bundled
    names unet140 / unet210)."""
    if spec_file in ("unet140", "unet210"):
        spec = _bundled_spec(spec_file)
    else:
        spec = LayerSpec.from_json(io.read_json(spec_file))
    click.echo(str(receptive_field(spec)))


# --------------------------------------------------------------------------
@main.command()
@click.option("--gt", "gt_dir", type=click.Path(exists=True, file_okay=False),
              default=None, help="Dataset to score --pred against.")
@click.option("--pred", "pred_dir", type=click.Path(), default=None)
@click.option("--collect", "collect_files", multiple=True, type=click.Path(),
              help="Merge eval report JSONs into one document (repeatable).")
@click.option("--out", "out_path", type=click.Path(), default=None)
@handle_errors
def report(gt_dir, pred_dir, collect_files, out_path):
    """Score one prediction directory (mean IOU), or merge eval reports."""
    if collect_files:
        merged = {"reports": [{"file": str(f), "data": io.read_json(f)}
                              for f in collect_files]}
        if out_path:
            io.write_json(out_path, merged)
        click.echo(f"collected {len(collect_files)} reports")
        return
    if not gt_dir or not pred_dir:
        raise ConfigError("report needs --gt and --pred (or --collect files)")
    mean_iou, n = evaluate_set(gt_dir, pred_dir)
    doc = {"iou": mean_iou, "n_images": n,
           "gt_manifest": io.manifest_hash(gt_dir)}
    if out_path:
        io.write_json(out_path, doc)
    click.echo(f"iou {mean_iou:.4f} over {n} images")


if __name__ == "__main__":
    main()
