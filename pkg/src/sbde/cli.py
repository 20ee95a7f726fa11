"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 1 finished with per-item failures (a report lists
them), 2 configuration or usage error. Every artifact-producing run writes a
``run.json`` with the config hash, seed, generator id, and backend
fingerprints so outputs can be traced to the exact setup that made them.
Logs are line-JSON on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import conformance, dataio, editpipe, era, fixtures, freqprep, metrics, morphmod, remote, rng, segpipe
from .config import RunConfig, config_from_dict, load_config
from .errors import ConfigError, SbdeError


def _log(event: str, **fields):
    print(json.dumps({"event": event, **fields}), file=sys.stderr)


def _sanitize(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    return obj


def _dump_json(path: Path, doc: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_sanitize(doc), indent=2, sort_keys=True) + "\n")


def _write_run_record(path: Path, cfg: RunConfig, command: str, backends: dict):
    _dump_json(path, {
        "command": command,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "rng": rng.ALGORITHM_ID,
        "backends": backends,
    })


def _load_cfg(args) -> RunConfig:
    path = getattr(args, "config", None) or os.environ.get("SBDE_CONFIG")
    cfg = load_config(path) if path else RunConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "parallel", None) is not None:
        overrides["parallel"] = args.parallel
    if overrides:
        doc = cfg.to_dict()
        doc.update(overrides)
        cfg = config_from_dict(doc)
    return cfg


def _build_segmenter(name: str, manifest=None):
    if name.startswith(("http://", "https://")):
        return remote.RemoteSegmenter(name)
    if name == "threshold":
        return segpipe.ThresholdSegmenter()
    if name == "oracle":
        if manifest is None:
            raise ConfigError("oracle segmenter needs a manifest with mask files")
        return segpipe.OracleSegmenter.for_manifest(manifest)
    raise ConfigError(f"unknown segmenter backend {name!r}")


def _build_inpainter(name: str):
    if name.startswith(("http://", "https://")):
        return remote.RemoteInpainter(name)
    if name == "harmonic":
        return editpipe.HarmonicInpainter()
    raise ConfigError(f"unknown inpainter backend {name!r}")


def _build_classifier(name: str):
    if name.startswith(("http://", "https://")):
        return remote.RemoteClassifier(name)
    if name == "heuristic":
        return fixtures.default_classifier()
    raise ConfigError(f"unknown classifier backend {name!r}")


# ------------------------------------------------------------- subcommands

def _cmd_mod(args) -> int:
    cfg = _load_cfg(args)
    mask = dataio.load_mask(args.infile)
    mod = morphmod.ModConfig(
        open_se=morphmod.StructElement.from_string(args.se_open),
        dilate_se=morphmod.StructElement.from_string(args.se_dilate),
        dilate_passes=args.passes,
    )
    out = morphmod.mod_optimize(mask, mod)
    dataio.save_mask(args.out, out)
    _write_run_record(Path(str(args.out) + ".run.json"), cfg, "mod", {})
    _log("mod.done", infile=str(args.infile), out=str(args.out), pixels=out.count)
    return 0


def _cmd_hpf(args) -> int:
    cfg = _load_cfg(args)
    img = dataio.load_image(args.infile)
    if img.channels != 1:
        from .types import luma

        img = luma(img)
    tiles_x, tiles_y = (int(v) for v in args.tiles.lower().split("x"))
    clip = math.inf if args.clip == "inf" else float(args.clip)
    params = freqprep.ClaheParams(tiles_x, tiles_y, clip, args.bins)
    component = freqprep.high_freq_component(
        img, params, tau=args.tau, enhance=not args.no_clahe
    )
    encoded = np.floor(component + 0.5).astype(np.int64) + 32768
    Image.fromarray(encoded.clip(0, 65535).astype(np.uint16)).save(args.out)
    _dump_json(Path(str(args.out) + ".json"), {
        "min": float(component.min()),
        "max": float(component.max()),
        "offset": 32768,
        "tau": args.tau,
    })
    _write_run_record(Path(str(args.out) + ".run.json"), cfg, "hpf", {})
    _log("hpf.done", out=str(args.out))
    return 0


def _cmd_segment(args) -> int:
    cfg = _load_cfg(args)
    manifest = dataio.load_manifest(args.manifest)
    backend_name = args.backend or cfg.backends["segment"]
    backend = _build_segmenter(backend_name, manifest)
    out_root = Path(args.out_root)
    rows = []
    failures = 0
    for entry in manifest.entries:
        if entry.role != "generation" or not entry.masks or args.part not in entry.masks:
            continue
        try:
            img = dataio.load_image(manifest.resolve(entry.image))
            gt = dataio.load_mask(manifest.resolve(entry.masks[args.part]))
            prompts = segpipe.sample_prompts(
                gt, args.prompts, rng.derive_seed(cfg.seed, entry.image, args.part)
            )
            pred = segpipe.segment_part(
                backend, img, segpipe.PartSpec(args.part, tuple(prompts)), cfg.seed
            )
            ref = f"pred/{Path(entry.image).stem}_{args.part}.png"
            dataio.save_mask(out_root / ref, pred)
            scores = segpipe.evaluate_segmentation(pred, gt)
            rows.append({"image": entry.image, "mask": ref, **scores.as_dict()})
        except SbdeError as exc:
            failures += 1
            rows.append({"image": entry.image, "error": str(exc)})
    _dump_json(out_root / "segment_report.json", {"part": args.part, "results": rows})
    _write_run_record(out_root / "run.json", cfg, "segment",
                      {"segment": backend.descriptor()})
    _log("segment.done", items=len(rows), failures=failures)
    return 1 if failures else 0


def _cmd_edit(args) -> int:
    cfg = _load_cfg(args)
    manifest = dataio.load_manifest(args.manifest)
    inpainter = _build_inpainter(args.backend or cfg.backends["inpaint"])
    segmenter = None
    if args.segmenter and args.segmenter != "none":
        segmenter = _build_segmenter(args.segmenter, manifest)
    result = editpipe.batch_edit(
        manifest, args.attr, inpainter,
        cfg.mod, segmenter=segmenter, seed=cfg.seed,
        out_root=args.out_root, parallel=cfg.parallel,
    )
    out_root = Path(args.out_root)
    records_path = out_root / "edits.jsonl"
    records_path.parent.mkdir(parents=True, exist_ok=True)
    with records_path.open("w") as fh:
        for rec in result.records:
            fh.write(json.dumps(rec.to_record()) + "\n")
    _dump_json(out_root / "edit_report.json", {
        "attribute": args.attr,
        "edited": len(result.records),
        "failures": [{"image": im, "reason": why} for im, why in result.failures],
    })
    _write_run_record(out_root / "run.json", cfg, "edit", {
        "inpaint": inpainter.descriptor(),
        **({"segment": segmenter.descriptor()} if segmenter else {}),
    })
    _log("edit.done", edited=len(result.records), failures=len(result.failures))
    return 1 if result.failures else 0


def _cmd_era(args) -> int:
    cfg = _load_cfg(args)
    manifest = dataio.load_manifest(args.manifest)
    seg_backend = _build_segmenter(args.backend_seg or cfg.backends["segment"], manifest)
    inpaint_backend = _build_inpainter(args.backend_inpaint or cfg.backends["inpaint"])
    era_cfg = era.EraConfig(
        mod=cfg.mod,
        policy=args.policy or cfg.policy,
        seed=cfg.seed,
        min_side=args.min_side,
        edit_all_instances=not args.one_per_image,
        control_copy=args.control == "copy",
        parallel=cfg.parallel,
    )
    out_root = Path(args.out_root)
    augmented, report = era.era_augment(manifest, seg_backend, inpaint_backend, era_cfg, out_root)
    dataio.save_manifest(out_root / "manifest_aug.jsonl", augmented)
    _dump_json(out_root / "report.json", report.to_dict())
    _write_run_record(out_root / "run.json", cfg, "era", {
        "segment": seg_backend.descriptor(),
        "inpaint": inpaint_backend.descriptor(),
    })
    _log("era.done", added_images=report.added["images"], skipped=len(report.skipped))
    return 1 if report.skipped else 0


def _canonical_stem(name: str) -> str:
    # edited artifacts carry a deterministic "__<attr>_edited" style suffix;
    # strip it so originals pair with their derived outputs
    return name.split("__", 1)[0]


def _pair_files(dir_a: Path, dir_b: Path) -> list[tuple[Path, Path]]:
    names_a = sorted(p.name for p in dir_a.iterdir() if p.suffix.lower() == ".png")
    names_b = sorted(p.name for p in dir_b.iterdir() if p.suffix.lower() == ".png")
    by_stem_b = {}
    for name in names_b:
        by_stem_b.setdefault(_canonical_stem(Path(name).stem), []).append(name)
    pairs = []
    for name in names_a:
        if name in names_b:
            pairs.append((dir_a / name, dir_b / name))
            continue
        candidates = by_stem_b.get(_canonical_stem(Path(name).stem), [])
        if len(candidates) == 1:  # unambiguous suffix match only
            pairs.append((dir_a / name, dir_b / candidates[0]))
    return pairs


def _emit_report(doc: dict, out: str | None) -> None:
    if out:
        _dump_json(Path(out), doc)
    else:
        print(json.dumps(_sanitize(doc), indent=2, sort_keys=True))


def _cmd_eval_seg(args) -> int:
    pairs = _pair_files(Path(args.pred), Path(args.gt))
    if not pairs:
        raise ConfigError("no matching mask filenames between --pred and --gt")
    rows = []
    for pred_path, gt_path in pairs:
        scores = metrics.seg_metrics(dataio.load_mask(pred_path), dataio.load_mask(gt_path))
        rows.append({"mask": pred_path.name, **scores.as_dict()})
    mean = {
        key: float(np.mean([r[key] for r in rows])) for key in ("miou", "dice", "pa")
    }
    _emit_report({"results": rows, "mean": mean}, args.out)
    return 0


def _cmd_eval_edit(args) -> int:
    pairs = _pair_files(Path(args.orig), Path(args.edited))
    if not pairs:
        raise ConfigError("no matching image filenames between --orig and --edited")
    rows = []
    for a_path, b_path in pairs:
        a = dataio.load_image(a_path)
        b = dataio.load_image(b_path)
        rows.append({
            "image": a_path.name,
            "psnr": metrics.psnr(a, b),
            "ssim": metrics.ssim(a, b),
            "lpips": None,  # reserved: neural perceptual distance via remote backends
        })
    finite = [r["psnr"] for r in rows if not math.isinf(r["psnr"])]
    mean = {
        "psnr": float(np.mean(finite)) if finite else math.inf,
        "ssim": float(np.mean([r["ssim"] for r in rows])),
    }
    _emit_report({"results": rows, "mean": mean}, args.out)
    return 0


def _cmd_aea(args) -> int:
    cfg = _load_cfg(args)
    backend = _build_classifier(args.backend or cfg.backends["classify"])
    images = sorted(Path(args.dir).glob("*.png"))
    if not images:
        raise ConfigError(f"no PNG images under {args.dir}")
    preds = []
    for path in images:
        label, _scores = metrics.classify(backend, dataio.load_image(path))
        preds.append(label)
    value = metrics.compute_aea(preds, args.target)
    _emit_report({
        "target": args.target,
        "aea": value,
        "n_images": len(preds),
        "predictions": dict(zip((p.name for p in images), preds)),
    }, args.out)
    return 0


def _cmd_hps(args) -> int:
    ballots = []
    for line in Path(args.ballots).read_text().splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        ballots.append(metrics.HpsBallot(
            str(doc["expert"]), str(doc["image"]),
            {str(k): int(v) for k, v in doc["scores"].items()},
        ))
    if not ballots:
        raise ConfigError("ballot file is empty")
    configs = [args.config_id] if args.config_id else sorted(ballots[0].scores)
    scores = {cid: metrics.compute_hps(ballots, cid) for cid in configs}
    _emit_report({
        "scores": scores,
        "n_experts": len({b.expert for b in ballots}),
        "n_images": len({b.image for b in ballots}),
    }, args.out)
    return 0


def _cmd_split(args) -> int:
    cfg = _load_cfg(args)
    manifest = dataio.load_manifest(args.manifest)
    train, test = dataio.split_manifest(manifest, args.train_frac, cfg.seed)
    dataio.save_manifest(args.out_train, train)
    dataio.save_manifest(args.out_test, test)
    _write_run_record(Path(str(args.out_train) + ".run.json"), cfg, "split", {})
    _log("split.done", train=len(train), test=len(test))
    return 0


def _cmd_check_backend(args) -> int:
    report = conformance.run_protocol_suite(args.url, seed=args.seed or 0)
    _emit_report({"url": args.url, "checks": report.checks, "failures": report.failures}, args.out)
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbde")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config path (or set SBDE_CONFIG)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--parallel", type=int, default=None)

    p = sub.add_parser("mod", help="optimize a mask: opening then dilation")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--se-open", default="2x2")
    p.add_argument("--se-dilate", default="3x3")
    p.add_argument("--passes", type=int, default=1)
    common(p)
    p.set_defaults(func=_cmd_mod)

    p = sub.add_parser("hpf", help="high-frequency component of an image")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=0.25)
    p.add_argument("--tiles", default="8x8")
    p.add_argument("--clip", default="4.0")
    p.add_argument("--bins", type=int, default=256)
    p.add_argument("--no-clahe", action="store_true")
    common(p)
    p.set_defaults(func=_cmd_hpf)

    p = sub.add_parser("segment", help="segment one part across a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--part", required=True, choices=list(segpipe.PARTS))
    p.add_argument("--backend", default=None)
    p.add_argument("--prompts", type=int, default=segpipe.DEFAULT_PROMPTS)
    p.add_argument("--out-root", required=True)
    common(p)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("edit", help="remove an attribute across a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--attr", required=True, choices=["pin", "nut"])
    p.add_argument("--backend", default=None, help="harmonic or http(s)://...")
    p.add_argument("--segmenter", default="none",
                   help="none (use mask files), oracle, threshold, or http(s)://...")
    p.add_argument("--out-root", required=True)
    common(p)
    p.set_defaults(func=_cmd_edit)

    p = sub.add_parser("era", help="augment a detection manifest with edited defects")
    p.add_argument("--manifest", required=True)
    p.add_argument("--policy", default=None, help="all_pin|all_nut|round_robin|ratio:<p>")
    p.add_argument("--backend-seg", default=None)
    p.add_argument("--backend-inpaint", default=None)
    p.add_argument("--control", choices=["copy", "none"], default="none")
    p.add_argument("--min-side", type=int, default=era.MIN_EDITABLE_SIDE)
    p.add_argument("--one-per-image", action="store_true")
    p.add_argument("--out-root", required=True)
    common(p)
    p.set_defaults(func=_cmd_era)

    p = sub.add_parser("eval-seg", help="mask overlap metrics for paired folders")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval_seg)

    p = sub.add_parser("eval-edit", help="image quality metrics for paired folders")
    p.add_argument("--orig", required=True)
    p.add_argument("--edited", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval_edit)

    p = sub.add_parser("aea", help="attribute editing accuracy over a folder")
    p.add_argument("--dir", required=True)
    p.add_argument("--target", required=True, choices=["pin_losing", "nut_losing"])
    p.add_argument("--backend", default=None)
    p.add_argument("--out", default=None)
    common(p)
    p.set_defaults(func=_cmd_aea)

    p = sub.add_parser("hps", help="mean expert rank score per configuration")
    p.add_argument("--ballots", required=True)
    p.add_argument("--config-id", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_hps)

    p = sub.add_parser("split", help="seeded train/test split of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--train-frac", type=float, required=True)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    common(p)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("check-backend", help="run the protocol conformance suite")
    p.add_argument("--url", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_check_backend)

    return parser


def run_subcommand(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        _log("error.config", message=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        _log("error.missing-file", message=str(exc))
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 2
    except SbdeError as exc:
        _log("error.data", message=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return run_subcommand(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
