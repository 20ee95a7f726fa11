"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Run with ``pytest tests/test_acceptance.py -s`` to see the
lines; every tolerance is pinned here, not configured elsewhere.

Only builtin backends (oracle / threshold / harmonic / heuristic) are used;
no external model server is required.
"""

import hashlib
import json
import time
from contextlib import contextmanager

import numpy as np

from oracles import dilate_oracle, erode_oracle, mod_oracle, open_oracle
from sbde import dataio, fixtures
from sbde.editpipe import HarmonicInpainter, edit_attribute, harmonic_inpaint
from sbde.era import EraConfig, RecoverySpec, era_augment, format_augmentation_table, recover
from sbde.freqprep import build_hpf_mask, fft2_centered, ifft2_centered
from sbde.metrics import (
    HpsBallot,
    LossConfig,
    classify,
    compute_aea,
    compute_hps,
    composite_loss,
    psnr,
    seg_metrics,
    ssim,
)
from sbde.morphmod import ModConfig, StructElement, dilate, erode, mod_optimize, opening
from sbde.rng import PortableRng
from sbde.segpipe import OracleSegmenter, PartSpec, fuse_parts, sample_prompts, segment_part
from sbde.types import BinaryMask, RasterImage


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {name}: FAIL")
        raise
    print(f"[ACCEPTANCE] {name}: PASS")


SE_2 = StructElement.rect(2, 2)
SE_3 = StructElement.rect(3, 3)


def _shuffled_ranks(prng, m):
    ranks = list(range(1, m + 1))
    prng.shuffle(ranks)
    return ranks


def test_morphology_oracle_equivalence():
    with criterion("morphology oracle equivalence (65,536 4x4 + 1,000 random 16x16)"):
        started = time.monotonic()

        # exhaustive 4x4 enumeration, default 2x2 element
        cfg = ModConfig()
        for code in range(65536):
            bits = np.array(
                [(code >> k) & 1 for k in range(16)], dtype=np.uint8
            ).reshape(4, 4)
            mask = BinaryMask(bits)
            assert np.array_equal(erode(mask, SE_2).bits, erode_oracle(bits, SE_2))
            assert np.array_equal(dilate(mask, SE_2).bits, dilate_oracle(bits, SE_2))
            assert np.array_equal(opening(mask, SE_2).bits, open_oracle(bits, SE_2))
            assert np.array_equal(
                mod_optimize(mask, cfg).bits, mod_oracle(bits, cfg.open_se, cfg.dilate_se)
            )

        # 1,000 random 16x16 masks, 3x3 element
        rng = np.random.default_rng(271828)
        cfg3 = ModConfig(open_se=SE_3, dilate_se=SE_3)
        for _ in range(1000):
            bits = (rng.random((16, 16)) < rng.uniform(0.1, 0.9)).astype(np.uint8)
            mask = BinaryMask(bits)
            assert np.array_equal(erode(mask, SE_3).bits, erode_oracle(bits, SE_3))
            assert np.array_equal(dilate(mask, SE_3).bits, dilate_oracle(bits, SE_3))
            assert np.array_equal(opening(mask, SE_3).bits, open_oracle(bits, SE_3))
            assert np.array_equal(
                mod_optimize(mask, cfg3).bits, mod_oracle(bits, SE_3, SE_3)
            )

        elapsed = time.monotonic() - started
        assert elapsed < 60.0, f"morphology equivalence took {elapsed:.1f}s"


def test_hpf_mask_correctness():
    with criterion("frequency mask: tau sweep monotone, tau=1 all-zero, tau<0 all-one"):
        shapes = [(4, 4), (16, 16), (8, 16), (5, 7), (32, 9)]
        taus = [-0.1] + [round(0.1 * k, 1) for k in range(11)]
        for h, w in shapes:
            zero_counts = [build_hpf_mask(h, w, t).zero_count for t in taus]
            assert zero_counts == sorted(zero_counts), (h, w, zero_counts)
            assert build_hpf_mask(h, w, 1.0).zero_count == h * w
            assert build_hpf_mask(h, w, -0.1).zero_count == 0
            assert build_hpf_mask(h, w, -1e-9).zero_count == 0


def test_fft_pair_roundtrip_and_parseval():
    with criterion("FFT pair: roundtrip < 1e-6, Parseval within 1e-6 relative (100 images)"):
        rng = np.random.default_rng(314159)
        for _ in range(100):
            h = int(rng.integers(1, 65))
            w = int(rng.integers(1, 65))
            img = rng.integers(0, 256, (h, w), dtype=np.uint8)
            grid = fft2_centered(RasterImage(img))
            back = ifft2_centered(grid)
            assert np.abs(back - img).max() < 1e-6
            spatial = float((img.astype(np.float64) ** 2).sum())
            spectral = float((np.abs(grid.values) ** 2).sum())
            if spatial > 0:
                assert abs(spectral - spatial) / spatial <= 1e-6
            else:
                assert spectral <= 1e-6


def test_harmonic_inpainter_ramp_and_maximum_principle():
    with criterion("harmonic inpainter: 1-D ramp within 1 gray level, max principle x100"):
        n = 30
        a, b = 10, 240
        img = np.zeros((1, n + 2), dtype=np.uint8)
        img[0, 0], img[0, -1] = a, b
        mask = np.zeros((1, n + 2), dtype=np.uint8)
        mask[0, 1:-1] = 1
        out, _ = harmonic_inpaint(
            RasterImage(img), BinaryMask(mask), tol=1e-4, max_iter=20000
        )
        expected = a + (b - a) * np.arange(n + 2) / (n + 1)
        assert np.abs(out.pixels[0].astype(np.float64) - expected).max() <= 1.0

        from scipy import ndimage

        cross = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
        rng = np.random.default_rng(161803)
        for _ in range(100):
            h = int(rng.integers(8, 24))
            w = int(rng.integers(8, 24))
            img = rng.integers(0, 256, (h, w), dtype=np.uint8)
            bits = (rng.random((h, w)) < rng.uniform(0.1, 0.5)).astype(np.uint8)
            result, _ = harmonic_inpaint(RasterImage(img), BinaryMask(bits), max_iter=60)
            labels, count = ndimage.label(bits, structure=cross)
            for lab in range(1, count + 1):
                comp = labels == lab
                ring = ndimage.binary_dilation(comp, structure=cross) & ~bits.astype(bool)
                if not ring.any():
                    continue
                lo, hi = int(img[ring].min()), int(img[ring].max())
                vals = result.pixels[comp]
                assert int(vals.min()) >= lo and int(vals.max()) <= hi


def _hash_tree(root):
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest.update(str(path.relative_to(root)).encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


def test_era_compositing_and_determinism(tmp_path):
    with criterion("recovery compositing byte-exact + 5-scene run reconciles and reruns identically"):
        rng = np.random.default_rng(424242)
        for _ in range(50):
            h = int(rng.integers(8, 40))
            w = int(rng.integers(8, 40))
            scene = RasterImage(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))
            x0 = int(rng.integers(0, w))
            y0 = int(rng.integers(0, h))
            bw = int(rng.integers(1, w - x0 + 1))
            bh = int(rng.integers(1, h - y0 + 1))
            crop = RasterImage(rng.integers(0, 256, (bh, bw, 3), dtype=np.uint8))
            out = recover(scene, RecoverySpec("s", (x0, y0, x0 + bw, y0 + bh), crop, "pin_losing"))
            assert np.array_equal(out.pixels[y0:y0 + bh, x0:x0 + bw], crop.pixels)
            outside = np.ones((h, w), dtype=bool)
            outside[y0:y0 + bh, x0:x0 + bw] = False
            assert np.array_equal(out.pixels[outside], scene.pixels[outside])

        data_root = tmp_path / "scenes"
        manifest_path = fixtures.write_scene_dataset(data_root, 5, seed0=900)
        manifest = dataio.load_manifest(manifest_path)
        backend = OracleSegmenter()
        for entry in manifest.entries:
            seed = int(entry.image.split("_")[1].split(".")[0])
            for _box, bolt in fixtures.make_inspection_scene(seed).bolts:
                backend.register_fixture(bolt)

        digests = []
        reports = []
        for run in ("run1", "run2"):
            out_root = tmp_path / run
            augmented, report = era_augment(
                manifest, backend, HarmonicInpainter(),
                EraConfig(policy="ratio:0.6", seed=77), out_root,
            )
            assert report.reconciles()
            assert report.added["images"] == 5
            assert report.added["all"] == sum(
                report.added[k] for k in ("normal", "pin_losing", "nut_losing")
            )
            dataio.save_manifest(out_root / "manifest_aug.jsonl", augmented)
            (out_root / "report.json").write_text(
                json.dumps(report.to_dict(), sort_keys=True)
            )
            digests.append(_hash_tree(out_root))
            reports.append(report.to_dict())
        assert digests[0] == digests[1]
        assert reports[0] == reports[1]


def test_metric_identities():
    with criterion("metric identities: dice/IoU, PSNR 28.1308, SSIM(x,x)=1, focal, HPS mean"):
        rng = np.random.default_rng(577215)
        for _ in range(500):
            a = (rng.random((8, 8)) < rng.uniform(0.05, 0.95)).astype(np.uint8)
            b = (rng.random((8, 8)) < rng.uniform(0.05, 0.95)).astype(np.uint8)
            if not (a | b).any():
                continue
            scores = seg_metrics(BinaryMask(a), BinaryMask(b))
            iou = scores.iou_foreground
            assert abs(scores.dice - 2 * iou / (1 + iou)) < 1e-12

        base = RasterImage(np.full((16, 16), 90, dtype=np.uint8))
        offset = RasterImage(np.full((16, 16), 100, dtype=np.uint8))
        assert abs(psnr(base, offset) - 28.1308) <= 1e-3

        textured = RasterImage(rng.integers(0, 256, (24, 24), dtype=np.uint8))
        assert ssim(textured, textured) == 1.0

        focal = composite_loss(
            np.array([[0.5]]), BinaryMask(np.array([[1]], dtype=np.uint8)),
            LossConfig(focal_gamma=2.0, focal_alpha_f=0.25),
        )["focal"]
        assert abs(focal - 0.0433217) <= 1e-6

        # power-of-two grid (4 experts x 4 images) keeps every per-config
        # score an exact binary float, so the identity holds with ==
        configs = [f"cfg{k}" for k in range(6)]
        prng = PortableRng(99)
        ballots = []
        for e in range(4):
            for i in range(4):
                ranks = list(range(1, len(configs) + 1))
                prng.shuffle(ranks)
                ballots.append(HpsBallot(f"e{e}", f"i{i}", dict(zip(configs, ranks))))
        mean_hps = sum(compute_hps(ballots, c) for c in configs) / len(configs)
        assert mean_hps == (len(configs) + 1) / 2

        # and in exact rational arithmetic for an arbitrary 4x5 grid
        from fractions import Fraction

        extra = [
            HpsBallot(f"e{e}", f"i{i}", dict(zip(configs, _shuffled_ranks(prng, 6))))
            for e in range(4)
            for i in range(5)
        ]
        total = sum(sum(b.scores.values()) for b in extra)
        assert Fraction(total, 20 * len(configs)) == Fraction(len(configs) + 1, 2)


def test_zero_defect_shot_pipeline():
    with criterion("zero-defect-shot: AEA 100% for pin and nut on 20 fixtures, edits confined to mask"):
        classifier = fixtures.default_classifier()
        cfg = ModConfig()
        inpainter = HarmonicInpainter()
        for attribute, target in (("pin", "pin_losing"), ("nut", "nut_losing")):
            predictions = []
            for k in range(20):
                fixture = fixtures.make_bolt_fixture(1000 + k)
                backend = OracleSegmenter()
                backend.register_fixture(fixture)
                parts = ("pin0", "pin1", "pin2") if attribute == "pin" else ("nut",)
                masks = []
                for part in parts:
                    prompts = sample_prompts(fixture.part_masks[part], 3, seed=k)
                    masks.append(segment_part(
                        backend, fixture.image, PartSpec(part, tuple(prompts)), seed=k
                    ))
                m_seg = fuse_parts(masks)
                edited, record = edit_attribute(
                    fixture.image, m_seg, cfg, inpainter, attribute=attribute
                )
                sel = record.mask_mod.bits.astype(bool)
                assert np.array_equal(edited.pixels[~sel], fixture.image.pixels[~sel])
                assert (edited.pixels[sel] != fixture.image.pixels[sel]).any()
                label, _scores = classify(classifier, edited)
                predictions.append(label)
            assert compute_aea(predictions, target) == 100.0


def _reference_detection_manifest():
    # layout anchor: 1433/337 scenes, instance counts per class as published
    counts = {
        "train": {"images": 1433, "normal": 3961, "pin_losing": 449, "nut_losing": 244},
        "test": {"images": 337, "normal": 1018, "pin_losing": 100, "nut_losing": 63},
    }
    entries = []
    for split, row in counts.items():
        labels = (
            ["normal"] * row["normal"]
            + ["pin_losing"] * row["pin_losing"]
            + ["nut_losing"] * row["nut_losing"]
        )
        per_image = -(-len(labels) // row["images"])  # ceil: spread over images
        idx = 0
        for k in range(row["images"]):
            chunk = labels[idx:idx + per_image]
            idx += len(chunk)
            name = f"{split}_{k}.png"
            entries.append(dataio.ManifestEntry(
                image=name, split=split, role="detection",
                instances=tuple(
                    dataio.InstanceAnnotation(name, (0, 0, 10 + j, 10 + j), lb)
                    for j, lb in enumerate(chunk)
                ),
            ))
    return dataio.DatasetManifest(tuple(entries), None), counts


def test_table_format_anchors(tmp_path):
    with criterion("report formats: per-class stats table and original/+copy/+edited columns"):
        manifest, counts = _reference_detection_manifest()
        train = dataio.manifest_stats(manifest, "train")
        assert train["normal"] == 3961
        assert train["pin_losing"] == 449
        assert train["nut_losing"] == 244
        assert train["all"] == 4654
        assert train["images"] == 1433
        test = dataio.manifest_stats(manifest, "test")
        assert test["all"] == 1181 and test["images"] == 337

        table = dataio.format_stats_table(manifest)
        lines = table.splitlines()
        assert lines[0].split() == ["Class", "Train", "Test", "Total"]
        by_row = {line.split()[0]: line for line in lines[1:]}
        assert "4654" in by_row["All"] and "1181" in by_row["All"] and "5835" in by_row["All"]
        assert "3961" in by_row["Normal"] and "4979" in by_row["Normal"]
        assert "1433" in by_row["Inspection"] and "1770" in by_row["Inspection"]

        # augmentation report: original / +copy / +edited columns
        data_root = tmp_path / "scenes"
        manifest_path = fixtures.write_scene_dataset(data_root, 2, seed0=950)
        scene_manifest = dataio.load_manifest(manifest_path)
        backend = OracleSegmenter()
        for entry in scene_manifest.entries:
            seed = int(entry.image.split("_")[1].split(".")[0])
            for _box, bolt in fixtures.make_inspection_scene(seed).bolts:
                backend.register_fixture(bolt)
        _, copy_report = era_augment(
            scene_manifest, backend, HarmonicInpainter(),
            EraConfig(control_copy=True), tmp_path / "copy",
        )
        _, edit_report = era_augment(
            scene_manifest, backend, HarmonicInpainter(),
            EraConfig(policy="round_robin", seed=1), tmp_path / "edit",
        )
        assert copy_report.reconciles() and edit_report.reconciles()
        table = format_augmentation_table(
            edit_report.original,
            ("Copy-aug", copy_report.added),
            ("SBDE-aug", edit_report.added),
        )
        head, *rows = table.splitlines()
        assert ["Original", "+Copy-aug", "+SBDE-aug"] == head.split()[1:]
        row_names = [r.split()[0] for r in rows]
        assert row_names == ["Inspection", "Normal", "Pin", "Nut", "All"]
        # identical image budget in both columns, same total instance delta
        assert copy_report.added["images"] == edit_report.added["images"]
        assert copy_report.added["all"] == edit_report.added["all"]
        # copies keep labels; edits trade normals for defects
        assert copy_report.added["pin_losing"] == 0
        assert edit_report.added["pin_losing"] + edit_report.added["nut_losing"] > 0
