"""The toolkit CLI, pointed at this server over HTTP, must complete a
3-image edit batch with exit code 0. The fixture dataset is written directly
in the documented file formats — the only coupling is the wire protocol and
the manifest schema."""

import json
import subprocess

import numpy as np
from PIL import Image


def write_fixture_dataset(root, n=3):
    """Bolt-like crops (dark nut blob on bright plate) + nut masks + manifest."""
    (root / "images").mkdir(parents=True)
    (root / "masks").mkdir(parents=True)
    records = []
    for k in range(n):
        img = np.full((72, 72, 3), 190 + k, dtype=np.uint8)
        img[14:30, 20:52] = 55          # pin-ish bar, untouched by the nut edit
        img[44:62, 26:46] = 50 + k      # the nut blob
        mask = np.zeros((72, 72), dtype=np.uint8)
        mask[44:62, 26:46] = 255
        Image.fromarray(img).save(root / "images" / f"bolt{k}.png")
        Image.fromarray(mask).save(root / "masks" / f"bolt{k}_nut.png")
        records.append({
            "image": f"images/bolt{k}.png",
            "split": "train",
            "role": "generation",
            "provenance": "original",
            "instances": [],
            "masks": {"nut": f"masks/bolt{k}_nut.png"},
        })
    manifest = root / "manifest.jsonl"
    manifest.write_text("".join(json.dumps(r) + "\n" for r in records))
    return manifest


def test_cli_batch_edit_through_server(live_server, tmp_path):
    manifest = write_fixture_dataset(tmp_path / "data")
    out_root = tmp_path / "out"
    proc = subprocess.run(
        [
            "sbde", "edit",
            "--manifest", str(manifest),
            "--attr", "nut",
            "--backend", live_server,
            "--out-root", str(out_root),
        ],
        capture_output=True, text=True, timeout=300,
    )
    assert proc.returncode == 0, proc.stderr

    report = json.loads((out_root / "edit_report.json").read_text())
    assert report["edited"] == 3
    assert report["failures"] == []

    run_record = json.loads((out_root / "run.json").read_text())
    assert run_record["backends"]["inpaint"]["name"].startswith("http")

    for k in range(3):
        original = np.asarray(Image.open(tmp_path / "data" / "images" / f"bolt{k}.png"))
        edited = np.asarray(Image.open(out_root / "edited" / f"bolt{k}__nut_edited.png"))
        mask = np.asarray(Image.open(out_root / "masks" / f"bolt{k}__nut_mask_mod.png")) > 0
        # nut region repainted plate-bright, everything else byte-identical
        assert edited[50, 36].min() > 150
        assert np.array_equal(edited[~mask], original[~mask])
        assert np.array_equal(edited[10:30, 20:52], original[10:30, 20:52])
