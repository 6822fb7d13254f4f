"""End-to-end CLI runs at miniature scale: outputs, schemas, exact replay."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from gencut.cli import RESULT_FIELDS, load_png16, main, save_png16
from gencut.generator import load_weights


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _mask_wall_ms(path) -> str:
    """CSV bytes with the volatile wall_ms column blanked for comparison."""
    rows = _read_csv(path)
    for row in rows:
        row["wall_ms"] = ""
    return json.dumps(rows, sort_keys=True)


def test_png16_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.uniform(-1.0, 1.0, size=(1, 32, 32))
    path = tmp_path / "img.png"
    save_png16(path, img)
    back = load_png16(path)
    assert back.shape == img.shape
    assert np.max(np.abs(back - img)) <= 2.0 / 65535.0
    # a second write/read of the quantized image is exact
    save_png16(tmp_path / "img2.png", back)
    np.testing.assert_array_equal(load_png16(tmp_path / "img2.png"), back)


def test_train_command(tmp_path):
    out = tmp_path / "run"
    code = main(
        [
            "train",
            "--out", str(out),
            "--n-images", "100",
            "--epochs", "2",
            "--batch-size", "32",
            "--seed", "0",
        ]
    )
    assert code == 0
    net = load_weights(out / "weights.gsgn", recipe="vae-mini")
    assert net.depth == 4
    assert (out / "train_log.csv").exists()
    echo = json.loads((out / "config_echo.json").read_text())
    assert echo["command"] == "train" and echo["params"]["epochs"] == 2


def test_recover_generated_identity_high_psnr(tmp_path, quick_weights):
    out = tmp_path / "rec"
    code = main(
        [
            "recover",
            "--weights", str(quick_weights),
            "--out", str(out),
            "--images", "generated",
            "--count", "2",
            "--operator", "identity",
            "--cut-index", "0",
            "--optimizer", "lbfgs",
            "--steps", "100",
            "--step-size", "1.0",
            "--init", "censored_normal",
            "--n-images", "40",
        ]
    )
    assert code == 0
    rows = _read_csv(out / "results.csv")
    assert [r for r in rows if float(r["psnr_db"]) < 40.0] == []
    assert sorted(rows[0].keys()) == sorted(RESULT_FIELDS)
    assert (out / "recon_000.png").exists() and (out / "target_001.png").exists()


def test_recover_replay_is_byte_identical(tmp_path, quick_weights):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    base = [
        "recover",
        "--weights", str(quick_weights),
        "--images", "faces-test",
        "--count", "2",
        "--operator", "gaussian",
        "--m-over-n", "0.2",
        "--cut-index", "1",
        "--steps", "6",
        "--n-images", "60",
        "--seed", "3",
    ]
    assert main(base + ["--out", str(out1)]) == 0
    assert main(
        ["recover", "--weights", str(quick_weights), "--config", str(out1 / "config_echo.json"), "--out", str(out2)]
    ) == 0
    # PNGs byte-for-byte; CSV identical once the timing column is masked
    for png in sorted(out1.glob("*.png")):
        assert (out2 / png.name).read_bytes() == png.read_bytes()
    assert _mask_wall_ms(out1 / "results.csv") == _mask_wall_ms(out2 / "results.csv")
    assert (out1 / "config_echo.json").read_bytes() == (out2 / "config_echo.json").read_bytes()


def test_sweep_row_bookkeeping(tmp_path, quick_weights):
    out = tmp_path / "sweep"
    code = main(
        [
            "sweep",
            "--weights", str(quick_weights),
            "--out", str(out),
            "--images", "faces-test",
            "--count", "2",
            "--ratios", "0.1,0.3",
            "--methods", "cut,uncut,lasso_dct",
            "--cut-steps", "5",
            "--uncut-steps", "5",
            "--n-images", "60",
        ]
    )
    assert code == 0
    summary = _read_csv(out / "sweep.csv")
    assert len(summary) == 2 * 3  # ratios x methods
    per_image = _read_csv(out / "results.csv")
    assert len(per_image) == 2 * 3 * 2
    methods = {r["method"] for r in summary}
    assert methods == {"cut", "uncut", "lasso_dct"}


def test_sweep_includes_iagan(tmp_path, quick_weights):
    out = tmp_path / "sweep2"
    code = main(
        [
            "sweep",
            "--weights", str(quick_weights),
            "--out", str(out),
            "--count", "1",
            "--ratios", "0.2",
            "--methods", "iagan",
            "--iagan-stage1-steps", "5",
            "--iagan-stage2-steps", "3",
            "--n-images", "60",
        ]
    )
    assert code == 0
    assert len(_read_csv(out / "sweep.csv")) == 1


def test_cutsearch_outputs_table(tmp_path, quick_weights):
    out = tmp_path / "cs"
    code = main(
        [
            "cutsearch",
            "--weights", str(quick_weights),
            "--out", str(out),
            "--count", "2",
            "--candidates", "1,2",
            "--steps", "4",
            "--n-images", "60",
        ]
    )
    assert code == 0
    rows = _read_csv(out / "cutsearch.csv")
    assert [r["c"] for r in rows] == ["1", "2"]
    assert sum(int(r["selected"]) for r in rows) == 1


def test_study_repr_outputs(tmp_path, quick_weights):
    out = tmp_path / "study"
    code = main(
        [
            "study",
            "--weights", str(quick_weights),
            "--out", str(out),
            "--study", "repr",
            "--count", "2",
            "--steps", "5",
            "--n-images", "60",
        ]
    )
    assert code == 0
    assert (out / "study_representation_error.csv").exists()
    sidecar = json.loads((out / "study_representation_error.json").read_text())
    assert "aggregates" in sidecar and "config" in sidecar


def test_missing_weights_actionable_error(tmp_path, capsys):
    code = main(
        ["recover", "--weights", str(tmp_path / "nope.gsgn"), "--out", str(tmp_path / "o"), "--count", "1"]
    )
    assert code == 1
    assert "error" in capsys.readouterr().err.lower()


def test_bad_image_count_errors(tmp_path, quick_weights, capsys):
    code = main(
        [
            "recover",
            "--weights", str(quick_weights),
            "--out", str(tmp_path / "o"),
            "--count", "500",
            "--n-images", "40",
        ]
    )
    assert code == 1
    assert "available" in capsys.readouterr().err
