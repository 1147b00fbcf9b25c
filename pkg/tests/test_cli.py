import csv
import json

import numpy as np
import pytest

from multires.cli import main
from multires.codecs import read_image, write_image
from multires.detections import BoundingBox, Detection, DetectionSet, read_detections, write_detections
from multires.evaluation import EvalReport
from multires.spectral import PlanarImage, ResolutionLevel
from multires.synthdet import SynthModelSpec, model_seed, simulate
from multires.voc import DatasetManifest, GroundTruthObject, ImageRecord, read_manifest, write_manifest


@pytest.fixture
def image_dir(tmp_path):
    d = tmp_path / "imgs"
    d.mkdir()
    rng = np.random.default_rng(0)
    write_image(PlanarImage(rng.integers(0, 256, (3, 12, 16), dtype=np.uint8)), d / "a.png")
    return d


@pytest.fixture
def manifest_path(tmp_path):
    m = DatasetManifest([
        ImageRecord("a", 100, 100, (GroundTruthObject("dog", BoundingBox(10, 10, 50, 50)),)),
        ImageRecord("b", 100, 100, (GroundTruthObject("cat", BoundingBox(5, 5, 40, 60)),)),
    ])
    p = tmp_path / "gt.jsonl"
    write_manifest(m, p)
    return p


def _dets(path, items, model="m"):
    write_detections(DetectionSet([Detection(i, c, BoundingBox(*b), s, model) for i, c, b, s in items]), path)
    return path


def test_blur_writes_one_file_per_level(image_dir, tmp_path):
    out = tmp_path / "out"
    assert main(["blur", "--in", str(image_dir), "--out", str(out), "--levels", "5,20,full"]) == 0
    files = sorted(p.relative_to(out).as_posix() for p in out.rglob("*.png"))
    assert files == ["Full/a.png", "R20/a.png", "R5/a.png"]
    assert read_image(out / "Full" / "a.png") == read_image(image_dir / "a.png")
    first = {p: p.read_bytes() for p in out.rglob("*.png")}
    assert main(["blur", "--in", str(image_dir), "--out", str(out), "--levels", "5,20,full"]) == 0
    assert {p: p.read_bytes() for p in out.rglob("*.png")} == first


def test_blur_gain_plot(image_dir, tmp_path):
    plot = tmp_path / "gain.svg"
    assert main(["blur", "--in", str(image_dir), "--out", str(tmp_path / "o"), "--levels", "5,10",
                 "--gain-plot", str(plot)]) == 0
    assert plot.read_text().lstrip().startswith("<?xml")


def test_blur_empty_dir_is_ok(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["blur", "--in", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == 0


def test_blur_bad_file_continues_and_fails(image_dir, tmp_path):
    (image_dir / "b.ppm").write_bytes(b"garbage")
    out = tmp_path / "o"
    assert main(["blur", "--in", str(image_dir), "--out", str(out), "--levels", "5"]) == 2
    assert (out / "R5" / "a.png").exists()


def test_blur_bad_level_is_usage_error(image_dir, tmp_path):
    assert main(["blur", "--in", str(image_dir), "--out", str(tmp_path / "o"), "--levels", "5,5"]) == 1
    assert main(["blur", "--in", str(image_dir), "--out", str(tmp_path / "o"), "--levels", "R99"]) == 1


def test_simulate_matches_library(manifest_path, tmp_path):
    out = tmp_path / "d.jsonl"
    code = main(["simulate", "--manifest", str(manifest_path), "--train-level", "5",
                 "--eval-level", "R6", "--seed", "3", "--out", str(out), "--fp-rate", "0"])
    assert code == 0
    lv = ResolutionLevel(5)
    spec = SynthModelSpec(lv, seed=model_seed(3, lv), fp_rate=0.0)
    expected = simulate(spec, read_manifest(manifest_path), ResolutionLevel(6))
    assert read_detections(out).canonical() == expected.canonical()


def test_simulate_missing_manifest(tmp_path):
    code = main(["simulate", "--manifest", str(tmp_path / "nope.jsonl"), "--train-level", "5",
                 "--eval-level", "5", "--out", str(tmp_path / "d.jsonl")])
    assert code == 2


def test_simulate_requires_levels(tmp_path):
    assert main(["simulate", "--out", str(tmp_path / "d.jsonl")]) == 1


def test_fuse_single_input_is_nms(tmp_path):
    src = _dets(tmp_path / "a.jsonl", [
        ("a", "dog", (1, 1, 10, 10), 0.9),
        ("a", "dog", (1, 1, 10, 9), 0.8),
        ("a", "dog", (30, 30, 40, 40), 0.7),
    ])
    out = tmp_path / "f.jsonl"
    assert main(["fuse", str(src), "--out", str(out)]) == 0
    assert [d.score for d in read_detections(out).detections] == [0.9, 0.7]


def test_fuse_duplicate_model_tags(tmp_path):
    a = _dets(tmp_path / "a.jsonl", [("a", "dog", (1, 1, 10, 10), 0.9)])
    b = _dets(tmp_path / "b.jsonl", [("a", "dog", (1, 1, 10, 10), 0.8)])
    assert main(["fuse", str(a), str(b), "--out", str(tmp_path / "f.jsonl")]) == 2


def test_fuse_oracle_mode(tmp_path, manifest_path):
    a = _dets(tmp_path / "a.jsonl", [("a", "dog", (10, 10, 50, 50), 0.9)], model="p")
    b = _dets(tmp_path / "b.jsonl", [("a", "dog", (10, 10, 50, 48), 0.95)], model="q")
    out = tmp_path / "f.jsonl"
    assert main(["fuse", str(a), str(b), "--oracle-manifest", str(manifest_path), "--out", str(out)]) == 0
    kept = read_detections(out).detections
    assert any(d.bbox == BoundingBox(10, 10, 50, 50) for d in kept)


def test_eval_perfect_and_empty(tmp_path, manifest_path, capsys):
    perfect = _dets(tmp_path / "p.jsonl", [
        ("a", "dog", (10, 10, 50, 50), 1.0),
        ("b", "cat", (5, 5, 40, 60), 1.0),
    ])
    out = tmp_path / "r.csv"
    assert main(["eval", "--manifest", str(manifest_path), "--detections", str(perfect), "--out", str(out)]) == 0
    report = EvalReport.from_csv(out.read_text())
    row = report.rows[0]
    assert row.model_tag == "m" and row.level.label == "Full"
    assert row.mAP == pytest.approx(2 / 20)
    assert "mAP=0.1000" in capsys.readouterr().out

    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    assert main(["eval", "--manifest", str(manifest_path), "--detections", str(empty), "--out", str(out)]) == 0
    assert EvalReport.from_csv(out.read_text()).rows[0].mAP == 0.0


def test_eval_requires_manifest(tmp_path):
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    assert main(["eval", "--detections", str(empty), "--out", str(tmp_path / "r.csv")]) == 1


def test_eval_bad_jsonl_is_data_error(tmp_path, manifest_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    assert main(["eval", "--manifest", str(manifest_path), "--detections", str(bad),
                 "--out", str(tmp_path / "r.csv")]) == 2


def test_sweep_single_eval_level(tmp_path):
    out = tmp_path / "sw"
    code = main(["sweep", "--out", str(out), "--eval-levels", "full", "--scene-images", "20", "--seed", "1"])
    assert code == 0
    rows = list(csv.reader((out / "report.csv").open()))
    assert len(rows) == 1 + 6
    assert {r[0] for r in rows[1:]} == {"5/20", "10/20", "18/20", "20/20", "full", "multi"}
    assert (out / "report.svg").exists()


def test_sweep_png_plot(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--out", str(out), "--eval-levels", "5,full", "--train-levels", "5,full",
                 "--scene-images", "10", "--plot-format", "png"]) == 0
    assert (out / "report.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_sweep_with_manifest(tmp_path, manifest_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--out", str(out), "--manifest", str(manifest_path), "--eval-levels", "3"]) == 0
    assert len((out / "report.csv").read_text().splitlines()) == 7


def test_config_file_supplies_defaults(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# sweep settings\nout = {tmp_path / 'cfgout'}\neval-levels = 20\nscene_images = 5\n")
    assert main(["sweep", "--config", str(cfg)]) == 0
    assert len((tmp_path / "cfgout" / "report.csv").read_text().splitlines()) == 7
    # explicit flags win
    assert main(["sweep", "--config", str(cfg), "--eval-levels", "19,20"]) == 0
    assert len((tmp_path / "cfgout" / "report.csv").read_text().splitlines()) == 13


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense = 1\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("MULTIRES_SEED", "7")
    assert main(["scene", "--images", "3", "--out", str(tmp_path / "env.jsonl")]) == 0
    assert main(["scene", "--images", "3", "--seed", "7", "--out", str(tmp_path / "flag.jsonl")]) == 0
    assert (tmp_path / "env.jsonl").read_bytes() == (tmp_path / "flag.jsonl").read_bytes()
    monkeypatch.setenv("MULTIRES_SEED", "x")
    assert main(["scene", "--images", "3", "--out", str(tmp_path / "bad.jsonl")]) == 1


def test_manifest_command(tmp_path):
    ann = tmp_path / "Annotations"
    ann.mkdir()
    for i in ("000002", "000001"):
        (ann / f"{i}.xml").write_text(
            f"<annotation><filename>{i}.jpg</filename><size><width>50</width><height>40</height></size>"
            "<object><name>cat</name><bndbox><xmin>1</xmin><ymin>1</ymin><xmax>9</xmax><ymax>9</ymax>"
            "</bndbox></object></annotation>"
        )
    out = tmp_path / "m.jsonl"
    assert main(["manifest", "--annotations", str(ann), "--out", str(out)]) == 0
    ids = [json.loads(l)["image_id"] for l in out.read_text().splitlines()]
    assert ids == ["000001", "000002"]


def test_usage_errors():
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["sweep", "--fuse-iou", "1.5", "--out", "x"]) == 1
    assert main(["sweep"]) == 1  # --out missing
