import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multires.detections import (
    BoundingBox,
    Detection,
    DetectionSet,
    dumps_detections,
    fuse,
    fuse_oracle,
    iou,
    loads_detections,
    nms,
    read_detections,
    write_detections,
)
from multires.errors import CapViolationError, InvalidInputError, ParseError, SchemaError
from multires.voc import DatasetManifest, GroundTruthObject, ImageRecord
from multires.vocab import VOC_CLASSES

from oracles import greedy_nms_oracle, pixel_iou


def det(box, score, image="img", cls="dog", model="m"):
    return Detection(image, cls, BoundingBox(*box), score, model)


boxes = st.tuples(
    st.integers(1, 40), st.integers(1, 40), st.integers(0, 20), st.integers(0, 20)
).map(lambda t: (t[0], t[1], t[0] + t[2], t[1] + t[3]))


# IoU


def test_iou_identical():
    b = BoundingBox(3, 4, 20, 30)
    assert iou(b, b) == 1.0


def test_iou_disjoint():
    assert iou(BoundingBox(1, 1, 10, 10), BoundingBox(20, 20, 30, 30)) == 0.0


def test_iou_half_overlap():
    a, b = (1, 1, 10, 10), (6, 1, 15, 10)
    assert pixel_iou(a, b) == pytest.approx(1 / 3)
    assert iou(BoundingBox(*a), BoundingBox(*b)) == pytest.approx(1 / 3, abs=1e-12)


def test_iou_touching_edges_counts_shared_pixels():
    # inclusive corners: column 10 belongs to both boxes
    a, b = (1, 1, 10, 10), (10, 1, 19, 10)
    assert iou(BoundingBox(*a), BoundingBox(*b)) == pixel_iou(a, b) == 10 / 190


@settings(max_examples=200, deadline=None)
@given(boxes, boxes)
def test_iou_matches_pixel_oracle(a, b):
    assert iou(BoundingBox(*a), BoundingBox(*b)) == pixel_iou(a, b)


@settings(max_examples=200, deadline=None)
@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    ba, bb = BoundingBox(*a), BoundingBox(*b)
    assert iou(ba, bb) == iou(bb, ba)
    assert 0.0 <= iou(ba, bb) <= 1.0
    assert iou(ba, ba) == 1.0


def test_box_invariants():
    with pytest.raises(SchemaError):
        BoundingBox(10, 1, 5, 5)
    with pytest.raises(SchemaError):
        BoundingBox(1, 1, float("nan"), 5)
    assert BoundingBox(5, 5, 5, 5).area == 1


def test_detection_score_range():
    with pytest.raises(SchemaError):
        det((1, 1, 2, 2), 1.5)
    with pytest.raises(SchemaError):
        det((1, 1, 2, 2), -0.1)


# NMS


def test_nms_single():
    d = det((1, 1, 10, 10), 0.5)
    assert nms([d], 0.7) == [d]


def test_nms_identical_boxes():
    hi, lo = det((1, 1, 10, 10), 0.9), det((1, 1, 10, 10), 0.8)
    assert nms([lo, hi], 0.7) == [hi]


def test_nms_three_boxes():
    a_box, b_box, c_box = (1, 1, 10, 10), (1, 1, 10, 8), (9, 1, 18, 10)
    assert pixel_iou(a_box, b_box) == 0.8
    assert pixel_iou(a_box, c_box) < 0.7 and pixel_iou(b_box, c_box) < 0.7
    a, b, c = det(a_box, 0.9), det(b_box, 0.85), det(c_box, 0.5)
    assert nms([c, b, a], 0.7) == [a, c]


def test_nms_equal_iou_is_kept():
    # IoU exactly 0.7 is not suppressed
    a, b = (1, 1, 10, 10), (1, 1, 10, 7)
    assert pixel_iou(a, b) == 0.7
    assert len(nms([det(a, 0.9), det(b, 0.8)], 0.7)) == 2


def test_nms_rejects_mixed_groups():
    with pytest.raises(InvalidInputError):
        nms([det((1, 1, 2, 2), 0.5), det((1, 1, 2, 2), 0.5, cls="cat")], 0.5)
    with pytest.raises(InvalidInputError):
        nms([det((1, 1, 2, 2), 0.5), det((1, 1, 2, 2), 0.5, image="other")], 0.5)


@pytest.mark.parametrize("t", [0.0, 1.0, -0.2])
def test_nms_threshold_range(t):
    with pytest.raises(InvalidInputError):
        nms([det((1, 1, 2, 2), 0.5)], t)


def test_nms_tie_break_uses_model_tag():
    a = det((1, 1, 10, 10), 0.5, model="b")
    b = det((1, 1, 10, 10), 0.5, model="a")
    assert nms([a, b], 0.5) == [b]


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(boxes, st.sampled_from([0.1, 0.5, 0.5, 0.9, 1.0])), max_size=15),
       st.sampled_from([0.3, 0.5, 0.7]))
def test_nms_antichain_and_dominance(items, t):
    dets = [det(b, s, model=f"m{i % 3}") for i, (b, s) in enumerate(items)]
    kept = nms(dets, t)
    for i, x in enumerate(kept):
        for y in kept[i + 1 :]:
            assert iou(x.bbox, y.bbox) <= t
    kept_ids = {id(k) for k in kept}
    for d in dets:
        if id(d) not in kept_ids:
            assert any(iou(d.bbox, k.bbox) > t and k.score >= d.score for k in kept)


# Fusion


def test_fuse_single_model_nonredundant_passthrough():
    ds = DetectionSet([det((1, 1, 10, 10), 0.9), det((30, 30, 40, 40), 0.4)])
    assert fuse([ds]).detections == ds.detections


def test_fuse_two_models():
    x, x2, y = (1, 1, 10, 10), (1, 1, 10, 9), (30, 30, 35, 35)
    assert pixel_iou(x, x2) == 0.9
    m1 = DetectionSet([det(x, 0.6, model="M1")])
    m2 = DetectionSet([det(x2, 0.8, model="M2"), det(y, 0.3, model="M2")])
    fused = fuse([m1, m2])
    assert [(d.bbox.as_tuple(), d.score) for d in fused] == [(x2, 0.8), (y, 0.3)]


def test_fuse_keeps_other_classes():
    m1 = DetectionSet([det((1, 1, 10, 10), 0.6, model="M1", cls="cat")])
    m2 = DetectionSet([det((1, 1, 10, 10), 0.8, model="M2")])
    assert len(fuse([m1, m2])) == 2
    assert len(fuse([m1, m2], cross_class=True)) == 1


def test_fuse_rejects_duplicate_tags():
    a = DetectionSet([det((1, 1, 2, 2), 0.5, model="same")])
    b = DetectionSet([det((3, 3, 4, 4), 0.5, model="same")])
    with pytest.raises(InvalidInputError):
        fuse([a, b])


def test_fuse_five_full_models_pool_at_most_1500():
    rng = random.Random(0)
    sets = []
    for m in range(5):
        dets = []
        for _ in range(300):
            x, y = rng.randint(1, 400), rng.randint(1, 300)
            dets.append(det((x, y, x + rng.randint(0, 60), y + rng.randint(0, 60)),
                            rng.random(), model=f"model{m}", cls=rng.choice(VOC_CLASSES)))
        sets.append(DetectionSet(dets))
    assert sum(len(s) for s in sets) == 1500
    fused = fuse(sets)
    assert 1 <= len(fused) <= 1500


def _random_pool(rng, max_size=20):
    """Per-model sets on a couple of images/classes with coarse scores (ties)."""
    per_model = {}
    for _ in range(rng.randint(0, max_size)):
        x, y = rng.randint(1, 30), rng.randint(1, 30)
        box = (x, y, x + rng.randint(0, 12), y + rng.randint(0, 12))
        d = det(box, rng.choice([0.1, 0.3, 0.5, 0.5, 0.8, 1.0]),
                image=rng.choice(["i1", "i2"]), cls=rng.choice(["cat", "dog"]),
                model=rng.choice(["A", "B", "C"]))
        per_model.setdefault(d.model_tag, []).append(d)
    return [DetectionSet(v) for _, v in sorted(per_model.items())]


def fuse_oracle_reference(sets, t):
    """Greedy rule from the definition, grouping and ranking done by hand."""
    pool = [d for s in sets for d in s.detections]
    out = []
    for image in sorted({d.image_id for d in pool}):
        for cls in sorted({d.class_name for d in pool}):
            group = [d for d in pool if d.image_id == image and d.class_name == cls]
            items = [((-d.score, d.model_tag, d.image_id, d.bbox.as_tuple()), d.bbox.as_tuple(), d)
                     for d in group]
            kept = greedy_nms_oracle([(k, b) for k, b, _ in items], t, pixel_iou)
            lookup = {(k, b): d for k, b, d in items}
            out.extend(lookup[kb] for kb in kept)
    return out


def test_fuse_matches_bruteforce_oracle():
    rng = random.Random(1234)
    for _ in range(200):
        sets = _random_pool(rng)
        t = rng.choice([0.3, 0.5, 0.7])
        assert fuse(sets, t).detections == fuse_oracle_reference(sets, t)


def test_fuse_order_invariant():
    rng = random.Random(99)
    for _ in range(50):
        sets = _random_pool(rng)
        shuffled = list(reversed(sets))
        assert fuse(sets).detections == fuse(shuffled).detections


def test_fuse_oracle_mode_protects_best_gt_match():
    gt_box = BoundingBox(1, 1, 20, 20)
    gt = DatasetManifest([ImageRecord("img", 50, 50, (GroundTruthObject("dog", gt_box),))])
    # high-score box is off-target and would suppress the accurate one
    off = det((1, 1, 20, 16), 0.9, model="A")
    exact = det((1, 1, 20, 20), 0.4, model="B")
    assert iou(off.bbox, exact.bbox) > 0.7
    assert fuse([DetectionSet([off]), DetectionSet([exact])]).detections == [off]
    kept = fuse_oracle([DetectionSet([off]), DetectionSet([exact])], gt).detections
    assert kept == [exact]


# JSONL


def test_read_empty_file(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text("")
    assert len(read_detections(p)) == 0


def test_round_trip_1000(tmp_path):
    rng = random.Random(5)
    dets = []
    for i in range(1000):
        x, y = rng.uniform(1, 400), rng.uniform(1, 400)
        dets.append(Detection(f"im{i % 37}", rng.choice(VOC_CLASSES),
                              BoundingBox(x, y, x + rng.uniform(0, 90), y + rng.uniform(0, 90)),
                              rng.random(), rng.choice(["5/20", "full"])))
    ds = DetectionSet(dets)
    p = tmp_path / "d.jsonl"
    write_detections(ds, p)
    back = read_detections(p)
    assert back.detections == ds.detections
    assert back.canonical() == ds.canonical()
    raw = p.read_bytes()
    assert b"\r\n" not in raw and raw.endswith(b"\n")
    assert set(json.loads(raw.splitlines()[0])) == {"image_id", "class", "bbox", "score", "model"}


def test_cap_violation_on_read():
    text = dumps_detections(det((1, 1, 5, 5), 0.5, model="M") for _ in range(301))
    with pytest.raises(CapViolationError) as exc:
        loads_detections(text)
    assert (exc.value.image_id, exc.value.model_tag) == ("img", "M")
    assert len(loads_detections(dumps_detections(det((1, 1, 5, 5), 0.5) for _ in range(300)))) == 300


def test_malformed_line_number():
    good = dumps_detections([det((1, 1, 5, 5), 0.5)])
    with pytest.raises(ParseError) as exc:
        loads_detections(good + "{not json\n")
    assert exc.value.line == 2


def test_score_out_of_range_is_schema_error():
    line = json.dumps({"image_id": "a", "class": "dog", "bbox": [1, 1, 2, 2], "score": 1.2, "model": "m"})
    with pytest.raises(SchemaError):
        loads_detections(line + "\n")


def test_missing_key_is_schema_error():
    with pytest.raises(SchemaError, match="model"):
        loads_detections('{"image_id": "a", "class": "dog", "bbox": [1, 1, 2, 2], "score": 0.2}\n')
