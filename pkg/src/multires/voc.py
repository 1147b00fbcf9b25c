"""PASCAL VOC annotation parsing and the JSON Lines dataset manifest."""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from multires.detections import BoundingBox
from multires.errors import InvalidInputError, NotFoundError, ParseError, SchemaError
from multires.vocab import is_voc_class

VOC2007_TEST_SIZE = 4952


@dataclass(frozen=True)
class GroundTruthObject:
    class_name: str
    bbox: BoundingBox
    difficult: bool = False

    def __post_init__(self):
        if not is_voc_class(self.class_name):
            raise SchemaError(f"unknown class {self.class_name!r}")


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    width: int
    height: int
    objects: tuple[GroundTruthObject, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.width < 1 or self.height < 1:
            raise SchemaError(f"{self.image_id}: image size must be >= 1, got {self.width}x{self.height}")
        for obj in self.objects:
            b = obj.bbox
            if b.xmin < 1 or b.ymin < 1 or b.xmax > self.width or b.ymax > self.height:
                raise SchemaError(
                    f"{self.image_id}: box {b.as_tuple()} outside image "
                    f"[1, {self.width}] x [1, {self.height}]"
                )


@dataclass
class DatasetManifest:
    records: list[ImageRecord] = field(default_factory=list)
    split_name: str = "test"

    def __post_init__(self):
        ids = [r.image_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("duplicate image ids in manifest")
        self.records = sorted(self.records, key=lambda r: r.image_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self) -> dict[str, ImageRecord]:
        return {r.image_id: r for r in self.records}


def _child(elem: ET.Element, tag: str, where: str) -> ET.Element:
    node = elem.find(tag)
    if node is None:
        raise SchemaError(f"missing required element <{tag}> in <{where}>")
    return node


def _text(elem: ET.Element, tag: str, where: str) -> str:
    node = _child(elem, tag, where)
    if node.text is None or not node.text.strip():
        raise SchemaError(f"empty required element <{tag}> in <{where}>")
    return node.text.strip()


def _int(elem: ET.Element, tag: str, where: str) -> int:
    raw = _text(elem, tag, where)
    try:
        return int(float(raw))
    except (ValueError, OverflowError):
        raise SchemaError(f"<{tag}> in <{where}> is not a number: {raw!r}") from None


def parse_voc_annotation(xml_text: str) -> ImageRecord:
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise ParseError(f"malformed XML at column {col}: {exc}", line=line) from None
    if root.tag != "annotation":
        raise SchemaError(f"root element must be <annotation>, got <{root.tag}>")

    filename = _text(root, "filename", "annotation")
    image_id = filename.rsplit(".", 1)[0] if "." in filename else filename
    size = _child(root, "size", "annotation")
    width = _int(size, "width", "size")
    height = _int(size, "height", "size")

    objects = []
    for obj in root.findall("object"):
        name = _text(obj, "name", "object")
        if not is_voc_class(name):
            raise SchemaError(f"unknown class {name!r} in <object>")
        difficult_node = obj.find("difficult")
        difficult = False
        if difficult_node is not None and difficult_node.text and difficult_node.text.strip():
            difficult = difficult_node.text.strip() not in ("0", "false", "False")
        box = _child(obj, "bndbox", "object")
        xmin, ymin, xmax, ymax = (_int(box, t, "bndbox") for t in ("xmin", "ymin", "xmax", "ymax"))
        if xmax < xmin or ymax < ymin:
            raise SchemaError(f"bndbox corners out of order: ({xmin}, {ymin}, {xmax}, {ymax})")
        objects.append(GroundTruthObject(name, BoundingBox(xmin, ymin, xmax, ymax), difficult))
    return ImageRecord(image_id, width, height, tuple(objects))


def load_manifest(annotation_dir, ids: Sequence[str], split_name: str = "test") -> DatasetManifest:
    """Parse ``<annotation_dir>/<id>.xml`` for every id."""
    ids = list(ids)
    if len(set(ids)) != len(ids):
        raise InvalidInputError("duplicate image ids requested")
    root = Path(annotation_dir)
    records = []
    for image_id in ids:
        path = root / f"{image_id}.xml"
        if not path.is_file():
            raise NotFoundError(f"no annotation for image id {image_id!r} ({path})")
        try:
            records.append(parse_voc_annotation(path.read_text(encoding="utf-8")))
        except (ParseError, SchemaError) as exc:
            raise type(exc)(f"{path.name}: {exc}") from None
    return DatasetManifest(records, split_name)


def read_id_list(path) -> list[str]:
    """Read a VOC ``ImageSets/Main/<split>.txt`` style id list."""
    return [line.split()[0] for line in Path(path).read_text().splitlines() if line.strip()]


# Manifest JSON Lines: one ImageRecord per line.


def record_to_json(rec: ImageRecord) -> dict:
    return {
        "image_id": rec.image_id,
        "width": rec.width,
        "height": rec.height,
        "objects": [
            {"class": o.class_name, "bbox": list(o.bbox.as_tuple()), "difficult": o.difficult}
            for o in rec.objects
        ],
    }


def record_from_json(obj) -> ImageRecord:
    if not isinstance(obj, dict):
        raise SchemaError("record must be a JSON object")
    for key in ("image_id", "width", "height", "objects"):
        if key not in obj:
            raise SchemaError(f"missing key {key!r}")
    objects = []
    for o in obj["objects"]:
        if not isinstance(o, dict) or "class" not in o or "bbox" not in o:
            raise SchemaError("object entries need 'class' and 'bbox'")
        bbox = o["bbox"]
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise SchemaError("bbox must be an array of 4 numbers")
        objects.append(GroundTruthObject(o["class"], BoundingBox(*bbox), bool(o.get("difficult", False))))
    return ImageRecord(str(obj["image_id"]), int(obj["width"]), int(obj["height"]), tuple(objects))


def dumps_manifest(manifest: DatasetManifest) -> str:
    return "".join(json.dumps(record_to_json(r)) + "\n" for r in manifest.records)


def loads_manifest(text: str, split_name: str = "test") -> DatasetManifest:
    records = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
        try:
            records.append(record_from_json(obj))
        except (SchemaError, TypeError, ValueError) as exc:
            raise SchemaError(f"line {lineno}: {exc}") from None
    return DatasetManifest(records, split_name)


def write_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(dumps_manifest(manifest), encoding="utf-8", newline="\n")


def read_manifest(path, split_name: str = "test") -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise NotFoundError(f"manifest not found: {path}")
    return loads_manifest(path.read_text(encoding="utf-8"), split_name)


def positives_per_class(manifest: DatasetManifest) -> dict[str, int]:
    counts: dict[str, int] = {}
    for rec in manifest.records:
        for obj in rec.objects:
            if not obj.difficult:
                counts[obj.class_name] = counts.get(obj.class_name, 0) + 1
    return counts


def iter_objects(manifest: DatasetManifest) -> Iterable[tuple[ImageRecord, int, GroundTruthObject]]:
    for rec in manifest.records:
        for i, obj in enumerate(rec.objects):
            yield rec, i, obj
