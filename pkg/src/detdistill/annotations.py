"""Interchange model: COCO-style annotation JSON in, distilled dataset out.

Two families of types live here. Source types mirror the input corpus
(images on disk plus one annotations file). Distilled types describe the
synthesized output of the engine and round-trip through the same JSON
layout with a few extra fields (per-object score, per-canvas phi and
diversity), so a distilled dataset is immediately consumable by anything
that reads the source layout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boxes import BBox, clamp_to_bounds
from .errors import DataError

# Boxes are serialized with two decimals; parse(emit(s)) must agree with s
# to within half of the last kept digit.
BOX_DECIMALS = 2


@dataclass(frozen=True)
class Category:
    id: int
    name: str
    supercategory: str = ""


@dataclass(frozen=True)
class ObjectAnnotation:
    """One annotated object in a source image. bbox is the tight box."""

    id: int
    image_id: int
    category_id: int
    bbox: BBox
    iscrowd: int = 0


@dataclass
class SourceImage:
    id: int
    file_name: str
    width: int
    height: int
    objects: list[ObjectAnnotation] = field(default_factory=list)


@dataclass(frozen=True)
class ParseReport:
    """What parse_dataset dropped or flagged while reading."""

    dropped_degenerate: int = 0
    crowd_annotations: int = 0


@dataclass
class SourceDataset:
    images: list[SourceImage]
    categories: list[Category]
    images_root: Path | None = None
    report: ParseReport = field(default_factory=ParseReport)

    def __post_init__(self):
        self._images_by_id = {im.id: im for im in self.images}
        self._categories_by_id = {c.id: c for c in self.categories}

    def image(self, image_id: int) -> SourceImage:
        return self._images_by_id[image_id]

    def category(self, category_id: int) -> Category:
        return self._categories_by_id[category_id]

    @property
    def num_objects(self) -> int:
        return sum(len(im.objects) for im in self.images)

    def iter_objects(self):
        for im in self.images:
            yield from im.objects

    def tight_area_range(self) -> tuple[float, float]:
        """(min, max) tight-box area over non-crowd annotations.

        Crowd regions never enter candidate pools, so they must not
        stretch the normalizer either.
        """
        areas = [o.bbox.area for o in self.iter_objects() if not o.iscrowd]
        if not areas:
            raise DataError("dataset has no non-crowd annotations")
        return min(areas), max(areas)

    def image_path(self, image_id: int) -> Path:
        if self.images_root is None:
            raise DataError("dataset was loaded without an images root")
        return self.images_root / self.image(image_id).file_name


@dataclass(frozen=True)
class DistilledObject:
    """One object pasted onto a canvas, with its screening outcome."""

    source_annotation_id: int
    category_id: int
    bbox: BBox  # tight box in canvas coordinates, post scaling
    score: float


@dataclass
class DistilledImage:
    id: int
    file_name: str
    width: int
    height: int
    objects: list[DistilledObject] = field(default_factory=list)
    phi: float = 0.0
    diversity: int = 0
    pixels: np.ndarray | None = None

    @property
    def objective(self) -> float:
        return self.phi + self.diversity


@dataclass
class DistilledDataset:
    images: list[DistilledImage]
    categories: list[Category]

    @property
    def num_objects(self) -> int:
        return sum(len(im.objects) for im in self.images)

    def category_object_counts(self) -> dict[int, int]:
        counts = {c.id: 0 for c in self.categories}
        for im in self.images:
            for obj in im.objects:
                counts[obj.category_id] = counts.get(obj.category_id, 0) + 1
        return counts


def _require(cond: bool, message: str):
    if not cond:
        raise DataError(message)


def _as_number(value, message: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DataError(message)
    return float(value)


def parse_dataset(annotations_path: str | Path,
                  images_root: str | Path | None = None) -> SourceDataset:
    """Read a COCO-style annotations file into a SourceDataset.

    Boxes are clipped to image bounds; boxes degenerate after clipping
    (a side <= 1 px) are dropped and counted in the parse report. Unknown
    keys are ignored so emitted files (which carry scores) parse too.
    """
    annotations_path = Path(annotations_path)
    try:
        raw = json.loads(annotations_path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read {annotations_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed JSON in {annotations_path}: {exc}") from exc

    _require(isinstance(raw, dict), "top-level JSON value must be an object")
    for key in ("images", "annotations", "categories"):
        _require(isinstance(raw.get(key), list), f"missing or non-list '{key}' section")

    categories = []
    seen_cat = set()
    for entry in raw["categories"]:
        _require(isinstance(entry, dict), "category entries must be objects")
        cid = entry.get("id")
        _require(isinstance(cid, int), "category id must be an integer")
        _require(cid not in seen_cat, f"duplicate category id {cid}")
        seen_cat.add(cid)
        categories.append(Category(id=cid, name=str(entry.get("name", "")),
                                   supercategory=str(entry.get("supercategory", ""))))

    images: list[SourceImage] = []
    by_id: dict[int, SourceImage] = {}
    for entry in raw["images"]:
        _require(isinstance(entry, dict), "image entries must be objects")
        iid = entry.get("id")
        _require(isinstance(iid, int), "image id must be an integer")
        _require(iid not in by_id, f"duplicate image id {iid}")
        width, height = entry.get("width"), entry.get("height")
        _require(isinstance(width, int) and width > 0,
                 f"image {iid}: width must be a positive integer")
        _require(isinstance(height, int) and height > 0,
                 f"image {iid}: height must be a positive integer")
        _require(isinstance(entry.get("file_name"), str) and entry["file_name"],
                 f"image {iid}: missing file_name")
        image = SourceImage(id=iid, file_name=entry["file_name"],
                            width=width, height=height)
        images.append(image)
        by_id[iid] = image

    dropped = 0
    crowd = 0
    seen_ann = set()
    for entry in raw["annotations"]:
        _require(isinstance(entry, dict), "annotation entries must be objects")
        aid = entry.get("id")
        _require(isinstance(aid, int), "annotation id must be an integer")
        _require(aid not in seen_ann, f"duplicate annotation id {aid}")
        seen_ann.add(aid)
        image_id = entry.get("image_id")
        _require(image_id in by_id, f"annotation {aid}: unknown image_id {image_id}")
        category_id = entry.get("category_id")
        _require(category_id in seen_cat,
                 f"annotation {aid}: unknown category_id {category_id}")
        bbox = entry.get("bbox")
        _require(isinstance(bbox, list) and len(bbox) == 4,
                 f"annotation {aid}: bbox must be [x, y, w, h]")
        x, y, w, h = (_as_number(v, f"annotation {aid}: non-numeric bbox") for v in bbox)
        iscrowd = entry.get("iscrowd", 0)
        _require(iscrowd in (0, 1), f"annotation {aid}: iscrowd must be 0 or 1")
        image = by_id[image_id]
        clipped = clamp_to_bounds(x, y, w, h, image.width, image.height)
        if clipped is None:
            dropped += 1
            continue
        if iscrowd:
            crowd += 1
        image.objects.append(ObjectAnnotation(
            id=aid, image_id=image_id, category_id=category_id,
            bbox=clipped, iscrowd=iscrowd))

    return SourceDataset(
        images=images,
        categories=categories,
        images_root=Path(images_root) if images_root is not None else None,
        report=ParseReport(dropped_degenerate=dropped, crowd_annotations=crowd),
    )


def _round_box(box: BBox) -> list[float]:
    return [round(box.x, BOX_DECIMALS), round(box.y, BOX_DECIMALS),
            round(box.w, BOX_DECIMALS), round(box.h, BOX_DECIMALS)]


def dataset_to_json(distilled: DistilledDataset) -> dict:
    """The emitted JSON document, as a plain dict."""
    images = []
    annotations = []
    next_ann_id = 1
    for im in distilled.images:
        images.append({
            "id": im.id,
            "file_name": im.file_name,
            "width": im.width,
            "height": im.height,
            "phi": round(im.phi, 6),
            "diversity": im.diversity,
        })
        for obj in im.objects:
            rounded = _round_box(obj.bbox)
            annotations.append({
                "id": next_ann_id,
                "image_id": im.id,
                "category_id": obj.category_id,
                "bbox": rounded,
                "area": round(rounded[2] * rounded[3], 4),
                "iscrowd": 0,
                "score": round(obj.score, 6),
                "source_annotation_id": obj.source_annotation_id,
            })
            next_ann_id += 1
    categories = [{"id": c.id, "name": c.name, "supercategory": c.supercategory}
                  for c in distilled.categories]
    return {"images": images, "annotations": annotations, "categories": categories}


@dataclass(frozen=True)
class EmitResult:
    annotations_path: Path
    images_written: int


def emit_dataset(distilled: DistilledDataset, out_dir: str | Path) -> EmitResult:
    """Write annotations.json plus images/<file_name> for every canvas
    that carries pixels. Output is deterministic: sorted keys, fixed
    rounding, PNG encoding."""
    from .compositor import save_png  # local import: compositor pulls in PIL

    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for im in distilled.images:
        if im.pixels is not None:
            save_png(im.pixels, images_dir / im.file_name)
            written += 1
    path = out_dir / "annotations.json"
    path.write_text(json.dumps(dataset_to_json(distilled), sort_keys=True, indent=2)
                    + "\n")
    return EmitResult(annotations_path=path, images_written=written)


def parse_distilled(annotations_path: str | Path) -> DistilledDataset:
    """Read an emitted annotations file back into distilled types.

    Inverse of emit_dataset up to box rounding; used by cmd_stats and by
    the round-trip checks.
    """
    annotations_path = Path(annotations_path)
    try:
        raw = json.loads(annotations_path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read {annotations_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed JSON in {annotations_path}: {exc}") from exc
    _require(isinstance(raw, dict), "top-level JSON value must be an object")
    for key in ("images", "annotations", "categories"):
        _require(isinstance(raw.get(key), list), f"missing or non-list '{key}' section")

    categories = [Category(id=c["id"], name=str(c.get("name", "")),
                           supercategory=str(c.get("supercategory", "")))
                  for c in raw["categories"]]
    images: dict[int, DistilledImage] = {}
    order: list[int] = []
    for entry in raw["images"]:
        im = DistilledImage(id=entry["id"], file_name=entry["file_name"],
                            width=entry["width"], height=entry["height"],
                            phi=float(entry.get("phi", 0.0)),
                            diversity=int(entry.get("diversity", 0)))
        _require(im.id not in images, f"duplicate image id {im.id}")
        images[im.id] = im
        order.append(im.id)
    for entry in raw["annotations"]:
        image_id = entry.get("image_id")
        _require(image_id in images, f"annotation references unknown image {image_id}")
        bbox = entry.get("bbox")
        _require(isinstance(bbox, list) and len(bbox) == 4,
                 "annotation bbox must be [x, y, w, h]")
        images[image_id].objects.append(DistilledObject(
            source_annotation_id=int(entry.get("source_annotation_id", entry["id"])),
            category_id=int(entry["category_id"]),
            bbox=BBox(*(float(v) for v in bbox)),
            score=float(entry.get("score", 1.0)),
        ))
    return DistilledDataset(images=[images[i] for i in order], categories=categories)
