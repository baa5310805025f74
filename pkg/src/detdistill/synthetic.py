"""Deterministic synthetic corpus for tests and smoke runs.

Images are muted gray gradients (low channel spread) with saturated
solid-color rectangles for objects; each category owns one palette color.
Everything derives from the seed and image index, so two generations of
the same configuration are byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boxes import BBox
from .compositor import save_png

# name -> saturated RGB; channel spread is large so simple saturation
# thresholding separates objects from the muted backgrounds.
PALETTE: list[tuple[str, tuple[int, int, int]]] = [
    ("red", (220, 30, 30)),
    ("green", (30, 190, 60)),
    ("blue", (40, 70, 220)),
    ("yellow", (230, 210, 40)),
    ("magenta", (210, 40, 200)),
    ("cyan", (40, 200, 210)),
    ("orange", (235, 140, 30)),
    ("purple", (130, 40, 190)),
    ("lime", (150, 220, 40)),
    ("teal", (20, 140, 120)),
]


def draw_object(pixels: np.ndarray, box: BBox, color: tuple[int, int, int]):
    """Solid rectangle with a darker 1 px border, drawn in place."""
    x1, y1 = int(round(box.x)), int(round(box.y))
    x2, y2 = int(round(box.x2)), int(round(box.y2))
    pixels[y1:y2, x1:x2] = color
    border = tuple(int(c * 0.6) for c in color)
    pixels[y1, x1:x2] = border
    pixels[y2 - 1, x1:x2] = border
    pixels[y1:y2, x1] = border
    pixels[y1:y2, x2 - 1] = border


def _background(image_index: int, width: int, height: int) -> np.ndarray:
    """Muted per-image pattern: gradient plus coarse checker, channel
    spread kept small."""
    base = 95.0 + (image_index * 7) % 40
    xs = np.linspace(0.0, 20.0, width)
    field = base + np.tile(xs, (height, 1))
    checker = ((np.arange(height)[:, None] // 16 + np.arange(width)[None, :] // 16) % 2)
    field = field + checker * 5.0
    pixels = np.stack([field, field + 3.0, field - 3.0], axis=2)
    return np.clip(np.rint(pixels), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class SyntheticSpec:
    num_images: int = 500
    num_objects: int = 3000
    num_categories: int = 10
    width: int = 160
    height: int = 160
    min_side: int = 10
    max_side: int = 22
    seed: int = 7


def generate_corpus(root: str | Path, spec: SyntheticSpec = SyntheticSpec()) -> Path:
    """Write images/ and annotations.json under root; returns the
    annotations path."""
    if spec.num_categories > len(PALETTE):
        raise ValueError(f"at most {len(PALETTE)} categories supported")
    root = Path(root)
    images_dir = root / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))

    # Exact category balance: a shuffled cycle over all object slots.
    category_cycle = np.arange(spec.num_objects) % spec.num_categories
    category_cycle = category_cycle[rng.permutation(spec.num_objects)]

    base, extra = divmod(spec.num_objects, spec.num_images)
    images = []
    annotations = []
    annotation_id = 1
    slot = 0
    for index in range(spec.num_images):
        image_id = index + 1
        file_name = f"img_{image_id:06d}.png"
        pixels = _background(index, spec.width, spec.height)
        count = base + (1 if index < extra else 0)
        for _ in range(count):
            category = int(category_cycle[slot]) + 1
            slot += 1
            w = int(rng.integers(spec.min_side, spec.max_side + 1))
            h = int(rng.integers(spec.min_side, spec.max_side + 1))
            x = int(rng.integers(0, spec.width - w + 1))
            y = int(rng.integers(0, spec.height - h + 1))
            box = BBox(float(x), float(y), float(w), float(h))
            draw_object(pixels, box, PALETTE[category - 1][1])
            annotations.append({
                "id": annotation_id,
                "image_id": image_id,
                "category_id": category,
                "bbox": [box.x, box.y, box.w, box.h],
                "area": box.area,
                "iscrowd": 0,
            })
            annotation_id += 1
        save_png(pixels, images_dir / file_name)
        images.append({"id": image_id, "file_name": file_name,
                       "width": spec.width, "height": spec.height})

    document = {
        "images": images,
        "annotations": annotations,
        "categories": [
            {"id": k + 1, "name": PALETTE[k][0], "supercategory": "synthetic"}
            for k in range(spec.num_categories)],
    }
    out = root / "annotations.json"
    out.write_text(json.dumps(document, sort_keys=True, indent=2) + "\n")
    return out
