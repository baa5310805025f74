"""Candidate construction and constrained placement onto canvases.

A candidate is one source object plus its context-extended crop region.
The extension length shrinks linearly with tight-box area: small objects
get the full budget of surrounding context, the largest object gets none.
Placement proposes uniform random top-left positions for the (possibly
downscaled) extended patch and accepts the first position whose IoU with
every current occupant's extended box stays below the overlap threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .annotations import SourceImage
from .boxes import BBox


@dataclass
class PlacementConfig:
    """Knobs for candidate construction and position search.

    tau:
        Overlap threshold on extended boxes. A proposal is accepted only
        if IoU with every occupant is strictly below tau.
    max_attempts:
        Positions sampled per candidate before giving up.
    extension_px:
        Context budget in pixels; the largest object gets 0, the smallest
        gets the full budget.
    area_min / area_max:
        Dataset-wide tight-area range used to normalize the extension.
    """

    tau: float = 0.6
    max_attempts: int = 40
    extension_px: float = 20.0
    area_min: float = 0.0
    area_max: float = 0.0


@dataclass(frozen=True)
class ObjectCandidate:
    """A source object prepared for placement.

    tight is the annotated box; extended is the crop region around it,
    snapped outward to whole pixels and clipped to the source image.
    """

    annotation_id: int
    image_id: int
    category_id: int
    tight: BBox
    extended: BBox


@dataclass(frozen=True)
class Placement:
    """A candidate committed to a canvas position.

    candidate keeps the original source-space geometry (the compositor
    crops from it); scale is the patch downscale factor (<= 1);
    extended / tight are canvas-space boxes. extended has integer
    coordinates and equals the pasted patch footprint exactly.
    """

    candidate: ObjectCandidate
    scale: float
    x: int
    y: int
    extended: BBox
    tight: BBox


def sa_dce_extension(area: float, area_min: float, area_max: float,
                     budget: float) -> float:
    """Scale-aware extension length for a tight-box area.

    Linear in area: area_min maps to the full budget, area_max to 0.
    A collapsed range (all objects the same size) maps to budget / 2.
    """
    if budget < 0:
        raise ValueError(f"extension budget must be >= 0, got {budget}")
    if area_max <= area_min:
        return budget / 2.0
    t = (area - area_min) / (area_max - area_min)
    t = min(max(t, 0.0), 1.0)
    return (1.0 - t) * budget


def extend_box(tight: BBox, extension: float, width: float, height: float) -> BBox:
    """Grow a tight box by `extension` on each side, clipped to the image."""
    x1 = max(tight.x - extension, 0.0)
    y1 = max(tight.y - extension, 0.0)
    x2 = min(tight.x2 + extension, float(width))
    y2 = min(tight.y2 + extension, float(height))
    return BBox(x1, y1, x2 - x1, y2 - y1)


def snap_outward(box: BBox, width: int, height: int) -> BBox:
    """Round a box outward to whole pixels, clipped to the image. The
    result still contains the input box."""
    x1 = max(int(np.floor(box.x)), 0)
    y1 = max(int(np.floor(box.y)), 0)
    x2 = min(int(np.ceil(box.x2)), width)
    y2 = min(int(np.ceil(box.y2)), height)
    return BBox(float(x1), float(y1), float(x2 - x1), float(y2 - y1))


def build_candidates(image: SourceImage, config: PlacementConfig) -> list[ObjectCandidate]:
    """All placeable objects of one source image. Crowd regions are skipped."""
    out = []
    for obj in image.objects:
        if obj.iscrowd:
            continue
        ext_len = sa_dce_extension(obj.bbox.area, config.area_min,
                                   config.area_max, config.extension_px)
        extended = snap_outward(
            extend_box(obj.bbox, ext_len, image.width, image.height),
            image.width, image.height)
        out.append(ObjectCandidate(
            annotation_id=obj.id, image_id=obj.image_id,
            category_id=obj.category_id, tight=obj.bbox, extended=extended))
    return out


def scaled_patch_dims(extended: BBox, scale: float) -> tuple[int, int]:
    """Pixel dimensions of the extended patch after scaling. Shared by
    placement and the compositor so both agree exactly."""
    return (max(1, int(round(extended.w * scale))),
            max(1, int(round(extended.h * scale))))


def fit_scale(extended: BBox, canvas_w: int, canvas_h: int) -> float:
    """Downscale factor so the extended patch fits the canvas with a
    one-pixel margin per side. Never upscales."""
    return min(1.0, (canvas_w - 2) / extended.w, (canvas_h - 2) / extended.h)


def resize_to_fit(candidate: ObjectCandidate,
                  canvas_w: int, canvas_h: int) -> tuple[ObjectCandidate, float]:
    """Candidate with geometry scaled to fit the canvas, plus the factor."""
    scale = fit_scale(candidate.extended, canvas_w, canvas_h)
    if scale >= 1.0:
        return candidate, 1.0
    scaled = ObjectCandidate(
        annotation_id=candidate.annotation_id,
        image_id=candidate.image_id,
        category_id=candidate.category_id,
        tight=candidate.tight.scaled(scale),
        extended=candidate.extended.scaled(scale))
    return scaled, scale


def _occupant_array(occupants: Sequence[Placement]) -> np.ndarray:
    boxes = np.empty((len(occupants), 4), dtype=np.float64)
    for i, occ in enumerate(occupants):
        boxes[i] = (occ.extended.x, occ.extended.y, occ.extended.x2, occ.extended.y2)
    return boxes


def _max_iou(boxes: np.ndarray, x1: float, y1: float, x2: float, y2: float) -> float:
    iw = np.minimum(boxes[:, 2], x2) - np.maximum(boxes[:, 0], x1)
    ih = np.minimum(boxes[:, 3], y2) - np.maximum(boxes[:, 1], y1)
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_occ = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    area_new = (x2 - x1) * (y2 - y1)
    return float(np.max(inter / (area_occ + area_new - inter)))


def try_place(candidate: ObjectCandidate, occupants: Sequence[Placement],
              canvas_w: int, canvas_h: int, config: PlacementConfig,
              rng: np.random.Generator) -> tuple[Placement | None, int]:
    """Sample up to max_attempts positions; return the first admissible
    placement and the number of attempts consumed, or (None, max_attempts).

    A position is admissible when IoU with every occupant's extended box
    is strictly below tau.
    """
    _, scale = resize_to_fit(candidate, canvas_w, canvas_h)
    patch_w, patch_h = scaled_patch_dims(candidate.extended, scale)
    boxes = _occupant_array(occupants) if occupants else None

    # Patch-space geometry of the tight box, used once a position lands.
    fx = patch_w / (candidate.extended.w * scale)
    fy = patch_h / (candidate.extended.h * scale)
    off_x = (candidate.tight.x - candidate.extended.x) * scale * fx
    off_y = (candidate.tight.y - candidate.extended.y) * scale * fy
    tight_w = candidate.tight.w * scale * fx
    tight_h = candidate.tight.h * scale * fy

    for attempt in range(1, config.max_attempts + 1):
        x = int(rng.integers(0, canvas_w - patch_w + 1))
        y = int(rng.integers(0, canvas_h - patch_h + 1))
        if boxes is not None:
            worst = _max_iou(boxes, x, y, x + patch_w, y + patch_h)
            if worst >= config.tau:
                continue
        return Placement(
            candidate=candidate, scale=scale, x=x, y=y,
            extended=BBox(float(x), float(y), float(patch_w), float(patch_h)),
            tight=BBox(x + off_x, y + off_y, tight_w, tight_h),
        ), attempt
    return None, config.max_attempts
