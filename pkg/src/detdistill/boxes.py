"""Axis-aligned bounding boxes and the geometry used everywhere else.

Boxes are stored in top-left corner form (x, y, w, h) in pixel units,
matching the interchange JSON. Center form is only a view for callers
that need it; nothing downstream stores centers.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BBox:
    """A box with strictly positive extent.

    x, y:
        Top-left corner in pixels.
    w, h:
        Width and height in pixels; must be > 0.
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"degenerate box: w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x + dx, self.y + dy, self.w, self.h)

    def scaled(self, factor: float) -> "BBox":
        """Scale about the origin (all four coordinates multiply)."""
        return BBox(self.x * factor, self.y * factor,
                    self.w * factor, self.h * factor)

    def contains_box(self, other: "BBox", slack: float = 1e-9) -> bool:
        return (other.x >= self.x - slack and other.y >= self.y - slack
                and other.x2 <= self.x2 + slack and other.y2 <= self.y2 + slack)


def intersection_area(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union. 0 for disjoint boxes, 1 for identical ones."""
    if a == b:
        return 1.0
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    # Corner subtraction can overshoot the true area by an ulp; cap the
    # intersection so identical boxes give exactly 1.
    inter = min(inter, a.area, b.area)
    return inter / (a.area + b.area - inter)


def to_center(box: BBox) -> tuple[float, float, float, float]:
    """Corner form -> (cx, cy, w, h)."""
    return (box.x + box.w / 2.0, box.y + box.h / 2.0, box.w, box.h)


def from_center(cx: float, cy: float, w: float, h: float) -> BBox:
    """(cx, cy, w, h) -> corner form."""
    return BBox(cx - w / 2.0, cy - h / 2.0, w, h)


def clamp_to_bounds(x: float, y: float, w: float, h: float,
                    width: float, height: float) -> BBox | None:
    """Clip a raw (possibly out-of-range) box to [0, width] x [0, height].

    Returns None when the clipped box is degenerate (a side <= 1 pixel),
    which callers treat as "drop this annotation".
    """
    x1 = min(max(x, 0.0), width)
    y1 = min(max(y, 0.0), height)
    x2 = min(max(x + w, 0.0), width)
    y2 = min(max(y + h, 0.0), height)
    if x2 - x1 <= 1.0 or y2 - y1 <= 1.0:
        return None
    return BBox(x1, y1, x2 - x1, y2 - y1)
