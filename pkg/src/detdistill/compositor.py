"""Pixel work: decoding, resizing, cropping, pasting, rendering, caching.

Buffers are uint8 numpy arrays of shape (height, width, 3), RGB. The
bilinear resize is implemented here directly (half-pixel centers, float64
accumulation, round half to even) so output bytes are a deterministic
function of input bytes on every platform; PIL is used only for PNG/JPEG
encode and decode.
"""

from __future__ import annotations

import io
import threading
from collections import OrderedDict
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .boxes import BBox
from .errors import DataError
from .placement import Placement, scaled_patch_dims


def load_image(path: str | Path) -> np.ndarray:
    """Decode an image file to an RGB buffer."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError as exc:
        raise DataError(f"image file not found: {path}") from exc
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc


def encode_png(buffer: np.ndarray) -> bytes:
    out = io.BytesIO()
    Image.fromarray(buffer, mode="RGB").save(out, format="PNG")
    return out.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot decode PNG bytes: {exc}") from exc


def save_png(buffer: np.ndarray, path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_png(buffer))


def bilinear_resize(buffer: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Resize with bilinear sampling at half-pixel centers.

    Output pixel (i, j) samples the source at
    ((j + 0.5) * w_in / out_w - 0.5, (i + 0.5) * h_in / out_h - 0.5),
    clamped to the source grid. Identity when dimensions are unchanged.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"target dimensions must be >= 1, got {out_w}x{out_h}")
    h_in, w_in = buffer.shape[:2]
    if (out_w, out_h) == (w_in, h_in):
        return buffer.copy()

    xs = np.clip((np.arange(out_w) + 0.5) * (w_in / out_w) - 0.5, 0.0, w_in - 1.0)
    ys = np.clip((np.arange(out_h) + 0.5) * (h_in / out_h) - 0.5, 0.0, h_in - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w_in - 1)
    y1 = np.minimum(y0 + 1, h_in - 1)
    fx = xs - x0
    fy = ys - y0

    src = buffer.astype(np.float64)
    top = src[np.ix_(y0, x0)] * (1.0 - fx)[None, :, None] \
        + src[np.ix_(y0, x1)] * fx[None, :, None]
    bottom = src[np.ix_(y1, x0)] * (1.0 - fx)[None, :, None] \
        + src[np.ix_(y1, x1)] * fx[None, :, None]
    out = top * (1.0 - fy)[:, None, None] + bottom * fy[:, None, None]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def prepare_background(buffer: np.ndarray, canvas_w: int, canvas_h: int) -> np.ndarray:
    """A source image stretched to canvas dimensions."""
    return bilinear_resize(buffer, canvas_w, canvas_h)


def crop(buffer: np.ndarray, box: BBox) -> np.ndarray:
    """Cut an integer-coordinate region out of a buffer."""
    x1, y1, x2, y2 = int(box.x), int(box.y), int(box.x2), int(box.y2)
    h, w = buffer.shape[:2]
    if x1 < 0 or y1 < 0 or x2 > w or y2 > h or x2 <= x1 or y2 <= y1:
        raise ValueError(f"crop region {box} outside {w}x{h} buffer")
    return np.ascontiguousarray(buffer[y1:y2, x1:x2])


def extract_patch(source: np.ndarray, extended: BBox, scale: float) -> np.ndarray:
    """The extended region of a source image at placement scale. Patch
    dimensions follow scaled_patch_dims so they match the placed box."""
    region = crop(source, extended)
    patch_w, patch_h = scaled_patch_dims(extended, scale)
    if (patch_w, patch_h) == (region.shape[1], region.shape[0]):
        return region
    return bilinear_resize(region, patch_w, patch_h)


def paste(canvas: np.ndarray, patch: np.ndarray, x: int, y: int):
    """Overwrite the rectangle at (x, y) with the patch, in place."""
    h, w = canvas.shape[:2]
    ph, pw = patch.shape[:2]
    if x < 0 or y < 0 or x + pw > w or y + ph > h:
        raise ValueError(f"paste of {pw}x{ph} patch at ({x}, {y}) "
                         f"escapes {w}x{h} canvas")
    canvas[y:y + ph, x:x + pw] = patch


def render_canvas(canvas_w: int, canvas_h: int, background: np.ndarray,
                  placements: Sequence[Placement],
                  source_pixels: Callable[[int], np.ndarray]) -> np.ndarray:
    """Background stretched to canvas size, then every placement pasted
    in order (later placements overdraw earlier ones)."""
    canvas = prepare_background(background, canvas_w, canvas_h)
    for placement in placements:
        patch = extract_patch(source_pixels(placement.candidate.image_id),
                              placement.candidate.extended, placement.scale)
        paste(canvas, patch, placement.x, placement.y)
    return canvas


class ImageCache:
    """Thread-safe byte-bounded LRU of decoded images."""

    def __init__(self, max_bytes: int = 256 * 1024 * 1024):
        self._max_bytes = max_bytes
        self._lock = threading.Lock()
        self._entries: OrderedDict[object, np.ndarray] = OrderedDict()
        self._bytes = 0

    def get(self, key, loader: Callable[[], np.ndarray]) -> np.ndarray:
        with self._lock:
            if key in self._entries:
                self._entries.move_to_end(key)
                return self._entries[key]
        value = loader()
        with self._lock:
            if key not in self._entries:
                self._entries[key] = value
                self._bytes += value.nbytes
                while self._bytes > self._max_bytes and len(self._entries) > 1:
                    _, evicted = self._entries.popitem(last=False)
                    self._bytes -= evicted.nbytes
            return self._entries[key]

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)
