"""Compression budget and source-image segmentation.

The distilled dataset holds a fixed number of canvases (ipd). Source
images are shuffled once, then split into ipd contiguous, near-equal
segments; canvas k draws its candidates (and background) from segment k
only, so every source image contributes to exactly one canvas.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class SegmentPlan:
    ipd: int
    seed: int
    segments: list[list[int]]


def compute_ipd(num_images: int, ratio: float) -> int:
    """Canvas count for a compression ratio, at least 1."""
    if num_images <= 0:
        raise ConfigError(f"dataset has no images (num_images={num_images})")
    if not (0.0 < ratio <= 1.0):
        raise ConfigError(f"ratio must be in (0, 1], got {ratio}")
    return max(1, round(ratio * num_images))


def build_plan(image_ids: Sequence[int], ipd: int, seed: int) -> SegmentPlan:
    """Shuffle image ids and split them into ipd near-equal segments.

    Sizes differ by at most one; the larger segments come first.
    """
    n = len(image_ids)
    if ipd < 1:
        raise ConfigError(f"ipd must be >= 1, got {ipd}")
    if ipd > n:
        raise ConfigError(f"ipd {ipd} exceeds the number of source images {n}")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    shuffled = [image_ids[i] for i in rng.permutation(n)]
    base, extra = divmod(n, ipd)
    segments = []
    start = 0
    for k in range(ipd):
        size = base + (1 if k < extra else 0)
        segments.append(shuffled[start:start + size])
        start += size
    return SegmentPlan(ipd=ipd, seed=seed, segments=segments)


def write_plan(plan: SegmentPlan, path: str | Path):
    """Dump the segment assignment as one tab-separated line per canvas."""
    path = Path(path)
    lines = [f"# ipd={plan.ipd} seed={plan.seed}"]
    for index, segment in enumerate(plan.segments, start=1):
        lines.append(f"{index}\t" + " ".join(str(i) for i in segment))
    path.write_text("\n".join(lines) + "\n")
