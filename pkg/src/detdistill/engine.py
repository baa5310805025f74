"""The synthesis loop: place objects, let the observer prune them, repeat.

Each canvas runs an add-then-remove cycle. The add stage walks the
segment's shuffled candidate pool with a monotone cursor (a rejected
candidate is spent, never retried) until the pool runs out or a streak of
rejections declares the canvas full. The remove stage renders the canvas,
asks the observer for one confidence per pasted object, and evicts
everything below the screening threshold. The cycle stops at t_max
iterations, on pool exhaustion, or when a full canvas sheds nothing.

Reported per canvas: information density (area-weighted mean confidence
over tight boxes) and diversity (count of distinct source objects). Their
sum is the objective; it is reported, never optimized against.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .annotations import DistilledDataset, DistilledImage, DistilledObject, SourceDataset
from .compositor import ImageCache, load_image, render_canvas
from .errors import DistillError, StateError
from .observer import ObserverBackend, ObserverRequest, RequestObject, score_canvas
from .placement import (Placement, PlacementConfig, ObjectCandidate,
                        build_candidates, try_place)
from .planner import SegmentPlan

log = logging.getLogger(__name__)


@dataclass
class EngineConfig:
    canvas_w: int = 484
    canvas_h: int = 578
    eta: float = 0.2
    t_max: int = 5
    fullness_patience: int = 25
    match_iou_floor: float = 0.5
    seed: int = 0
    workers: int = 1
    background_scope: str = "segment"  # or "dataset"
    placement: PlacementConfig = field(default_factory=PlacementConfig)


@dataclass
class Occupant:
    placement: Placement
    confidence: float | None = None


@dataclass
class Canvas:
    id: int
    width: int
    height: int
    background_id: int
    occupants: list[Occupant] = field(default_factory=list)
    iteration: int = 0
    cursor: int = 0


def f_add(canvas: Canvas, pool: list[ObjectCandidate], config: EngineConfig,
          rng: np.random.Generator) -> tuple[int, bool]:
    """One placement pass. Returns (objects placed, canvas declared full).

    Full means fullness_patience candidates in a row failed all their
    placement attempts; pool exhaustion ends the pass without the flag.
    """
    placed = 0
    rejections = 0
    while canvas.cursor < len(pool):
        if rejections >= config.fullness_patience:
            return placed, True
        candidate = pool[canvas.cursor]
        canvas.cursor += 1
        placement, _ = try_place(
            candidate, [occ.placement for occ in canvas.occupants],
            canvas.width, canvas.height, config.placement, rng)
        if placement is None:
            rejections += 1
        else:
            canvas.occupants.append(Occupant(placement=placement))
            placed += 1
            rejections = 0
    return placed, False


def build_request(canvas: Canvas, pixels: np.ndarray) -> ObserverRequest:
    """Observer request for the current occupants. Keys are source
    annotation ids; object order is paste order."""
    return ObserverRequest(
        canvas_id=canvas.id,
        pixels=pixels,
        objects=[RequestObject(key=occ.placement.candidate.annotation_id,
                               bbox=occ.placement.tight,
                               category_id=occ.placement.candidate.category_id)
                 for occ in canvas.occupants])


def f_remove(canvas: Canvas, backend: ObserverBackend, config: EngineConfig,
             render: Callable[[Canvas], np.ndarray]) -> int:
    """Score every occupant and evict those below eta. Returns the number
    evicted. Survivors carry their fresh confidence."""
    if not canvas.occupants:
        return 0
    scores = score_canvas(build_request(canvas, render(canvas)), backend,
                          config.match_iou_floor)
    kept = []
    removed = 0
    for occupant, score in zip(canvas.occupants, scores):
        occupant.confidence = score.confidence
        if score.confidence < config.eta:
            removed += 1
        else:
            kept.append(occupant)
    canvas.occupants = kept
    return removed


def information_density(canvas: Canvas) -> float:
    """Area-weighted mean confidence over tight boxes; 0 when empty."""
    if not canvas.occupants:
        return 0.0
    weights = []
    weighted = []
    for occ in canvas.occupants:
        if occ.confidence is None:
            raise StateError(
                f"canvas {canvas.id}: occupant {occ.placement.candidate.annotation_id} "
                f"has no confidence; run the screening stage first")
        area = occ.placement.tight.area
        weights.append(area)
        weighted.append(area * occ.confidence)
    return math.fsum(weighted) / math.fsum(weights)


def diversity(canvas: Canvas) -> int:
    """Count of distinct source objects on the canvas."""
    return len({occ.placement.candidate.annotation_id for occ in canvas.occupants})


def objective(canvas: Canvas) -> float:
    return information_density(canvas) + diversity(canvas)


@dataclass(frozen=True)
class CanvasStats:
    canvas_id: int
    phi: float
    diversity: int
    objective: float
    iterations: int
    placed_total: int
    removed_total: int
    pool_size: int


def synthesize_canvas(canvas_id: int, segment: list[int], dataset: SourceDataset,
                      backend: ObserverBackend, config: EngineConfig,
                      source_pixels: Callable[[int], np.ndarray],
                      ) -> tuple[DistilledImage, CanvasStats, Canvas]:
    """Build one canvas from its segment. Deterministic in
    (config.seed, canvas_id) regardless of scheduling."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed,
                                                       spawn_key=(canvas_id,)))
    if config.background_scope == "dataset":
        background_ids = [im.id for im in dataset.images]
    else:
        background_ids = list(segment)
    background_id = int(background_ids[rng.integers(len(background_ids))])

    pool: list[ObjectCandidate] = []
    for image_id in segment:
        pool.extend(build_candidates(dataset.image(image_id), config.placement))
    if pool:
        pool = [pool[i] for i in rng.permutation(len(pool))]
    else:
        log.warning("canvas %d: segment %s has no placeable objects; "
                    "emitting background only", canvas_id, segment)

    canvas = Canvas(id=canvas_id, width=config.canvas_w, height=config.canvas_h,
                    background_id=background_id)

    def render(c: Canvas) -> np.ndarray:
        return render_canvas(c.width, c.height, source_pixels(c.background_id),
                             [occ.placement for occ in c.occupants], source_pixels)

    placed_total = removed_total = 0
    while canvas.iteration < config.t_max:
        canvas.iteration += 1
        placed, full = f_add(canvas, pool, config, rng)
        removed = f_remove(canvas, backend, config, render)
        placed_total += placed
        removed_total += removed
        if canvas.cursor >= len(pool):
            break
        if full and removed == 0:
            break

    phi = information_density(canvas)
    n_distinct = diversity(canvas)
    image = DistilledImage(
        id=canvas_id,
        file_name=f"canvas_{canvas_id:06d}.png",
        width=canvas.width,
        height=canvas.height,
        objects=[DistilledObject(
            source_annotation_id=occ.placement.candidate.annotation_id,
            category_id=occ.placement.candidate.category_id,
            bbox=occ.placement.tight,
            score=occ.confidence if occ.confidence is not None else 0.0)
            for occ in canvas.occupants],
        phi=phi,
        diversity=n_distinct,
        pixels=render(canvas),
    )
    stats = CanvasStats(canvas_id=canvas_id, phi=phi, diversity=n_distinct,
                        objective=phi + n_distinct, iterations=canvas.iteration,
                        placed_total=placed_total, removed_total=removed_total,
                        pool_size=len(pool))
    return image, stats, canvas


@dataclass
class RunResult:
    distilled: DistilledDataset
    stats: list[CanvasStats]
    failures: dict[int, Exception]
    canvases: list[Canvas] = field(default_factory=list)
    elapsed_seconds: float = 0.0


class SynthesisError(DistillError):
    """One or more canvases failed; partial results ride along."""

    def __init__(self, result: RunResult):
        self.result = result
        first_id = min(result.failures)
        super().__init__(
            f"{len(result.failures)} canvas(es) failed; first: canvas "
            f"{first_id}: {result.failures[first_id]}")


def make_source_accessor(dataset: SourceDataset,
                         cache: ImageCache | None = None) -> Callable[[int], np.ndarray]:
    cache = cache or ImageCache()
    return lambda image_id: cache.get(
        image_id, lambda: load_image(dataset.image_path(image_id)))


def distill(dataset: SourceDataset, plan: SegmentPlan, backend: ObserverBackend,
            config: EngineConfig, keep_partial: bool = False,
            source_pixels: Callable[[int], np.ndarray] | None = None) -> RunResult:
    """Synthesize every canvas in the plan.

    Canvases run on a thread pool; output is deterministic in (dataset,
    plan, config) because each canvas seeds its own generator. On canvas
    failures raises SynthesisError carrying the partial result, unless
    keep_partial is set, in which case failures are reported in the result
    and the surviving canvases are returned.
    """
    started = time.monotonic()
    accessor = source_pixels or make_source_accessor(dataset)
    images: dict[int, DistilledImage] = {}
    stats: dict[int, CanvasStats] = {}
    canvases: dict[int, Canvas] = {}
    failures: dict[int, Exception] = {}

    def run_one(canvas_id: int, segment: list[int]):
        return synthesize_canvas(canvas_id, segment, dataset, backend, config,
                                 accessor)

    with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
        futures = {
            pool.submit(run_one, canvas_id, segment): canvas_id
            for canvas_id, segment in enumerate(plan.segments, start=1)}
        for future in futures:
            canvas_id = futures[future]
            try:
                image, canvas_stats, canvas = future.result()
                images[canvas_id] = image
                stats[canvas_id] = canvas_stats
                canvases[canvas_id] = canvas
            except Exception as exc:  # noqa: BLE001 - collected per canvas
                failures[canvas_id] = exc

    result = RunResult(
        distilled=DistilledDataset(
            images=[images[i] for i in sorted(images)],
            categories=list(dataset.categories)),
        stats=[stats[i] for i in sorted(stats)],
        failures=failures,
        canvases=[canvases[i] for i in sorted(canvases)],
        elapsed_seconds=time.monotonic() - started)
    if failures and not keep_partial:
        raise SynthesisError(result)
    return result
