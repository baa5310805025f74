"""Observer backends: scoring pasted objects on a rendered canvas.

An observer receives a rendered canvas plus the list of pasted objects
(key, tight box, category) and must return exactly one confidence per
object. Backends produce raw detections; matching detections back to the
requested objects happens here, uniformly for every backend.

Three backends exist: a deterministic heuristic (no model, useful for
tests and smoke runs), and external processes reached over newline JSON
on stdio (exec:) or HTTP (http:). The wire format:

    request  {"canvas_id": int, "image_b64": "<png>", "objects":
                 [{"key": int, "bbox": [x, y, w, h], "category_id": int}]}
    response {"canvas_id": int, "detections":
                 [{"bbox": [x, y, w, h], "category_id": int, "score": float}]}

Exactly one response per request; canvas_id must be echoed.
"""

from __future__ import annotations

import base64
import json
import shlex
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence
from urllib.parse import urlparse

import numpy as np

from .boxes import BBox, iou
from .errors import ConfigError, ObserverProtocolError, ObserverTransportError
from . import compositor


@dataclass(frozen=True)
class RequestObject:
    key: int
    bbox: BBox
    category_id: int


@dataclass
class ObserverRequest:
    canvas_id: int
    pixels: np.ndarray
    objects: list[RequestObject]


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    category_id: int
    score: float


@dataclass(frozen=True)
class ObserverScore:
    key: int
    confidence: float


class ObserverBackend(Protocol):
    def __call__(self, request: ObserverRequest) -> list[Detection]: ...


def match_detections(detections: Sequence[Detection],
                     objects: Sequence[RequestObject],
                     iou_floor: float = 0.5) -> dict[int, float]:
    """Greedy one-to-one matching of detections to requested objects.

    Detections are taken in descending score order; each claims the
    still-unmatched object of the same category with the highest IoU,
    provided that IoU reaches the floor. Objects left unmatched score 0.
    """
    if not (0.0 < iou_floor <= 1.0):
        raise ValueError(f"iou floor must be in (0, 1], got {iou_floor}")
    confidences = {obj.key: 0.0 for obj in objects}
    unmatched = list(range(len(objects)))
    order = sorted(range(len(detections)),
                   key=lambda i: (-detections[i].score, i))
    for det_idx in order:
        det = detections[det_idx]
        best = None
        best_iou = 0.0
        for obj_idx in unmatched:
            obj = objects[obj_idx]
            if obj.category_id != det.category_id:
                continue
            overlap = iou(det.bbox, obj.bbox)
            if overlap < iou_floor:
                continue
            if best is None or overlap > best_iou \
                    or (overlap == best_iou and obj.key < objects[best].key):
                best, best_iou = obj_idx, overlap
        if best is not None:
            confidences[objects[best].key] = det.score
            unmatched.remove(best)
    return confidences


def score_canvas(request: ObserverRequest, backend: ObserverBackend,
                 iou_floor: float = 0.5) -> list[ObserverScore]:
    """One confidence per requested object, in request order."""
    detections = backend(request)
    matched = match_detections(detections, request.objects, iou_floor)
    return [ObserverScore(key=obj.key, confidence=matched[obj.key])
            for obj in request.objects]


def covered_fraction(box: BBox, others: Sequence[BBox]) -> float:
    """Exact fraction of `box` covered by the union of `others`.

    Plane sweep over x-slabs with y-interval merging; exact up to float
    arithmetic, no sampling.
    """
    clipped = []
    for other in others:
        x1, y1 = max(other.x, box.x), max(other.y, box.y)
        x2, y2 = min(other.x2, box.x2), min(other.y2, box.y2)
        if x2 > x1 and y2 > y1:
            clipped.append((x1, y1, x2, y2))
    if not clipped:
        return 0.0
    edges = sorted({r[0] for r in clipped} | {r[2] for r in clipped})
    total = 0.0
    for xa, xb in zip(edges, edges[1:]):
        if xb <= xa:
            continue
        spans = sorted((r[1], r[3]) for r in clipped if r[0] <= xa and r[2] >= xb)
        lo = hi = None
        covered = 0.0
        for s_lo, s_hi in spans:
            if hi is None:
                lo, hi = s_lo, s_hi
            elif s_lo > hi:
                covered += hi - lo
                lo, hi = s_lo, s_hi
            else:
                hi = max(hi, s_hi)
        if hi is not None:
            covered += hi - lo
        total += covered * (xb - xa)
    return min(1.0, total / box.area)


@dataclass(frozen=True)
class HeuristicParams:
    """Scoring model of the built-in observer.

    score = clip(base - occlusion_weight * occluded_fraction
                      - small_weight * small_penalty + noise, 0, 1)

    occluded_fraction is the exact fraction of the object's tight box
    covered by objects pasted after it (request order is paste order).
    small_penalty rises linearly as tight area falls below small_area.
    Noise and box jitter are deterministic in (seed, canvas_id, key).
    """

    base: float = 0.9
    occlusion_weight: float = 0.8
    small_weight: float = 0.0
    small_area: float = 1024.0
    noise: float = 0.05
    jitter_px: float = 1.0
    seed: int = 0


class HeuristicBackend:
    """Deterministic observer: a pure function of request and params."""

    def __init__(self, params: HeuristicParams | None = None):
        self.params = params or HeuristicParams()

    def _rng(self, canvas_id: int, key: int) -> np.random.Generator:
        p = self.params
        entropy = (p.seed & 0xFFFFFFFF, canvas_id & 0xFFFFFFFF, key & 0xFFFFFFFF)
        return np.random.default_rng(np.random.SeedSequence(entropy))

    def __call__(self, request: ObserverRequest) -> list[Detection]:
        p = self.params
        h, w = request.pixels.shape[:2]
        boxes = [obj.bbox for obj in request.objects]
        detections = []
        for i, obj in enumerate(request.objects):
            occluded = covered_fraction(obj.bbox, boxes[i + 1:])
            small_pen = 0.0
            if p.small_weight > 0.0 and p.small_area > 0.0:
                small_pen = max(0.0, 1.0 - obj.bbox.area / p.small_area)
            score = p.base - p.occlusion_weight * occluded - p.small_weight * small_pen
            rng = self._rng(request.canvas_id, obj.key)
            if p.noise > 0.0:
                score += float(rng.uniform(-p.noise, p.noise))
            score = min(max(score, 0.0), 1.0)
            x, y = obj.bbox.x, obj.bbox.y
            if p.jitter_px > 0.0:
                dx, dy = rng.uniform(-p.jitter_px, p.jitter_px, size=2)
                x = min(max(x + float(dx), 0.0), max(w - obj.bbox.w, 0.0))
                y = min(max(y + float(dy), 0.0), max(h - obj.bbox.h, 0.0))
            detections.append(Detection(
                bbox=BBox(x, y, obj.bbox.w, obj.bbox.h),
                category_id=obj.category_id,
                score=score,
            ))
        return detections


def perfect_params() -> HeuristicParams:
    """Heuristic configuration that scores every object 1.0 exactly."""
    return HeuristicParams(base=1.0, occlusion_weight=0.0, small_weight=0.0,
                           noise=0.0, jitter_px=0.0)


def wire_request(request: ObserverRequest) -> dict:
    return {
        "canvas_id": request.canvas_id,
        "image_b64": base64.b64encode(compositor.encode_png(request.pixels)).decode("ascii"),
        "objects": [
            {"key": obj.key,
             "bbox": [obj.bbox.x, obj.bbox.y, obj.bbox.w, obj.bbox.h],
             "category_id": obj.category_id}
            for obj in request.objects
        ],
    }


def _excerpt(payload) -> str:
    text = payload if isinstance(payload, str) else json.dumps(payload)
    return text[:200]


def parse_wire_response(payload, expected_canvas_id: int) -> list[Detection]:
    """Validate a response document and extract its detections."""
    if not isinstance(payload, dict):
        raise ObserverProtocolError("response is not a JSON object", _excerpt(payload))
    if "error" in payload:
        raise ObserverProtocolError(f"observer reported error: {payload['error']}")
    if payload.get("canvas_id") != expected_canvas_id:
        raise ObserverProtocolError(
            f"canvas_id mismatch: sent {expected_canvas_id}, "
            f"got {payload.get('canvas_id')!r}", _excerpt(payload))
    detections_raw = payload.get("detections")
    if not isinstance(detections_raw, list):
        raise ObserverProtocolError("missing or non-list 'detections'",
                                    _excerpt(payload))
    detections = []
    for entry in detections_raw:
        if not isinstance(entry, dict):
            raise ObserverProtocolError("detection entries must be objects",
                                        _excerpt(entry))
        bbox = entry.get("bbox")
        if (not isinstance(bbox, list) or len(bbox) != 4
                or any(isinstance(v, bool) or not isinstance(v, (int, float))
                       for v in bbox)):
            raise ObserverProtocolError("detection bbox must be [x, y, w, h]",
                                        _excerpt(entry))
        score = entry.get("score")
        if isinstance(score, bool) or not isinstance(score, (int, float)) \
                or not (0.0 <= score <= 1.0):
            raise ObserverProtocolError(
                f"detection score out of [0, 1]: {score!r}", _excerpt(entry))
        category_id = entry.get("category_id")
        if not isinstance(category_id, int):
            raise ObserverProtocolError("detection category_id must be an integer",
                                        _excerpt(entry))
        x, y, w, h = (float(v) for v in bbox)
        if w <= 0.0 or h <= 0.0:
            # A degenerate detection cannot match anything; skip it.
            continue
        detections.append(Detection(bbox=BBox(x, y, w, h),
                                    category_id=category_id, score=float(score)))
    return detections


class ExecTransport:
    """Newline JSON over a child process's stdin/stdout."""

    def __init__(self, command: str, timeout: float = 60.0):
        if not command.strip():
            raise ConfigError("exec observer: empty command")
        self.command = command
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

    def _ensure_process(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    shlex.split(self.command), stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE, text=True, bufsize=1)
            except OSError as exc:
                raise ObserverTransportError(
                    f"cannot start observer process: {exc}") from exc
        return self._proc

    def round_trip(self, payload: dict) -> dict:
        with self._lock:
            proc = self._ensure_process()
            try:
                proc.stdin.write(json.dumps(payload) + "\n")
                proc.stdin.flush()
                line = proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                self._kill()
                raise ObserverTransportError(
                    f"observer process pipe broke: {exc}") from exc
            if not line:
                self._kill()
                raise ObserverTransportError(
                    "observer process closed stdout (no response line)")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise ObserverProtocolError(f"response is not valid JSON: {exc}",
                                        line[:200]) from exc

    def _kill(self):
        if self._proc is not None:
            try:
                self._proc.kill()
            except OSError:
                pass
            self._proc = None

    def close(self):
        with self._lock:
            if self._proc is not None and self._proc.poll() is None:
                try:
                    self._proc.stdin.close()
                    self._proc.wait(timeout=5)
                except (OSError, subprocess.TimeoutExpired):
                    self._proc.kill()
            self._proc = None


class HttpTransport:
    """JSON POST to an observer service's /score endpoint."""

    def __init__(self, url: str, timeout: float = 60.0):
        parsed = urlparse(url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ConfigError(f"http observer: malformed URL {url!r}")
        if parsed.path in ("", "/"):
            url = url.rstrip("/") + "/score"
        self.url = url
        self.timeout = timeout
        import requests
        self._session = requests.Session()

    def round_trip(self, payload: dict) -> dict:
        import requests
        try:
            response = self._session.post(self.url, json=payload,
                                          timeout=self.timeout)
        except requests.RequestException as exc:
            raise ObserverTransportError(
                f"cannot reach observer at {self.url}: {exc}") from exc
        if response.status_code >= 500:
            raise ObserverTransportError(
                f"observer returned {response.status_code}")
        if response.status_code != 200:
            raise ObserverProtocolError(
                f"observer returned {response.status_code}", response.text[:200])
        try:
            return response.json()
        except ValueError as exc:
            raise ObserverProtocolError(f"response is not valid JSON: {exc}",
                                        response.text[:200]) from exc

    def close(self):
        self._session.close()


class ExternalBackend:
    """Canvas scoring through an external transport, with bounded
    concurrency and retries on transport (not protocol) failures."""

    def __init__(self, transport, retries: int = 2, max_inflight: int = 4):
        self.transport = transport
        self.retries = retries
        self._slots = threading.Semaphore(max_inflight)

    def __call__(self, request: ObserverRequest) -> list[Detection]:
        payload = wire_request(request)
        last_error: ObserverTransportError | None = None
        with self._slots:
            for _ in range(self.retries + 1):
                try:
                    response = self.transport.round_trip(payload)
                    return parse_wire_response(response, request.canvas_id)
                except ObserverTransportError as exc:
                    last_error = exc
        raise last_error

    def close(self):
        close = getattr(self.transport, "close", None)
        if close is not None:
            close()


def parse_observer_spec(spec: str,
                        heuristic_params: HeuristicParams | None = None,
                        max_inflight: int = 4) -> ObserverBackend:
    """Build a backend from a CLI observer spec string.

    "heuristic", "exec:<command>", or "http(s)://<host>[:port][/path]".
    """
    if spec == "heuristic":
        return HeuristicBackend(heuristic_params)
    if spec.startswith("exec:"):
        return ExternalBackend(ExecTransport(spec[len("exec:"):]),
                               max_inflight=max_inflight)
    if spec.startswith(("http://", "https://")):
        return ExternalBackend(HttpTransport(spec), max_inflight=max_inflight)
    raise ConfigError(
        f"unknown observer spec {spec!r}; expected 'heuristic', 'exec:CMD' "
        f"or 'http(s)://host:port'")


def selftest_fixture() -> ObserverRequest:
    """A small canvas with two synthetic objects at known positions."""
    from .synthetic import PALETTE, draw_object

    width, height = 160, 120
    column = np.linspace(90.0, 150.0, width)
    pixels = np.repeat(np.tile(column, (height, 1))[:, :, None], 3, axis=2)
    pixels = np.clip(np.rint(pixels), 0, 255).astype(np.uint8)
    objects = [
        RequestObject(key=7, bbox=BBox(40.0, 30.0, 48.0, 36.0), category_id=1),
        RequestObject(key=9, bbox=BBox(104.0, 70.0, 36.0, 30.0), category_id=2),
    ]
    for obj in objects:
        draw_object(pixels, obj.bbox, PALETTE[obj.category_id - 1][1])
    return ObserverRequest(canvas_id=4242, pixels=pixels, objects=objects)


@dataclass
class SelftestReport:
    ok: bool
    messages: list[str] = field(default_factory=list)
    scores: list[ObserverScore] = field(default_factory=list)


def run_selftest(backend: ObserverBackend, iou_floor: float = 0.5) -> SelftestReport:
    """Exercise a backend against the fixture canvas and validate that the
    exchange conforms: one in-range confidence per object."""
    request = selftest_fixture()
    report = SelftestReport(ok=True)
    try:
        scores = score_canvas(request, backend, iou_floor)
    except Exception as exc:  # noqa: BLE001 - report, caller maps to exit code
        report.ok = False
        report.messages.append(f"FAIL observer exchange: {exc}")
        return report
    report.scores = scores
    if [s.key for s in scores] != [o.key for o in request.objects]:
        report.ok = False
        report.messages.append("FAIL score keys do not mirror request objects")
    for score in scores:
        if not (0.0 <= score.confidence <= 1.0):
            report.ok = False
            report.messages.append(
                f"FAIL key {score.key}: confidence {score.confidence} out of range")
        else:
            report.messages.append(
                f"ok key {score.key}: confidence {score.confidence:.4f}")
    return report
