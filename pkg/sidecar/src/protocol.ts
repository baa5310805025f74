// Observer wire protocol: newline-delimited JSON records over stdio, or the
// same records one-per-POST over HTTP. The scorer echoes canvas_id and
// reports whatever it detected; it never invents per-object scores.

export interface WireObject {
  key: number;
  bbox: [number, number, number, number]; // [x, y, w, h] in canvas pixels
  category_id: number;
}

export interface WireRequest {
  canvas_id: number;
  image_b64: string; // base64-encoded PNG of the canvas
  objects: WireObject[];
}

export interface WireDetection {
  bbox: [number, number, number, number]; // [x, y, w, h] in canvas pixels
  category_id: number;
  score: number; // in [0, 1]
}

export interface WireResponse {
  canvas_id: number;
  detections: WireDetection[];
}

export interface WireError {
  canvas_id: number;
  error: string;
}

/** Request rejection; carries whatever canvas_id could be salvaged. */
export class ProtocolError extends Error {
  canvasId: number;

  constructor(message: string, canvasId = -1) {
    super(message);
    this.name = "ProtocolError";
    this.canvasId = canvasId;
  }
}

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function isFiniteNumber(value: unknown): value is number {
  return typeof value === "number" && Number.isFinite(value);
}

function isBox(value: unknown): value is [number, number, number, number] {
  return Array.isArray(value) && value.length === 4 &&
    value.every(isFiniteNumber);
}

/** Best-effort canvas_id extraction so error records can still echo it. */
export function salvageCanvasId(value: unknown): number {
  if (isRecord(value) && Number.isInteger(value.canvas_id)) {
    return value.canvas_id as number;
  }
  return -1;
}

/** Validate a parsed JSON value as a scoring request. */
export function parseRequest(value: unknown): WireRequest {
  if (!isRecord(value)) {
    throw new ProtocolError("request must be a JSON object");
  }
  const canvasId = value.canvas_id;
  if (!Number.isInteger(canvasId)) {
    throw new ProtocolError("canvas_id must be an integer");
  }
  const id = canvasId as number;
  if (typeof value.image_b64 !== "string" || value.image_b64.length === 0) {
    throw new ProtocolError("image_b64 must be a non-empty string", id);
  }
  if (!Array.isArray(value.objects)) {
    throw new ProtocolError("objects must be an array", id);
  }
  const objects: WireObject[] = [];
  for (const entry of value.objects) {
    if (!isRecord(entry) || !Number.isInteger(entry.key) ||
        !Number.isInteger(entry.category_id) || !isBox(entry.bbox)) {
      throw new ProtocolError(
        "each object needs integer key, integer category_id, numeric bbox[4]",
        id);
    }
    objects.push({
      key: entry.key as number,
      bbox: entry.bbox,
      category_id: entry.category_id as number,
    });
  }
  return { canvas_id: id, image_b64: value.image_b64, objects };
}

/** Map any failure to the protocol's error record. */
export function errorRecord(err: unknown, fallbackId = -1): WireError {
  if (err instanceof ProtocolError) {
    return { canvas_id: err.canvasId, error: err.message };
  }
  const message = err instanceof Error ? err.message : String(err);
  return { canvas_id: fallbackId, error: message };
}
