// Region detector: finds saturated rectangular regions on muted backgrounds
// and classifies them against a fixed color vocabulary. This is the
// vocabulary the shipped synthetic corpora draw from, which makes the
// sidecar a faithful stand-in for a trained observer on those datasets.

import { readFileSync } from "node:fs";

import { decodeBase64Png, Raster } from "./png.js";
import { ProtocolError, WireDetection, WireRequest, WireResponse } from "./protocol.js";

export interface LabelColor {
  name: string;
  rgb: [number, number, number];
}

// Reference colors of the detector's label space, one per drawable class.
export const DETECTOR_LABELS: LabelColor[] = [
  { name: "red", rgb: [220, 30, 30] },
  { name: "green", rgb: [30, 190, 60] },
  { name: "blue", rgb: [40, 70, 220] },
  { name: "yellow", rgb: [230, 210, 40] },
  { name: "magenta", rgb: [210, 40, 200] },
  { name: "cyan", rgb: [40, 200, 210] },
  { name: "orange", rgb: [235, 140, 30] },
  { name: "purple", rgb: [130, 40, 190] },
  { name: "lime", rgb: [150, 220, 40] },
  { name: "teal", rgb: [20, 140, 120] },
];

export interface ModelSpec {
  /** Minimum channel spread (max - min over RGB) for a foreground pixel. */
  saturationThreshold: number;
  /** Components smaller than this many pixels are noise. */
  minArea: number;
}

export interface SidecarConfig {
  model: string;
  modelSpec: ModelSpec;
  scoreFloor: number; // detections below this confidence are dropped
  device: string;
  maxBatch: number;
  categoryMap: Record<string, number>; // label name -> dataset category id
}

export class ConfigError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ConfigError";
  }
}

/** Model strings look like "region:50" or "region:50,9". */
export function parseModelSpec(model: string): ModelSpec {
  const match = /^region:(\d+)(?:,(\d+))?$/.exec(model.trim());
  if (!match) {
    throw new ConfigError(
      `unsupported model ${JSON.stringify(model)}; expected "region:<saturation>[,<minArea>]"`);
  }
  const saturationThreshold = Number(match[1]);
  const minArea = match[2] === undefined ? 9 : Number(match[2]);
  if (saturationThreshold < 1 || saturationThreshold > 255) {
    throw new ConfigError(`saturation threshold must be in [1, 255], got ${saturationThreshold}`);
  }
  if (minArea < 1) {
    throw new ConfigError(`minArea must be >= 1, got ${minArea}`);
  }
  return { saturationThreshold, minArea };
}

export function loadCategoryMap(path: string): Record<string, number> {
  let parsed: unknown;
  try {
    parsed = JSON.parse(readFileSync(path, "utf8"));
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    throw new ConfigError(`cannot load category map ${path}: ${message}`);
  }
  if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
    throw new ConfigError(`category map ${path} must be a JSON object`);
  }
  const map: Record<string, number> = {};
  for (const [name, id] of Object.entries(parsed)) {
    if (!Number.isInteger(id)) {
      throw new ConfigError(`category map ${path}: ${name} must map to an integer id`);
    }
    map[name] = id as number;
  }
  return map;
}

export function buildConfig(options: {
  model?: string;
  scoreFloor?: number;
  device?: string;
  maxBatch?: number;
  categoryMap: Record<string, number>;
}): SidecarConfig {
  const model = options.model ?? "region:50";
  const scoreFloor = options.scoreFloor ?? 0.05;
  const device = options.device ?? "cpu";
  const maxBatch = options.maxBatch ?? 8;
  if (!(scoreFloor >= 0 && scoreFloor < 1)) {
    throw new ConfigError(`score floor must be in [0, 1), got ${scoreFloor}`);
  }
  if (device !== "cpu") {
    throw new ConfigError(`the region detector only runs on cpu, got ${JSON.stringify(device)}`);
  }
  if (!Number.isInteger(maxBatch) || maxBatch < 1) {
    throw new ConfigError(`max batch must be a positive integer, got ${maxBatch}`);
  }
  return {
    model,
    modelSpec: parseModelSpec(model),
    scoreFloor,
    device,
    maxBatch,
    categoryMap: options.categoryMap,
  };
}

interface Component {
  count: number;
  minX: number;
  minY: number;
  maxX: number;
  maxY: number;
  sumR: number;
  sumG: number;
  sumB: number;
  sumSaturation: number;
}

/** 4-connected components of pixels whose channel spread clears the
 * threshold. Iterative fill; rasters can be full canvases. */
export function findComponents(raster: Raster, spec: ModelSpec): Component[] {
  const { width, height, data } = raster;
  const foreground = new Uint8Array(width * height);
  const saturation = new Uint8Array(width * height);
  for (let i = 0; i < width * height; i++) {
    const r = data[i * 4];
    const g = data[i * 4 + 1];
    const b = data[i * 4 + 2];
    const spread = Math.max(r, g, b) - Math.min(r, g, b);
    saturation[i] = spread;
    foreground[i] = spread >= spec.saturationThreshold ? 1 : 0;
  }

  const visited = new Uint8Array(width * height);
  const stack: number[] = [];
  const components: Component[] = [];
  for (let start = 0; start < width * height; start++) {
    if (!foreground[start] || visited[start]) continue;
    const component: Component = {
      count: 0,
      minX: width, minY: height, maxX: -1, maxY: -1,
      sumR: 0, sumG: 0, sumB: 0, sumSaturation: 0,
    };
    visited[start] = 1;
    stack.push(start);
    while (stack.length > 0) {
      const index = stack.pop() as number;
      const x = index % width;
      const y = (index - x) / width;
      component.count += 1;
      component.minX = Math.min(component.minX, x);
      component.minY = Math.min(component.minY, y);
      component.maxX = Math.max(component.maxX, x);
      component.maxY = Math.max(component.maxY, y);
      component.sumR += data[index * 4];
      component.sumG += data[index * 4 + 1];
      component.sumB += data[index * 4 + 2];
      component.sumSaturation += saturation[index];
      if (x > 0 && foreground[index - 1] && !visited[index - 1]) {
        visited[index - 1] = 1;
        stack.push(index - 1);
      }
      if (x + 1 < width && foreground[index + 1] && !visited[index + 1]) {
        visited[index + 1] = 1;
        stack.push(index + 1);
      }
      if (y > 0 && foreground[index - width] && !visited[index - width]) {
        visited[index - width] = 1;
        stack.push(index - width);
      }
      if (y + 1 < height && foreground[index + width] && !visited[index + width]) {
        visited[index + width] = 1;
        stack.push(index + width);
      }
    }
    if (component.count >= spec.minArea) {
      components.push(component);
    }
  }
  return components;
}

function nearestLabel(r: number, g: number, b: number): LabelColor {
  let best = DETECTOR_LABELS[0];
  let bestDistance = Infinity;
  for (const label of DETECTOR_LABELS) {
    const dr = r - label.rgb[0];
    const dg = g - label.rgb[1];
    const db = b - label.rgb[2];
    const distance = dr * dr + dg * dg + db * db;
    if (distance < bestDistance) {
      bestDistance = distance;
      best = label;
    }
  }
  return best;
}

/** Detect saturated regions and map them into the dataset's category ids.
 * Labels absent from the category map are dropped, never guessed. */
export function runInference(raster: Raster, config: SidecarConfig): WireDetection[] {
  const detections: WireDetection[] = [];
  for (const component of findComponents(raster, config.modelSpec)) {
    const meanR = component.sumR / component.count;
    const meanG = component.sumG / component.count;
    const meanB = component.sumB / component.count;
    const label = nearestLabel(meanR, meanG, meanB);
    const categoryId = config.categoryMap[label.name];
    if (categoryId === undefined) continue;

    const boxW = component.maxX - component.minX + 1;
    const boxH = component.maxY - component.minY + 1;
    // Solid rectangles fill their bounding box; occluded remnants do not.
    const coverage = component.count / (boxW * boxH);
    const vividness = Math.min(1, component.sumSaturation / component.count / 100);
    const score = Math.min(1, coverage * vividness);
    if (score < config.scoreFloor) continue;
    detections.push({
      bbox: [component.minX, component.minY, boxW, boxH],
      category_id: categoryId,
      score,
    });
  }
  return detections;
}

/** One request in, one response out; shared by both transports. */
export function scoreRequest(request: WireRequest, config: SidecarConfig): WireResponse {
  let raster: Raster;
  try {
    raster = decodeBase64Png(request.image_b64);
  } catch (err) {
    if (err instanceof ProtocolError) {
      err.canvasId = request.canvas_id;
    }
    throw err;
  }
  return { canvas_id: request.canvas_id, detections: runInference(raster, config) };
}
