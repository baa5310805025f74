// Raster builders mirroring the engine's selftest fixture: a muted gray
// gradient with solid saturated rectangles (1 px darker border).

import { Raster } from "../src/png.js";

export type Rgb = [number, number, number];

export function makeRaster(width: number, height: number, gray = 128): Raster {
  const data = new Uint8Array(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    data[i * 4] = gray;
    data[i * 4 + 1] = gray;
    data[i * 4 + 2] = gray;
    data[i * 4 + 3] = 255;
  }
  return { width, height, data };
}

export function gradientRaster(width: number, height: number,
                               from = 90, to = 150): Raster {
  const raster = makeRaster(width, height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const gray = Math.round(from + (x / (width - 1)) * (to - from));
      const i = (y * width + x) * 4;
      raster.data[i] = gray;
      raster.data[i + 1] = gray;
      raster.data[i + 2] = gray;
    }
  }
  return raster;
}

function setPixel(raster: Raster, x: number, y: number, rgb: Rgb): void {
  const i = (y * raster.width + x) * 4;
  raster.data[i] = rgb[0];
  raster.data[i + 1] = rgb[1];
  raster.data[i + 2] = rgb[2];
  raster.data[i + 3] = 255;
}

/** Solid rectangle with a 1 px darker border, like the corpus drawings. */
export function drawRect(raster: Raster, x: number, y: number,
                         w: number, h: number, rgb: Rgb): void {
  const border: Rgb = [Math.floor(rgb[0] * 0.6), Math.floor(rgb[1] * 0.6),
                       Math.floor(rgb[2] * 0.6)];
  for (let yy = y; yy < y + h; yy++) {
    for (let xx = x; xx < x + w; xx++) {
      const edge = yy === y || yy === y + h - 1 || xx === x || xx === x + w - 1;
      setPixel(raster, xx, yy, edge ? border : rgb);
    }
  }
}

/** 160x120 gradient with a red box at (40,30,48,36) and a green box at
 * (104,70,36,30) — the same scene the engine's observer selftest sends. */
export function fixtureRaster(): Raster {
  const raster = gradientRaster(160, 120);
  drawRect(raster, 40, 30, 48, 36, [220, 30, 30]);
  drawRect(raster, 104, 70, 36, 30, [30, 190, 60]);
  return raster;
}

export function iou(a: [number, number, number, number],
                    b: [number, number, number, number]): number {
  const ix = Math.max(0, Math.min(a[0] + a[2], b[0] + b[2]) - Math.max(a[0], b[0]));
  const iy = Math.max(0, Math.min(a[1] + a[3], b[1] + b[3]) - Math.max(a[1], b[1]));
  const inter = ix * iy;
  const union = a[2] * a[3] + b[2] * b[3] - inter;
  return union > 0 ? inter / union : 0;
}
