// Thin raster layer over pngjs. Everything downstream works on RGBA bytes.

import { PNG } from "pngjs";

import { ProtocolError } from "./protocol.js";

export interface Raster {
  width: number;
  height: number;
  data: Uint8Array; // RGBA, row-major, 4 bytes per pixel
}

export function decodePng(buffer: Buffer): Raster {
  let png: PNG;
  try {
    png = PNG.sync.read(buffer);
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    throw new ProtocolError(`image_b64 is not a decodable PNG: ${message}`);
  }
  return { width: png.width, height: png.height, data: new Uint8Array(png.data) };
}

export function decodeBase64Png(imageB64: string): Raster {
  const buffer = Buffer.from(imageB64, "base64");
  if (buffer.length === 0) {
    throw new ProtocolError("image_b64 decodes to zero bytes");
  }
  return decodePng(buffer);
}

export function encodePng(raster: Raster): Buffer {
  const png = new PNG({ width: raster.width, height: raster.height });
  png.data = Buffer.from(raster.data);
  return PNG.sync.write(png);
}
