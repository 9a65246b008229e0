/**
 * Image loading and canonical preprocessing.
 *
 * Images are held as planar-free RGB float arrays in [0, 1], row-major with
 * interleaved channels, and resized by bilinear interpolation straight to
 * the target size (no center crop).
 */

import { readFileSync } from "node:fs";
import { PNG } from "pngjs";

export interface RgbImage {
  width: number;
  height: number;
  /** length = width * height * 3, values in [0, 1] */
  data: Float32Array;
}

export class UnreadableImageError extends Error {}

export function decodePpm(raw: Buffer): RgbImage {
  const header = raw.subarray(0, 2).toString("ascii");
  if (header !== "P6" && header !== "P5") {
    throw new UnreadableImageError(`unsupported PNM magic ${header}`);
  }
  // header tokens: magic, width, height, maxval, then one whitespace byte
  let offset = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (offset < raw.length && /\s/.test(String.fromCharCode(raw[offset]))) offset++;
    if (raw[offset] === 0x23) {
      while (offset < raw.length && raw[offset] !== 0x0a) offset++;
      continue;
    }
    let start = offset;
    while (offset < raw.length && !/\s/.test(String.fromCharCode(raw[offset]))) offset++;
    fields.push(parseInt(raw.subarray(start, offset).toString("ascii"), 10));
  }
  offset++; // single whitespace after maxval
  const [width, height, maxval] = fields;
  if (!(width > 0 && height > 0 && maxval > 0 && maxval < 65536)) {
    throw new UnreadableImageError("bad PNM dimensions");
  }
  const channels = header === "P6" ? 3 : 1;
  const expected = width * height * channels;
  const payload = raw.subarray(offset);
  if (payload.length < expected) {
    throw new UnreadableImageError(
      `truncated PNM payload: expected ${expected} bytes, got ${payload.length}`
    );
  }
  const data = new Float32Array(width * height * 3);
  for (let p = 0; p < width * height; p++) {
    for (let c = 0; c < 3; c++) {
      const source = channels === 3 ? payload[p * 3 + c] : payload[p];
      data[p * 3 + c] = source / maxval;
    }
  }
  return { width, height, data };
}

export function decodePng(raw: Buffer): RgbImage {
  let png: PNG;
  try {
    png = PNG.sync.read(raw);
  } catch (error) {
    throw new UnreadableImageError(`bad PNG: ${(error as Error).message}`);
  }
  const data = new Float32Array(png.width * png.height * 3);
  for (let p = 0; p < png.width * png.height; p++) {
    data[p * 3] = png.data[p * 4] / 255;
    data[p * 3 + 1] = png.data[p * 4 + 1] / 255;
    data[p * 3 + 2] = png.data[p * 4 + 2] / 255;
  }
  return { width: png.width, height: png.height, data };
}

export function loadImage(path: string): RgbImage {
  let raw: Buffer;
  try {
    raw = readFileSync(path);
  } catch (error) {
    throw new UnreadableImageError(`cannot read ${path}: ${(error as Error).message}`);
  }
  if (raw.length >= 8 && raw[0] === 0x89 && raw[1] === 0x50) {
    return decodePng(raw);
  }
  if (raw.length >= 2 && raw[0] === 0x50 && (raw[1] === 0x35 || raw[1] === 0x36)) {
    return decodePpm(raw);
  }
  throw new UnreadableImageError(`unsupported image format: ${path}`);
}

export function resizeBilinear(image: RgbImage, size: number): RgbImage {
  if (image.width === size && image.height === size) {
    return { width: size, height: size, data: image.data.slice() };
  }
  const out = new Float32Array(size * size * 3);
  const scaleX = image.width / size;
  const scaleY = image.height / size;
  for (let y = 0; y < size; y++) {
    const srcY = Math.min((y + 0.5) * scaleY - 0.5, image.height - 1);
    const y0 = Math.max(Math.floor(srcY), 0);
    const y1 = Math.min(y0 + 1, image.height - 1);
    const wy = srcY - y0;
    for (let x = 0; x < size; x++) {
      const srcX = Math.min((x + 0.5) * scaleX - 0.5, image.width - 1);
      const x0 = Math.max(Math.floor(srcX), 0);
      const x1 = Math.min(x0 + 1, image.width - 1);
      const wx = srcX - x0;
      for (let c = 0; c < 3; c++) {
        const top =
          image.data[(y0 * image.width + x0) * 3 + c] * (1 - wx) +
          image.data[(y0 * image.width + x1) * 3 + c] * wx;
        const bottom =
          image.data[(y1 * image.width + x0) * 3 + c] * (1 - wx) +
          image.data[(y1 * image.width + x1) * 3 + c] * wx;
        out[(y * size + x) * 3 + c] = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return { width: size, height: size, data: out };
}
