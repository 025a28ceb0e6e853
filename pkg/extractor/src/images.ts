import { PNG } from 'pngjs';
import * as jpeg from 'jpeg-js';

export interface RgbImage {
  height: number;
  width: number;
  /** row-major RGB, one byte per channel */
  data: Uint8Array;
}

function rgbaToRgb(data: Uint8Array | Buffer, pixels: number): Uint8Array {
  const rgb = new Uint8Array(pixels * 3);
  for (let i = 0; i < pixels; i++) {
    rgb[3 * i] = data[4 * i];
    rgb[3 * i + 1] = data[4 * i + 1];
    rgb[3 * i + 2] = data[4 * i + 2];
  }
  return rgb;
}

/** Sniff the container by magic bytes; null means not decodable here. */
export function decodeImage(buf: Buffer): RgbImage | null {
  try {
    if (buf.length > 8 && buf[0] === 0x89 && buf[1] === 0x50 && buf[2] === 0x4e && buf[3] === 0x47) {
      const png = PNG.sync.read(buf);
      return { height: png.height, width: png.width, data: rgbaToRgb(png.data, png.width * png.height) };
    }
    if (buf.length > 3 && buf[0] === 0xff && buf[1] === 0xd8 && buf[2] === 0xff) {
      const jpg = jpeg.decode(buf, { useTArray: true, maxMemoryUsageInMB: 1024 });
      return { height: jpg.height, width: jpg.width, data: rgbaToRgb(jpg.data, jpg.width * jpg.height) };
    }
  } catch {
    return null;
  }
  return null;
}

/**
 * Target size with the longer side scaled to `resolution` and the ratio kept.
 * The shorter side is clamped so the downstream feature map keeps at least
 * one row and one column.
 */
export function scaledShape(height: number, width: number, resolution: number): [number, number] {
  const long = Math.max(height, width);
  const short = Math.round((Math.min(height, width) * resolution) / long);
  const clamped = Math.max(16, short);
  return height >= width ? [resolution, clamped] : [clamped, resolution];
}
