import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';
import { fileURLToPath } from 'url';
import { PNG } from 'pngjs';
import * as jpeg from 'jpeg-js';
import { spawnSync } from 'child_process';

export function tmpdir(prefix: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), prefix));
}

export type PixelFn = (x: number, y: number) => [number, number, number];

export function pngBytes(width: number, height: number, pixel: PixelFn): Buffer {
  const png = new PNG({ width, height });
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const [r, g, b] = pixel(x, y);
      const i = 4 * (y * width + x);
      png.data[i] = r; png.data[i + 1] = g; png.data[i + 2] = b; png.data[i + 3] = 255;
    }
  }
  return PNG.sync.write(png);
}

export function jpegBytes(width: number, height: number, pixel: PixelFn): Buffer {
  const data = Buffer.alloc(width * height * 4);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const [r, g, b] = pixel(x, y);
      const i = 4 * (y * width + x);
      data[i] = r; data[i + 1] = g; data[i + 2] = b; data[i + 3] = 255;
    }
  }
  return jpeg.encode({ data, width, height }, 95).data;
}

/** Smooth deterministic test pattern. */
export function gradient(seed: number): PixelFn {
  return (x, y) => [
    (x * 3 + seed * 11) % 256,
    (y * 5 + seed * 29) % 256,
    (x + y * 2 + seed * 47) % 256,
  ];
}

const CLI_JS = fileURLToPath(new URL('../dist/cli.js', import.meta.url));

export function runCli(args: string[]) {
  const res = spawnSync(process.execPath, [CLI_JS, ...args], { encoding: 'utf8' });
  if (res.error) throw res.error;
  return { code: res.status ?? -1, stdout: res.stdout, stderr: res.stderr };
}

/** Runs the aggregation side's command line tool; used for interop checks only. */
export function runIsta(args: string[], cwd?: string) {
  const res = spawnSync('ista', args, { encoding: 'utf8', cwd });
  if (res.error) throw res.error;
  return { code: res.status ?? -1, stdout: res.stdout, stderr: res.stderr };
}
