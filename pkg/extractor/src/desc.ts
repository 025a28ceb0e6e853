import * as fs from 'fs';
import * as path from 'path';

export const DESC_MAGIC = 'ISTA0001';
export const HEADER_BYTES = 20;

export interface Grid {
  height: number;
  width: number;
  depth: number;
  /** row-major [height][width][depth] */
  data: Float32Array;
}

/** `<imageId>.<pixels>.desc`, the ingest naming the aggregation side expects. */
export function descFilename(imageId: string, pixels: number): string {
  return `${imageId}.${pixels}.desc`;
}

/**
 * Normalize every depth-vector to unit l2 length, in place.
 * Accumulates in f64 so the stored f32 values round from the exact quotient.
 * Near-zero locations are left untouched.
 */
export function normalizePerLocation(grid: Grid, eps = 1e-12): void {
  const { depth, data } = grid;
  for (let off = 0; off < data.length; off += depth) {
    let ss = 0;
    for (let c = 0; c < depth; c++) ss += data[off + c] * data[off + c];
    const norm = Math.sqrt(ss);
    if (norm < eps) continue;
    for (let c = 0; c < depth; c++) data[off + c] = data[off + c] / norm;
  }
}

export function encodeGrid(grid: Grid): Buffer {
  const { height, width, depth, data } = grid;
  if (data.length !== height * width * depth) {
    throw new Error(`grid payload length ${data.length} does not match ${height}x${width}x${depth}`);
  }
  const buf = Buffer.alloc(HEADER_BYTES + 4 * data.length);
  buf.write(DESC_MAGIC, 0, 'ascii');
  buf.writeUInt32LE(height, 8);
  buf.writeUInt32LE(width, 12);
  buf.writeUInt32LE(depth, 16);
  for (let i = 0; i < data.length; i++) buf.writeFloatLE(data[i], HEADER_BYTES + 4 * i);
  return buf;
}

export function decodeGrid(buf: Buffer): Grid {
  if (buf.length < HEADER_BYTES || buf.toString('ascii', 0, 8) !== DESC_MAGIC) {
    throw new Error('not a descriptor grid file');
  }
  const height = buf.readUInt32LE(8);
  const width = buf.readUInt32LE(12);
  const depth = buf.readUInt32LE(16);
  const n = height * width * depth;
  if (buf.length !== HEADER_BYTES + 4 * n) {
    throw new Error(`payload is ${buf.length - HEADER_BYTES} bytes, expected ${4 * n}`);
  }
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) data[i] = buf.readFloatLE(HEADER_BYTES + 4 * i);
  return { height, width, depth, data };
}

/** Write via a temp file in the same directory so readers never see a partial file. */
export function writeGridAtomic(outPath: string, grid: Grid): void {
  const tmp = path.join(path.dirname(outPath), `.${path.basename(outPath)}.tmp-${process.pid}`);
  fs.writeFileSync(tmp, encodeGrid(grid));
  fs.renameSync(tmp, outPath);
}
