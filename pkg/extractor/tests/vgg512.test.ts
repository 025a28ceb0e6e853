import { describe, it, expect } from 'vitest';
import * as fs from 'fs';
import * as path from 'path';
import { Extractor } from '../src/extract';
import { decodeGrid } from '../src/desc';
import { tmpdir, pngBytes, gradient, runIsta } from './helpers';

// One full-resolution forward pass through the deep backbone; slow on the
// pure js backend, so the timeout is generous.
describe('vgg16 cut at full working resolution', () => {
  it('turns a 512px square image into a 32x32x512 grid the aggregation tool accepts', () => {
    const imagesDir = tmpdir('images-');
    const outDir = tmpdir('out-');
    fs.writeFileSync(path.join(imagesDir, 'square.png'), pngBytes(512, 512, gradient(9)));

    const extractor = new Extractor({
      backbone: 'vgg16_block5',
      resolutions: [512],
      weights: { kind: 'seeded', seed: 0 },
    });
    try {
      const produced = extractor.extractImage(path.join(imagesDir, 'square.png'), outDir);
      expect(produced).not.toBeNull();
      expect(produced!.length).toBe(1);
      expect(produced![0].file).toBe('square.512.desc');
      expect([produced![0].gridHeight, produced![0].gridWidth, produced![0].depth]).toEqual([32, 32, 512]);
    } finally {
      extractor.dispose();
    }

    const grid = decodeGrid(fs.readFileSync(path.join(outDir, 'square.512.desc')));
    expect([grid.height, grid.width, grid.depth]).toEqual([32, 32, 512]);

    const conf = path.join(outDir, 'check.conf');
    fs.writeFileSync(conf, 'codebook_size = 2\nseed = 0\n');
    const res = runIsta([
      'fit-codebook', '--config', conf,
      '--in', outDir, '--out', path.join(outDir, 'check.codebook'),
    ]);
    expect(res.code, res.stderr).toBe(0);
  }, 900_000);
});
