/**
 * extract --backbone vgg16_block5 --resolutions 512,1024 --images <dir> --out <dir> \
 *         --weights seeded:0
 *
 * One .desc per image per resolution, plus manifest.tsv listing what was
 * produced. Exit codes: 0 ok, 2 missing input or weights, 3 bad arguments,
 * 4 numerical failure, 1 anything else.
 */
import * as tf from '@tensorflow/tfjs';
import * as fs from 'fs';
import * as path from 'path';
import { parseArgs } from 'util';
import { BACKBONE_NAMES, BackboneName, MissingWeightsError, parseWeightSource } from './backbones';
import { Extractor, NumericalError, ProducedFile, writeManifest } from './extract';

class UsageError extends Error {}
class MissingInputError extends Error {}

const USAGE =
  'usage: extract --backbone <name> --resolutions 512,1024 --images <dir> --out <dir> --weights <spec>\n' +
  `  backbones: ${BACKBONE_NAMES.join(', ')}\n` +
  '  weights:   seeded:<n> or dir:<path>\n' +
  '  backend:   --backend cpu (default)';

function parseResolutions(spec: string): number[] {
  const parts = spec.split(',').map(s => s.trim()).filter(s => s.length > 0);
  if (parts.length === 0) throw new UsageError('no resolutions given');
  const out = parts.map(p => {
    const n = Number(p);
    if (!Number.isInteger(n) || n < 16) throw new UsageError(`bad resolution: ${p}`);
    return n;
  });
  if (new Set(out).size !== out.length) throw new UsageError('duplicate resolutions');
  return out;
}

async function run(argv: string[]): Promise<void> {
  let values;
  try {
    ({ values } = parseArgs({
      args: argv,
      options: {
        backbone: { type: 'string' },
        resolutions: { type: 'string', default: '512,1024' },
        images: { type: 'string' },
        out: { type: 'string' },
        weights: { type: 'string' },
        backend: { type: 'string', default: 'cpu' },
        help: { type: 'boolean', default: false },
      },
    }));
  } catch (e) {
    throw new UsageError(`${(e as Error).message}\n${USAGE}`);
  }
  if (values.help) {
    console.log(USAGE);
    return;
  }
  for (const flag of ['backbone', 'images', 'out', 'weights'] as const) {
    if (!values[flag]) throw new UsageError(`--${flag} is required`);
  }
  const backbone = values.backbone as string;
  if (!BACKBONE_NAMES.includes(backbone as BackboneName)) {
    throw new UsageError(`unknown backbone: ${backbone}`);
  }
  const resolutions = parseResolutions(values.resolutions as string);
  let weights;
  try {
    weights = parseWeightSource(values.weights as string);
  } catch (e) {
    throw new UsageError((e as Error).message);
  }
  const imagesDir = values.images as string;
  if (!fs.existsSync(imagesDir) || !fs.statSync(imagesDir).isDirectory()) {
    throw new MissingInputError(`missing image directory: ${imagesDir}`);
  }

  await tf.setBackend(values.backend as string);
  await tf.ready();

  const outDir = values.out as string;
  fs.mkdirSync(outDir, { recursive: true });
  const extractor = new Extractor({ backbone: backbone as BackboneName, resolutions, weights });
  const rows: ProducedFile[] = [];
  try {
    const entries = fs.readdirSync(imagesDir).sort();
    for (const entry of entries) {
      const imagePath = path.join(imagesDir, entry);
      if (!fs.statSync(imagePath).isFile()) continue;
      const produced = extractor.extractImage(imagePath, outDir);
      if (produced === null) {
        console.error(`warning: cannot decode ${imagePath}, skipped`);
        continue;
      }
      rows.push(...produced);
    }
  } finally {
    extractor.dispose();
  }
  const manifestPath = writeManifest(outDir, rows);
  console.log(`extract\t${rows.length} grids\t${manifestPath}`);
}

export async function main(argv: string[]): Promise<number> {
  try {
    await run(argv);
    return 0;
  } catch (e) {
    console.error(`error: ${(e as Error).message}`);
    if (e instanceof UsageError) return 3;
    if (e instanceof MissingInputError || e instanceof MissingWeightsError) return 2;
    if (e instanceof NumericalError) return 4;
    return 1;
  }
}

if (require.main === module) {
  main(process.argv.slice(2)).then(code => { process.exitCode = code; });
}
