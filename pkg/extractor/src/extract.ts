import * as tf from '@tensorflow/tfjs';
import * as fs from 'fs';
import * as path from 'path';
import { BackboneName, WeightSource, buildBackbone, applyWeights, preprocess } from './backbones';
import { decodeImage, scaledShape } from './images';
import { Grid, descFilename, normalizePerLocation, writeGridAtomic } from './desc';

export const INTERPOLATION = 'bilinear';

export interface ExtractionSpec {
  backbone: BackboneName;
  resolutions: number[];
  weights: WeightSource;
}

export interface ProducedFile {
  imageId: string;
  pixels: number;
  file: string;
  gridHeight: number;
  gridWidth: number;
  depth: number;
}

export class NumericalError extends Error {}

const MODEL_CACHE_CAP = 8;

/**
 * Turns images into descriptor grid files, one per requested resolution.
 * Inference is batched per image; networks are cached per input size.
 */
export class Extractor {
  private models = new Map<string, tf.LayersModel>();

  constructor(readonly spec: ExtractionSpec) {}

  private modelFor(height: number, width: number): tf.LayersModel {
    const key = `${height}x${width}`;
    const hit = this.models.get(key);
    if (hit) return hit;
    const model = buildBackbone(this.spec.backbone, height, width);
    applyWeights(model, this.spec.weights);
    if (this.models.size >= MODEL_CACHE_CAP) {
      const [oldKey, oldModel] = this.models.entries().next().value as [string, tf.LayersModel];
      oldModel.dispose();
      this.models.delete(oldKey);
    }
    this.models.set(key, model);
    return model;
  }

  /** null when the file is not a decodable image. */
  extractImage(imagePath: string, outDir: string): ProducedFile[] | null {
    const image = decodeImage(fs.readFileSync(imagePath));
    if (image === null) return null;
    const imageId = path.basename(imagePath).replace(/\.[^.]*$/, '');
    const produced: ProducedFile[] = [];
    for (const resolution of this.spec.resolutions) {
      const [h, w] = scaledShape(image.height, image.width, resolution);
      const model = this.modelFor(h, w);
      const output = tf.tidy(() => {
        const raw = tf.tensor3d(image.data, [image.height, image.width, 3], 'float32');
        const resized = tf.image.resizeBilinear(raw, [h, w], false, true);
        const batch = preprocess(this.spec.backbone, resized).expandDims(0);
        return (model.predict(batch) as tf.Tensor).squeeze([0]) as tf.Tensor3D;
      });
      const [gridH, gridW, depth] = output.shape;
      const data = Float32Array.from(output.dataSync());
      output.dispose();
      for (const v of data) {
        if (!Number.isFinite(v)) {
          throw new NumericalError(`non-finite activation for ${imageId} at ${resolution}px`);
        }
      }
      const grid: Grid = { height: gridH, width: gridW, depth, data };
      normalizePerLocation(grid);
      const file = descFilename(imageId, resolution);
      writeGridAtomic(path.join(outDir, file), grid);
      produced.push({ imageId, pixels: resolution, file, gridHeight: gridH, gridWidth: gridW, depth });
    }
    return produced;
  }

  dispose(): void {
    for (const model of this.models.values()) model.dispose();
    this.models.clear();
  }
}

export function writeManifest(outDir: string, rows: ProducedFile[]): string {
  const header = 'image_id\tpixels\tfile\tgrid_height\tgrid_width\tdepth\tinterpolation';
  const sorted = [...rows].sort((a, b) =>
    a.imageId < b.imageId ? -1 : a.imageId > b.imageId ? 1 : a.pixels - b.pixels);
  const lines = sorted.map(r =>
    `${r.imageId}\t${r.pixels}\t${r.file}\t${r.gridHeight}\t${r.gridWidth}\t${r.depth}\t${INTERPOLATION}`);
  const text = [header, ...lines].join('\n') + '\n';
  const manifestPath = path.join(outDir, 'manifest.tsv');
  const tmp = manifestPath + `.tmp-${process.pid}`;
  fs.writeFileSync(tmp, text);
  fs.renameSync(tmp, manifestPath);
  return manifestPath;
}
