import * as tf from '@tensorflow/tfjs';
import * as fs from 'fs';
import * as path from 'path';
import { KeyedRng } from './rng';

export type BackboneName = 'vgg16_block5' | 'mobilenet_block11';

export const BACKBONE_NAMES: BackboneName[] = ['vgg16_block5', 'mobilenet_block11'];

/** Channel count of the feature map both cuts produce. */
export const OUTPUT_DEPTH = 512;

const VGG_BLOCKS = [
  [64, 64],
  [128, 128],
  [256, 256, 256],
  [512, 512, 512],
  [512, 512, 512],
];

// MobileNet v1 width 1.0, depthwise block (pointwise filters, stride) pairs.
const MOBILENET_BLOCKS: Array<[number, number]> = [
  [64, 1],
  [128, 2],
  [128, 1],
  [256, 2],
  [256, 1],
  [512, 2],
  [512, 1],
  [512, 1],
  [512, 1],
  [512, 1],
  [512, 1],
];

/**
 * VGG16 up to and including conv5_3, pool5 excluded.
 * Four 2x2 poolings, so the map is floor(h/16) x floor(w/16) x 512.
 */
function buildVgg16Block5(height: number, width: number): tf.LayersModel {
  const model = tf.sequential();
  let first = true;
  VGG_BLOCKS.forEach((filters, b) => {
    filters.forEach((nFilters, i) => {
      model.add(tf.layers.conv2d({
        ...(first ? { inputShape: [height, width, 3] } : {}),
        name: `conv${b + 1}_${i + 1}`,
        filters: nFilters,
        kernelSize: 3,
        padding: 'same',
        activation: 'relu',
      }));
      first = false;
    });
    if (b < VGG_BLOCKS.length - 1) {
      model.add(tf.layers.maxPooling2d({ name: `pool${b + 1}`, poolSize: 2, strides: 2 }));
    }
  });
  return model;
}

/**
 * MobileNet v1 up to depthwise block 11.
 * Stride-2 layers at conv1 and blocks 2, 4, 6 give ceil(h/16) x ceil(w/16) x 512.
 */
function buildMobilenetBlock11(height: number, width: number): tf.LayersModel {
  const model = tf.sequential();
  const bnRelu = (name: string) => {
    model.add(tf.layers.batchNormalization({ name: `${name}_bn` }));
    model.add(tf.layers.activation({ name: `${name}_relu`, activation: 'relu6' }));
  };
  model.add(tf.layers.conv2d({
    inputShape: [height, width, 3],
    name: 'conv1',
    filters: 32,
    kernelSize: 3,
    strides: 2,
    padding: 'same',
    useBias: false,
  }));
  bnRelu('conv1');
  MOBILENET_BLOCKS.forEach(([filters, stride], i) => {
    model.add(tf.layers.depthwiseConv2d({
      name: `conv_dw_${i + 1}`,
      kernelSize: 3,
      strides: stride,
      padding: 'same',
      useBias: false,
    }));
    bnRelu(`conv_dw_${i + 1}`);
    model.add(tf.layers.conv2d({
      name: `conv_pw_${i + 1}`,
      filters,
      kernelSize: 1,
      padding: 'same',
      useBias: false,
    }));
    bnRelu(`conv_pw_${i + 1}`);
  });
  return model;
}

export function buildBackbone(name: BackboneName, height: number, width: number): tf.LayersModel {
  switch (name) {
    case 'vgg16_block5': return buildVgg16Block5(height, width);
    case 'mobilenet_block11': return buildMobilenetBlock11(height, width);
  }
}

export function gridShapeFor(name: BackboneName, height: number, width: number): [number, number] {
  if (name === 'vgg16_block5') {
    return [Math.floor(height / 16), Math.floor(width / 16)];
  }
  return [Math.ceil(height / 16), Math.ceil(width / 16)];
}

/** Map pixel values in [0, 255] to what the backbone was trained on. */
export function preprocess(name: BackboneName, image: tf.Tensor3D): tf.Tensor3D {
  if (name === 'vgg16_block5') {
    // caffe convention: BGR channel order, per-channel mean subtraction
    return tf.tidy(() => {
      const [r, g, b] = tf.split(image, 3, 2);
      return tf.concat([b.sub(103.939), g.sub(116.779), r.sub(123.68)], 2) as tf.Tensor3D;
    });
  }
  return tf.tidy(() => image.div(127.5).sub(1) as tf.Tensor3D);
}

const WEIGHT_ROLES: Record<string, string[]> = {
  Conv2D: ['kernel', 'bias'],
  DepthwiseConv2D: ['kernel', 'bias'],
  BatchNormalization: ['gamma', 'beta', 'moving_mean', 'moving_variance'],
};

function roleOf(layer: tf.layers.Layer, index: number): string {
  const roles = WEIGHT_ROLES[layer.getClassName()];
  if (!roles || index >= roles.length) {
    throw new Error(`unexpected weight ${index} on layer ${layer.name} (${layer.getClassName()})`);
  }
  return roles[index];
}

function seededValues(rng: KeyedRng, layer: tf.layers.Layer, role: string, shape: number[]): Float32Array {
  const n = shape.reduce((a, b) => a * b, 1);
  const key = `${layer.name}/${role}`;
  switch (role) {
    case 'kernel': {
      // He scaling keeps activations finite through the deep relu stack
      const fanIn = layer.getClassName() === 'DepthwiseConv2D'
        ? shape[0] * shape[1]
        : shape[0] * shape[1] * shape[2];
      return rng.normal(key, n, Math.sqrt(2 / fanIn));
    }
    case 'gamma': return rng.uniform(key, n, 0.9, 1.1);
    case 'moving_variance': return rng.uniform(key, n, 0.5, 1.5);
    default: return rng.normal(key, n, 0.01);
  }
}

/**
 * Fill every weight from streams keyed by layer name and role, so the same
 * seed gives the same network at any input size.
 */
export function applySeededWeights(model: tf.LayersModel, seed: number): void {
  const rng = new KeyedRng(seed);
  for (const layer of model.layers) {
    const current = layer.getWeights();
    if (current.length === 0) continue;
    const filled = current.map((w, i) => {
      const values = seededValues(rng, layer, roleOf(layer, i), w.shape);
      return tf.tensor(values, w.shape);
    });
    layer.setWeights(filled);
    filled.forEach(t => t.dispose());
  }
}

/**
 * Load weights from a directory of raw little-endian f32 files named
 * `<layer>.<role>.bin`, for example `conv1_1.kernel.bin`.
 */
export function applyWeightsFromDir(model: tf.LayersModel, dir: string): void {
  if (!fs.existsSync(dir) || !fs.statSync(dir).isDirectory()) {
    throw new MissingWeightsError(`weights directory not found: ${dir}`);
  }
  for (const layer of model.layers) {
    const current = layer.getWeights();
    if (current.length === 0) continue;
    const filled = current.map((w, i) => {
      const file = path.join(dir, `${layer.name}.${roleOf(layer, i)}.bin`);
      if (!fs.existsSync(file)) {
        throw new MissingWeightsError(`missing weight file: ${file}`);
      }
      const raw = fs.readFileSync(file);
      const n = w.shape.reduce((a, b) => a * b, 1);
      if (raw.length !== 4 * n) {
        throw new MissingWeightsError(`${file}: ${raw.length} bytes, expected ${4 * n}`);
      }
      const values = new Float32Array(raw.buffer, raw.byteOffset, n);
      return tf.tensor(Float32Array.from(values), w.shape);
    });
    layer.setWeights(filled);
    filled.forEach(t => t.dispose());
  }
}

export class MissingWeightsError extends Error {}

export interface WeightSource {
  kind: 'seeded' | 'dir';
  seed?: number;
  dir?: string;
}

/** `seeded:<n>` or `dir:<path>`. */
export function parseWeightSource(spec: string): WeightSource {
  const m = /^seeded:(\d+)$/.exec(spec);
  if (m) return { kind: 'seeded', seed: Number(m[1]) };
  if (spec.startsWith('dir:') && spec.length > 4) {
    return { kind: 'dir', dir: spec.slice(4) };
  }
  throw new Error(`bad weights spec: ${spec} (expected seeded:<n> or dir:<path>)`);
}

export function applyWeights(model: tf.LayersModel, source: WeightSource): void {
  if (source.kind === 'seeded') applySeededWeights(model, source.seed as number);
  else applyWeightsFromDir(model, source.dir as string);
}
