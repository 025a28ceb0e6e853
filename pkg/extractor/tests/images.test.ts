import { describe, it, expect } from 'vitest';
import { decodeImage, scaledShape } from '../src/images';
import { pngBytes, jpegBytes, gradient } from './helpers';

describe('image decoding', () => {
  it('decodes png to rgb bytes', () => {
    const img = decodeImage(pngBytes(4, 3, (x, y) => [x * 10, y * 20, 7]));
    expect(img).not.toBeNull();
    expect(img!.width).toBe(4);
    expect(img!.height).toBe(3);
    expect(img!.data.length).toBe(4 * 3 * 3);
    expect(img!.data[0]).toBe(0);
    expect(img!.data[3]).toBe(10);
    expect(img!.data[2]).toBe(7);
  });

  it('decodes jpeg near the encoded values', () => {
    const img = decodeImage(jpegBytes(16, 16, () => [200, 100, 50]));
    expect(img).not.toBeNull();
    expect(img!.width).toBe(16);
    expect(Math.abs(img!.data[0] - 200)).toBeLessThan(16);
  });

  it('returns null for bytes that are not an image', () => {
    expect(decodeImage(Buffer.from('just some text'))).toBeNull();
    expect(decodeImage(Buffer.from([0x89, 0x50, 0x4e, 0x47, 1, 2, 3, 4, 5]))).toBeNull();
  });
});

describe('aspect preserving resize targets', () => {
  it('scales the longer side to the resolution', () => {
    expect(scaledShape(1000, 500, 512)).toEqual([512, 256]);
    expect(scaledShape(500, 1000, 512)).toEqual([256, 512]);
    expect(scaledShape(512, 512, 512)).toEqual([512, 512]);
    expect(scaledShape(100, 50, 64)).toEqual([64, 32]);
  });

  it('rounds the shorter side', () => {
    expect(scaledShape(300, 200, 512)).toEqual([512, 341]);
  });

  it('clamps extreme ratios so a feature row survives', () => {
    expect(scaledShape(6400, 100, 512)).toEqual([512, 16]);
  });

  it('upscales small inputs', () => {
    expect(scaledShape(32, 64, 128)).toEqual([64, 128]);
  });
});
