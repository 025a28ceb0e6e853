import seedrandom from 'seedrandom';

/**
 * Deterministic value streams for filling network weights.
 * Each stream is keyed by a string, so the values a weight receives do not
 * depend on the order weights are enumerated in.
 */
export class KeyedRng {
  constructor(private readonly seed: number) {}

  private stream(key: string): seedrandom.PRNG {
    return seedrandom(`${this.seed}:${key}`);
  }

  /** Standard normal samples via Box-Muller. */
  normal(key: string, n: number, std = 1): Float32Array {
    const rng = this.stream(key);
    const out = new Float32Array(n);
    for (let i = 0; i < n; i += 2) {
      const u = 1 - rng();
      const v = rng();
      const r = Math.sqrt(-2 * Math.log(u));
      out[i] = r * Math.cos(2 * Math.PI * v) * std;
      if (i + 1 < n) out[i + 1] = r * Math.sin(2 * Math.PI * v) * std;
    }
    return out;
  }

  uniform(key: string, n: number, lo: number, hi: number): Float32Array {
    const rng = this.stream(key);
    const out = new Float32Array(n);
    for (let i = 0; i < n; i++) out[i] = lo + (hi - lo) * rng();
    return out;
  }
}
