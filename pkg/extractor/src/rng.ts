/**
 * Seedable, platform-independent randomness: a SplitMix64 finalizer for
 * deriving per-stream seeds and xoshiro256** for the streams. All state is
 * unsigned 64-bit (BigInt), so integer draws are exact and reproducible
 * across runtimes and languages.
 */

const MASK64 = (1n << 64n) - 1n;
const GOLDEN = 0x9e3779b97f4a7c15n;

export function mix64(value: bigint): bigint {
  let z = (value + GOLDEN) & MASK64;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
  return z ^ (z >> 31n);
}

/** Per-stream seed from a master seed and a counter; distinct counters are
 * guaranteed distinct outputs. */
export function deriveStreamSeed(masterSeed: bigint, streamIndex: bigint): bigint {
  return mix64(mix64(masterSeed & MASK64) ^ ((streamIndex + GOLDEN) & MASK64));
}

function rotl(x: bigint, k: bigint): bigint {
  return ((x << k) | (x >> (64n - k))) & MASK64;
}

export class Xoshiro256StarStar {
  private s: [bigint, bigint, bigint, bigint];

  constructor(seed: bigint) {
    let state = seed & MASK64;
    const s: bigint[] = [];
    for (let i = 0; i < 4; i++) {
      state = (state + GOLDEN) & MASK64;
      s.push(mix64(state));
    }
    if (!s.some((w) => w !== 0n)) {
      s[0] = GOLDEN;
    }
    this.s = [s[0], s[1], s[2], s[3]];
  }

  nextU64(): bigint {
    let [s0, s1, s2, s3] = this.s;
    const result = (rotl((s1 * 5n) & MASK64, 7n) * 9n) & MASK64;
    const t = (s1 << 17n) & MASK64;
    s2 ^= s0;
    s3 ^= s1;
    s1 ^= s2;
    s0 ^= s3;
    s2 ^= t;
    s3 = rotl(s3, 45n);
    this.s = [s0, s1, s2, s3];
    return result;
  }

  /** Uniform double in [0, 1) with 53 bits of precision. */
  random(): number {
    return Number(this.nextU64() >> 11n) * 2 ** -53;
  }

  /** Unbiased uniform integer in [0, n) by rejection sampling. */
  randBelow(n: number): number {
    if (n <= 0) throw new RangeError("randBelow() requires n >= 1");
    const big = BigInt(n);
    const limit = ((1n << 64n) / big) * big;
    for (;;) {
      const r = this.nextU64();
      if (r < limit) return Number(r % big);
    }
  }

  /** Uniform double in [-amplitude, +amplitude]. */
  uniformSigned(amplitude: number): number {
    return (2.0 * this.random() - 1.0) * amplitude;
  }
}
