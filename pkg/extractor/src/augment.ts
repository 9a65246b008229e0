/**
 * Support-set augmentation: a horizontal flip with probability 0.5 followed
 * by zero-mean uniform pixel noise with amplitude equal to a fraction of the
 * dynamic range, both driven by one variant seed. Values stay in [0, 1].
 */

import { RgbImage } from "./image.js";
import { Xoshiro256StarStar, deriveStreamSeed } from "./rng.js";

export const DEFAULT_NOISE_FRACTION = 0.001;
export const FLIP_PROBABILITY = 0.5;

/** Seed for one (item, variant) augmentation, derived from the job seed. */
export function variantSeed(jobSeed: bigint, itemId: bigint, variantId: bigint): bigint {
  return deriveStreamSeed(deriveStreamSeed(jobSeed, itemId), variantId);
}

export function flipHorizontal(image: RgbImage): RgbImage {
  const out = new Float32Array(image.data.length);
  for (let y = 0; y < image.height; y++) {
    for (let x = 0; x < image.width; x++) {
      const src = (y * image.width + x) * 3;
      const dst = (y * image.width + (image.width - 1 - x)) * 3;
      out[dst] = image.data[src];
      out[dst + 1] = image.data[src + 1];
      out[dst + 2] = image.data[src + 2];
    }
  }
  return { width: image.width, height: image.height, data: out };
}

export function augmentImage(
  image: RgbImage,
  seed: bigint,
  noiseFraction: number = DEFAULT_NOISE_FRACTION
): RgbImage {
  const rng = new Xoshiro256StarStar(seed);
  const flipRoll = rng.random();
  let out = flipRoll < FLIP_PROBABILITY ? flipHorizontal(image) : {
    width: image.width,
    height: image.height,
    data: image.data.slice(),
  };
  const amplitude = noiseFraction * 1.0; // dynamic range of [0, 1] pixels
  if (amplitude > 0) {
    const data = out.data;
    for (let i = 0; i < data.length; i++) {
      const noisy = data[i] + rng.uniformSigned(amplitude);
      data[i] = noisy < 0 ? 0 : noisy > 1 ? 1 : noisy;
    }
  }
  return out;
}
