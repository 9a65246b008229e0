/**
 * Token backbones. A backbone turns one preprocessed image into per-layer
 * token matrices (tokensPerItem x featureDim).
 *
 * Two providers ship:
 *  - `synthetic`: a deterministic, pixel-sensitive featurizer with the same
 *    token geometry as a patch transformer (grid patches + a summary token).
 *    It needs no weights and exists for format validation, pipeline tests,
 *    and cross-component checks.
 *  - `onnx:<path>`: a frozen vision transformer exported to ONNX with one
 *    output per requested block. Requires the optional onnxruntime-node
 *    package and a local weights file; both absent produce a clean
 *    MissingWeightsError.
 */

import { existsSync } from "node:fs";
import { RgbImage } from "./image.js";
import { Xoshiro256StarStar, mix64 } from "./rng.js";

export class MissingWeightsError extends Error {}

export interface TokenBackbone {
  readonly name: string;
  readonly depth: number;
  readonly featureDim: number;
  readonly tokensPerItem: number;
  /** Per requested layer id (1-based), a tokensPerItem x featureDim matrix
   * flattened row-major. */
  extractTokens(image: RgbImage, layers: number[]): Promise<Map<number, Float32Array>>;
}

export interface SyntheticConfig {
  featureDim: number;
  grid: number;
  depth: number;
}

const SYNTHETIC_COEFFICIENT_SEED = 0x5eedf00dn;

/**
 * Deterministic stand-in backbone. Per patch it measures channel means and a
 * contrast statistic, then maps them through layer-specific random (but
 * frozen) projections with depth-scaled gain and a tanh squash; the summary
 * token averages the patch statistics before projection, and the final layer
 * applies a token-wise normalization the way a post-backbone norm would.
 */
export class SyntheticBackbone implements TokenBackbone {
  readonly name: string;
  readonly depth: number;
  readonly featureDim: number;
  readonly tokensPerItem: number;
  private readonly grid: number;
  private readonly coefficients = new Map<number, Float64Array>();

  constructor(config: SyntheticConfig) {
    if (config.grid < 1 || config.featureDim < 1 || config.depth < 1) {
      throw new RangeError("synthetic backbone needs positive grid, dim, depth");
    }
    this.grid = config.grid;
    this.featureDim = config.featureDim;
    this.depth = config.depth;
    this.tokensPerItem = config.grid * config.grid + 1;
    this.name = `synthetic-g${config.grid}-d${config.featureDim}-L${config.depth}`;
  }

  private layerCoefficients(layer: number): Float64Array {
    let coefs = this.coefficients.get(layer);
    if (coefs === undefined) {
      coefs = new Float64Array(this.featureDim * 5);
      const rng = new Xoshiro256StarStar(
        mix64(SYNTHETIC_COEFFICIENT_SEED ^ BigInt(layer))
      );
      for (let i = 0; i < coefs.length; i++) {
        coefs[i] = 2.0 * rng.random() - 1.0;
      }
      this.coefficients.set(layer, coefs);
    }
    return coefs;
  }

  private patchStatistics(image: RgbImage): Float64Array {
    const g = this.grid;
    const stats = new Float64Array(g * g * 4); // meanR, meanG, meanB, contrast
    const patchW = image.width / g;
    const patchH = image.height / g;
    for (let py = 0; py < g; py++) {
      for (let px = 0; px < g; px++) {
        const x0 = Math.floor(px * patchW);
        const x1 = Math.max(Math.floor((px + 1) * patchW), x0 + 1);
        const y0 = Math.floor(py * patchH);
        const y1 = Math.max(Math.floor((py + 1) * patchH), y0 + 1);
        let sumR = 0, sumG = 0, sumB = 0, sumSq = 0, count = 0;
        for (let y = y0; y < y1; y++) {
          for (let x = x0; x < x1; x++) {
            const at = (y * image.width + x) * 3;
            const r = image.data[at];
            const gch = image.data[at + 1];
            const b = image.data[at + 2];
            sumR += r; sumG += gch; sumB += b;
            sumSq += r * r + gch * gch + b * b;
            count++;
          }
        }
        const base = (py * g + px) * 4;
        stats[base] = sumR / count;
        stats[base + 1] = sumG / count;
        stats[base + 2] = sumB / count;
        const meanSq = sumSq / (3 * count);
        const mean = (stats[base] + stats[base + 1] + stats[base + 2]) / 3;
        stats[base + 3] = Math.sqrt(Math.max(meanSq - mean * mean, 0));
      }
    }
    return stats;
  }

  async extractTokens(
    image: RgbImage,
    layers: number[]
  ): Promise<Map<number, Float32Array>> {
    for (const layer of layers) {
      if (layer < 1 || layer > this.depth) {
        throw new RangeError(`layer ${layer} outside backbone depth ${this.depth}`);
      }
    }
    const g = this.grid;
    const patches = this.patchStatistics(image);
    const summary = new Float64Array(4);
    for (let p = 0; p < g * g; p++) {
      for (let c = 0; c < 4; c++) summary[c] += patches[p * 4 + c];
    }
    for (let c = 0; c < 4; c++) summary[c] /= g * g;

    const out = new Map<number, Float32Array>();
    for (const layer of layers) {
      const coefs = this.layerCoefficients(layer);
      const gain = 2.0 * layer / this.depth;
      const tokens = new Float32Array(this.tokensPerItem * this.featureDim);
      for (let t = 0; t < this.tokensPerItem; t++) {
        const stat = t === 0 ? summary : patches.subarray((t - 1) * 4, t * 4);
        for (let j = 0; j < this.featureDim; j++) {
          const base = j * 5;
          const raw =
            coefs[base] * stat[0] +
            coefs[base + 1] * stat[1] +
            coefs[base + 2] * stat[2] +
            coefs[base + 3] * stat[3] +
            0.1 * coefs[base + 4];
          tokens[t * this.featureDim + j] = Math.tanh(gain * raw);
        }
      }
      if (layer === this.depth) {
        // post-backbone norm: standardize each token vector
        for (let t = 0; t < this.tokensPerItem; t++) {
          let mean = 0;
          for (let j = 0; j < this.featureDim; j++) mean += tokens[t * this.featureDim + j];
          mean /= this.featureDim;
          let variance = 0;
          for (let j = 0; j < this.featureDim; j++) {
            const d = tokens[t * this.featureDim + j] - mean;
            variance += d * d;
          }
          const std = Math.sqrt(variance / this.featureDim) || 1;
          for (let j = 0; j < this.featureDim; j++) {
            const at = t * this.featureDim + j;
            tokens[at] = (tokens[at] - mean) / std;
          }
        }
      }
      out.set(layer, tokens);
    }
    return out;
  }
}

export interface OnnxConfig {
  modelPath: string;
  featureDim: number;
  tokensPerItem: number;
  depth: number;
}

/** Frozen ONNX vision transformer with per-block outputs named `layer_<i>`
 * (and `layer_<depth>` carrying the post-norm output). */
export class OnnxBackbone implements TokenBackbone {
  readonly name: string;
  readonly depth: number;
  readonly featureDim: number;
  readonly tokensPerItem: number;
  private readonly modelPath: string;
  private session: unknown = null;

  constructor(config: OnnxConfig) {
    this.modelPath = config.modelPath;
    this.featureDim = config.featureDim;
    this.tokensPerItem = config.tokensPerItem;
    this.depth = config.depth;
    this.name = `onnx:${config.modelPath}`;
  }

  private async ensureSession(): Promise<any> {
    if (this.session !== null) return this.session;
    if (!existsSync(this.modelPath)) {
      throw new MissingWeightsError(`backbone weights not found: ${this.modelPath}`);
    }
    let ort: any;
    try {
      ort = await import("onnxruntime-node");
    } catch {
      throw new MissingWeightsError(
        "onnxruntime-node is not installed; install it to run ONNX backbones"
      );
    }
    this.session = await ort.InferenceSession.create(this.modelPath);
    return this.session;
  }

  async extractTokens(
    image: RgbImage,
    layers: number[]
  ): Promise<Map<number, Float32Array>> {
    const session: any = await this.ensureSession();
    const ort: any = await import("onnxruntime-node");
    // NCHW float32 input, IMAGENET-style normalization
    const mean = [0.485, 0.456, 0.406];
    const std = [0.229, 0.224, 0.225];
    const side = image.width;
    const input = new Float32Array(3 * side * side);
    for (let c = 0; c < 3; c++) {
      for (let p = 0; p < side * side; p++) {
        input[c * side * side + p] = (image.data[p * 3 + c] - mean[c]) / std[c];
      }
    }
    const feeds = {
      [session.inputNames[0]]: new ort.Tensor("float32", input, [1, 3, side, side]),
    };
    const results = await session.run(feeds);
    const out = new Map<number, Float32Array>();
    for (const layer of layers) {
      const key = `layer_${layer}`;
      const tensor = results[key];
      if (tensor === undefined) {
        throw new MissingWeightsError(`model has no output named ${key}`);
      }
      out.set(layer, tensor.data as Float32Array);
    }
    return out;
  }
}

/** Parse a backbone spec: `synthetic[:key=value,...]` or `onnx:<path>[:...]`. */
export function loadBackbone(spec: string): TokenBackbone {
  const [kind, ...rest] = spec.split(":");
  if (kind === "synthetic") {
    const options = new Map<string, number>();
    if (rest.length > 0 && rest[0].length > 0) {
      for (const pair of rest[0].split(",")) {
        const [key, value] = pair.split("=");
        options.set(key, parseInt(value, 10));
      }
    }
    return new SyntheticBackbone({
      featureDim: options.get("dim") ?? 1024,
      grid: options.get("grid") ?? 16,
      depth: options.get("depth") ?? 24,
    });
  }
  if (kind === "onnx") {
    if (rest.length === 0 || rest[0].length === 0) {
      throw new MissingWeightsError("onnx backbone needs a model path: onnx:<path>");
    }
    const options = new Map<string, number>();
    if (rest.length > 1) {
      for (const pair of rest[1].split(",")) {
        const [key, value] = pair.split("=");
        options.set(key, parseInt(value, 10));
      }
    }
    return new OnnxBackbone({
      modelPath: rest[0],
      featureDim: options.get("dim") ?? 1024,
      tokensPerItem: options.get("tokens") ?? 257,
      depth: options.get("depth") ?? 24,
    });
  }
  throw new RangeError(`unknown backbone kind: ${kind}`);
}
