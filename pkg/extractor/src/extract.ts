/**
 * Extraction jobs: walk an image-folder dataset (one directory per class),
 * preprocess each image, append augmented variants for the support-side
 * augmentation protocol, run the backbone, and emit one embedding file per
 * requested layer plus the dataset manifest.
 */

import { readdirSync, statSync, writeFileSync, mkdirSync } from "node:fs";
import { basename, join } from "node:path";

import { augmentImage, variantSeed, DEFAULT_NOISE_FRACTION } from "./augment.js";
import { TokenBackbone } from "./backbone.js";
import {
  EmbeddingRecord,
  FLAG_HAS_VARIANTS,
  FileHeader,
  writeEmbeddingFile,
} from "./format.js";
import { RgbImage, loadImage, resizeBilinear } from "./image.js";
import { poolTokens } from "./pool.js";

export interface ExtractionJob {
  datasetRoot: string;
  split: string;
  layers: number[];
  outDir: string;
  backbone: TokenBackbone;
  imageSize: number;
  variantsPerImage: number;
  noiseFraction: number;
  seed: bigint;
  tokenOutput: boolean;
  batchSize: number;
}

export const JOB_DEFAULTS = {
  imageSize: 224,
  variantsPerImage: 4,
  noiseFraction: DEFAULT_NOISE_FRACTION,
  tokenOutput: false,
  batchSize: 16,
};

export interface ExtractionResult {
  manifestPath: string;
  layerFiles: Map<number, string>;
  tokenFiles: Map<number, string>;
  itemCount: number;
  recordCount: number;
  classNames: string[];
}

const IMAGE_EXTENSIONS = new Set([".png", ".ppm", ".pgm"]);

interface DatasetEntry {
  itemId: number;
  classLabel: number;
  path: string;
}

export function scanDataset(root: string, split: string): {
  entries: DatasetEntry[];
  classNames: string[];
} {
  const splitDir = join(root, split);
  let classDirs: string[];
  try {
    classDirs = readdirSync(splitDir)
      .filter((name) => statSync(join(splitDir, name)).isDirectory())
      .sort();
  } catch (error) {
    throw new Error(`cannot scan dataset split ${splitDir}: ${(error as Error).message}`);
  }
  if (classDirs.length === 0) {
    throw new Error(`no class directories under ${splitDir}`);
  }
  const entries: DatasetEntry[] = [];
  let itemId = 0;
  classDirs.forEach((className, classLabel) => {
    const files = readdirSync(join(splitDir, className))
      .filter((name) => IMAGE_EXTENSIONS.has(name.slice(name.lastIndexOf(".")).toLowerCase()))
      .sort();
    if (files.length === 0) {
      throw new Error(`class directory ${className} has no images`);
    }
    for (const file of files) {
      entries.push({ itemId, classLabel, path: join(splitDir, className, file) });
      itemId++;
    }
  });
  return { entries, classNames: classDirs };
}

function writeManifest(
  path: string,
  dataset: string,
  split: string,
  backboneName: string,
  classNames: string[],
  layerFiles: Map<number, string>
): void {
  const lines = [
    "# embedding dataset manifest",
    `dataset = ${dataset}`,
    `split = ${split}`,
    `backbone = ${backboneName}`,
  ];
  classNames.forEach((name, index) => lines.push(`class ${index} = ${name}`));
  for (const layer of [...layerFiles.keys()].sort((a, b) => a - b)) {
    lines.push(`layer ${layer} = ${basename(layerFiles.get(layer)!)}`);
  }
  writeFileSync(path, lines.join("\n") + "\n", "utf-8");
}

export async function extractLayers(job: ExtractionJob): Promise<ExtractionResult> {
  const layers = [...new Set(job.layers)].sort((a, b) => a - b);
  if (layers.length === 0) throw new Error("no layers requested");
  for (const layer of layers) {
    if (layer < 1 || layer > job.backbone.depth) {
      throw new Error(`layer ${layer} outside backbone depth ${job.backbone.depth}`);
    }
  }
  if (job.variantsPerImage < 0) throw new Error("variants must be >= 0");
  const { entries, classNames } = scanDataset(job.datasetRoot, job.split);
  mkdirSync(job.outDir, { recursive: true });

  const dim = job.backbone.featureDim;
  const tokensPerItem = job.backbone.tokensPerItem;
  const pooledRecords = new Map<number, EmbeddingRecord[]>(layers.map((l) => [l, []]));
  const tokenRecords = new Map<number, EmbeddingRecord[]>(
    job.tokenOutput ? layers.map((l): [number, EmbeddingRecord[]] => [l, []]) : []
  );

  for (const entry of entries) {
    const original = resizeBilinear(loadImage(entry.path), job.imageSize);
    for (let variant = 0; variant <= job.variantsPerImage; variant++) {
      let view: RgbImage = original;
      if (variant > 0) {
        const seed = variantSeed(job.seed, BigInt(entry.itemId), BigInt(variant));
        view = augmentImage(original, seed, job.noiseFraction);
      }
      const perLayer = await job.backbone.extractTokens(view, layers);
      for (const layer of layers) {
        const tokens = perLayer.get(layer)!;
        pooledRecords.get(layer)!.push({
          itemId: entry.itemId,
          classLabel: entry.classLabel,
          variantId: variant,
          tokens: poolTokens(tokens, tokensPerItem, dim),
        });
        if (job.tokenOutput) {
          tokenRecords.get(layer)!.push({
            itemId: entry.itemId,
            classLabel: entry.classLabel,
            variantId: variant,
            tokens: tokens.slice(),
          });
        }
      }
    }
  }

  const dataset = basename(job.datasetRoot);
  const flags = job.variantsPerImage > 0 ? FLAG_HAS_VARIANTS : 0;
  const recordCount = entries.length * (job.variantsPerImage + 1);
  const layerFiles = new Map<number, string>();
  const tokenFiles = new Map<number, string>();
  for (const layer of layers) {
    const pooledHeader: FileHeader = {
      featureDim: dim,
      itemCount: recordCount,
      classCount: classNames.length,
      layerId: layer,
      tokensPerItem: 1,
      flags,
    };
    const layerName = `${dataset}_${job.split}_layer${String(layer).padStart(2, "0")}.feb`;
    const layerPath = join(job.outDir, layerName);
    writeEmbeddingFile(pooledHeader, pooledRecords.get(layer)!, layerPath);
    layerFiles.set(layer, layerPath);
    if (job.tokenOutput) {
      const tokenHeader: FileHeader = { ...pooledHeader, tokensPerItem };
      const tokenPath = join(
        job.outDir,
        `${dataset}_${job.split}_layer${String(layer).padStart(2, "0")}_tokens.feb`
      );
      writeEmbeddingFile(tokenHeader, tokenRecords.get(layer)!, tokenPath);
      tokenFiles.set(layer, tokenPath);
    }
  }

  const manifestPath = join(job.outDir, `${dataset}_${job.split}.manifest`);
  writeManifest(manifestPath, dataset, job.split, job.backbone.name, classNames, layerFiles);
  return {
    manifestPath,
    layerFiles,
    tokenFiles,
    itemCount: entries.length,
    recordCount,
    classNames,
  };
}
