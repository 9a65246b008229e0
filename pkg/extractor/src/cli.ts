#!/usr/bin/env node
/**
 * Extractor command line.
 *
 *   extract --dataset <dir> --split <s> --layers 1..24 --variants 4
 *           --seed N --out <dir> [--backbone synthetic|onnx:<path>]
 *           [--image-size 224] [--noise 0.001] [--token-output]
 *
 * Exit codes: 2 invalid flags, 3 data errors (unreadable images, missing
 * weights), 1 anything else.
 */

import { loadBackbone, MissingWeightsError } from "./backbone.js";
import { extractLayers, JOB_DEFAULTS } from "./extract.js";
import { UnreadableImageError } from "./image.js";

function parseLayers(text: string): number[] {
  if (text.includes("..")) {
    const [start, end] = text.split("..").map((part) => parseInt(part, 10));
    if (!Number.isInteger(start) || !Number.isInteger(end) || end < start) {
      throw new RangeError(`bad layer range: ${text}`);
    }
    return Array.from({ length: end - start + 1 }, (_, i) => start + i);
  }
  return text.split(",").map((part) => {
    const value = parseInt(part, 10);
    if (!Number.isInteger(value)) throw new RangeError(`bad layer list: ${text}`);
    return value;
  });
}

function parseFlags(argv: string[]): Map<string, string | boolean> {
  const flags = new Map<string, string | boolean>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) throw new RangeError(`unexpected argument: ${arg}`);
    const name = arg.slice(2);
    if (name === "token-output") {
      flags.set(name, true);
    } else {
      const value = argv[i + 1];
      if (value === undefined) throw new RangeError(`flag --${name} needs a value`);
      flags.set(name, value);
      i++;
    }
  }
  return flags;
}

function required(flags: Map<string, string | boolean>, name: string): string {
  const value = flags.get(name);
  if (typeof value !== "string") throw new RangeError(`missing required flag --${name}`);
  return value;
}

export async function main(argv: string[]): Promise<number> {
  if (argv.length === 0 || argv[0] !== "extract") {
    process.stderr.write("usage: embedding-extractor extract --dataset <dir> --split <s> " +
      "--layers 1..24 --variants 4 --seed N --out <dir>\n");
    return 2;
  }
  let flags: Map<string, string | boolean>;
  try {
    flags = parseFlags(argv.slice(1));
    const backbone = loadBackbone(
      (flags.get("backbone") as string | undefined) ?? "synthetic"
    );
    const job = {
      datasetRoot: required(flags, "dataset"),
      split: required(flags, "split"),
      layers: parseLayers(required(flags, "layers")),
      outDir: required(flags, "out"),
      backbone,
      imageSize: parseInt((flags.get("image-size") as string) ?? String(JOB_DEFAULTS.imageSize), 10),
      variantsPerImage: parseInt((flags.get("variants") as string) ?? String(JOB_DEFAULTS.variantsPerImage), 10),
      noiseFraction: parseFloat((flags.get("noise") as string) ?? String(JOB_DEFAULTS.noiseFraction)),
      seed: BigInt(required(flags, "seed")),
      tokenOutput: flags.get("token-output") === true,
      batchSize: JOB_DEFAULTS.batchSize,
    };
    const result = await extractLayers(job);
    process.stdout.write(
      `${result.recordCount} records (${result.itemCount} items x ` +
        `${job.variantsPerImage + 1} variants) across ${result.layerFiles.size} layers\n`
    );
    process.stdout.write(`manifest: ${result.manifestPath}\n`);
    return 0;
  } catch (error) {
    if (error instanceof RangeError) {
      process.stderr.write(`error: invalid: ${error.message}\n`);
      return 2;
    }
    if (error instanceof MissingWeightsError || error instanceof UnreadableImageError) {
      process.stderr.write(`error: data: ${error.message}\n`);
      return 3;
    }
    process.stderr.write(`error: ${(error as Error).message}\n`);
    return 1;
  }
}

const isDirectRun = process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (isDirectRun) {
  main(process.argv.slice(2)).then((code) => process.exit(code));
}
