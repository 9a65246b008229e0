export { augmentImage, flipHorizontal, variantSeed, DEFAULT_NOISE_FRACTION, FLIP_PROBABILITY } from "./augment.js";
export {
  loadBackbone,
  MissingWeightsError,
  OnnxBackbone,
  SyntheticBackbone,
} from "./backbone.js";
export type { TokenBackbone } from "./backbone.js";
export {
  encodeEmbeddingFile,
  readEmbeddingFile,
  writeEmbeddingFile,
  FormatError,
  FLAG_HAS_VARIANTS,
  FORMAT_VERSION,
  HEADER_SIZE,
  MAGIC,
} from "./format.js";
export type { EmbeddingRecord, FileHeader } from "./format.js";
export { decodePng, decodePpm, loadImage, resizeBilinear, UnreadableImageError } from "./image.js";
export type { RgbImage } from "./image.js";
export { extractLayers, scanDataset, JOB_DEFAULTS } from "./extract.js";
export type { ExtractionJob, ExtractionResult } from "./extract.js";
export { poolTokens } from "./pool.js";
export { deriveStreamSeed, mix64, Xoshiro256StarStar } from "./rng.js";
