/**
 * Binary embedding file format, byte-compatible with the evaluation
 * package's reader:
 *
 *   header (32 bytes, little-endian):
 *     magic "FEB1", format_version u32, feature_dim u32, item_count u64,
 *     class_count u32, layer_id u16, tokens_per_item u32, flags u16
 *   records sorted by (class_label, item_id, variant_id):
 *     item_id u64, class_label u32, variant_id u16, 2 zero bytes,
 *     tokens_per_item x feature_dim float32, row-major
 */

import { writeFileSync, readFileSync } from "node:fs";

export const MAGIC = "FEB1";
export const FORMAT_VERSION = 1;
export const FLAG_HAS_VARIANTS = 0x1;
export const HEADER_SIZE = 32;
const RECORD_PREFIX_SIZE = 16;

export interface FileHeader {
  featureDim: number;
  itemCount: number;
  classCount: number;
  layerId: number;
  tokensPerItem: number;
  flags: number;
}

export interface EmbeddingRecord {
  itemId: number;
  classLabel: number;
  variantId: number;
  /** tokensPerItem * featureDim values, row-major */
  tokens: Float32Array;
}

export class FormatError extends Error {}

export function recordSize(header: FileHeader): number {
  return RECORD_PREFIX_SIZE + 4 * header.tokensPerItem * header.featureDim;
}

function validateHeader(header: FileHeader): void {
  if (header.featureDim <= 0) throw new FormatError("feature_dim must be positive");
  if (header.itemCount <= 0) throw new FormatError("item_count must be positive");
  if (header.classCount <= 0) throw new FormatError("class_count must be positive");
  if (header.tokensPerItem < 1) throw new FormatError("tokens_per_item must be >= 1");
  if (header.layerId < 1) throw new FormatError("layer_id must be >= 1");
}

export function packHeader(header: FileHeader): Buffer {
  validateHeader(header);
  const buf = Buffer.alloc(HEADER_SIZE);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(FORMAT_VERSION, 4);
  buf.writeUInt32LE(header.featureDim, 8);
  buf.writeBigUInt64LE(BigInt(header.itemCount), 12);
  buf.writeUInt32LE(header.classCount, 20);
  buf.writeUInt16LE(header.layerId, 24);
  buf.writeUInt32LE(header.tokensPerItem, 26);
  buf.writeUInt16LE(header.flags, 30);
  return buf;
}

function compareRecords(a: EmbeddingRecord, b: EmbeddingRecord): number {
  return (
    a.classLabel - b.classLabel || a.itemId - b.itemId || a.variantId - b.variantId
  );
}

export function encodeEmbeddingFile(
  header: FileHeader,
  records: EmbeddingRecord[]
): Buffer {
  validateHeader(header);
  if (records.length !== header.itemCount) {
    throw new FormatError(
      `header declares ${header.itemCount} records, got ${records.length}`
    );
  }
  const sorted = [...records].sort(compareRecords);
  const payloadValues = header.tokensPerItem * header.featureDim;
  const size = HEADER_SIZE + records.length * recordSize(header);
  const buf = Buffer.alloc(size);
  packHeader(header).copy(buf, 0);
  let offset = HEADER_SIZE;
  for (const record of sorted) {
    if (record.tokens.length !== payloadValues) {
      throw new FormatError(
        `record ${record.itemId} has ${record.tokens.length} values, expected ${payloadValues}`
      );
    }
    if (record.classLabel >= header.classCount) {
      throw new FormatError(
        `class_label ${record.classLabel} out of range for class_count ${header.classCount}`
      );
    }
    if (record.variantId !== 0 && !(header.flags & FLAG_HAS_VARIANTS)) {
      throw new FormatError("non-zero variant_id in a file without the variants flag");
    }
    buf.writeBigUInt64LE(BigInt(record.itemId), offset);
    buf.writeUInt32LE(record.classLabel, offset + 8);
    buf.writeUInt16LE(record.variantId, offset + 12);
    // two padding bytes stay zero
    offset += RECORD_PREFIX_SIZE;
    for (let i = 0; i < payloadValues; i++) {
      const value = record.tokens[i];
      if (!Number.isFinite(value)) {
        throw new FormatError(`non-finite value in record ${record.itemId}`);
      }
      buf.writeFloatLE(value, offset);
      offset += 4;
    }
  }
  return buf;
}

export function writeEmbeddingFile(
  header: FileHeader,
  records: EmbeddingRecord[],
  path: string
): void {
  writeFileSync(path, encodeEmbeddingFile(header, records));
}

export interface DecodedFile {
  header: FileHeader;
  records: EmbeddingRecord[];
}

/** Reader used by the extractor's own tests; the evaluation package is the
 * authoritative consumer. */
export function readEmbeddingFile(path: string): DecodedFile {
  const raw = readFileSync(path);
  if (raw.length < HEADER_SIZE) throw new FormatError("truncated header");
  if (raw.subarray(0, 4).toString("ascii") !== MAGIC) {
    throw new FormatError(`bad magic ${raw.subarray(0, 4).toString("ascii")}`);
  }
  const version = raw.readUInt32LE(4);
  if (version !== FORMAT_VERSION) throw new FormatError(`unsupported version ${version}`);
  const header: FileHeader = {
    featureDim: raw.readUInt32LE(8),
    itemCount: Number(raw.readBigUInt64LE(12)),
    classCount: raw.readUInt32LE(20),
    layerId: raw.readUInt16LE(24),
    tokensPerItem: raw.readUInt32LE(26),
    flags: raw.readUInt16LE(30),
  };
  validateHeader(header);
  const expected = HEADER_SIZE + header.itemCount * recordSize(header);
  if (raw.length !== expected) {
    throw new FormatError(
      `truncated or oversized payload: expected ${expected} bytes, got ${raw.length}`
    );
  }
  const payloadValues = header.tokensPerItem * header.featureDim;
  const records: EmbeddingRecord[] = [];
  let offset = HEADER_SIZE;
  for (let i = 0; i < header.itemCount; i++) {
    const itemId = Number(raw.readBigUInt64LE(offset));
    const classLabel = raw.readUInt32LE(offset + 8);
    const variantId = raw.readUInt16LE(offset + 12);
    offset += RECORD_PREFIX_SIZE;
    const tokens = new Float32Array(payloadValues);
    for (let v = 0; v < payloadValues; v++) {
      tokens[v] = raw.readFloatLE(offset);
      offset += 4;
    }
    records.push({ itemId, classLabel, variantId, tokens });
  }
  return { header, records };
}
