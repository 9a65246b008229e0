"""Embedding file format, ingestion, and token pooling.

One file holds the labeled latent vectors of a single (dataset, split, layer)
triple. The layout is fixed so independent implementations can exchange
files byte-for-byte:

    header (32 bytes, little-endian):
        magic            4 bytes, ASCII "FEB1"
        format_version   u32 (currently 1)
        feature_dim      u32
        item_count       u64 (number of records)
        class_count      u32
        layer_id         u16
        tokens_per_item  u32 (1 = pre-pooled, N > 1 = raw tokens)
        flags            u16 (bit 0: file contains augmented variants)
    records, sorted by (class_label, item_id, variant_id):
        item_id          u64
        class_label      u32
        variant_id       u16
        padding          2 zero bytes
        tokens           tokens_per_item x feature_dim float32, row-major

A manifest is a human-readable sidecar naming the per-layer files of one
dataset split.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

MAGIC = b"FEB1"
FORMAT_VERSION = 1
FLAG_HAS_VARIANTS = 0x1

_HEADER_STRUCT = struct.Struct("<4sIIQIHIH")
HEADER_SIZE = _HEADER_STRUCT.size  # 32
_RECORD_PREFIX_SIZE = 16


@dataclass(frozen=True)
class EmbeddingFileHeader:
    feature_dim: int
    item_count: int
    class_count: int
    layer_id: int
    tokens_per_item: int = 1
    flags: int = 0
    format_version: int = FORMAT_VERSION

    def validate(self) -> None:
        if self.format_version != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {self.format_version}")
        if self.feature_dim <= 0:
            raise FormatError("feature_dim must be positive")
        if self.item_count <= 0:
            raise FormatError("item_count must be positive")
        if self.class_count <= 0:
            raise FormatError("class_count must be positive")
        if self.tokens_per_item < 1:
            raise FormatError("tokens_per_item must be >= 1")
        if self.layer_id < 1:
            raise FormatError("layer_id must be >= 1")
        if not 0 <= self.flags <= 0xFFFF:
            raise FormatError("flags out of u16 range")

    @property
    def has_variants(self) -> bool:
        return bool(self.flags & FLAG_HAS_VARIANTS)

    def record_size(self) -> int:
        return _RECORD_PREFIX_SIZE + 4 * self.tokens_per_item * self.feature_dim

    def pack(self) -> bytes:
        return _HEADER_STRUCT.pack(
            MAGIC,
            self.format_version,
            self.feature_dim,
            self.item_count,
            self.class_count,
            self.layer_id,
            self.tokens_per_item,
            self.flags,
        )

    @classmethod
    def unpack(cls, buf: bytes) -> "EmbeddingFileHeader":
        if len(buf) < HEADER_SIZE:
            raise FormatError(
                f"truncated header: expected {HEADER_SIZE} bytes, got {len(buf)}"
            )
        magic, version, dim, items, classes, layer, tokens, flags = _HEADER_STRUCT.unpack(
            buf[:HEADER_SIZE]
        )
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        header = cls(
            feature_dim=dim,
            item_count=items,
            class_count=classes,
            layer_id=layer,
            tokens_per_item=tokens,
            flags=flags,
            format_version=version,
        )
        header.validate()
        return header


@dataclass(frozen=True, eq=False)
class EmbeddingRecord:
    item_id: int
    class_label: int
    variant_id: int
    tokens: np.ndarray  # (tokens_per_item, feature_dim) float32

    def sort_key(self) -> tuple[int, int, int]:
        return (self.class_label, self.item_id, self.variant_id)

    def equals(self, other: "EmbeddingRecord") -> bool:
        return (
            self.item_id == other.item_id
            and self.class_label == other.class_label
            and self.variant_id == other.variant_id
            and np.array_equal(
                np.atleast_2d(np.asarray(self.tokens, dtype=np.float32)),
                np.atleast_2d(np.asarray(other.tokens, dtype=np.float32)),
            )
        )


def _record_dtype(header: EmbeddingFileHeader) -> np.dtype:
    return np.dtype(
        [
            ("item_id", "<u8"),
            ("class_label", "<u4"),
            ("variant_id", "<u2"),
            ("pad", "<u2"),
            ("tokens", "<f4", (header.tokens_per_item, header.feature_dim)),
        ]
    )


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Immutable, array-backed view of one embedding file."""

    header: EmbeddingFileHeader
    item_ids: np.ndarray  # (n,) u64
    class_labels: np.ndarray  # (n,) u32
    variant_ids: np.ndarray  # (n,) u16
    tokens: np.ndarray  # (n, tokens_per_item, feature_dim) f32
    class_names: tuple[str, ...] | None = None
    _pooled_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return int(self.header.item_count)

    @property
    def records(self) -> tuple[EmbeddingRecord, ...]:
        return tuple(
            EmbeddingRecord(
                item_id=int(self.item_ids[i]),
                class_label=int(self.class_labels[i]),
                variant_id=int(self.variant_ids[i]),
                tokens=self.tokens[i],
            )
            for i in range(len(self))
        )

    def pooled_vectors(self) -> np.ndarray:
        """Per-record global vectors: token average for token-level files."""
        cached = self._pooled_cache.get("pooled")
        if cached is None:
            if self.header.tokens_per_item == 1:
                cached = self.tokens[:, 0, :]
            else:
                cached = self.tokens.mean(axis=1, dtype=np.float64).astype(np.float32)
            self._pooled_cache["pooled"] = cached
        return cached


def pool_tokens(tokens: np.ndarray) -> np.ndarray:
    """Average an (N, d) token matrix into a single d-vector.

    Every token, including any class token the producer kept, carries equal
    weight.
    """
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 2 or tokens.shape[0] < 1:
        raise DataError("pool_tokens expects a non-empty (N, d) matrix")
    if not np.all(np.isfinite(tokens)):
        raise DataError("pool_tokens input contains non-finite values")
    return tokens.mean(axis=0)


def _records_to_struct(
    header: EmbeddingFileHeader, records: list[EmbeddingRecord]
) -> np.ndarray:
    out = np.zeros(len(records), dtype=_record_dtype(header))
    for i, rec in enumerate(records):
        tok = np.asarray(rec.tokens, dtype=np.float32)
        if tok.ndim == 1:
            tok = tok.reshape(1, -1)
        if tok.shape != (header.tokens_per_item, header.feature_dim):
            raise FormatError(
                f"record {rec.item_id} token shape {tok.shape} does not match "
                f"header ({header.tokens_per_item}, {header.feature_dim})"
            )
        out["item_id"][i] = rec.item_id
        out["class_label"][i] = rec.class_label
        out["variant_id"][i] = rec.variant_id
        out["tokens"][i] = tok
    return out


def _validate_semantics(
    header: EmbeddingFileHeader,
    item_ids: np.ndarray,
    class_labels: np.ndarray,
    variant_ids: np.ndarray,
    tokens: np.ndarray,
) -> None:
    if np.any(class_labels >= header.class_count):
        bad = int(class_labels.max())
        raise FormatError(
            f"class_label {bad} out of range for class_count {header.class_count}"
        )
    if not header.has_variants and np.any(variant_ids != 0):
        raise FormatError("non-zero variant_id in a file without the variants flag")
    if not np.all(np.isfinite(tokens)):
        raise FormatError("payload contains non-finite values")
    present = np.unique(class_labels)
    if len(present) != header.class_count:
        missing = sorted(set(range(header.class_count)) - set(present.tolist()))
        raise FormatError(f"classes with no records: {missing[:8]}")
    keys = np.stack(
        [class_labels.astype(np.uint64), item_ids, variant_ids.astype(np.uint64)]
    )
    pair_keys = np.stack([item_ids, variant_ids.astype(np.uint64)])
    if len(np.unique(pair_keys, axis=1).T) != len(item_ids):
        raise FormatError("duplicate (item_id, variant_id) pair")
    item_order = np.argsort(item_ids, kind="stable")
    same_item = item_ids[item_order][1:] == item_ids[item_order][:-1]
    label_change = class_labels[item_order][1:] != class_labels[item_order][:-1]
    if np.any(same_item & label_change):
        bad = int(item_ids[item_order][1:][same_item & label_change][0])
        raise FormatError(f"item {bad} has variants under different class labels")
    order = np.lexsort(keys[::-1])
    if np.any(order != np.arange(len(item_ids))):
        raise FormatError("records are not sorted by (class_label, item_id, variant_id)")


def write_embedding_file(
    header: EmbeddingFileHeader,
    records,
    path: str | Path,
) -> None:
    """Write records to `path`, canonically sorted.

    The file round-trips byte-identically through read/write because the
    writer sorts records by (class_label, item_id, variant_id) before
    serializing.
    """
    header.validate()
    records = list(records)
    if len(records) != header.item_count:
        raise FormatError(
            f"header declares {header.item_count} records, got {len(records)}"
        )
    records.sort(key=EmbeddingRecord.sort_key)
    table = _records_to_struct(header, records)
    _validate_semantics(
        header, table["item_id"], table["class_label"], table["variant_id"], table["tokens"]
    )
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header.pack())
        table.tofile(fh)
    tmp.replace(path)


def read_embedding_file(
    path: str | Path, class_names: tuple[str, ...] | None = None
) -> EmbeddingSet:
    """Read and fully validate an embedding file."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"embedding file not found: {path}")
    raw = path.read_bytes()
    header = EmbeddingFileHeader.unpack(raw)
    expected = HEADER_SIZE + header.item_count * header.record_size()
    if len(raw) != expected:
        raise FormatError(
            f"truncated or oversized payload in {path.name}: "
            f"expected {expected} bytes, got {len(raw)}"
        )
    table = np.frombuffer(raw, dtype=_record_dtype(header), count=header.item_count,
                          offset=HEADER_SIZE)
    if np.any(table["pad"] != 0):
        raise FormatError("non-zero record padding bytes")
    _validate_semantics(
        header, table["item_id"], table["class_label"], table["variant_id"], table["tokens"]
    )
    return EmbeddingSet(
        header=header,
        item_ids=table["item_id"].copy(),
        class_labels=table["class_label"].copy(),
        variant_ids=table["variant_id"].copy(),
        tokens=table["tokens"].copy(),
        class_names=class_names,
    )


# --- manifest -----------------------------------------------------------


@dataclass(frozen=True)
class DatasetManifest:
    dataset_name: str
    split: str
    backbone_name: str
    layer_files: dict[int, Path]
    class_names: tuple[str, ...] = ()

    def layer_ids(self) -> list[int]:
        return sorted(self.layer_files)


@dataclass
class LayerCheck:
    layer_id: int
    path: Path
    errors: list[str] = field(default_factory=list)
    class_count: int | None = None
    item_count: int | None = None
    feature_dim: int | None = None
    tokens_per_item: int | None = None


@dataclass
class ManifestReport:
    layers: list[LayerCheck]
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors and all(not c.errors for c in self.layers)

    def all_errors(self) -> list[str]:
        out = list(self.errors)
        for check in self.layers:
            out.extend(f"layer {check.layer_id}: {msg}" for msg in check.errors)
        return out


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    lines = [
        "# embedding dataset manifest",
        f"dataset = {manifest.dataset_name}",
        f"split = {manifest.split}",
        f"backbone = {manifest.backbone_name}",
    ]
    for i, name in enumerate(manifest.class_names):
        lines.append(f"class {i} = {name}")
    for layer_id in sorted(manifest.layer_files):
        file_path = Path(manifest.layer_files[layer_id])
        try:
            rel = file_path.relative_to(path.parent)
        except ValueError:
            rel = file_path
        lines.append(f"layer {layer_id} = {rel.as_posix()}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    fields: dict[str, str] = {}
    class_entries: dict[int, str] = {}
    layer_entries: dict[int, Path] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path.name}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("class "):
            class_entries[int(key.split()[1])] = value
        elif key.startswith("layer "):
            layer_path = Path(value)
            if not layer_path.is_absolute():
                layer_path = path.parent / layer_path
            layer_entries[int(key.split()[1])] = layer_path
        else:
            fields[key] = value
    for required in ("dataset", "split", "backbone"):
        if required not in fields:
            raise FormatError(f"{path.name}: missing '{required}' field")
    if not layer_entries:
        raise FormatError(f"{path.name}: no layer files listed")
    names = tuple(class_entries[i] for i in sorted(class_entries))
    if class_entries and sorted(class_entries) != list(range(len(class_entries))):
        raise FormatError(f"{path.name}: class indices must be contiguous from 0")
    return DatasetManifest(
        dataset_name=fields["dataset"],
        split=fields["split"],
        backbone_name=fields["backbone"],
        layer_files=layer_entries,
        class_names=names,
    )


def validate_manifest(manifest: DatasetManifest) -> ManifestReport:
    """Cross-check all layer files of a manifest.

    Never raises for content problems; every inconsistency becomes a report
    entry so callers can surface all of them at once.
    """
    report = ManifestReport(layers=[])
    reference: tuple[int, frozenset] | None = None
    reference_layer = None
    for layer_id in manifest.layer_ids():
        check = LayerCheck(layer_id=layer_id, path=manifest.layer_files[layer_id])
        report.layers.append(check)
        if not check.path.exists():
            check.errors.append(f"missing file {check.path}")
            continue
        try:
            eset = read_embedding_file(check.path)
        except (FormatError, DataError) as exc:
            check.errors.append(str(exc))
            continue
        check.class_count = eset.header.class_count
        check.item_count = eset.header.item_count
        check.feature_dim = eset.header.feature_dim
        check.tokens_per_item = eset.header.tokens_per_item
        if eset.header.layer_id != layer_id:
            check.errors.append(
                f"file declares layer {eset.header.layer_id}, manifest says {layer_id}"
            )
        identity = frozenset(
            zip(eset.item_ids.tolist(), eset.variant_ids.tolist(), eset.class_labels.tolist())
        )
        if reference is None:
            reference = (eset.header.class_count, identity)
            reference_layer = layer_id
        else:
            ref_classes, ref_identity = reference
            if eset.header.class_count != ref_classes:
                check.errors.append(
                    f"class_count {eset.header.class_count} disagrees with "
                    f"layer {reference_layer} ({ref_classes})"
                )
            if identity != ref_identity:
                check.errors.append(
                    f"item identities disagree with layer {reference_layer}"
                )
    if manifest.class_names and report.layers:
        declared = len(manifest.class_names)
        for check in report.layers:
            if check.class_count is not None and check.class_count != declared:
                check.errors.append(
                    f"class_count {check.class_count} does not match "
                    f"{declared} manifest class names"
                )
    return report
