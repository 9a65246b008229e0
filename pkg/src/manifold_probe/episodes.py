"""Deterministic episode sampling for episodic evaluation.

Sampling is a pure function of (embedding set, config, episode index): each
episode draws from its own generator seeded by a counter-derived stream
seed, so episodes can be generated and evaluated in any order or in
parallel without changing the draw.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, InsufficientDataError
from .rng import Xoshiro256StarStar, derive_stream_seed
from .store import EmbeddingSet


def derive_episode_seed(master_seed: int, episode_index: int) -> int:
    """Stable per-episode seed from a master seed and an episode counter."""
    return derive_stream_seed(master_seed, episode_index)


@dataclass(frozen=True)
class SamplerConfig:
    way: int = 5
    shot: int = 1
    query_per_class: int = 15
    include_variants: bool = True
    master_seed: int = 0
    episode_count: int = 600

    def validate(self) -> None:
        if self.way < 2:
            raise DataError("way must be >= 2")
        if self.shot < 1:
            raise DataError("shot must be >= 1")
        if self.query_per_class < 1:
            raise DataError("query_per_class must be >= 1")
        if self.episode_count < 1:
            raise DataError("episode_count must be >= 1")


@dataclass(frozen=True, eq=False)
class Episode:
    way: int
    shot: int
    query_per_class: int
    support_rows: np.ndarray  # row indices into the EmbeddingSet
    query_rows: np.ndarray  # row indices, variant 0 only
    class_map: tuple[int, ...]  # episode-local class -> dataset class id
    support_items: tuple[tuple[int, ...], ...]  # item ids per episode class
    query_items: tuple[tuple[int, ...], ...]
    seed: int

    def check_invariants(self, eset: EmbeddingSet) -> None:
        support_ids = {int(i) for i in eset.item_ids[self.support_rows]}
        query_ids = {int(i) for i in eset.item_ids[self.query_rows]}
        if support_ids & query_ids:
            raise DataError("support and query share item ids")
        support_classes = {int(c) for c in eset.class_labels[self.support_rows]}
        query_classes = {int(c) for c in eset.class_labels[self.query_rows]}
        if not query_classes <= support_classes:
            raise DataError("query class missing from support")
        if np.any(eset.variant_ids[self.query_rows] != 0):
            raise DataError("query rows must be original variants")
        for items in self.support_items:
            if len(items) != self.shot:
                raise DataError("support class does not have exactly `shot` originals")


class _IndexedSet:
    """Lookup structures over an EmbeddingSet for repeated sampling.

    Rows are stored in canonical (class, item, variant) order and an item's
    variants all carry its class, so every item occupies one contiguous row
    block with ascending variant ids.
    """

    def __init__(self, eset: EmbeddingSet):
        self.eset = eset
        items = eset.item_ids
        labels = eset.class_labels
        variants = eset.variant_ids
        n = len(eset)
        starts = np.flatnonzero(np.r_[True, items[1:] != items[:-1]])
        ends = np.r_[starts[1:], n]
        self.item_block: dict[int, tuple[int, int]] = {
            int(item): (int(start), int(end))
            for item, start, end in zip(items[starts], starts, ends)
        }
        original_rows = np.flatnonzero(variants == 0)
        self.original_row: dict[int, int] = {
            int(item): int(row)
            for item, row in zip(items[original_rows], original_rows)
        }
        self.original_items: dict[int, list[int]] = {}
        for label, item in zip(labels[original_rows].tolist(),
                               items[original_rows].tolist()):
            self.original_items.setdefault(int(label), []).append(int(item))
        for item_list in self.original_items.values():
            item_list.sort()

    def item_rows(self, item: int) -> range:
        start, end = self.item_block[item]
        return range(start, end)


_INDEX_CACHE: dict[int, _IndexedSet] = {}


def _index(eset: EmbeddingSet) -> _IndexedSet:
    key = id(eset)
    cached = _INDEX_CACHE.get(key)
    if cached is None or cached.eset is not eset:
        cached = _IndexedSet(eset)
        _INDEX_CACHE[key] = cached
        if len(_INDEX_CACHE) > 16:
            _INDEX_CACHE.pop(next(iter(_INDEX_CACHE)))
    return cached


def sample_episode(
    eset: EmbeddingSet, config: SamplerConfig, episode_index: int
) -> Episode:
    """Draw one N-way K-shot episode.

    Classes are drawn without replacement from those with enough original
    images; within each class, `shot` support and `query_per_class` query
    items are drawn without replacement and disjoint. All augmented variants
    of a support item join the support set when `include_variants` is set;
    queries always use the original variant.
    """
    config.validate()
    index = _index(eset)
    needed = config.shot + config.query_per_class
    eligible = sorted(
        c for c, item_list in index.original_items.items() if len(item_list) >= needed
    )
    if len(eligible) < config.way:
        raise InsufficientDataError(
            f"need {config.way} classes with >= {needed} original images, "
            f"found {len(eligible)}"
        )
    seed = derive_episode_seed(config.master_seed, episode_index)
    rng = Xoshiro256StarStar(seed)
    chosen = rng.sample(eligible, config.way)

    support_rows: list[int] = []
    query_rows: list[int] = []
    support_items = []
    query_items = []
    for dataset_class in chosen:
        picked = rng.sample(index.original_items[dataset_class], needed)
        class_support = tuple(picked[: config.shot])
        class_query = tuple(picked[config.shot:])
        support_items.append(class_support)
        query_items.append(class_query)
        for item in class_support:
            if config.include_variants:
                support_rows.extend(index.item_rows(item))
            else:
                support_rows.append(index.original_row[item])
        query_rows.extend(index.original_row[item] for item in class_query)

    return Episode(
        way=config.way,
        shot=config.shot,
        query_per_class=config.query_per_class,
        support_rows=np.asarray(support_rows, dtype=np.int64),
        query_rows=np.asarray(query_rows, dtype=np.int64),
        class_map=tuple(chosen),
        support_items=tuple(support_items),
        query_items=tuple(query_items),
        seed=seed,
    )


def sample_characterization_split(
    eset: EmbeddingSet,
    support_per_class: int,
    query_total: int,
    seed: int,
    class_subsample: int | None = None,
    query_per_class: int | None = None,
) -> Episode:
    """Draw a many-way split: a fixed support quota per class and a query
    pool spread over the classes.

    With `query_per_class` set, every class contributes that many queries;
    otherwise `query_total` queries are drawn one at a time from a uniformly
    chosen class (redrawing exhausted classes), which reads a total budget
    as spread evenly in expectation.
    """
    if support_per_class < 1:
        raise DataError("support_per_class must be >= 1")
    index = _index(eset)
    rng = Xoshiro256StarStar(seed)
    min_needed = support_per_class + (query_per_class or 1)
    eligible = sorted(
        c for c, items in index.original_items.items() if len(items) >= min_needed
    )
    if len(eligible) < 2:
        raise InsufficientDataError(
            f"need >= 2 classes with >= {min_needed} original images"
        )
    if class_subsample is not None:
        if class_subsample < 2 or class_subsample > len(eligible):
            raise InsufficientDataError(
                f"cannot subsample {class_subsample} of {len(eligible)} classes"
            )
        classes = rng.sample(eligible, class_subsample)
    else:
        classes = list(eligible)

    support_rows: list[int] = []
    support_items = []
    remaining: list[list[int]] = []
    for dataset_class in classes:
        items = index.original_items[dataset_class]
        picked = rng.sample(items, support_per_class)
        support_items.append(tuple(picked))
        support_rows.extend(index.original_row[item] for item in picked)
        leftover = sorted(set(items) - set(picked))
        remaining.append(leftover)

    query_rows: list[int] = []
    query_items: list[list[int]] = [[] for _ in classes]
    if query_per_class is not None:
        for slot, leftover in enumerate(remaining):
            if len(leftover) < query_per_class:
                raise InsufficientDataError(
                    f"class {classes[slot]} has only {len(leftover)} non-support images"
                )
            picked = rng.sample(leftover, query_per_class)
            query_items[slot] = picked
            query_rows.extend(index.original_row[item] for item in picked)
    else:
        pool_sizes = [len(r) for r in remaining]
        if sum(pool_sizes) < query_total:
            raise InsufficientDataError(
                f"only {sum(pool_sizes)} non-support images for {query_total} queries"
            )
        for _ in range(query_total):
            while True:
                slot = rng.randbelow(len(classes))
                if remaining[slot]:
                    break
            pick_at = rng.randbelow(len(remaining[slot]))
            item = remaining[slot].pop(pick_at)
            query_items[slot].append(item)
            query_rows.append(index.original_row[item])

    return Episode(
        way=len(classes),
        shot=support_per_class,
        query_per_class=query_per_class if query_per_class is not None else 0,
        support_rows=np.asarray(support_rows, dtype=np.int64),
        query_rows=np.asarray(query_rows, dtype=np.int64),
        class_map=tuple(classes),
        support_items=tuple(support_items),
        query_items=tuple(tuple(q) for q in query_items),
        seed=seed,
    )


def dump_episode(episode: Episode) -> str:
    """Text form of an episode (class map and item id lists) for
    cross-implementation comparison."""
    lines = [
        "# episode dump v1",
        f"seed = {episode.seed}",
        f"way = {episode.way}",
        f"shot = {episode.shot}",
        f"query_per_class = {episode.query_per_class}",
    ]
    for local, dataset_class in enumerate(episode.class_map):
        lines.append(f"class {local} = {dataset_class}")
    for local, items in enumerate(episode.support_items):
        lines.append(f"support {local} = {','.join(str(i) for i in items)}")
    for local, items in enumerate(episode.query_items):
        lines.append(f"query {local} = {','.join(str(i) for i in items)}")
    return "\n".join(lines) + "\n"


def write_episode_dump(episode: Episode, path: str | Path) -> None:
    Path(path).write_bytes(dump_episode(episode).encode("utf-8"))
