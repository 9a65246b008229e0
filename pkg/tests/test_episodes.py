from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manifold_probe import (
    InsufficientDataError,
    SamplerConfig,
    derive_episode_seed,
    dump_episode,
    sample_characterization_split,
    sample_episode,
)

from synthdata import build_gaussian_set


@pytest.fixture(scope="module")
def variant_set(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("episodes")
    eset, _ = build_gaussian_set(
        tmp, n_classes=8, dim=4, items_per_class=30, variants_per_item=4, seed=2
    )
    return eset


@pytest.fixture(scope="module")
def plain_set(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("episodes_plain")
    eset, _ = build_gaussian_set(
        tmp, n_classes=8, dim=4, items_per_class=30, variants_per_item=0, seed=3
    )
    return eset


def test_five_way_one_shot_counts(plain_set) -> None:
    config = SamplerConfig(way=5, shot=1, query_per_class=15,
                           include_variants=False, master_seed=1)
    episode = sample_episode(plain_set, config, 0)
    assert len(episode.support_rows) == 5
    assert len(episode.query_rows) == 75
    episode.check_invariants(plain_set)


def test_five_shot_with_variants_gives_125_support_rows(variant_set) -> None:
    # 5 classes x 5 images x (1 original + 4 variants)
    config = SamplerConfig(way=5, shot=5, query_per_class=15,
                           include_variants=True, master_seed=1)
    episode = sample_episode(variant_set, config, 0)
    assert len(episode.support_rows) == 125
    assert len(episode.query_rows) == 75
    assert np.all(variant_set.variant_ids[episode.query_rows] == 0)
    episode.check_invariants(variant_set)


def test_same_inputs_same_episode(variant_set) -> None:
    config = SamplerConfig(way=5, shot=2, query_per_class=5, master_seed=9)
    a = sample_episode(variant_set, config, 17)
    b = sample_episode(variant_set, config, 17)
    assert a.class_map == b.class_map
    assert a.support_items == b.support_items
    assert a.query_items == b.query_items
    assert np.array_equal(a.support_rows, b.support_rows)
    assert np.array_equal(a.query_rows, b.query_rows)


def test_different_indices_differ(variant_set) -> None:
    config = SamplerConfig(way=5, shot=2, query_per_class=5, master_seed=9)
    a = sample_episode(variant_set, config, 0)
    b = sample_episode(variant_set, config, 1)
    assert a.seed != b.seed
    assert (a.class_map, a.support_items) != (b.class_map, b.support_items)


def test_episode_seed_field_matches_derivation(variant_set) -> None:
    config = SamplerConfig(way=5, shot=1, query_per_class=2, master_seed=33)
    episode = sample_episode(variant_set, config, 12)
    assert episode.seed == derive_episode_seed(33, 12)


@settings(max_examples=30, deadline=None)
@given(
    way=st.integers(min_value=2, max_value=8),
    shot=st.integers(min_value=1, max_value=4),
    queries=st.integers(min_value=1, max_value=10),
    variants=st.booleans(),
    master_seed=st.integers(min_value=0, max_value=2**63),
    index=st.integers(min_value=0, max_value=1000),
)
def test_episode_invariants_hold_for_random_configs(
    variant_set, way, shot, queries, variants, master_seed, index
) -> None:
    config = SamplerConfig(way=way, shot=shot, query_per_class=queries,
                           include_variants=variants, master_seed=master_seed)
    episode = sample_episode(variant_set, config, index)
    episode.check_invariants(variant_set)
    # disjoint at item level, support covers query classes
    support_classes = set(variant_set.class_labels[episode.support_rows].tolist())
    assert len(support_classes) == way
    per_class = {
        c: 0 for c in support_classes
    }
    for row in episode.query_rows:
        per_class[int(variant_set.class_labels[row])] += 1
    assert all(count == queries for count in per_class.values())


def test_class_frequency_uniform_over_many_episodes(plain_set) -> None:
    config = SamplerConfig(way=2, shot=1, query_per_class=1, master_seed=5)
    counts = np.zeros(8)
    n_episodes = 2000
    for i in range(n_episodes):
        episode = sample_episode(plain_set, config, i)
        for c in episode.class_map:
            counts[c] += 1
    expected = n_episodes * 2 / 8
    sigma = np.sqrt(n_episodes * (2 / 8) * (1 - 2 / 8))
    assert np.all(np.abs(counts - expected) <= 3 * sigma)


def test_insufficient_classes_raises(plain_set) -> None:
    config = SamplerConfig(way=9, shot=1, query_per_class=1)
    with pytest.raises(InsufficientDataError):
        sample_episode(plain_set, config, 0)


def test_insufficient_images_raises(plain_set) -> None:
    config = SamplerConfig(way=5, shot=20, query_per_class=15)
    with pytest.raises(InsufficientDataError):
        sample_episode(plain_set, config, 0)


# --- characterization splits ----------------------------------------------


def test_characterization_many_way_over_all_classes(tmp_path) -> None:
    eset, _ = build_gaussian_set(
        tmp_path, n_classes=64, dim=4, items_per_class=70, seed=4
    )
    episode = sample_characterization_split(
        eset, support_per_class=64, query_total=300, seed=1
    )
    assert episode.way == 64
    assert all(len(items) == 64 for items in episode.support_items)
    assert len(episode.query_rows) == 300
    support_ids = set(eset.item_ids[episode.support_rows].tolist())
    query_ids = set(eset.item_ids[episode.query_rows].tolist())
    assert not support_ids & query_ids


def test_characterization_class_subsample(plain_set) -> None:
    episode = sample_characterization_split(
        plain_set, support_per_class=10, query_total=40, seed=2, class_subsample=4
    )
    assert episode.way == 4
    assert len(set(episode.class_map)) == 4


def test_characterization_exact_per_class_queries(plain_set) -> None:
    episode = sample_characterization_split(
        plain_set, support_per_class=10, query_total=0, seed=3, query_per_class=5
    )
    labels = [int(c) for c in plain_set.class_labels[episode.query_rows]]
    counts = {c: labels.count(c) for c in set(labels)}
    assert counts == {c: 5 for c in range(8)}


def test_characterization_insufficient_pool(plain_set) -> None:
    with pytest.raises(InsufficientDataError):
        sample_characterization_split(
            plain_set, support_per_class=29, query_total=100, seed=1
        )


def test_characterization_deterministic(plain_set) -> None:
    a = sample_characterization_split(plain_set, 10, 50, seed=7)
    b = sample_characterization_split(plain_set, 10, 50, seed=7)
    assert dump_episode(a) == dump_episode(b)


# --- dumps -----------------------------------------------------------------


def test_dump_contains_class_map_and_items(variant_set) -> None:
    config = SamplerConfig(way=3, shot=2, query_per_class=2, master_seed=21)
    episode = sample_episode(variant_set, config, 4)
    text = dump_episode(episode)
    assert text.startswith("# episode dump v1\n")
    assert f"seed = {episode.seed}\n" in text
    for local, dataset_class in enumerate(episode.class_map):
        assert f"class {local} = {dataset_class}\n" in text
    for local, items in enumerate(episode.support_items):
        assert f"support {local} = {','.join(str(i) for i in items)}\n" in text
    assert text.endswith("\n")


def test_dump_byte_stable(variant_set) -> None:
    config = SamplerConfig(way=4, shot=1, query_per_class=3, master_seed=8)
    first = dump_episode(sample_episode(variant_set, config, 2)).encode()
    second = dump_episode(sample_episode(variant_set, config, 2)).encode()
    assert first == second
