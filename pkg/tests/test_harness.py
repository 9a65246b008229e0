from __future__ import annotations

import math
import statistics

import numpy as np
import pytest
from scipy.stats import norm

from manifold_probe import (
    CharacterizationParams,
    Classifier,
    DataError,
    EmbeddingFileHeader,
    EmbeddingRecord,
    LinearProjector,
    Metric,
    PipelineConfig,
    Reduction,
    SamplerConfig,
    confidence_interval,
    fit_layer_curve,
    read_embedding_file,
    read_manifest,
    run_characterization,
    run_dim_sweep,
    run_episode,
    run_fewshot_eval,
    sample_episode,
    write_embedding_file,
)
from manifold_probe.harness import artifact_basename, write_episode_csv

from synthdata import (
    bayes_accuracy_mc,
    build_gaussian_set,
    build_layer_manifest,
    gaussian_records,
    simplex_means,
    tune_separation_to_bayes,
)


def _fewshot_config(master_seed: int, episodes: int, **kwargs) -> PipelineConfig:
    sampler = SamplerConfig(
        way=kwargs.pop("way", 5),
        shot=kwargs.pop("shot", 5),
        query_per_class=kwargs.pop("query_per_class", 15),
        include_variants=kwargs.pop("include_variants", False),
        master_seed=master_seed,
        episode_count=episodes,
    )
    return PipelineConfig(layer_id=1, sampler=sampler, **kwargs)


# --- run_episode -----------------------------------------------------------


def test_degenerate_duplicate_set_classifies_perfectly(tmp_path) -> None:
    # every image of a class is the same point: queries sit at distance zero
    records = []
    item = 0
    for c in range(5):
        point = np.zeros(4, dtype=np.float32)
        point[c % 4] = 1.0 + c
        for _ in range(6):
            records.append(EmbeddingRecord(item_id=item, class_label=c, variant_id=0,
                                           tokens=point.reshape(1, 4).copy()))
            item += 1
    header = EmbeddingFileHeader(feature_dim=4, item_count=len(records),
                                 class_count=5, layer_id=1)
    path = tmp_path / "dup.feb"
    write_embedding_file(header, records, path)
    eset = read_embedding_file(path)
    config = _fewshot_config(master_seed=1, episodes=1, shot=2, query_per_class=4)
    episode = sample_episode(eset, config.sampler, 0)
    result = run_episode(episode, eset, LinearProjector.identity(4), config)
    assert result.accuracy == 1.0


def test_well_separated_gmm_is_near_perfect(tmp_path) -> None:
    # 10-sigma separation: the pairwise union bound puts the Bayes error at
    # (C-1) * Phi(-10*sqrt(2)/2) ~ 3e-12, and the MC oracle sees zero errors
    means = simplex_means(5, 8, 10.0)
    union_bound = 4 * norm.cdf(-10.0 * math.sqrt(2.0) / 2.0)
    assert union_bound < 1e-6
    assert bayes_accuracy_mc(means, 200_000, seed=9) == 1.0
    eset, _ = build_gaussian_set(tmp_path, n_classes=5, dim=8, items_per_class=30,
                                 separation=10.0, seed=3)
    config = _fewshot_config(master_seed=11, episodes=100)
    summary = run_fewshot_eval(eset, LinearProjector.identity(8), config, threads=1)
    perfect = sum(1 for r in summary.per_episode if r.accuracy == 1.0)
    assert perfect >= 99
    assert summary.mean_accuracy >= 99.0


def test_episode_total_matches_protocol(tmp_path) -> None:
    eset, _ = build_gaussian_set(tmp_path, n_classes=6, dim=4, items_per_class=40)
    config = _fewshot_config(master_seed=2, episodes=1, shot=1)
    episode = sample_episode(eset, config.sampler, 0)
    result = run_episode(episode, eset, LinearProjector.identity(4), config)
    assert result.total == 75


# --- confidence intervals -----------------------------------------------------


def test_ci_halfwidth_bernoulli_mix_matches_closed_form() -> None:
    values = [0.0] * 300 + [1.0] * 300
    mean, halfwidth = confidence_interval(values)
    assert mean == pytest.approx(0.5)
    oracle = 1.959964 * statistics.stdev(values) / math.sqrt(600)
    assert halfwidth == pytest.approx(oracle, abs=1e-12)
    assert halfwidth == pytest.approx(0.0400, abs=5e-4)


def test_ci_constant_sequence_zero_halfwidth() -> None:
    mean, halfwidth = confidence_interval([0.8] * 600)
    assert mean == pytest.approx(0.8)
    assert halfwidth == 0.0


def test_ci_needs_two_values() -> None:
    with pytest.raises(DataError):
        confidence_interval([1.0])


def test_ci_other_levels_use_normal_quantile() -> None:
    values = [0.0, 1.0] * 50
    _, hw95 = confidence_interval(values, level=95.0)
    _, hw99 = confidence_interval(values, level=99.0)
    assert hw99 > hw95
    assert hw99 / hw95 == pytest.approx(norm.ppf(0.995) / 1.959964, rel=1e-6)


# --- run_fewshot_eval ----------------------------------------------------------


def test_summary_invariants_and_thread_independence(tmp_path) -> None:
    eset, _ = build_gaussian_set(tmp_path, n_classes=6, dim=6, items_per_class=30,
                                 separation=2.0, seed=5)
    config = _fewshot_config(master_seed=7, episodes=40, shot=1)
    projector = LinearProjector.identity(6)
    summary1 = run_fewshot_eval(eset, projector, config, threads=1)
    summary4 = run_fewshot_eval(eset, projector, config, threads=4)
    assert summary1 == summary4  # wall_time excluded from comparison
    accuracies = [r.accuracy for r in summary1.per_episode]
    assert summary1.mean_accuracy == pytest.approx(100.0 * np.mean(accuracies))
    expected_hw = 1.959964 * np.std(accuracies, ddof=1) / np.sqrt(len(accuracies))
    assert summary1.ci_halfwidth_95 == pytest.approx(100.0 * expected_hw)


def test_merged_runs_equal_weighted_merge(tmp_path) -> None:
    eset, _ = build_gaussian_set(tmp_path, n_classes=6, dim=6, items_per_class=30,
                                 separation=2.0, seed=6)
    projector = LinearProjector.identity(6)
    full = run_fewshot_eval(eset, projector, _fewshot_config(9, 30, shot=1), threads=1)
    # partial runs share the master seed, so episode i is identical
    first = run_fewshot_eval(eset, projector, _fewshot_config(9, 10, shot=1), threads=1)
    merged = [r.accuracy for r in first.per_episode] + [
        r.accuracy for r in full.per_episode[10:]
    ]
    assert np.mean(merged) == pytest.approx(full.mean_accuracy / 100.0, abs=1e-12)


def test_fingerprint_round_trips_configuration(tmp_path) -> None:
    import json

    config = _fewshot_config(master_seed=4, episodes=10, reduction=Reduction.PCA,
                             output_dim=3)
    payload = json.loads(config.fingerprint())
    assert payload["reduction"] == "pca"
    assert payload["output_dim"] == 3
    assert payload["sampler"]["master_seed"] == 4
    raw = _fewshot_config(master_seed=4, episodes=10)
    assert json.loads(raw.fingerprint())["output_dim"] is None


def test_config_validation() -> None:
    with pytest.raises(DataError):
        PipelineConfig(layer_id=1, reduction=Reduction.PCA).validate()
    with pytest.raises(DataError):
        PipelineConfig(layer_id=1, k=0).validate()


# --- Bayes-level consistency ----------------------------------------------------


@pytest.fixture(scope="module")
def bayes_tuned():
    separation, accuracy = tune_separation_to_bayes(
        0.80, n_classes=5, dim=8, n_samples=200_000
    )
    return separation, accuracy


def test_harness_never_beats_bayes_beyond_ci(tmp_path, bayes_tuned) -> None:
    separation, bayes = bayes_tuned
    for repetition in range(20):
        rng = np.random.default_rng(1000 + repetition)
        means = simplex_means(5, 8, separation)
        records = gaussian_records(means, items_per_class=40, variants_per_item=0,
                                   rng=rng)
        header = EmbeddingFileHeader(feature_dim=8, item_count=len(records),
                                     class_count=5, layer_id=1)
        path = tmp_path / f"bayes_{repetition}.feb"
        write_embedding_file(header, records, path)
        eset = read_embedding_file(path)
        config = _fewshot_config(master_seed=repetition, episodes=60,
                                 metric=Metric.EUCLIDEAN,
                                 classifier=Classifier.CENTROID)
        summary = run_fewshot_eval(eset, LinearProjector.identity(8), config, threads=2)
        assert summary.mean_accuracy / 100.0 <= bayes + summary.ci_halfwidth_95 / 100.0


# --- characterization -----------------------------------------------------------


def test_characterization_layer_order_invariant(tmp_path) -> None:
    manifest_path = build_layer_manifest(
        tmp_path, separations={1: 0.5, 2: 1.5, 3: 3.0}, n_classes=6, dim=6,
        items_per_class=40
    )
    manifest = read_manifest(manifest_path)
    params = CharacterizationParams(support_per_class=12, query_total=60, k=5, seed=3)
    forward = run_characterization(manifest, params, layers=[1, 2, 3])
    backward = run_characterization(manifest, params, layers=[3, 1, 2])
    assert forward == backward


def test_characterization_finds_informative_layer(tmp_path) -> None:
    separations = {layer: 0.0 if layer != 7 else 5.0 for layer in range(1, 11)}
    # zero separation everywhere else: only layer 7 carries class structure
    manifest_path = build_layer_manifest(tmp_path, separations, n_classes=6, dim=6,
                                         items_per_class=40, seed=8)
    manifest = read_manifest(manifest_path)
    rows = run_characterization(
        manifest, CharacterizationParams(support_per_class=12, query_total=90, k=5, seed=2)
    )
    best = max(rows, key=lambda r: r.accuracy)
    assert best.layer_id == 7
    assert best.accuracy > 0.9
    others = [r.accuracy for r in rows if r.layer_id != 7]
    assert max(others) < 0.5


def test_identical_layers_give_flat_curve(tmp_path) -> None:
    manifest_path = build_layer_manifest(
        tmp_path, separations={1: 2.0, 2: 2.0, 3: 2.0}, n_classes=6, dim=6,
        items_per_class=40, seed=9
    )
    manifest = read_manifest(manifest_path)
    params = CharacterizationParams(support_per_class=12, query_total=60, k=5, seed=4)
    rows = run_characterization(manifest, params)
    accuracies = {r.accuracy for r in rows}
    assert len(accuracies) == 1  # same items, same separation, same split


def test_missing_layer_errors(tmp_path) -> None:
    manifest_path = build_layer_manifest(tmp_path, separations={1: 1.0}, n_classes=4,
                                         dim=4, items_per_class=20)
    manifest = read_manifest(manifest_path)
    with pytest.raises(DataError):
        run_characterization(
            manifest,
            CharacterizationParams(support_per_class=5, query_total=20, k=3, seed=1),
            layers=[2],
        )


# --- dimension sweep ------------------------------------------------------------


def test_full_rank_pca_sweep_matches_raw(tmp_path) -> None:
    # rank-4 data embedded in 12 dims: a 4-component projection is isometric
    rng = np.random.default_rng(10)
    basis = np.linalg.qr(rng.normal(size=(12, 4)))[0].T  # 4 x 12 orthonormal
    means4 = simplex_means(6, 4, 3.0)
    records = []
    item = 0
    for c in range(6):
        for _ in range(40):
            vec = (means4[c] + rng.standard_normal(4)) @ basis
            records.append(EmbeddingRecord(item_id=item, class_label=c, variant_id=0,
                                           tokens=vec.astype(np.float32).reshape(1, 12)))
            item += 1
    header = EmbeddingFileHeader(feature_dim=12, item_count=len(records),
                                 class_count=6, layer_id=1)
    path = tmp_path / "lowrank_layer01.feb"
    write_embedding_file(header, records, path)
    from manifold_probe import DatasetManifest, write_manifest

    manifest_path = tmp_path / "lowrank.manifest"
    write_manifest(
        DatasetManifest("lowrank", "train", "synthetic", {1: path}), manifest_path
    )
    manifest = read_manifest(manifest_path)
    params = CharacterizationParams(support_per_class=12, query_total=60, k=5, seed=6)
    raw_rows = run_characterization(manifest, params)
    cells = run_dim_sweep(manifest, layers=[1], dims=[4], params=params)
    assert cells[0].accuracy == pytest.approx(raw_rows[0].accuracy, abs=0.05)


def test_dim_sweep_collapse_when_signal_spread_thin(tmp_path) -> None:
    # 100 classes with signal spread over 100 informative dims (between-class
    # rank ~99) behind 40 dominant nuisance-variance directions: 64 components
    # keep mostly nuisance and a fraction of the discriminative span, so
    # accuracy falls off a cliff while 128 components stay strong
    rng = np.random.default_rng(11)
    n_classes, informative, nuisance = 100, 100, 40
    total_dim = nuisance + informative
    signs = rng.choice([-1.0, 1.0], size=(n_classes, informative))
    means = np.zeros((n_classes, total_dim))
    means[:, nuisance:] = signs * 0.7
    scales = np.ones(total_dim)
    scales[:nuisance] = 2.0
    records = []
    item = 0
    for c in range(n_classes):
        for _ in range(26):
            vec = means[c] + scales * rng.standard_normal(total_dim)
            records.append(EmbeddingRecord(item_id=item, class_label=c, variant_id=0,
                                           tokens=vec.astype(np.float32).reshape(1, -1)))
            item += 1
    header = EmbeddingFileHeader(feature_dim=total_dim, item_count=len(records),
                                 class_count=n_classes, layer_id=1)
    path = tmp_path / "spread_layer01.feb"
    write_embedding_file(header, records, path)
    from manifold_probe import DatasetManifest, write_manifest

    manifest_path = tmp_path / "spread.manifest"
    write_manifest(
        DatasetManifest("spread", "train", "synthetic", {1: path}), manifest_path
    )
    manifest = read_manifest(manifest_path)
    params = CharacterizationParams(support_per_class=20, query_total=300, k=15, seed=7)
    cells = run_dim_sweep(manifest, layers=[1], dims=[128, 64], params=params)
    by_dim = {c.output_dim: c.accuracy for c in cells}
    assert by_dim[128] > 0.75
    assert by_dim[64] < by_dim[128] - 0.25


def test_variant_exemplar_switch_changes_fingerprint_and_runs(tmp_path) -> None:
    eset, _ = build_gaussian_set(tmp_path, n_classes=5, dim=6, items_per_class=30,
                                 variants_per_item=4, separation=2.0, seed=30)
    base = _fewshot_config(master_seed=3, episodes=10, include_variants=True)
    covariance_only = PipelineConfig(
        layer_id=1, variant_exemplars=False, sampler=base.sampler
    )
    assert base.fingerprint() != covariance_only.fingerprint()
    projector = LinearProjector.identity(6)
    with_exemplars = run_fewshot_eval(eset, projector, base, threads=1)
    without = run_fewshot_eval(eset, projector, covariance_only, threads=1)
    assert with_exemplars.episode_count == without.episode_count == 10
    # both are valid runs; the exemplar pool differs (25 vs 5 per class)


def test_cache_env_var_is_honored(tmp_path, monkeypatch) -> None:
    manifest_path = build_layer_manifest(tmp_path, separations={1: 2.0}, n_classes=6,
                                         dim=8, items_per_class=40, seed=33)
    manifest = read_manifest(manifest_path)
    params = CharacterizationParams(support_per_class=10, query_total=40, k=3, seed=2)
    cache = tmp_path / "env_cache"
    monkeypatch.setenv("MANIFOLD_PROBE_CACHE", str(cache))
    run_dim_sweep(manifest, [1], [4], params)
    assert cache.exists() and any(cache.iterdir())


def test_projector_cache_does_not_change_results(tmp_path) -> None:
    manifest_path = build_layer_manifest(tmp_path, separations={1: 2.0}, n_classes=6,
                                         dim=8, items_per_class=40, seed=12)
    manifest = read_manifest(manifest_path)
    params = CharacterizationParams(support_per_class=10, query_total=60, k=5, seed=8)
    cache = tmp_path / "cache"
    cold = run_dim_sweep(manifest, [1], [4], params, cache_dir=cache)
    assert any(cache.iterdir())
    warm = run_dim_sweep(manifest, [1], [4], params, cache_dir=cache)
    no_cache = run_dim_sweep(manifest, [1], [4], params, cache_dir=None)
    assert cold == warm == no_cache


# --- layer curve fit over characterization ---------------------------------------


def test_fit_layer_curve_over_sigmoidal_manifest(tmp_path) -> None:
    separations = {
        layer: 4.0 / (1.0 + math.exp(-0.5 * (layer - 6))) for layer in range(1, 13)
    }
    manifest_path = build_layer_manifest(tmp_path, separations, n_classes=8, dim=8,
                                         items_per_class=60, seed=13)
    manifest = read_manifest(manifest_path)
    rows = run_characterization(
        manifest, CharacterizationParams(support_per_class=20, query_total=160, k=5, seed=9)
    )
    fit = fit_layer_curve(rows)
    assert fit.r_squared >= 0.95
    assert fit.growth_rate > 0


# --- artifacts ---------------------------------------------------------------------


def test_artifact_basename_patterns() -> None:
    raw = _fewshot_config(master_seed=0, episodes=1, way=5, shot=5)
    assert artifact_basename("mini", raw) == "mini_1_raw_5w5s"
    pca = _fewshot_config(master_seed=0, episodes=1, way=5, shot=1,
                          reduction=Reduction.PCA, output_dim=512)
    assert artifact_basename("mini", pca) == "mini_1_pca512_5w1s"


def test_episode_csv_layout(tmp_path) -> None:
    eset, _ = build_gaussian_set(tmp_path, n_classes=5, dim=4, items_per_class=25,
                                 seed=14)
    config = _fewshot_config(master_seed=3, episodes=5, shot=1)
    summary = run_fewshot_eval(eset, LinearProjector.identity(4), config, threads=1)
    path = tmp_path / "episodes.csv"
    write_episode_csv(summary, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "episode_index,correct,total,accuracy"
    assert len(lines) == 6
    first = lines[1].split(",")
    assert first[0] == "0"
    assert int(first[1]) <= int(first[2]) == 75
