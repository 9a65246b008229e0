"""End-to-end evaluation protocols and result aggregation.

Two protocols are provided: episodic few-shot evaluation (many small N-way
K-shot tasks, accuracy averaged over episodes with a normal-approximation
confidence interval) and many-way per-layer characterization (one large
split per layer). Episodes are independent and evaluated with per-episode
derived seeds, reduced in episode-index order, so results are identical for
any degree of parallelism.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .concepts import (
    Metric,
    ScoringMode,
    ShrinkageConfig,
    build_dictionary,
    classify_centroid,
    classify_knn,
    pairwise_distances,
)
from .curvefit import LogisticFit, fit_logistic
from .episodes import Episode, SamplerConfig, sample_characterization_split, sample_episode
from .episodes import _index as _build_index
from .errors import DataError
from .reduction import (
    FitConfig,
    LinearProjector,
    ProjectorKind,
    canonicalize,
    fit_ica,
    fit_pca,
    load_projector,
    save_projector,
)
from .store import DatasetManifest, EmbeddingSet, read_embedding_file

CACHE_ENV_VAR = "MANIFOLD_PROBE_CACHE"
Z_95 = 1.959964


class Reduction(str, Enum):
    RAW = "raw"
    PCA = "pca"
    ICA = "ica"


class Classifier(str, Enum):
    KNN = "knn"
    CENTROID = "centroid"


@dataclass(frozen=True)
class PipelineConfig:
    layer_id: int
    reduction: Reduction = Reduction.RAW
    output_dim: int | None = None
    metric: Metric = Metric.MAHALANOBIS
    classifier: Classifier = Classifier.KNN
    k: int = 5
    variant_exemplars: bool = True
    shrinkage: ShrinkageConfig = field(default_factory=ShrinkageConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    ica: FitConfig = field(default_factory=FitConfig)

    def validate(self) -> None:
        if self.classifier is Classifier.KNN and self.k < 1:
            raise DataError("knn requires k >= 1")
        if self.reduction is not Reduction.RAW and not self.output_dim:
            raise DataError(f"{self.reduction.value} reduction requires output_dim")
        self.shrinkage.validate()
        self.sampler.validate()

    def fingerprint(self) -> str:
        """Canonical text form; full precision, stable key order."""
        payload = {
            "layer_id": self.layer_id,
            "reduction": self.reduction.value,
            "output_dim": self.output_dim if self.reduction is not Reduction.RAW else None,
            "metric": self.metric.value,
            "classifier": self.classifier.value,
            "k": self.k if self.classifier is Classifier.KNN else None,
            "variant_exemplars": self.variant_exemplars,
            "shrinkage": {
                "lam": self.shrinkage.lam,
                "pooled_fallback_threshold": self.shrinkage.pooled_fallback_threshold,
                "identity_fallback_threshold": self.shrinkage.identity_fallback_threshold,
            },
            "sampler": {
                "way": self.sampler.way,
                "shot": self.sampler.shot,
                "query_per_class": self.sampler.query_per_class,
                "include_variants": self.sampler.include_variants,
                "master_seed": self.sampler.master_seed,
                "episode_count": self.sampler.episode_count,
            },
            "ica": {
                "max_iterations": self.ica.max_iterations,
                "tolerance": self.ica.tolerance,
                "contrast": self.ica.ica_contrast.value,
                "seed": self.ica.seed,
            }
            if self.reduction is Reduction.ICA
            else None,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class EpisodeResult:
    episode_index: int
    correct: int
    total: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.total


@dataclass(frozen=True)
class EvalSummary:
    mean_accuracy: float  # percent
    ci_halfwidth_95: float  # percent
    per_episode: tuple[EpisodeResult, ...]
    config_fingerprint: str
    wall_time: float = field(compare=False, default=0.0)

    @property
    def episode_count(self) -> int:
        return len(self.per_episode)

    def canonical_dict(self) -> dict:
        """Everything except wall time, for fingerprinting and comparison."""
        return {
            "mean_accuracy": self.mean_accuracy,
            "ci_halfwidth_95": self.ci_halfwidth_95,
            "episode_count": self.episode_count,
            "per_episode": [
                [r.episode_index, r.correct, r.total] for r in self.per_episode
            ],
            "config_fingerprint": self.config_fingerprint,
        }


def confidence_interval(values, level: float = 95.0) -> tuple[float, float]:
    """Mean and normal-approximation halfwidth z * s / sqrt(n) over values,
    with the sample (n-1) standard deviation."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise DataError("confidence_interval needs at least 2 values")
    z = Z_95 if level == 95.0 else float(norm.ppf(0.5 + level / 200.0))
    mean = float(values.mean())
    halfwidth = z * float(values.std(ddof=1)) / float(np.sqrt(values.size))
    return mean, halfwidth


def _classify_rows(
    queries: np.ndarray, dictionary, config: PipelineConfig
) -> np.ndarray:
    if config.classifier is Classifier.CENTROID:
        distances, labels = pairwise_distances(
            queries, dictionary, config.metric, ScoringMode.CENTROID
        )
        return np.asarray(
            [classify_centroid(row, labels) for row in distances], dtype=np.int64
        )
    distances, labels = pairwise_distances(
        queries, dictionary, config.metric, ScoringMode.EXEMPLAR
    )
    k = min(config.k, distances.shape[1])
    return np.asarray(
        [classify_knn(row, labels, k) for row in distances], dtype=np.int64
    )


def _evaluate_episode(
    episode: Episode,
    projected: np.ndarray,
    class_labels: np.ndarray,
    config: PipelineConfig,
    episode_index: int,
    variant_ids: np.ndarray | None = None,
) -> EpisodeResult:
    support = projected[episode.support_rows]
    support_classes = class_labels[episode.support_rows]
    queries = projected[episode.query_rows]
    query_classes = class_labels[episode.query_rows]
    exemplar_mask = None
    if not config.variant_exemplars and variant_ids is not None:
        exemplar_mask = variant_ids[episode.support_rows] == 0
    dictionary = build_dictionary(
        support, support_classes, config.shrinkage, exemplar_mask=exemplar_mask
    )
    predictions = _classify_rows(queries, dictionary, config)
    correct = int(np.sum(predictions == query_classes))
    return EpisodeResult(
        episode_index=episode_index, correct=correct, total=int(len(query_classes))
    )


def run_episode(
    episode: Episode,
    eset: EmbeddingSet,
    projector: LinearProjector,
    config: PipelineConfig,
) -> EpisodeResult:
    """Pool, project, build the support dictionary, and classify queries."""
    projected = apply_projector(eset, projector)
    return _evaluate_episode(
        episode, projected, eset.class_labels.astype(np.int64), config, 0,
        variant_ids=eset.variant_ids,
    )


def apply_projector(eset: EmbeddingSet, projector: LinearProjector) -> np.ndarray:
    """Pooled, projected vectors for every record in the set."""
    pooled = eset.pooled_vectors().astype(np.float64)
    if projector.kind is ProjectorKind.IDENTITY:
        return pooled
    return (pooled - projector.mean) @ projector.weights.T


def run_fewshot_eval(
    eset: EmbeddingSet,
    projector: LinearProjector,
    config: PipelineConfig,
    threads: int | None = None,
) -> EvalSummary:
    """Evaluate `episode_count` episodes drawn with per-episode seeds."""
    config.validate()
    started = time.perf_counter()
    projector = canonicalize(projector)
    projected = apply_projector(eset, projector)
    class_labels = eset.class_labels.astype(np.int64)
    _build_index(eset)  # build the sampling index before workers share it

    variant_ids = eset.variant_ids

    def one(i: int) -> EpisodeResult:
        episode = sample_episode(eset, config.sampler, i)
        return _evaluate_episode(episode, projected, class_labels, config, i,
                                 variant_ids=variant_ids)

    indices = range(config.sampler.episode_count)
    workers = threads or os.cpu_count() or 1
    if workers <= 1:
        results = [one(i) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, indices))
    accuracies = [r.accuracy for r in results]
    mean, halfwidth = confidence_interval(accuracies)
    return EvalSummary(
        mean_accuracy=mean * 100.0,
        ci_halfwidth_95=halfwidth * 100.0,
        per_episode=tuple(results),
        config_fingerprint=config.fingerprint(),
        wall_time=time.perf_counter() - started,
    )


# --- projector fitting and cache ----------------------------------------


def fit_reduction(
    eset: EmbeddingSet, reduction: Reduction, output_dim: int | None, ica: FitConfig
) -> LinearProjector:
    pooled = eset.pooled_vectors().astype(np.float64)
    if reduction is Reduction.RAW:
        return LinearProjector.identity(pooled.shape[1])
    if output_dim is None:
        raise DataError("output_dim required for pca/ica")
    if reduction is Reduction.PCA:
        return fit_pca(pooled, output_dim)
    return fit_ica(pooled, output_dim, ica)


def _cache_dir(explicit: str | Path | None) -> Path | None:
    if explicit is not None:
        return Path(explicit)
    env = os.environ.get(CACHE_ENV_VAR)
    return Path(env) if env else None


def projector_cache_key(
    file_path: Path, reduction: Reduction, output_dim: int | None, ica: FitConfig
) -> str:
    digest = hashlib.sha256()
    digest.update(file_path.read_bytes())
    tag = {
        "reduction": reduction.value,
        "output_dim": output_dim,
        "ica": [ica.max_iterations, ica.tolerance, ica.ica_contrast.value, ica.seed]
        if reduction is Reduction.ICA
        else None,
    }
    digest.update(json.dumps(tag, sort_keys=True).encode())
    return digest.hexdigest()


def fit_reduction_cached(
    eset: EmbeddingSet,
    file_path: Path | None,
    reduction: Reduction,
    output_dim: int | None,
    ica: FitConfig,
    cache_dir: str | Path | None = None,
) -> LinearProjector:
    """Fit a projector, reusing an on-disk cache when one is configured.

    The returned projector is always round-tripped through the serialized
    float32 form, so evaluation results do not depend on cache state.
    """
    directory = _cache_dir(cache_dir)
    if reduction is Reduction.RAW or directory is None or file_path is None:
        return canonicalize(fit_reduction(eset, reduction, output_dim, ica))
    directory.mkdir(parents=True, exist_ok=True)
    key = projector_cache_key(file_path, reduction, output_dim, ica)
    cached = directory / f"{key}.proj"
    if cached.exists():
        return canonicalize(load_projector(cached))
    projector = fit_reduction(eset, reduction, output_dim, ica)
    save_projector(projector, cached)
    return canonicalize(load_projector(cached))


# --- characterization and dimension sweeps ------------------------------


@dataclass(frozen=True)
class CharacterizationParams:
    support_per_class: int = 64
    query_total: int = 300
    query_per_class: int | None = None
    k: int = 15
    metric: Metric = Metric.MAHALANOBIS
    class_subsample: int | None = None
    seed: int = 0
    shrinkage: ShrinkageConfig = field(default_factory=ShrinkageConfig)


@dataclass(frozen=True)
class LayerAccuracy:
    layer_id: int
    accuracy: float
    way: int
    support_per_class: int
    query_count: int


def _characterize_layer(
    eset: EmbeddingSet,
    params: CharacterizationParams,
    projector: LinearProjector,
) -> LayerAccuracy:
    episode = sample_characterization_split(
        eset,
        support_per_class=params.support_per_class,
        query_total=params.query_total,
        seed=params.seed,
        class_subsample=params.class_subsample,
        query_per_class=params.query_per_class,
    )
    projected = apply_projector(eset, canonicalize(projector))
    labels = eset.class_labels.astype(np.int64)
    config = PipelineConfig(
        layer_id=eset.header.layer_id,
        metric=params.metric,
        classifier=Classifier.KNN,
        k=params.k,
        shrinkage=params.shrinkage,
    )
    result = _evaluate_episode(episode, projected, labels, config, 0)
    return LayerAccuracy(
        layer_id=eset.header.layer_id,
        accuracy=result.accuracy,
        way=episode.way,
        support_per_class=params.support_per_class,
        query_count=result.total,
    )


def run_characterization(
    manifest: DatasetManifest,
    params: CharacterizationParams,
    layers: list[int] | None = None,
) -> list[LayerAccuracy]:
    """Per-layer accuracy with the many-way protocol on raw features.

    The split is a pure function of (item identities, seed), and manifests
    guarantee identical identities across layers, so every layer evaluates
    the same support/query items and the output is independent of the layer
    processing order.
    """
    wanted = sorted(layers) if layers is not None else manifest.layer_ids()
    rows = []
    for layer_id in wanted:
        if layer_id not in manifest.layer_files:
            raise DataError(f"manifest has no file for layer {layer_id}")
        eset = read_embedding_file(manifest.layer_files[layer_id])
        projector = LinearProjector.identity(eset.header.feature_dim)
        rows.append(_characterize_layer(eset, params, projector))
    return rows


@dataclass(frozen=True)
class SweepCell:
    layer_id: int
    output_dim: int
    accuracy: float


def run_dim_sweep(
    manifest: DatasetManifest,
    layers: list[int],
    dims: list[int],
    params: CharacterizationParams,
    ica: FitConfig | None = None,
    cache_dir: str | Path | None = None,
) -> list[SweepCell]:
    """Accuracy grid over (layer, PCA output dimension) pairs."""
    ica = ica or FitConfig()
    cells = []
    for layer_id in sorted(layers):
        if layer_id not in manifest.layer_files:
            raise DataError(f"manifest has no file for layer {layer_id}")
        file_path = Path(manifest.layer_files[layer_id])
        eset = read_embedding_file(file_path)
        for dim in dims:
            projector = fit_reduction_cached(
                eset, file_path, Reduction.PCA, dim, ica, cache_dir
            )
            row = _characterize_layer(eset, params, projector)
            cells.append(SweepCell(layer_id=layer_id, output_dim=dim, accuracy=row.accuracy))
    return cells


def fit_layer_curve(rows: list[LayerAccuracy]) -> LogisticFit:
    """Logistic maturation fit over a characterization table."""
    ordered = sorted(rows, key=lambda r: r.layer_id)
    xs = np.asarray([r.layer_id for r in ordered], dtype=np.float64)
    ys = np.asarray([r.accuracy for r in ordered], dtype=np.float64)
    return fit_logistic(xs, ys)


# --- artifacts ------------------------------------------------------------


def artifact_basename(dataset: str, config: PipelineConfig) -> str:
    if config.reduction is Reduction.RAW:
        reduction = "raw"
    else:
        reduction = f"{config.reduction.value}{config.output_dim}"
    return (
        f"{dataset}_{config.layer_id}_{reduction}"
        f"_{config.sampler.way}w{config.sampler.shot}s"
    )


def write_episode_csv(summary: EvalSummary, path: str | Path) -> None:
    lines = ["episode_index,correct,total,accuracy"]
    for r in summary.per_episode:
        lines.append(f"{r.episode_index},{r.correct},{r.total},{r.accuracy!r}")
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def summary_payload(summary: EvalSummary) -> dict:
    return {
        "mean_accuracy_pct": summary.mean_accuracy,
        "ci95_halfwidth_pct": summary.ci_halfwidth_95,
        "episode_count": summary.episode_count,
        "config_fingerprint": summary.config_fingerprint,
        "wall_time_s": summary.wall_time,
    }


def write_summary_json(
    summary: EvalSummary, path: str | Path, extra: dict | None = None
) -> None:
    payload = summary_payload(summary)
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
