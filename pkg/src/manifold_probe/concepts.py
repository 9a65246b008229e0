"""Class concept dictionaries and query scoring.

A dictionary holds, per support class, the exemplar vectors, their centroid,
and a regularized covariance with its inverse. Covariance estimation walks a
fallback ladder because support counts are tiny relative to the feature
dimension: per-class when a class has enough samples, else the pooled
within-class covariance, else the identity. The chosen rung is recorded on
each class model.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist

from .errors import DataError, NumericalError


class Metric(str, Enum):
    MAHALANOBIS = "mahalanobis"
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"


class ScoringMode(str, Enum):
    EXEMPLAR = "exemplar"
    CENTROID = "centroid"


class CovSource(str, Enum):
    PER_CLASS = "per_class"
    POOLED = "pooled"
    IDENTITY = "identity"


@dataclass(frozen=True)
class ShrinkageConfig:
    """Covariance regularization: blend toward a scaled identity.

    `lam` is the convex weight on the (trace/dim)-scaled identity target.
    The thresholds pick the covariance rung: a class uses its own covariance
    only with at least `pooled_fallback_threshold` exemplars, and the pooled
    covariance needs at least `identity_fallback_threshold` total exemplars
    (and more exemplars than classes) to be defined.
    """

    lam: float = 0.5
    pooled_fallback_threshold: int = 2
    identity_fallback_threshold: int = 2

    def validate(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise DataError("shrinkage weight must be in [0, 1]")
        if self.pooled_fallback_threshold < 1 or self.identity_fallback_threshold < 1:
            raise DataError("fallback thresholds must be >= 1")


@dataclass(frozen=True, eq=False)
class ClassModel:
    class_label: int
    exemplars: np.ndarray  # (n_c, dim)
    centroid: np.ndarray  # (dim,)
    covariance: np.ndarray  # (dim, dim), regularized
    precision: np.ndarray  # (dim, dim)
    prior: float
    cov_source: CovSource
    log_det_covariance: float

    @property
    def exemplar_count(self) -> int:
        return self.exemplars.shape[0]


@dataclass(frozen=True, eq=False)
class ConceptDictionary:
    models: tuple[ClassModel, ...]
    dim: int
    shrinkage: ShrinkageConfig

    @property
    def class_labels(self) -> list[int]:
        return [m.class_label for m in self.models]

    def model_for(self, class_label: int) -> ClassModel:
        for model in self.models:
            if model.class_label == class_label:
                return model
        raise KeyError(class_label)


def _shrink(sample_cov: np.ndarray, lam: float, dim: int) -> np.ndarray:
    scale = float(np.trace(sample_cov)) / dim
    return (1.0 - lam) * sample_cov + lam * scale * np.eye(dim)


def _spd_inverse(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Inverse and log-determinant of an SPD matrix via Cholesky."""
    try:
        factor = cho_factor(cov, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"covariance is not positive-definite: {exc}") from exc
    dim = cov.shape[0]
    precision = cho_solve(factor, np.eye(dim), check_finite=False)
    precision = 0.5 * (precision + precision.T)
    log_det = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    return precision, log_det


def build_dictionary(
    support_vectors: np.ndarray,
    support_labels: np.ndarray,
    shrinkage: ShrinkageConfig | None = None,
    exemplar_mask: np.ndarray | None = None,
) -> ConceptDictionary:
    """Aggregate labeled support vectors into per-class models.

    Covariance rungs, per class c with n_c exemplars out of N total across C
    classes: per-class sample covariance (1/(n_c - 1)) when n_c clears the
    threshold; else the pooled within-class covariance (1/(N - C)) when total
    support clears its threshold and N > C; else the identity. The selected
    matrix S is then shrunk to (1 - lam) * S + lam * (tr(S)/dim) * I.

    `exemplar_mask` narrows which support rows serve as nearest-neighbor
    exemplars (e.g. originals only) while every row still feeds the centroid
    and covariance estimates; by default all rows play both roles.
    """
    shrinkage = shrinkage or ShrinkageConfig()
    shrinkage.validate()
    vectors = np.asarray(support_vectors, dtype=np.float64)
    labels = np.asarray(support_labels)
    if vectors.ndim != 2 or vectors.shape[0] != labels.shape[0]:
        raise DataError("support vectors and labels must align as (n, dim) and (n,)")
    if vectors.shape[0] == 0:
        raise DataError("empty support set")
    if not np.all(np.isfinite(vectors)):
        raise DataError("support vectors contain non-finite values")
    if exemplar_mask is not None:
        exemplar_mask = np.asarray(exemplar_mask, dtype=bool)
        if exemplar_mask.shape != labels.shape:
            raise DataError("exemplar_mask must align with support rows")
    dim = vectors.shape[1]
    class_labels = sorted(int(c) for c in np.unique(labels))
    groups = {c: vectors[labels == c] for c in class_labels}
    exemplar_groups = {
        c: vectors[(labels == c) & exemplar_mask] if exemplar_mask is not None
        else groups[c]
        for c in class_labels
    }
    if any(len(g) == 0 for g in groups.values()):
        raise DataError("every class needs at least one support vector")
    if any(len(g) == 0 for g in exemplar_groups.values()):
        raise DataError("exemplar_mask leaves a class without exemplars")

    total = vectors.shape[0]
    n_classes = len(class_labels)
    # Pooled within-class covariance, defined only when N - C >= 1.
    pooled = None
    if total - n_classes >= 1 and total >= shrinkage.identity_fallback_threshold:
        scatter = np.zeros((dim, dim))
        for g in groups.values():
            centered = g - g.mean(axis=0)
            scatter += centered.T @ centered
        pooled = scatter / (total - n_classes)
        if float(np.trace(pooled)) <= 0.0:
            pooled = None

    identity = np.eye(dim)
    prior = 1.0 / n_classes
    models = []
    for c in class_labels:
        exemplars = groups[c]
        n_c = exemplars.shape[0]
        centroid = exemplars.mean(axis=0)
        source = CovSource.IDENTITY
        sample_cov = identity
        if n_c >= max(2, shrinkage.pooled_fallback_threshold):
            candidate = np.cov(exemplars, rowvar=False, ddof=1)
            candidate = np.atleast_2d(candidate)
            if float(np.trace(candidate)) > 0.0:
                sample_cov = candidate
                source = CovSource.PER_CLASS
            elif pooled is not None:
                sample_cov = pooled
                source = CovSource.POOLED
        elif pooled is not None:
            sample_cov = pooled
            source = CovSource.POOLED
        covariance = _shrink(sample_cov, shrinkage.lam, dim)
        covariance = 0.5 * (covariance + covariance.T)
        try:
            precision, log_det = _spd_inverse(covariance)
        except NumericalError:
            # Shrinkage with lam=0 can leave a singular matrix; the identity
            # rung is always well-conditioned.
            covariance = identity.copy()
            source = CovSource.IDENTITY
            precision, log_det = identity.copy(), 0.0
        models.append(
            ClassModel(
                class_label=c,
                exemplars=exemplar_groups[c],
                centroid=centroid,
                covariance=covariance,
                precision=precision,
                prior=prior,
                cov_source=source,
                log_det_covariance=log_det,
            )
        )
    return ConceptDictionary(models=tuple(models), dim=dim, shrinkage=shrinkage)


def mahalanobis(query: np.ndarray, exemplar: np.ndarray, precision: np.ndarray) -> float:
    """Distance between two vectors under a class precision matrix."""
    query = np.asarray(query, dtype=np.float64)
    exemplar = np.asarray(exemplar, dtype=np.float64)
    if query.shape != exemplar.shape or precision.shape != (query.size, query.size):
        raise DataError("dimension mismatch in mahalanobis()")
    diff = query - exemplar
    value = float(diff @ precision @ diff)
    return float(np.sqrt(max(value, 0.0)))


def _mahalanobis_block(queries: np.ndarray, points: np.ndarray, precision: np.ndarray) -> np.ndarray:
    # (q - e)^T P (q - e) = ||L^T (q - e)||^2 with P = L L^T
    factor = np.linalg.cholesky(precision)
    q = queries @ factor
    p = points @ factor
    return cdist(q, p, metric="euclidean")


def pairwise_distances(
    queries: np.ndarray,
    dictionary: ConceptDictionary,
    metric: Metric = Metric.MAHALANOBIS,
    mode: ScoringMode = ScoringMode.EXEMPLAR,
) -> tuple[np.ndarray, np.ndarray]:
    """Score queries against a dictionary.

    Returns (distances, column_labels). Exemplar mode scores every query
    against every exemplar of every class, Mahalanobis using that exemplar's
    class precision; centroid mode scores one column per class. Cosine is
    returned as 1 - cosine similarity so smaller is better for every metric.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if queries.shape[1] != dictionary.dim:
        raise DataError(
            f"query dim {queries.shape[1]} does not match dictionary dim {dictionary.dim}"
        )
    blocks = []
    labels = []
    for model in dictionary.models:
        points = model.exemplars if mode is ScoringMode.EXEMPLAR else model.centroid[None, :]
        if metric is Metric.MAHALANOBIS:
            block = _mahalanobis_block(queries, points, model.precision)
        elif metric is Metric.EUCLIDEAN:
            block = cdist(queries, points, metric="euclidean")
        else:
            q_norm = np.linalg.norm(queries, axis=1)
            p_norm = np.linalg.norm(points, axis=1)
            if np.any(q_norm == 0.0) or np.any(p_norm == 0.0):
                raise DataError("cosine distance undefined for zero-norm vectors")
            sim = (queries @ points.T) / np.outer(q_norm, p_norm)
            block = 1.0 - sim
        blocks.append(block)
        labels.extend([model.class_label] * points.shape[0])
    return np.hstack(blocks), np.asarray(labels, dtype=np.int64)


def classify_knn(distances: np.ndarray, labels: np.ndarray, k: int) -> int:
    """Majority vote over the k nearest columns of one distance row.

    Vote ties break toward the smaller mean distance among the tied classes,
    then toward the smaller class id. Neighbor selection orders by
    (distance, label) so equal-distance columns resolve independently of
    input order.
    """
    distances = np.asarray(distances, dtype=np.float64)
    labels = np.asarray(labels)
    if distances.ndim != 1 or distances.size == 0:
        raise DataError("empty distance row")
    if not 1 <= k <= distances.size:
        raise DataError(f"k={k} out of range 1..{distances.size}")
    order = np.lexsort((labels, distances))[:k]
    neighbor_labels = labels[order]
    neighbor_distances = distances[order]
    best_label = -1
    best_votes = -1
    best_mean = np.inf
    for label in np.unique(neighbor_labels):
        mask = neighbor_labels == label
        votes = int(mask.sum())
        mean_distance = float(neighbor_distances[mask].mean())
        better = votes > best_votes or (
            votes == best_votes
            and (mean_distance < best_mean or (mean_distance == best_mean and label < best_label))
        )
        if better:
            best_label = int(label)
            best_votes = votes
            best_mean = mean_distance
    return best_label


def classify_centroid(distances: np.ndarray, labels: np.ndarray) -> int:
    """Nearest-centroid rule; ties go to the smaller class id."""
    distances = np.asarray(distances, dtype=np.float64)
    labels = np.asarray(labels)
    if distances.ndim != 1 or distances.size == 0:
        raise DataError("empty distance row")
    order = np.lexsort((labels, distances))
    return int(labels[order[0]])


def dump_class_projectors(dictionary: ConceptDictionary, directory) -> list:
    """Debug dump: one projector-format file per class.

    Each file stores the class centroid as the mean and the transpose
    Cholesky factor of the precision as the weights, so applying the
    projector maps a query into coordinates where that class's Mahalanobis
    distance is plain Euclidean distance from the origin. Episode-scoped
    dictionaries are not otherwise persisted.
    """
    from pathlib import Path

    from .reduction import LinearProjector, ProjectorKind, save_projector

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for model in dictionary.models:
        factor = np.linalg.cholesky(model.precision)
        projector = LinearProjector(
            kind=ProjectorKind.PCA,
            input_dim=dictionary.dim,
            output_dim=dictionary.dim,
            mean=model.centroid,
            weights=factor.T,
        )
        path = directory / f"class_{model.class_label:04d}.proj"
        save_projector(projector, path)
        paths.append(path)
    return paths


@dataclass(frozen=True)
class PosteriorResult:
    probabilities: np.ndarray
    class_labels: tuple[int, ...]
    underflow: bool


def gmm_posterior(query: np.ndarray, dictionary: ConceptDictionary) -> PosteriorResult:
    """Per-class Gaussian mixture responsibilities for one query.

    Each class contributes prior * N(query; centroid, covariance); the result
    is normalized in log space. When every component underflows to an
    effective zero likelihood the posterior is returned uniform with the
    `underflow` flag set.
    """
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (dictionary.dim,):
        raise DataError("query dimension does not match dictionary")
    n = len(dictionary.models)
    log_terms = np.empty(n)
    with np.errstate(over="ignore", invalid="ignore"):
        for i, model in enumerate(dictionary.models):
            diff = query - model.centroid
            maha_sq = float(diff @ model.precision @ diff)
            log_likelihood = -0.5 * (
                dictionary.dim * np.log(2.0 * np.pi) + model.log_det_covariance + maha_sq
            )
            log_terms[i] = np.log(model.prior) + log_likelihood
    labels = tuple(m.class_label for m in dictionary.models)
    peak = np.max(log_terms)
    if not np.isfinite(peak):
        return PosteriorResult(
            probabilities=np.full(n, 1.0 / n), class_labels=labels, underflow=True
        )
    shifted = np.exp(log_terms - peak)
    return PosteriorResult(
        probabilities=shifted / shifted.sum(), class_labels=labels, underflow=False
    )
