"""Request/response schemas for the evaluation service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

from ..concepts import Metric, ShrinkageConfig
from ..harness import Classifier, PipelineConfig, Reduction
from ..episodes import SamplerConfig
from ..reduction import FitConfig, IcaContrast


class ShrinkageSpec(BaseModel):
    lam: float = Field(0.5, ge=0.0, le=1.0, description="weight on the scaled-identity target")
    pooled_fallback_threshold: int = Field(2, ge=1)
    identity_fallback_threshold: int = Field(2, ge=1)

    def to_config(self) -> ShrinkageConfig:
        return ShrinkageConfig(
            lam=self.lam,
            pooled_fallback_threshold=self.pooled_fallback_threshold,
            identity_fallback_threshold=self.identity_fallback_threshold,
        )


class IcaSpec(BaseModel):
    max_iterations: int = Field(400, ge=1)
    tolerance: float = Field(1e-4, gt=0.0)
    contrast: Literal["logcosh", "cube"] = "logcosh"
    seed: int = Field(0, ge=0)

    def to_config(self) -> FitConfig:
        return FitConfig(
            max_iterations=self.max_iterations,
            tolerance=self.tolerance,
            ica_contrast=IcaContrast(self.contrast),
            seed=self.seed,
        )


class FewshotRequest(BaseModel):
    manifest_path: str
    layer_id: int = Field(ge=1)
    reduction: Literal["raw", "pca", "ica"] = "raw"
    output_dim: int | None = Field(None, ge=1)
    metric: Literal["mahalanobis", "euclidean", "cosine"] = "mahalanobis"
    classifier: Literal["knn", "centroid"] = "knn"
    k: int = Field(5, ge=1)
    way: int = Field(5, ge=2)
    shot: int = Field(5, ge=1)
    query_per_class: int = Field(15, ge=1)
    include_variants: bool = True
    variant_exemplars: bool = Field(
        True,
        description="augmented variants vote as kNN exemplars; off restricts "
        "them to centroid/covariance estimation",
    )
    episodes: int = Field(600, ge=1)
    seed: int = Field(ge=0)
    shrinkage: ShrinkageSpec = Field(default_factory=ShrinkageSpec)
    ica: IcaSpec = Field(default_factory=IcaSpec)
    threads: int | None = Field(None, ge=1)
    dump_episodes: int = Field(0, ge=0)
    out_dir: str | None = None
    cache_dir: str | None = None

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            layer_id=self.layer_id,
            reduction=Reduction(self.reduction),
            output_dim=self.output_dim,
            metric=Metric(self.metric),
            classifier=Classifier(self.classifier),
            k=self.k,
            variant_exemplars=self.variant_exemplars,
            shrinkage=self.shrinkage.to_config(),
            sampler=SamplerConfig(
                way=self.way,
                shot=self.shot,
                query_per_class=self.query_per_class,
                include_variants=self.include_variants,
                master_seed=self.seed,
                episode_count=self.episodes,
            ),
            ica=self.ica.to_config(),
        )


class FewshotResponse(BaseModel):
    dataset: str
    mean_accuracy_pct: float
    ci95_halfwidth_pct: float
    episode_count: int
    config_fingerprint: str
    wall_time_s: float
    artifacts: dict[str, str] = Field(default_factory=dict)


class CharacterizeRequest(BaseModel):
    manifest_path: str
    layers: list[int] | None = None
    support_per_class: int = Field(64, ge=1)
    query_total: int = Field(300, ge=1)
    query_per_class: int | None = Field(None, ge=1)
    k: int = Field(15, ge=1)
    metric: Literal["mahalanobis", "euclidean", "cosine"] = "mahalanobis"
    class_subsample: int | None = Field(None, ge=2)
    seed: int = Field(ge=0)
    shrinkage: ShrinkageSpec = Field(default_factory=ShrinkageSpec)
    fit_curve: bool = True
    out_dir: str | None = None


class LayerRow(BaseModel):
    layer: int
    accuracy: float
    way: int
    support_per_class: int
    query_count: int


class LogisticFitPayload(BaseModel):
    asymptote: float
    asymptote_pct: float
    growth_rate: float
    midpoint: float
    r_squared: float
    iterations: int
    converged: bool
    warning: str | None = None


class CharacterizeResponse(BaseModel):
    dataset: str
    rows: list[LayerRow]
    logistic_fit: LogisticFitPayload | None = None
    artifacts: dict[str, str] = Field(default_factory=dict)


class DimSweepRequest(BaseModel):
    manifest_path: str
    layers: list[int]
    dims: list[int]
    support_per_class: int = Field(64, ge=1)
    query_total: int = Field(300, ge=1)
    query_per_class: int | None = Field(None, ge=1)
    k: int = Field(15, ge=1)
    metric: Literal["mahalanobis", "euclidean", "cosine"] = "mahalanobis"
    class_subsample: int | None = Field(None, ge=2)
    seed: int = Field(ge=0)
    shrinkage: ShrinkageSpec = Field(default_factory=ShrinkageSpec)
    ica: IcaSpec = Field(default_factory=IcaSpec)
    out_dir: str | None = None
    cache_dir: str | None = None


class SweepCellPayload(BaseModel):
    layer: int
    output_dim: int
    accuracy: float


class DimSweepResponse(BaseModel):
    dataset: str
    cells: list[SweepCellPayload]
    artifacts: dict[str, str] = Field(default_factory=dict)


class FitLogisticRequest(BaseModel):
    input_path: str | None = None
    xs: list[float] | None = None
    ys: list[float] | None = None
    out_dir: str | None = None


class FitLogisticResponse(BaseModel):
    fit: LogisticFitPayload
    artifacts: dict[str, str] = Field(default_factory=dict)


class ValidateRequest(BaseModel):
    manifest_path: str
    out_dir: str | None = None


class LayerCheckPayload(BaseModel):
    layer: int
    path: str
    errors: list[str]
    class_count: int | None = None
    item_count: int | None = None
    feature_dim: int | None = None
    tokens_per_item: int | None = None


class ValidateResponse(BaseModel):
    ok: bool
    dataset: str
    split: str
    backbone: str
    layers: list[LayerCheckPayload]
    errors: list[str]
    artifacts: dict[str, str] = Field(default_factory=dict)


class ReportRequest(BaseModel):
    summary_paths: list[str]
    out_dir: str


class ReportResponse(BaseModel):
    row_count: int
    artifacts: dict[str, str] = Field(default_factory=dict)


class ErrorPayload(BaseModel):
    code: Literal["invalid", "data", "numeric"]
    message: str
