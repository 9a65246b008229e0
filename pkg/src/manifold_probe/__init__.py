"""Few-shot evaluation of frozen-backbone embeddings.

Core pieces: a binary embedding file format with token pooling, PCA/ICA
manifold refinement, per-class-covariance Mahalanobis kNN classification,
a deterministic episodic benchmark harness, and logistic fitting of
layer-wise accuracy curves. A FastAPI service exposes the protocols; the
CLI is a thin client over it.
"""

from .concepts import (
    ClassModel,
    ConceptDictionary,
    CovSource,
    Metric,
    PosteriorResult,
    ScoringMode,
    ShrinkageConfig,
    build_dictionary,
    classify_centroid,
    classify_knn,
    gmm_posterior,
    mahalanobis,
    pairwise_distances,
)
from .curvefit import LogisticFit, fit_logistic, logistic, r_squared
from .episodes import (
    Episode,
    SamplerConfig,
    derive_episode_seed,
    dump_episode,
    sample_characterization_split,
    sample_episode,
    write_episode_dump,
)
from .errors import (
    DataError,
    FormatError,
    InsufficientDataError,
    ManifoldProbeError,
    NumericalError,
)
from .harness import (
    CharacterizationParams,
    Classifier,
    EpisodeResult,
    EvalSummary,
    LayerAccuracy,
    PipelineConfig,
    Reduction,
    SweepCell,
    confidence_interval,
    fit_layer_curve,
    run_characterization,
    run_dim_sweep,
    run_episode,
    run_fewshot_eval,
)
from .reduction import (
    FitConfig,
    IcaContrast,
    LinearProjector,
    ProjectorKind,
    explained_variance,
    fit_ica,
    fit_pca,
    load_projector,
    project,
    save_projector,
)
from .store import (
    DatasetManifest,
    EmbeddingFileHeader,
    EmbeddingRecord,
    EmbeddingSet,
    ManifestReport,
    pool_tokens,
    read_embedding_file,
    read_manifest,
    validate_manifest,
    write_embedding_file,
    write_manifest,
)

__version__ = "0.1.0"
