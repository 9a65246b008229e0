"""Linear manifold refinement: PCA and FastICA projectors.

Both reductions are represented by the same applied form, a mean vector and
a weight matrix: projecting a vector z yields weights @ (z - mean). PCA rows
are orthonormal principal directions; ICA rows compose whitening with the
fixed-point rotation, so ICA outputs have unit variance on the fitting data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, NumericalError
from .rng import Xoshiro256StarStar


class ProjectorKind(str, Enum):
    IDENTITY = "identity"
    PCA = "pca"
    ICA = "ica"


class IcaContrast(str, Enum):
    LOGCOSH = "logcosh"
    CUBE = "cube"


@dataclass(frozen=True)
class FitConfig:
    """Iteration controls for FastICA."""

    max_iterations: int = 400
    tolerance: float = 1e-4
    ica_contrast: IcaContrast = IcaContrast.LOGCOSH
    seed: int = 0

    def validate(self) -> None:
        if self.max_iterations < 1:
            raise DataError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise DataError("tolerance must be positive")


@dataclass(frozen=True, eq=False)
class LinearProjector:
    kind: ProjectorKind
    input_dim: int
    output_dim: int
    mean: np.ndarray | None = None  # (input_dim,)
    weights: np.ndarray | None = None  # (output_dim, input_dim)
    explained_variance_ratios: np.ndarray | None = None  # pca only
    fit_config: FitConfig | None = None
    converged: bool | None = None
    iterations_run: int | None = None

    @classmethod
    def identity(cls, dim: int) -> "LinearProjector":
        return cls(kind=ProjectorKind.IDENTITY, input_dim=dim, output_dim=dim)


def project(projector: LinearProjector, z: np.ndarray) -> np.ndarray:
    """Apply the projector to one vector or to rows of a matrix."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != projector.input_dim:
        raise DataError(
            f"input dimension {z.shape[-1]} does not match projector "
            f"input_dim {projector.input_dim}"
        )
    if projector.kind is ProjectorKind.IDENTITY:
        return z.copy()
    return (z - projector.mean) @ projector.weights.T


def explained_variance(projector: LinearProjector) -> np.ndarray:
    """Per-component explained-variance ratios of a PCA projector."""
    if projector.kind is not ProjectorKind.PCA:
        raise DataError("explained_variance is only defined for PCA projectors")
    return projector.explained_variance_ratios.copy()


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """Orient each row so its largest-magnitude entry is positive."""
    out = components.copy()
    for i in range(out.shape[0]):
        j = int(np.argmax(np.abs(out[i])))
        if out[i, j] < 0:
            out[i] = -out[i]
    return out


def fit_pca(data: np.ndarray, output_dim: int) -> LinearProjector:
    """Fit a PCA projector on the rows of `data`.

    Weight rows are the top eigenvectors of the 1/(n-1)-normalized sample
    covariance, ordered by descending eigenvalue, each oriented so its
    largest-magnitude entry is positive. Computed through the SVD of the
    centered data for numerical robustness when n < d.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise DataError("fit_pca expects an (n, d) matrix")
    n, d = data.shape
    if n < 2:
        raise DataError("fit_pca needs at least 2 samples")
    if not 1 <= output_dim <= min(n - 1, d):
        raise DataError(
            f"output_dim {output_dim} out of range 1..{min(n - 1, d)} for n={n}, d={d}"
        )
    if not np.all(np.isfinite(data)):
        raise DataError("fit_pca input contains non-finite values")
    mean = data.mean(axis=0)
    centered = data - mean
    total_variance = float(np.sum(centered * centered)) / (n - 1)
    if total_variance <= 0.0:
        raise NumericalError("degenerate data: zero total variance")
    _, singular_values, vt = np.linalg.svd(centered, full_matrices=False)
    eigenvalues = (singular_values**2) / (n - 1)
    components = _fix_signs(vt[:output_dim])
    ratios = eigenvalues[:output_dim] / total_variance
    return LinearProjector(
        kind=ProjectorKind.PCA,
        input_dim=d,
        output_dim=output_dim,
        mean=mean,
        weights=components,
        explained_variance_ratios=ratios,
    )


def _symmetric_decorrelation(w: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = np.linalg.eigh(w @ w.T)
    if np.min(eigenvalues) <= 0:
        raise NumericalError("rotation matrix lost rank during decorrelation")
    inv_sqrt = (eigenvectors * (1.0 / np.sqrt(eigenvalues))) @ eigenvectors.T
    return inv_sqrt @ w


def fit_ica(data: np.ndarray, output_dim: int, config: FitConfig | None = None) -> LinearProjector:
    """Fit a FastICA projector: center, PCA-whiten to `output_dim`, then a
    symmetric fixed-point iteration on the configured contrast function.

    Non-convergence within `max_iterations` is not an error; the projector is
    returned with `converged=False` so callers can decide. The whitening and
    rotation are composed into a single (mean, weights) pair.
    """
    config = config or FitConfig()
    config.validate()
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise DataError("fit_ica expects an (n, d) matrix")
    n, d = data.shape
    if output_dim < 1 or output_dim > d:
        raise DataError(f"output_dim {output_dim} out of range 1..{d}")
    if n <= output_dim:
        raise DataError(f"fit_ica needs more samples ({n}) than components ({output_dim})")
    if not np.all(np.isfinite(data)):
        raise DataError("fit_ica input contains non-finite values")

    mean = data.mean(axis=0)
    centered = data - mean
    _, singular_values, vt = np.linalg.svd(centered, full_matrices=False)
    eigenvalues = (singular_values[:output_dim] ** 2) / (n - 1)
    if np.min(eigenvalues) <= 0:
        raise NumericalError("data rank below requested component count")
    whitening = vt[:output_dim] / np.sqrt(eigenvalues)[:, None]  # (d', d)
    z = centered @ whitening.T  # (n, d'), unit variance per component

    rng = Xoshiro256StarStar(config.seed)
    w = np.array(
        [[rng.gauss() for _ in range(output_dim)] for _ in range(output_dim)]
    )
    w = _symmetric_decorrelation(w)

    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        y = z @ w.T  # (n, d')
        if config.ica_contrast is IcaContrast.LOGCOSH:
            g = np.tanh(y)
            g_prime_mean = (1.0 - g * g).mean(axis=0)
        else:
            g = y**3
            g_prime_mean = 3.0 * (y * y).mean(axis=0)
        w_new = (g.T @ z) / n - g_prime_mean[:, None] * w
        w_new = _symmetric_decorrelation(w_new)
        drift = np.max(np.abs(np.abs(w_new @ w.T) - np.eye(output_dim)))
        w = w_new
        if drift < config.tolerance:
            converged = True
            break

    return LinearProjector(
        kind=ProjectorKind.ICA,
        input_dim=d,
        output_dim=output_dim,
        mean=mean,
        weights=w @ whitening,
        fit_config=config,
        converged=converged,
        iterations_run=iterations,
    )


# --- serialization ------------------------------------------------------

_PROJ_MAGIC = b"LPRJ"
_PROJ_VERSION = 1
_KIND_CODES = {ProjectorKind.IDENTITY: 0, ProjectorKind.PCA: 1, ProjectorKind.ICA: 2}
_KIND_FROM_CODE = {v: k for k, v in _KIND_CODES.items()}
_CONTRAST_CODES = {IcaContrast.LOGCOSH: 0, IcaContrast.CUBE: 1}
_CONTRAST_FROM_CODE = {v: k for k, v in _CONTRAST_CODES.items()}
_PROJ_HEADER = struct.Struct("<4sIBBBBIIIdQ")


def save_projector(projector: LinearProjector, path: str | Path) -> None:
    """Serialize a projector: header, then mean and weights as little-endian
    float32 (the same float convention as embedding files), then the
    explained-variance ratios for PCA."""
    config = projector.fit_config or FitConfig()
    flags = 0
    if projector.converged:
        flags |= 1
    if projector.explained_variance_ratios is not None:
        flags |= 2
    header = _PROJ_HEADER.pack(
        _PROJ_MAGIC,
        _PROJ_VERSION,
        _KIND_CODES[projector.kind],
        _CONTRAST_CODES[config.ica_contrast],
        flags,
        0,
        projector.input_dim,
        projector.output_dim,
        config.max_iterations,
        config.tolerance,
        config.seed,
    )
    parts = [header, struct.pack("<I", projector.iterations_run or 0)]
    if projector.kind is not ProjectorKind.IDENTITY:
        parts.append(np.asarray(projector.mean, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(projector.weights, dtype="<f4").tobytes())
        if projector.explained_variance_ratios is not None:
            parts.append(
                np.asarray(projector.explained_variance_ratios, dtype="<f4").tobytes()
            )
    Path(path).write_bytes(b"".join(parts))


def load_projector(path: str | Path) -> LinearProjector:
    raw = Path(path).read_bytes()
    if len(raw) < _PROJ_HEADER.size + 4:
        raise FormatError("truncated projector file")
    (magic, version, kind_code, contrast_code, flags, _reserved,
     input_dim, output_dim, max_iter, tolerance, seed) = _PROJ_HEADER.unpack(
        raw[: _PROJ_HEADER.size]
    )
    if magic != _PROJ_MAGIC:
        raise FormatError(f"bad projector magic {magic!r}")
    if version != _PROJ_VERSION:
        raise FormatError(f"unsupported projector version {version}")
    offset = _PROJ_HEADER.size
    (iterations_run,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    kind = _KIND_FROM_CODE[kind_code]
    config = FitConfig(
        max_iterations=max_iter,
        tolerance=tolerance,
        ica_contrast=_CONTRAST_FROM_CODE[contrast_code],
        seed=seed,
    )
    if kind is ProjectorKind.IDENTITY:
        return LinearProjector.identity(input_dim)
    mean = np.frombuffer(raw, dtype="<f4", count=input_dim, offset=offset).astype(
        np.float64
    )
    offset += 4 * input_dim
    weights = (
        np.frombuffer(raw, dtype="<f4", count=input_dim * output_dim, offset=offset)
        .astype(np.float64)
        .reshape(output_dim, input_dim)
    )
    offset += 4 * input_dim * output_dim
    ratios = None
    if flags & 2:
        ratios = np.frombuffer(raw, dtype="<f4", count=output_dim, offset=offset).astype(
            np.float64
        )
        offset += 4 * output_dim
    if offset != len(raw):
        raise FormatError(
            f"projector payload size mismatch: expected {offset} bytes, got {len(raw)}"
        )
    return LinearProjector(
        kind=kind,
        input_dim=input_dim,
        output_dim=output_dim,
        mean=mean,
        weights=weights,
        explained_variance_ratios=ratios,
        fit_config=config,
        converged=bool(flags & 1),
        iterations_run=iterations_run,
    )


def canonicalize(projector: LinearProjector) -> LinearProjector:
    """Round mean/weights to the serialized float32 precision.

    The evaluation harness always applies projectors in this canonical form,
    so results do not depend on whether a projector came fresh from a fit or
    from the on-disk cache.
    """
    if projector.kind is ProjectorKind.IDENTITY:
        return projector
    out = replace(
        projector,
        mean=projector.mean.astype(np.float32).astype(np.float64),
        weights=projector.weights.astype(np.float32).astype(np.float64),
    )
    return out
