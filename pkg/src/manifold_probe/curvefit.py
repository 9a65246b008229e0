"""Logistic growth-curve fitting for accuracy-versus-depth profiles.

Model: f(x) = L / (1 + exp(-k * (x - x0))). Fitting minimizes the sum of
squared residuals with a damped Gauss-Newton iteration (Marquardt-style
lambda adaptation) and the analytic Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

_LAMBDA_INITIAL = 1e-3
_LAMBDA_GROW = 10.0
_LAMBDA_SHRINK = 0.1
_MAX_ITERATIONS = 500
_SSE_RELATIVE_TOLERANCE = 1e-10
_STEP_NORM_TOLERANCE = 1e-8


@dataclass(frozen=True)
class LogisticFit:
    asymptote: float  # L
    growth_rate: float  # k, per unit of x
    midpoint: float  # x0
    r_squared: float
    iterations: int
    converged: bool
    warning: str | None = None

    def predict(self, xs: np.ndarray) -> np.ndarray:
        return logistic(np.asarray(xs, dtype=np.float64),
                        self.asymptote, self.growth_rate, self.midpoint)


def logistic(xs: np.ndarray, asymptote: float, growth_rate: float, midpoint: float) -> np.ndarray:
    return asymptote / (1.0 + np.exp(-growth_rate * (xs - midpoint)))


def logistic_jacobian(xs: np.ndarray, asymptote: float, growth_rate: float, midpoint: float) -> np.ndarray:
    """Analytic Jacobian of the logistic model, columns (dL, dk, dx0)."""
    xs = np.asarray(xs, dtype=np.float64)
    sigma = 1.0 / (1.0 + np.exp(-growth_rate * (xs - midpoint)))
    slope = asymptote * sigma * (1.0 - sigma)
    return np.column_stack([sigma, slope * (xs - midpoint), -slope * growth_rate])


def _initial_guess(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    asymptote = float(np.max(ys)) * 1.05
    half = asymptote / 2.0
    crossing = xs[-1]
    for i in range(1, len(xs)):
        if (ys[i - 1] - half) * (ys[i] - half) <= 0 and ys[i] != ys[i - 1]:
            t = (half - ys[i - 1]) / (ys[i] - ys[i - 1])
            crossing = xs[i - 1] + t * (xs[i] - xs[i - 1])
            break
    span = float(xs[-1] - xs[0])
    growth_rate = 4.0 / span if span > 0 else 1.0
    return np.array([asymptote, growth_rate, float(crossing)])


def fit_logistic(xs: np.ndarray, ys: np.ndarray) -> LogisticFit:
    """Least-squares logistic fit.

    Constant targets are not identifiable; the fit degenerates to the mean
    level with zero growth and is flagged rather than rejected, as is a
    negative fitted growth rate.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 1 or xs.shape != ys.shape:
        raise DataError("xs and ys must be matching 1-D arrays")
    if xs.size < 4:
        raise DataError("fit_logistic needs at least 4 points")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise DataError("xs and ys must be finite")
    order = np.argsort(xs, kind="stable")
    xs = xs[order]
    ys = ys[order]

    if np.allclose(ys, ys[0], rtol=0.0, atol=0.0):
        return LogisticFit(
            asymptote=float(ys.mean()),
            growth_rate=0.0,
            midpoint=float(xs.mean()),
            r_squared=0.0,
            iterations=0,
            converged=False,
            warning="non_identifiable",
        )

    params = _initial_guess(xs, ys)
    residuals = ys - logistic(xs, *params)
    sse = float(residuals @ residuals)
    lam = _LAMBDA_INITIAL
    converged = False
    iterations = 0
    for iterations in range(1, _MAX_ITERATIONS + 1):
        jac = logistic_jacobian(xs, *params)
        gram = jac.T @ jac
        gradient = jac.T @ residuals
        try:
            step = np.linalg.solve(gram + lam * np.diag(np.diag(gram)) + 1e-15 * np.eye(3),
                                   gradient)
        except np.linalg.LinAlgError:
            lam *= _LAMBDA_GROW
            continue
        candidate = params + step
        candidate_residuals = ys - logistic(xs, *candidate)
        candidate_sse = float(candidate_residuals @ candidate_residuals)
        if candidate_sse <= sse:
            improvement = sse - candidate_sse
            params = candidate
            residuals = candidate_residuals
            previous_sse, sse = sse, candidate_sse
            lam = max(lam * _LAMBDA_SHRINK, 1e-12)
            step_norm = float(np.linalg.norm(step))
            if (
                improvement < _SSE_RELATIVE_TOLERANCE * max(previous_sse, 1e-300)
                or step_norm < _STEP_NORM_TOLERANCE
            ):
                converged = True
                break
        else:
            lam *= _LAMBDA_GROW
            if lam > 1e12:
                break

    asymptote, growth_rate, midpoint = (float(v) for v in params)
    warning = "negative_growth" if growth_rate < 0 else None
    fit = LogisticFit(
        asymptote=asymptote,
        growth_rate=growth_rate,
        midpoint=midpoint,
        r_squared=0.0,
        iterations=iterations,
        converged=converged,
        warning=warning,
    )
    return LogisticFit(
        asymptote=asymptote,
        growth_rate=growth_rate,
        midpoint=midpoint,
        r_squared=r_squared(fit, xs, ys),
        iterations=iterations,
        converged=converged,
        warning=warning,
    )


def r_squared(fit: LogisticFit, xs: np.ndarray, ys: np.ndarray) -> float:
    """Coefficient of determination of a fit against (xs, ys)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape:
        raise DataError("xs and ys must have matching shapes")
    residuals = ys - fit.predict(xs)
    total = ys - ys.mean()
    sst = float(total @ total)
    if sst == 0.0:
        raise DataError("r_squared undefined: zero total sum of squares")
    return 1.0 - float(residuals @ residuals) / sst
