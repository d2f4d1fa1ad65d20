"""Scalar changepoint baselines: Bayesian online detection and a
single-break season-trend regression.

Both detectors consume a :class:`ScalarSeries` (mean NDVI or per-frame
structure pixel counts) and emit a :class:`BaselineResult` whose
``confidence`` is comparable across locations: the maximum changepoint
posterior for the Bayesian detector, the absolute level shift at the break
for the season-trend detector.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from typing import NamedTuple

import numpy as np
from scipy import stats

from .scene_store import SceneSeries
from .spectral import ProbMapSeries, cafo_pixel_count, mean_ndvi

METHOD_BCP_NDVI = "BCP-NDVI"
METHOD_BCP_PIXELCOUNT = "BCP-PIXELCOUNT"
METHOD_BFAST_NDVI = "BFAST-NDVI"

_BCP_METHODS = (METHOD_BCP_NDVI, METHOD_BCP_PIXELCOUNT)

#: Annual period used by the harmonic regression, in days.
HARMONIC_PERIOD_DAYS = 365.25

MIN_SERIES_LENGTH = 8


@dataclass(frozen=True, eq=False)
class ScalarSeries:
    """A scalar per-frame summary of one location."""

    location_id: str
    values: np.ndarray
    timestamps: tuple[date, ...]

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        timestamps = tuple(self.timestamps)
        if values.ndim != 1 or values.size < MIN_SERIES_LENGTH:
            raise ValueError(
                f"scalar series needs at least {MIN_SERIES_LENGTH} values")
        if values.size != len(timestamps):
            raise ValueError("values and timestamps lengths differ")
        if not np.isfinite(values).all():
            raise ValueError("series values must be finite")
        for prev, cur in zip(timestamps, timestamps[1:]):
            if cur <= prev:
                raise ValueError("timestamps must strictly increase")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", timestamps)

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class BaselineResult:
    """Confidence and break location from one baseline method."""

    method: str
    confidence: float
    break_index: int | None

    def __post_init__(self):
        if self.method in _BCP_METHODS and not 0.0 <= self.confidence <= 1.0:
            raise ValueError("BCP confidence must lie in [0, 1]")
        if self.method == METHOD_BFAST_NDVI and self.confidence < 0:
            raise ValueError("break magnitude must be >= 0")


class NormalInverseGamma(NamedTuple):
    """Conjugate prior for a Gaussian with unknown mean and variance."""

    mu: float
    kappa: float
    alpha: float
    beta: float


def default_prior(values: np.ndarray) -> NormalInverseGamma:
    """Weakly informative prior centered on the sample statistics."""
    var = float(np.var(values))
    return NormalInverseGamma(mu=float(np.mean(values)), kappa=1.0, alpha=1.0,
                              beta=var if var > 0 else 1e-12)


def bocpd_changepoint_probabilities(
    values: np.ndarray,
    hazard: float,
    prior: NormalInverseGamma,
) -> tuple[np.ndarray, np.ndarray]:
    """Run-length recursion for a Gaussian model under a conjugate prior.

    Returns ``(R, cp_prob)`` where ``R[t]`` (row t, length t+1) is the run
    length posterior after t observations and ``cp_prob[t]`` is the
    posterior probability that a changepoint occurred at observation t
    (1-based), i.e. that the run length dropped to zero there.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    R = np.zeros((n + 1, n + 1))
    R[0, 0] = 1.0
    cp_prob = np.zeros(n + 1)
    mu = np.array([prior.mu])
    kappa = np.array([prior.kappa])
    alpha = np.array([prior.alpha])
    beta = np.array([prior.beta])
    for t, x in enumerate(values, start=1):
        scale = np.sqrt(beta * (kappa + 1.0) / (alpha * kappa))
        pred = stats.t.pdf(x, df=2.0 * alpha, loc=mu, scale=scale)
        growth = R[t - 1, :t] * pred * (1.0 - hazard)
        cp = float((R[t - 1, :t] * pred * hazard).sum())
        row = np.concatenate([[cp], growth])
        total = row.sum()
        if total <= 0 or not np.isfinite(total):
            raise ValueError("run-length posterior collapsed; check input scale")
        R[t, :t + 1] = row / total
        cp_prob[t] = R[t, 0]
        beta = np.concatenate(
            [[prior.beta], beta + kappa * (x - mu) ** 2 / (2.0 * (kappa + 1.0))])
        mu = np.concatenate([[prior.mu], (kappa * mu + x) / (kappa + 1.0)])
        kappa = np.concatenate([[prior.kappa], kappa + 1.0])
        alpha = np.concatenate([[prior.alpha], alpha + 0.5])
    return R, cp_prob


def bocpd(series: ScalarSeries, hazard: float | None = None,
          prior: NormalInverseGamma | None = None,
          method: str = METHOD_BCP_NDVI) -> BaselineResult:
    """Bayesian online changepoint detection with a Gaussian model.

    Confidence is the maximum, over observations t >= 2, of the posterior
    probability that the run length dropped to zero at t; the break index
    is the 0-based position of that observation (the first one of the new
    segment).
    """
    if hazard is None:
        hazard = 1.0 / len(series)
    if not 0.0 < hazard < 1.0:
        raise ValueError("hazard must lie in (0, 1)")
    if prior is None:
        prior = default_prior(series.values)
    _, cp_prob = bocpd_changepoint_probabilities(series.values, hazard, prior)
    t = int(np.argmax(cp_prob[2:])) + 2
    return BaselineResult(method=method, confidence=float(cp_prob[t]),
                          break_index=t - 1)


def _design_matrix(days: np.ndarray, n_harmonics: int) -> np.ndarray:
    cols = [np.ones_like(days), days / HARMONIC_PERIOD_DAYS]
    for k in range(1, n_harmonics + 1):
        phase = 2.0 * np.pi * k * days / HARMONIC_PERIOD_DAYS
        cols.append(np.sin(phase))
        cols.append(np.cos(phase))
    return np.column_stack(cols)


def _lstsq_sse(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return coef, float(resid @ resid)


def trend_break(series: ScalarSeries, n_harmonics: int = 2) -> BaselineResult:
    """Single structural break in a linear-trend-plus-annual-harmonics model.

    Fits the model separately to [0, b) and [b, T) for every admissible
    break b, keeps the total-SSE minimizer, and reports the absolute
    difference of the two segment predictions at the break as confidence.
    A BIC comparison against the no-break fit guards against spurious
    breaks: when the no-break model wins, confidence is 0 and no break is
    reported.
    """
    if n_harmonics < 0:
        raise ValueError("n_harmonics must be >= 0")
    q = 2 + 2 * n_harmonics
    n = len(series)
    if n < 2 * q + 2:
        raise ValueError(
            f"series too short for {q} parameters per segment: need >= {2 * q + 2}")
    days = np.array([(t - series.timestamps[0]).days for t in series.timestamps],
                    dtype=np.float64)
    X = _design_matrix(days, n_harmonics)
    y = series.values

    _, sse0 = _lstsq_sse(X, y)
    best = None  # (sse, b, confidence)
    for b in range(q + 1, n - q):
        coef1, sse1 = _lstsq_sse(X[:b], y[:b])
        coef2, sse2 = _lstsq_sse(X[b:], y[b:])
        sse = sse1 + sse2
        if best is None or sse < best[0]:
            shift = float(abs(X[b] @ coef2 - X[b] @ coef1))
            best = (sse, b, shift)

    sse_break, b, shift = best
    # Relative floor keeps the BIC comparison meaningful for exact fits and
    # preserves invariance under scaling all values by a constant.
    floor = 1e-12 * float(np.mean(y * y)) * n + 1e-300
    bic0 = n * np.log(max(sse0, floor) / n) + q * np.log(n)
    bic1 = n * np.log(max(sse_break, floor) / n) + (2 * q + 1) * np.log(n)
    if bic0 <= bic1:
        return BaselineResult(method=METHOD_BFAST_NDVI, confidence=0.0,
                              break_index=None)
    return BaselineResult(method=METHOD_BFAST_NDVI, confidence=shift, break_index=b)


def series_from_probmaps(series: ProbMapSeries, threshold: float = 0.5) -> ScalarSeries:
    """Per-frame structure pixel counts as a scalar series."""
    values = np.array([cafo_pixel_count(m, threshold) for m in series.maps],
                      dtype=np.float64)
    return ScalarSeries(location_id=series.location_id, values=values,
                        timestamps=series.timestamps)


def ndvi_series(series: SceneSeries) -> ScalarSeries:
    """Per-frame mean NDVI as a scalar series."""
    values = np.array([mean_ndvi(f) for f in series.frames], dtype=np.float64)
    return ScalarSeries(location_id=series.location_id, values=values,
                        timestamps=series.timestamps)


def baseline_record(location_id: str, result: BaselineResult) -> dict:
    """JSON-ready record for the unified report stream."""
    return {
        "location_id": location_id,
        "method": result.method,
        "confidence": result.confidence,
        "break_index": result.break_index,
    }
