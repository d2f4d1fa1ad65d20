"""Before/after footprint model: transition function, likelihood, gradient.

The model for the expected footprint at frame ``t`` (1-based) is

    Z(t) = clip(f0 + fplus * S((t - t_star) / alpha), 0, 1)

with ``S`` the logistic sigmoid, so Z rises monotonically from the
pre-expansion footprint ``f0`` to the union ``f0 + fplus``.  Footprint maps
are relaxed to continuous values in [0, 1]; binary masks are recovered by
thresholding at 0.5 for reporting.

The series log-likelihood is the Bernoulli form

    sum over unmasked (i, j, t) of log(p * Z + (1 - p) * (1 - Z))

with log arguments clamped to [LOG_EPS, 1].  The degenerate product form
``log(p * Z)`` is retained behind ``form="product"`` for comparison only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .spectral import ProbMapSeries

#: Lower clamp applied to likelihood terms before taking logs.
LOG_EPS = 1e-9

FORM_BERNOULLI = "bernoulli"
FORM_PRODUCT = "product"


@dataclass(frozen=True, eq=False)
class FootprintModel:
    """Transition-function parameters.

    ``t_star`` may be None only when ``fplus`` is all zero (a static model,
    for which the transition time is meaningless).
    """

    f0: np.ndarray
    fplus: np.ndarray
    t_star: float | None
    alpha: float = 1.0

    def __post_init__(self):
        f0 = np.ascontiguousarray(self.f0, dtype=np.float64)
        fplus = np.ascontiguousarray(self.fplus, dtype=np.float64)
        if f0.ndim != 2 or f0.shape != fplus.shape:
            raise ValueError("f0 and fplus must be 2-D arrays of equal shape")
        for name, arr in (("f0", f0), ("fplus", fplus)):
            if not (np.isfinite(arr).all() and (arr >= 0).all() and (arr <= 1).all()):
                raise ValueError(f"{name} entries must lie in [0, 1]")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.t_star is None:
            if fplus.any():
                raise ValueError("t_star may be omitted only when fplus is all zero")
        elif not np.isfinite(self.t_star):
            raise ValueError("t_star must be finite")
        f0.setflags(write=False)
        fplus.setflags(write=False)
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "fplus", fplus)

    @property
    def shape(self) -> tuple[int, int]:
        return self.f0.shape


@dataclass(frozen=True, eq=False)
class ModelGradient:
    """Partial derivatives of the series log-likelihood.

    ``alpha`` is a fixed hyperparameter and carries no gradient.
    """

    d_f0: np.ndarray
    d_fplus: np.ndarray
    d_t_star: float


def sigmoid_transition(t, t_star: float, alpha: float):
    """Duration-scaled sigmoid ``1 / (1 + exp(-(t - t_star) / alpha))``.

    Larger ``alpha`` stretches the transition over more frames.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    out = expit((np.asarray(t, dtype=np.float64) - t_star) / alpha)
    return float(out) if np.ndim(t) == 0 else out


def footprint_at(model: FootprintModel, t) -> np.ndarray:
    """Expected footprint Z at frame index ``t``, clamped to [0, 1]."""
    if model.t_star is None:
        s = 0.0
    else:
        s = sigmoid_transition(t, model.t_star, model.alpha)
    return np.clip(model.f0 + model.fplus * s, 0.0, 1.0)


def series_stack(series: ProbMapSeries) -> tuple[np.ndarray, np.ndarray]:
    """Stack a series into ``(T, H, W)`` float64 probabilities plus validity.

    Masked entries carry probability 0.5 and validity False; likelihood code
    must ignore them via the validity array.
    """
    p = np.stack([np.asarray(m.values, dtype=np.float64) for m in series.maps])
    valid = np.stack([~m.mask for m in series.maps])
    p = np.where(valid, p, 0.5)
    return p, valid


def _check_dims(model: FootprintModel, series: ProbMapSeries) -> None:
    if model.shape != (series.height, series.width):
        raise ValueError(
            f"model shape {model.shape} does not match series "
            f"{(series.height, series.width)}"
        )


def _transition_weights(model: FootprintModel, n_frames: int) -> np.ndarray:
    t = np.arange(1, n_frames + 1, dtype=np.float64)
    if model.t_star is None:
        return np.zeros(n_frames)
    return expit((t - model.t_star) / model.alpha)


def log_likelihood(model: FootprintModel, series: ProbMapSeries,
                   form: str = FORM_BERNOULLI) -> float:
    """Series log-likelihood of the model (<= 0)."""
    _check_dims(model, series)
    p, valid = series_stack(series)
    s = _transition_weights(model, len(series))
    z = np.clip(model.f0[None] + model.fplus[None] * s[:, None, None], 0.0, 1.0)
    if form == FORM_BERNOULLI:
        g = p * z + (1.0 - p) * (1.0 - z)
    elif form == FORM_PRODUCT:
        g = p * z
    else:
        raise ValueError(f"unknown likelihood form {form!r}")
    g = np.clip(g, LOG_EPS, 1.0)
    return float(np.log(g, where=valid, out=np.zeros_like(g)).sum())


def grad_log_likelihood(model: FootprintModel, series: ProbMapSeries,
                        form: str = FORM_BERNOULLI) -> ModelGradient:
    """Analytic gradient of :func:`log_likelihood`.

    Uses the same clamping conventions; terms whose clamp is active (either
    the [0, 1] clip of Z or the lower clamp inside the log) contribute zero.
    """
    _check_dims(model, series)
    p, valid = series_stack(series)
    s = _transition_weights(model, len(series))
    z_raw = model.f0[None] + model.fplus[None] * s[:, None, None]
    interior = (z_raw > 0.0) & (z_raw < 1.0)
    z = np.clip(z_raw, 0.0, 1.0)
    if form == FORM_BERNOULLI:
        g_raw = p * z + (1.0 - p) * (1.0 - z)
        dg_dz = 2.0 * p - 1.0
    elif form == FORM_PRODUCT:
        g_raw = p * z
        dg_dz = p
    else:
        raise ValueError(f"unknown likelihood form {form!r}")
    live = valid & interior & (g_raw > LOG_EPS)
    g = np.clip(g_raw, LOG_EPS, 1.0)
    w = np.where(live, dg_dz / g, 0.0)
    d_f0 = w.sum(axis=0)
    d_fplus = (w * s[:, None, None]).sum(axis=0)
    if model.t_star is None:
        d_t_star = 0.0
    else:
        ds_dtstar = -s * (1.0 - s) / model.alpha
        per_frame = (w * model.fplus[None]).sum(axis=(1, 2))
        d_t_star = float(per_frame @ ds_dtstar)
    return ModelGradient(d_f0=d_f0, d_fplus=d_fplus, d_t_star=d_t_star)
