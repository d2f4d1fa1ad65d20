"""Maximum-likelihood expansion detection.

Fits the footprint model twice per location — unrestricted, and with the
added footprint pinned to zero — and scores the location by the delta
log-likelihood between the two fits.

The default solver exploits the structure of the objective: for a fixed
transition time the likelihood is concave per pixel in the (before, after)
footprint values, so those are driven by vectorized projected Newton
sweeps, while the transition time is re-anchored by an exact global search
over hard-step split points and polished with 1-D Newton steps.  Multiple
restarts over jittered transition-time quantiles cover the non-convex
transition-time landscape, and the static optimum always competes as one
candidate, so the unrestricted likelihood can never land below the static
one.  Inner sweeps run in float32 with float64 reductions; reported
log-likelihoods always come from :func:`expanscan.footprint_model.log_likelihood`
in float64.

``FitConfig.solver = "momentum"`` selects a plain momentum gradient-ascent
loop over all parameters instead (logistic reparameterization keeps
footprint entries inside [0, 1]); it maximizes the same objective but needs
far more iterations, so it is practical only for small problems.

Reports serialize to JSON-lines records; footprint masks use row-major
run-length encoding ``[value, run_length, ...]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np
from scipy.special import expit

from .footprint_model import (
    LOG_EPS,
    FootprintModel,
    log_likelihood,
    series_stack,
)
from .spectral import ProbMapSeries

#: Footprint entries are kept this far inside (0, 1) during optimization.
PARAM_EPS = 1e-6

SOLVER_NEWTON = "newton"
SOLVER_MOMENTUM = "momentum"

MLE_METHOD = "MLE"


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings; identical (series, config) pairs give identical fits."""

    max_iterations: int = 500
    step_size: float = 0.05
    momentum: float = 0.9
    convergence_tol: float = 1e-6
    alpha: float = 1.0
    restarts: int = 3
    seed: int = 0
    sparsity: float = 0.0
    solver: str = SOLVER_NEWTON

    def __post_init__(self):
        if self.max_iterations < 1 or self.restarts < 1:
            raise ValueError("max_iterations and restarts must be positive")
        if not (self.step_size > 0 and self.alpha > 0 and self.convergence_tol > 0):
            raise ValueError("step_size, alpha and convergence_tol must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.sparsity < 0:
            raise ValueError("sparsity penalty must be non-negative")
        if self.solver not in (SOLVER_NEWTON, SOLVER_MOMENTUM):
            raise ValueError(f"unknown solver {self.solver!r}")


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of one model fit."""

    location_id: str
    model: FootprintModel
    log_likelihood: float
    converged: bool
    iterations_used: int
    restart_index: int


@dataclass(frozen=True, eq=False)
class DetectionReport:
    """Per-location detection outcome."""

    location_id: str
    test_statistic: float
    t_star_index: float
    t_star_date: date
    expansion_area_m2: float
    footprint_before: np.ndarray
    footprint_added: np.ndarray
    null_percentile: float | None = None

    def __post_init__(self):
        if self.test_statistic < 0 or self.expansion_area_m2 < 0:
            raise ValueError("test statistic and expansion area must be >= 0")


@dataclass(frozen=True, eq=False)
class NullDistribution:
    """Empirical distribution of test statistics over presumed-static sites."""

    values: np.ndarray  # sorted ascending

    def __post_init__(self):
        values = np.sort(np.asarray(self.values, dtype=np.float64))
        if values.size < 1:
            raise ValueError("a null distribution needs at least one sample")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return int(self.values.size)

    def percentile(self, ts: float) -> float:
        """Empirical-CDF percentile with midpoint rank for tied values."""
        less = int(np.searchsorted(self.values, ts, side="left"))
        ties = int(np.searchsorted(self.values, ts, side="right")) - less
        if ties:
            return (less + 0.5 * (ties + 1)) / self.size
        return less / self.size


# --------------------------------------------------------------------------
# internal solver machinery
# --------------------------------------------------------------------------

class _Terms:
    """Per-location likelihood terms plus reusable scratch buffers.

    The likelihood of a pixel-frame is ``a + b * Z``; masked entries carry
    a = 1, b = 0 so they drop out of every sum and derivative without extra
    masking.  Scratch arrays r/t1 hold (T, H, W) float32 intermediates.
    """

    def __init__(self, series: ProbMapSeries):
        p, valid = series_stack(series)
        self.p = p
        self.valid = valid
        self.n = len(series)
        self.a = np.where(valid, 1.0 - p, 1.0).astype(np.float32)
        self.b = np.where(valid, 2.0 * p - 1.0, 0.0).astype(np.float32)
        self.r = np.empty_like(self.a)
        self.t1 = np.empty_like(self.a)

    def window_mean(self, sl: slice) -> np.ndarray:
        cnt = self.valid[sl].sum(axis=0)
        tot = np.where(self.valid[sl], self.p[sl], 0.0).sum(axis=0)
        out = np.divide(tot, cnt, out=np.full(cnt.shape, 0.5), where=cnt > 0)
        return out.astype(np.float32)

    def build_r(self, u: np.ndarray, v: np.ndarray, s: np.ndarray) -> np.ndarray:
        """r = a + b * (u + (v - u) * s), computed in place."""
        np.multiply((v - u)[None], s[:, None, None], out=self.r)
        self.r += u[None]
        np.multiply(self.b, self.r, out=self.r)
        self.r += self.a
        return self.r

    def objective(self, u, v, s, lam: float) -> float:
        r = self.build_r(u, v, s)
        np.clip(r, LOG_EPS, 1.0, out=r)
        np.log(r, out=r)
        obj = float(r.sum(dtype=np.float64))
        if lam:
            obj -= lam * float((v - u).sum(dtype=np.float64))
        return obj


def _sigmoid_weights(n_frames: int, t_star: float, alpha: float) -> np.ndarray:
    t = np.arange(1, n_frames + 1, dtype=np.float64)
    return expit((t - t_star) / alpha).astype(np.float32)


def _clip_params(arr: np.ndarray) -> np.ndarray:
    return np.clip(arr, PARAM_EPS, 1.0 - PARAM_EPS).astype(np.float32)


def _newton_static(ws: _Terms, f: np.ndarray, max_sweeps: int,
                   tol: float = 1e-6) -> tuple[np.ndarray, int]:
    """Per-pixel projected Newton for the constant-footprint objective."""
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        np.multiply(ws.b, f[None], out=ws.r)
        ws.r += ws.a
        np.divide(ws.b, ws.r, out=ws.t1)
        h1 = ws.t1.sum(axis=0, dtype=np.float64)
        np.multiply(ws.t1, ws.t1, out=ws.t1)
        h2 = ws.t1.sum(axis=0, dtype=np.float64)
        step = np.divide(h1, h2, out=np.zeros_like(h1), where=h2 > 0)
        np.clip(step, -0.5, 0.5, out=step)
        f_new = _clip_params(f + step)
        moved = float(np.abs(f_new - f).max(initial=0.0))
        f = f_new
        if moved < tol:
            break
    return f, sweeps


def _newton_uv(ws: _Terms, s: np.ndarray, u: np.ndarray, v: np.ndarray,
               max_sweeps: int, lam: float = 0.0,
               tol: float = 1e-5) -> tuple[np.ndarray, np.ndarray, int]:
    """Alternating per-pixel Newton on (before, after) values given weights s.

    Parameterizes Z = u * (1 - s) + v * s with the coupling u <= v, which is
    equivalent to f0 = u, fplus = v - u and keeps Z inside (0, 1) without
    clipping.  ``lam`` applies the sparsity penalty -lam * sum(v - u).
    """
    s3 = s[:, None, None]
    cs = (1.0 - s)[:, None, None]
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        r = ws.build_r(u, v, s)
        np.divide(ws.b, r, out=ws.t1)
        ws.t1 *= cs
        h1 = ws.t1.sum(axis=0, dtype=np.float64) + lam
        np.multiply(ws.t1, ws.t1, out=ws.t1)
        h2 = ws.t1.sum(axis=0, dtype=np.float64)
        du = np.divide(h1, h2, out=np.zeros_like(h1), where=h2 > 0)
        np.clip(du, -0.5, 0.5, out=du)
        u_new = np.minimum(_clip_params(u + du), v)
        moved = float(np.abs(u_new - u).max(initial=0.0))
        u = u_new

        r = ws.build_r(u, v, s)
        np.divide(ws.b, r, out=ws.t1)
        ws.t1 *= s3
        h1 = ws.t1.sum(axis=0, dtype=np.float64) - lam
        np.multiply(ws.t1, ws.t1, out=ws.t1)
        h2 = ws.t1.sum(axis=0, dtype=np.float64)
        dv = np.divide(h1, h2, out=np.zeros_like(h1), where=h2 > 0)
        np.clip(dv, -0.5, 0.5, out=dv)
        v_new = np.maximum(_clip_params(v + dv), u)
        moved = max(moved, float(np.abs(v_new - v).max(initial=0.0)))
        v = v_new

        if moved < tol:
            break
    return u, v, sweeps


def _step_profile_t_star(ws: _Terms, u: np.ndarray, v: np.ndarray) -> float:
    """Best hard-step transition time: exact search over all split points.

    Scores, for every split k, the log-likelihood of using the "before"
    values on frames 1..k and the "after" values on k+1..T, and maps the
    best split to a sigmoid center between the two frames.
    """
    np.multiply(ws.b, u[None], out=ws.r)
    ws.r += ws.a
    np.clip(ws.r, LOG_EPS, 1.0, out=ws.r)
    np.log(ws.r, out=ws.r)
    l0 = ws.r.sum(axis=(1, 2), dtype=np.float64)
    np.multiply(ws.b, v[None], out=ws.r)
    ws.r += ws.a
    np.clip(ws.r, LOG_EPS, 1.0, out=ws.r)
    np.log(ws.r, out=ws.r)
    l1 = ws.r.sum(axis=(1, 2), dtype=np.float64)
    pre = np.concatenate([[0.0], np.cumsum(l0)])
    post = np.concatenate([[0.0], np.cumsum(l1[::-1])])[::-1]
    best_k = int(np.argmax(pre + post))  # k frames before the step
    return float(np.clip(best_k + 0.5, 1.0, float(ws.n)))


def _polish_t_star(ws: _Terms, u: np.ndarray, v: np.ndarray, t_star: float,
                   alpha: float, steps: int = 3, cap: float = 1.5) -> float:
    """Clamped 1-D Newton ascent on the transition time."""
    d = (v - u)[None]
    tt = np.arange(1, ws.n + 1, dtype=np.float64)
    for _ in range(steps):
        s64 = expit((tt - t_star) / alpha)
        ds = -s64 * (1.0 - s64) / alpha
        d2s = s64 * (1.0 - s64) * (1.0 - 2.0 * s64) / alpha ** 2
        r = ws.build_r(u, v, s64.astype(np.float32))
        np.divide(ws.b, r, out=ws.t1)
        ws.t1 *= d
        m1 = ws.t1.sum(axis=(1, 2), dtype=np.float64)
        np.multiply(ws.t1, ws.t1, out=ws.t1)
        m2 = ws.t1.sum(axis=(1, 2), dtype=np.float64)
        d1 = float(m1 @ ds)
        d2 = float(m1 @ d2s - m2 @ (ds * ds))
        if not (np.isfinite(d1) and np.isfinite(d2)) or d1 == 0.0:
            break
        if d2 < -1e-12:
            step = float(np.clip(-d1 / d2, -cap, cap))
        else:
            step = cap if d1 > 0 else -cap
        t_new = float(np.clip(t_star + step, 1.0, float(ws.n)))
        if abs(t_new - t_star) < 1e-4:
            t_star = t_new
            break
        t_star = t_new
    return t_star


def _restart_t_stars(n_frames: int, config: FitConfig) -> np.ndarray:
    """Evenly spaced quantiles of [1, T], jittered by the config seed."""
    rng = np.random.default_rng(config.seed)
    ranks = np.arange(1, config.restarts + 1, dtype=np.float64)
    quantiles = 1.0 + (n_frames - 1.0) * ranks / (config.restarts + 1.0)
    jitter = rng.uniform(-0.5, 0.5, size=config.restarts)
    return np.clip(quantiles + jitter, 1.0, float(n_frames))


def _fit_static_newton(ws: _Terms, config: FitConfig):
    f = _clip_params(ws.window_mean(slice(0, ws.n)))
    f, sweeps = _newton_static(ws, f, config.max_iterations)
    model = FootprintModel(f0=f.astype(np.float64), fplus=np.zeros(f.shape),
                           t_star=None, alpha=config.alpha)
    return model, sweeps < config.max_iterations, sweeps, 0


def _fit_unrestricted_newton(ws: _Terms, config: FitConfig, static_f0):
    n = ws.n
    lam = config.sparsity

    q1 = max(1, n // 4)
    u0 = _clip_params(ws.window_mean(slice(0, q1)))
    v0 = np.maximum(_clip_params(ws.window_mean(slice(n - q1, n))), u0)

    starts = [(float(t0), u0, v0) for t0 in _restart_t_stars(n, config)]
    if static_f0 is not None:
        f_s = _clip_params(static_f0)
        starts.append(((1.0 + n) / 2.0, f_s, f_s))

    budget = config.max_iterations
    used = 0
    best = None  # (objective, restart_index, u, v, t_star)
    for idx, (t0, ui, vi) in enumerate(starts):
        u, v, t_star = ui.copy(), vi.copy(), t0
        init_obj = ws.objective(u, v, _sigmoid_weights(n, t_star, config.alpha), lam)
        if best is None or init_obj > best[0]:
            best = (init_obj, idx, u.copy(), v.copy(), t_star)
        if used >= budget:
            continue
        s = _sigmoid_weights(n, t_star, config.alpha)
        u, v, sw = _newton_uv(ws, s, u, v, min(3, budget - used), lam)
        used += sw
        t_star = _step_profile_t_star(ws, u, v)
        t_star = _polish_t_star(ws, u, v, t_star, config.alpha)
        obj = ws.objective(u, v, _sigmoid_weights(n, t_star, config.alpha), lam)
        if obj > best[0]:
            best = (obj, idx, u, v, t_star)

    obj, restart_index, u, v, t_star = best
    converged = False
    while used < budget:
        s = _sigmoid_weights(n, t_star, config.alpha)
        u2, v2, sw = _newton_uv(ws, s, u.copy(), v.copy(), min(4, budget - used), lam)
        used += sw
        t2 = _step_profile_t_star(ws, u2, v2)
        t2 = _polish_t_star(ws, u2, v2, t2, config.alpha)
        new_obj = ws.objective(u2, v2, _sigmoid_weights(n, t2, config.alpha), lam)
        if new_obj > obj:
            u, v, t_star = u2, v2, t2
        if abs(new_obj - obj) <= config.convergence_tol * max(1.0, abs(obj)):
            obj = max(obj, new_obj)
            converged = True
            break
        obj = max(obj, new_obj)

    model = FootprintModel(f0=u.astype(np.float64),
                           fplus=(v - u).astype(np.float64),
                           t_star=t_star, alpha=config.alpha)
    return model, converged, used, restart_index


# --------------------------------------------------------------------------
# momentum gradient-ascent solver (reference first-order path)
# --------------------------------------------------------------------------

def _fit_momentum(series: ProbMapSeries, config: FitConfig, restricted: bool):
    p, valid = series_stack(series)
    a = np.where(valid, 1.0 - p, 1.0)
    b = np.where(valid, 2.0 * p - 1.0, 0.0)
    n = len(series)
    lam = config.sparsity
    n_px = series.height * series.width

    q1 = max(1, n // 4)
    cnt1 = valid[:q1].sum(axis=0)
    f_first = np.divide(np.where(valid[:q1], p[:q1], 0.0).sum(axis=0), cnt1,
                        out=np.full(cnt1.shape, 0.5), where=cnt1 > 0)
    cnt2 = valid[n - q1:].sum(axis=0)
    f_last = np.divide(np.where(valid[n - q1:], p[n - q1:], 0.0).sum(axis=0), cnt2,
                       out=np.full(cnt2.shape, 0.5), where=cnt2 > 0)
    f_first = np.clip(f_first, 1e-3, 1.0 - 1e-3)
    fplus_init = np.clip(np.maximum(f_last - f_first, 1e-3), 1e-3, 1.0 - 1e-3)

    def objective_and_grads(w0, wp, t_star):
        f0 = expit(w0)
        fp = np.zeros_like(f0) if restricted else expit(wp)
        s = expit((np.arange(1, n + 1, dtype=np.float64) - t_star) / config.alpha)
        z = np.clip(f0[None] + fp[None] * s[:, None, None], 0.0, 1.0)
        r = a + b * z
        good = r > LOG_EPS
        obj = float(np.log(np.clip(r, LOG_EPS, 1.0)).sum()) - lam * float(fp.sum())
        grad = np.where(good, b / np.clip(r, LOG_EPS, 1.0), 0.0)
        d_f0 = grad.sum(axis=0)
        d_fp = (grad * s[:, None, None]).sum(axis=0) - lam
        ds = -s * (1.0 - s) / config.alpha
        d_t = float((grad * fp[None]).sum(axis=(1, 2)) @ ds)
        return obj, d_f0 * f0 * (1.0 - f0), d_fp * fp * (1.0 - fp), d_t

    starts = _restart_t_stars(n, config) if not restricted \
        else np.array([(1.0 + n) / 2.0])
    best = None
    total_it = 0
    any_converged = False
    for idx, t0 in enumerate(starts):
        w0 = np.log(f_first / (1.0 - f_first))
        wp = np.log(fplus_init / (1.0 - fplus_init))
        t_star = float(t0)
        vel0 = np.zeros_like(w0)
        velp = np.zeros_like(wp)
        velt = 0.0
        prev = -np.inf
        for _ in range(max(1, config.max_iterations // len(starts))):
            obj, g0, gp, gt = objective_and_grads(w0, wp, t_star)
            if not np.isfinite(obj):
                raise ValueError("non-finite log-likelihood during gradient ascent")
            total_it += 1
            if best is None or obj > best[0]:
                best = (obj, idx, w0.copy(), wp.copy(), t_star)
            if abs(obj - prev) <= config.convergence_tol * max(1.0, abs(obj)):
                any_converged = True
                break
            prev = obj
            vel0 = config.momentum * vel0 + config.step_size * g0
            w0 = np.clip(w0 + vel0, -30.0, 30.0)
            if not restricted:
                velp = config.momentum * velp + config.step_size * gp
                wp = np.clip(wp + velp, -30.0, 30.0)
                # The t* gradient sums over all pixels; scale its step to a
                # per-pixel mean so one step size serves every parameter.
                velt = config.momentum * velt + config.step_size * gt / n_px
                t_star = float(np.clip(t_star + velt, 1.0, float(n)))

    obj, restart_index, w0, wp, t_star = best
    f0 = expit(w0)
    if restricted:
        model = FootprintModel(f0=f0, fplus=np.zeros_like(f0), t_star=None,
                               alpha=config.alpha)
    else:
        model = FootprintModel(f0=f0, fplus=expit(wp), t_star=t_star,
                               alpha=config.alpha)
    return model, any_converged, total_it, restart_index


# --------------------------------------------------------------------------
# public fitting API
# --------------------------------------------------------------------------

def fit_static(series: ProbMapSeries, config: FitConfig = FitConfig(),
               _terms: _Terms | None = None) -> FitResult:
    """Maximize the likelihood with the added footprint pinned to zero."""
    if config.solver == SOLVER_MOMENTUM:
        model, converged, used, restart = _fit_momentum(series, config, restricted=True)
    else:
        ws = _terms if _terms is not None else _Terms(series)
        model, converged, used, restart = _fit_static_newton(ws, config)
    ll = log_likelihood(model, series)
    if not np.isfinite(ll):
        raise ValueError("non-finite log-likelihood (corrupt input series?)")
    return FitResult(location_id=series.location_id, model=model, log_likelihood=ll,
                     converged=converged, iterations_used=used, restart_index=restart)


def fit_unrestricted(series: ProbMapSeries, config: FitConfig = FitConfig(),
                     static_warm: FitResult | None = None,
                     _terms: _Terms | None = None) -> FitResult:
    """Maximize the likelihood over both footprints and the transition time.

    The optimum of the nested static model always competes as one restart
    (computing it first when not supplied), which pins the nesting property
    logL_unrestricted >= logL_static.
    """
    if config.solver == SOLVER_MOMENTUM:
        if static_warm is None:
            static_warm = fit_static(series, config)
        model, converged, used, restart = _fit_momentum(series, config, restricted=False)
    else:
        ws = _terms if _terms is not None else _Terms(series)
        if static_warm is None:
            static_warm = fit_static(series, config, _terms=ws)
        model, converged, used, restart = _fit_unrestricted_newton(
            ws, config, static_warm.model.f0)
    ll = log_likelihood(model, series)
    if ll < static_warm.log_likelihood:
        # Optimizer landed below the nested optimum (possible only through
        # float noise); fall back to the static solution, a valid point of
        # the unrestricted family.
        model = static_warm.model
        ll = static_warm.log_likelihood
    if not np.isfinite(ll):
        raise ValueError("non-finite log-likelihood (corrupt input series?)")
    return FitResult(location_id=series.location_id, model=model, log_likelihood=ll,
                     converged=converged, iterations_used=used, restart_index=restart)


def test_statistic(unrestricted: FitResult, static: FitResult) -> float:
    """Delta log-likelihood between the two fits, floored at zero."""
    if unrestricted.location_id != static.location_id:
        raise ValueError(
            f"fits come from different locations: {unrestricted.location_id!r} "
            f"vs {static.location_id!r}"
        )
    return max(0.0, unrestricted.log_likelihood - static.log_likelihood)


def detect(series: ProbMapSeries, config: FitConfig = FitConfig(),
           null: NullDistribution | None = None) -> DetectionReport:
    """Run both fits and assemble the per-location report."""
    terms = _Terms(series) if config.solver == SOLVER_NEWTON else None
    static = fit_static(series, config, _terms=terms)
    unrestricted = fit_unrestricted(series, config, static_warm=static, _terms=terms)
    ts = test_statistic(unrestricted, static)
    model = unrestricted.model
    t_star = float(model.t_star) if model.t_star is not None else (1 + len(series)) / 2
    nearest = int(np.clip(round(t_star), 1, len(series)))
    added = model.fplus >= 0.5
    return DetectionReport(
        location_id=series.location_id,
        test_statistic=ts,
        t_star_index=t_star,
        t_star_date=series.maps[nearest - 1].timestamp,
        expansion_area_m2=float(added.sum()) * series.pixel_size_m ** 2,
        footprint_before=model.f0 >= 0.5,
        footprint_added=added,
        null_percentile=None if null is None else null.percentile(ts),
    )


def calibrate_null(reports) -> NullDistribution:
    """Null distribution from reports of presumed-static locations."""
    reports = list(reports)
    if not reports:
        raise ValueError("cannot calibrate a null distribution from zero reports")
    return NullDistribution(values=np.array([r.test_statistic for r in reports]))


def rank_locations(reports) -> list[DetectionReport]:
    """Sort by test statistic descending; ties break by location id."""
    return sorted(reports, key=lambda r: (-r.test_statistic, r.location_id))


# --------------------------------------------------------------------------
# report-stream serialization
# --------------------------------------------------------------------------

def rle_encode(mask: np.ndarray) -> list[int]:
    """Row-major run-length encoding ``[value, run_length, ...]``."""
    flat = np.asarray(mask, dtype=np.uint8).ravel()
    if flat.size == 0:
        return []
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [flat.size]])
    out: list[int] = []
    for s0, e0 in zip(starts, ends):
        out.extend((int(flat[s0]), int(e0 - s0)))
    return out


def rle_decode(rle: list[int], shape: tuple[int, int]) -> np.ndarray:
    """Inverse of :func:`rle_encode`."""
    if len(rle) % 2 != 0:
        raise ValueError("run-length data must have even length")
    values = np.repeat(np.asarray(rle[0::2], dtype=np.uint8),
                       np.asarray(rle[1::2], dtype=np.int64))
    if values.size != shape[0] * shape[1]:
        raise ValueError(f"run lengths sum to {values.size}, expected {shape}")
    return values.reshape(shape).astype(bool)


def detection_record(report: DetectionReport) -> dict:
    """JSON-ready record for the unified report stream."""
    return {
        "location_id": report.location_id,
        "method": MLE_METHOD,
        "test_statistic": report.test_statistic,
        "t_star_index": report.t_star_index,
        "t_star_date": report.t_star_date.isoformat(),
        "expansion_area_m2": report.expansion_area_m2,
        "null_percentile": report.null_percentile,
        "footprint_shape": list(report.footprint_before.shape),
        "footprint_before_rle": rle_encode(report.footprint_before),
        "footprint_added_rle": rle_encode(report.footprint_added),
    }


def report_from_record(record: dict) -> DetectionReport:
    shape = tuple(record["footprint_shape"])
    return DetectionReport(
        location_id=record["location_id"],
        test_statistic=float(record["test_statistic"]),
        t_star_index=float(record["t_star_index"]),
        t_star_date=date.fromisoformat(record["t_star_date"]),
        expansion_area_m2=float(record["expansion_area_m2"]),
        footprint_before=rle_decode(record["footprint_before_rle"], shape),
        footprint_added=rle_decode(record["footprint_added_rle"], shape),
        null_percentile=record.get("null_percentile"),
    )


def write_records_jsonl(records, path, append: bool = False) -> None:
    """Write dict records as JSON lines (sorted upstream for determinism)."""
    mode = "a" if append else "w"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, mode, encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record))
            fh.write("\n")


def read_records_jsonl(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
