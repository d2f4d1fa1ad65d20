"""Spectral indices and per-pixel class-probability maps.

Probability stacks reuse the scene-stack directory format with a single
``PROB`` band (see :mod:`expanscan.scene_store`).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import date

import numpy as np
from scipy.special import expit

from .scene_store import (
    BAND_NIR,
    BAND_RED,
    Frame,
    SceneSeries,
    SceneFormatError,
    read_raw_stack,
    write_raw_stack,
)

PROB_BAND = "PROB"

DEFAULT_SEGMENT_GAIN = 10.0
DEFAULT_SEGMENT_CENTER = 0.0
DEFAULT_SMOOTH_KERNEL = 3


@dataclass(frozen=True, eq=False)
class ProbMap:
    """Per-pixel probabilities in [0, 1] with a missing-data mask."""

    values: np.ndarray
    mask: np.ndarray
    timestamp: date

    def __post_init__(self):
        values = np.ascontiguousarray(self.values)
        if not np.issubdtype(values.dtype, np.floating):
            values = values.astype(np.float32)
        mask = np.ascontiguousarray(self.mask, dtype=bool)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError("probability map must be 2-D with positive dimensions")
        if mask.shape != values.shape:
            raise ValueError("mask shape does not match values")
        present = values[~mask]
        if present.size and not (
            np.isfinite(present).all() and (present >= 0).all() and (present <= 1).all()
        ):
            raise ValueError("unmasked probabilities must lie in [0, 1]")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class ProbMapSeries:
    """Time-ordered probability maps for one location."""

    location_id: str
    maps: tuple[ProbMap, ...]
    pixel_size_m: float

    def __post_init__(self):
        maps = tuple(self.maps)
        if len(maps) < 2:
            raise ValueError("a probability-map series needs at least 2 maps")
        shape = maps[0].values.shape
        for prev, cur in zip(maps, maps[1:]):
            if cur.timestamp <= prev.timestamp:
                raise ValueError("map timestamps must strictly increase")
        for m in maps:
            if m.values.shape != shape:
                raise ValueError("all maps must share dimensions")
        if not (self.pixel_size_m > 0):
            raise ValueError("pixel_size_m must be positive")
        object.__setattr__(self, "maps", maps)

    def __len__(self) -> int:
        return len(self.maps)

    @property
    def width(self) -> int:
        return self.maps[0].width

    @property
    def height(self) -> int:
        return self.maps[0].height

    @property
    def timestamps(self) -> tuple[date, ...]:
        return tuple(m.timestamp for m in self.maps)


def ndvi(frame: Frame) -> np.ma.MaskedArray:
    """Per-pixel (NIR - RED) / (NIR + RED).

    Pixels where NIR + RED is zero, or that are missing in the frame, come
    back masked.
    """
    nir = frame.band(BAND_NIR).astype(np.float64)
    red = frame.band(BAND_RED).astype(np.float64)
    denom = nir + red
    undefined = (denom == 0) | frame.mask
    values = np.divide(nir - red, denom, out=np.zeros_like(denom), where=~undefined)
    return np.ma.MaskedArray(values, mask=undefined)


def mean_ndvi(frame: Frame) -> float:
    """Arithmetic mean of the defined NDVI pixels."""
    index = ndvi(frame)
    if index.mask.all():
        raise ValueError("NDVI is undefined for every pixel of the frame")
    return float(index.mean())


def confidences_to_probs(conf: np.ndarray, mask: np.ndarray | None = None,
                         timestamp: date | None = None) -> ProbMap:
    """Logistic transform of raw class confidences into probabilities.

    The mask, when given, passes through unchanged.
    """
    conf = np.asarray(conf, dtype=np.float64)
    if not np.isfinite(conf).all():
        raise ValueError("confidence values must be finite")
    if mask is None:
        mask = np.zeros(conf.shape, dtype=bool)
    if timestamp is None:
        timestamp = date(1970, 1, 1)
    return ProbMap(values=expit(conf), mask=mask, timestamp=timestamp)


def pseudo_segment(frame: Frame, gain: float = DEFAULT_SEGMENT_GAIN,
                   center: float = DEFAULT_SEGMENT_CENTER) -> ProbMap:
    """NDVI-threshold stand-in for a learned segmentation model.

    Maps each pixel to ``1 / (1 + exp(-gain * (center - NDVI)))`` so that
    low-NDVI pixels (built structures) receive probabilities near 1.  Pixels
    with undefined NDVI come back masked.
    """
    if not gain > 0:
        raise ValueError("gain must be positive")
    index = ndvi(frame)
    values = expit(gain * (center - index.data))
    return ProbMap(values=values, mask=np.asarray(index.mask, dtype=bool),
                   timestamp=frame.timestamp)


def smooth(pm: ProbMap, k: int = DEFAULT_SMOOTH_KERNEL) -> ProbMap:
    """Mean over the k x k window centered on each pixel.

    Windows are truncated at image borders and skip masked pixels; a pixel
    whose whole window is masked stays masked.  ``k`` must be odd and >= 1.
    """
    if k < 1 or k % 2 == 0:
        raise ValueError("smoothing kernel size must be an odd positive integer")
    if k == 1:
        return pm
    h, w = pm.values.shape
    r = k // 2
    padded_vals = np.zeros((h + 2 * r, w + 2 * r), dtype=np.float64)
    padded_cnt = np.zeros_like(padded_vals)
    padded_vals[r:r + h, r:r + w] = np.where(pm.mask, 0.0, pm.values)
    padded_cnt[r:r + h, r:r + w] = ~pm.mask
    sums = np.zeros((h, w), dtype=np.float64)
    counts = np.zeros((h, w), dtype=np.float64)
    for dy in range(k):
        for dx in range(k):
            sums += padded_vals[dy:dy + h, dx:dx + w]
            counts += padded_cnt[dy:dy + h, dx:dx + w]
    out_mask = counts == 0
    values = np.divide(sums, counts, out=np.zeros_like(sums), where=~out_mask)
    return ProbMap(values=values, mask=out_mask, timestamp=pm.timestamp)


def cafo_pixel_count(pm: ProbMap, threshold: float = 0.5) -> int:
    """Number of unmasked pixels with probability >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie strictly between 0 and 1")
    return int(((pm.values >= threshold) & ~pm.mask).sum())


def segment_series(series: SceneSeries, gain: float = DEFAULT_SEGMENT_GAIN,
                   center: float = DEFAULT_SEGMENT_CENTER,
                   kernel: int = DEFAULT_SMOOTH_KERNEL) -> ProbMapSeries:
    """Pseudo-segment and smooth every frame of a scene series."""
    maps = tuple(smooth(pseudo_segment(f, gain=gain, center=center), k=kernel)
                 for f in series.frames)
    return ProbMapSeries(location_id=series.location_id, maps=maps,
                         pixel_size_m=series.pixel_size_m)


def read_prob_stack(path) -> ProbMapSeries:
    """Read a probability stack (scene-stack format, single PROB band)."""
    manifest, pixels_list, masks_list = read_raw_stack(path)
    if list(manifest["bands"]) != [PROB_BAND]:
        raise SceneFormatError(
            f"expected bands [{PROB_BAND!r}], found {manifest['bands']}"
        )
    maps = tuple(
        ProbMap(values=px[0], mask=mk, timestamp=ts)
        for px, mk, ts in zip(pixels_list, masks_list, manifest["timestamps"])
    )
    return ProbMapSeries(
        location_id=str(manifest["location_id"]),
        maps=maps,
        pixel_size_m=float(manifest["pixel_size_m"]),
    )


def write_prob_stack(series: ProbMapSeries, path) -> None:
    """Write a probability stack; float32 on disk, bit-exact for float32 data."""
    write_raw_stack(
        path,
        series.location_id,
        series.pixel_size_m,
        (PROB_BAND,),
        series.timestamps,
        [m.values[None, :, :] for m in series.maps],
        [m.mask for m in series.maps],
    )
