"""Shared builders for test inputs."""

from __future__ import annotations

from datetime import date, timedelta

import numpy as np

from expanscan import Frame, ProbMap, ProbMapSeries, SceneSeries

BANDS = ("RED", "GREEN", "BLUE", "NIR")


def day(i: int) -> date:
    return date(2019, 1, 1) + timedelta(days=int(i))


def make_frame(nir, red, green=None, blue=None, mask=None, timestamp=None) -> Frame:
    nir = np.asarray(nir, dtype=np.float32)
    red = np.asarray(red, dtype=np.float32)
    green = np.full_like(nir, 0.2) if green is None else np.asarray(green, np.float32)
    blue = np.full_like(nir, 0.15) if blue is None else np.asarray(blue, np.float32)
    if mask is None:
        mask = np.zeros(nir.shape, dtype=bool)
    return Frame(bands=BANDS, pixels=np.stack([red, green, blue, nir]),
                 mask=mask, timestamp=timestamp or day(0))


def random_frame(rng: np.random.Generator, height: int = 8, width: int = 8,
                 mask_rate: float = 0.0, timestamp=None) -> Frame:
    pixels = rng.random((len(BANDS), height, width), dtype=np.float32)
    mask = rng.random((height, width)) < mask_rate
    return Frame(bands=BANDS, pixels=pixels, mask=mask, timestamp=timestamp or day(0))


def random_scene_series(rng: np.random.Generator, n_frames: int = 5, height: int = 8,
                        width: int = 8, mask_rate: float = 0.0,
                        location_id: str = "loc-test") -> SceneSeries:
    frames = tuple(
        random_frame(rng, height, width, mask_rate, timestamp=day(3 * i))
        for i in range(n_frames)
    )
    return SceneSeries(location_id=location_id, frames=frames, pixel_size_m=3.0)


def prob_series_from_array(values, masks=None, location_id: str = "loc-test",
                           pixel_size_m: float = 3.0) -> ProbMapSeries:
    """values: (T, H, W) array-like of probabilities."""
    values = np.asarray(values, dtype=np.float64)
    maps = []
    for i in range(values.shape[0]):
        mask = None if masks is None else np.asarray(masks[i], dtype=bool)
        if mask is None:
            mask = np.zeros(values.shape[1:], dtype=bool)
        maps.append(ProbMap(values=values[i], mask=mask, timestamp=day(3 * i)))
    return ProbMapSeries(location_id=location_id, maps=tuple(maps),
                         pixel_size_m=pixel_size_m)


def random_prob_series(rng: np.random.Generator, n_frames: int = 4, height: int = 3,
                       width: int = 3, mask_rate: float = 0.0,
                       location_id: str = "loc-test") -> ProbMapSeries:
    values = rng.random((n_frames, height, width))
    masks = rng.random((n_frames, height, width)) < mask_rate
    return prob_series_from_array(values, masks, location_id=location_id)
