"""Synthetic scene stacks and probability stacks with known ground truth.

Locations are flat seasonal fields carrying rectangular low-NDVI "sheds".
An expansion location additionally grows one shed: the added rectangle
fades in linearly over ``transition_frames`` frames starting at frame
``true_t_star`` (1-based), so frame ``true_t_star - 1`` never contains it
and frame ``true_t_star + transition_frames`` always does.

Everything is deterministic given the spec seed.  Benchmark generation
derives per-location seeds as ``splitmix64(master_seed XOR location_index)``
so locations can be produced independently and in parallel.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .scene_store import (
    BAND_BLUE,
    BAND_GREEN,
    BAND_NIR,
    BAND_RED,
    Frame,
    SceneSeries,
    write_scene_stack,
)
from .spectral import ProbMap, ProbMapSeries, pseudo_segment, write_prob_stack

#: (row0, col0, height, width) in pixels.
Rect = tuple[int, int, int, int]

NOISE_PROBABILITY = "probability"
NOISE_REFLECTANCE = "reflectance"

_SHED_BANDS = {BAND_RED: 0.3, BAND_GREEN: 0.25, BAND_BLUE: 0.2, BAND_NIR: 0.2}
_START_DATE = date(2019, 1, 1)

LABELS_FILE = "labels.csv"
BENCHMARK_FILE = "benchmark.json"
SCENE_DIR = "scene"
PROBS_DIR = "probs"


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic location."""

    width: int = 200
    height: int = 200
    n_frames: int = 100
    base_sheds: tuple[Rect, ...] = ()
    added_shed: Rect | None = None
    true_t_star: int | None = None
    transition_frames: int = 3
    noise: float = 0.15
    seasonal_amplitude: float = 0.15
    missing_rate: float = 0.08
    pixel_size_m: float = 3.0
    noise_space: str = NOISE_PROBABILITY
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("dimensions must be positive")
        if not 2 <= self.n_frames <= 365:
            raise ValueError("n_frames must lie in [2, 365]")
        for rect in (*self.base_sheds, *((self.added_shed,) if self.added_shed else ())):
            r0, c0, h, w = rect
            if r0 < 0 or c0 < 0 or h < 1 or w < 1 or r0 + h > self.height or c0 + w > self.width:
                raise ValueError(f"rectangle {rect} out of bounds")
        if self.added_shed is not None:
            if self.true_t_star is None or not 1 < self.true_t_star < self.n_frames:
                raise ValueError("true_t_star must satisfy 1 < t* < n_frames")
        if not 0.0 <= self.noise < 0.5:
            raise ValueError("noise scale must lie in [0, 0.5)")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ValueError("missing_rate must lie in [0, 1)")
        if self.transition_frames < 1:
            raise ValueError("transition_frames must be >= 1")
        if self.noise_space not in (NOISE_PROBABILITY, NOISE_REFLECTANCE):
            raise ValueError(f"unknown noise_space {self.noise_space!r}")


@dataclass(frozen=True)
class GroundTruth:
    """Hand-label stand-in for one synthetic location."""

    expanded: bool
    true_t_star: int | None
    true_added_pixels: int
    true_added_area_m2: float


def _rect_mask(shape: tuple[int, int], rect: Rect) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    r0, c0, h, w = rect
    mask[r0:r0 + h, c0:c0 + w] = True
    return mask


def _timestamps(n_frames: int) -> list[date]:
    return [_START_DATE + timedelta(days=int(i * 365 / n_frames)) for i in range(n_frames)]


def _build_fraction(spec: SyntheticSpec, t: int) -> float:
    """Fraction of the added shed present at 1-based frame ``t``."""
    if spec.added_shed is None:
        return 0.0
    return float(np.clip((t - spec.true_t_star + 1) / spec.transition_frames, 0.0, 1.0))


def _scene_bands(spec: SyntheticSpec, shed_frac: np.ndarray, doy: int) -> np.ndarray:
    ndvi_bg = 0.6 + spec.seasonal_amplitude * np.sin(2 * np.pi * doy / 365.25)
    ndvi_bg = float(np.clip(ndvi_bg, -0.9, 0.9))
    bg = {
        BAND_RED: 0.25 * (1.0 - ndvi_bg),
        BAND_GREEN: 0.2,
        BAND_BLUE: 0.15,
        BAND_NIR: 0.25 * (1.0 + ndvi_bg),
    }
    bands = [
        bg[name] * (1.0 - shed_frac) + _SHED_BANDS[name] * shed_frac
        for name in (BAND_RED, BAND_GREEN, BAND_BLUE, BAND_NIR)
    ]
    return np.stack(bands)


def generate_location(spec: SyntheticSpec) -> tuple[SceneSeries, ProbMapSeries, GroundTruth]:
    """Generate one location's scene stack, probability stack, and truth."""
    rng = np.random.default_rng(spec.seed)
    shape = (spec.height, spec.width)
    base = np.zeros(shape, dtype=bool)
    for rect in spec.base_sheds:
        base |= _rect_mask(shape, rect)
    added = _rect_mask(shape, spec.added_shed) if spec.added_shed else np.zeros(shape, bool)
    new_pixels = added & ~base
    timestamps = _timestamps(spec.n_frames)

    frames = []
    maps = []
    for i, ts in enumerate(timestamps):
        t = i + 1
        frac = np.maximum(base, _build_fraction(spec, t) * new_pixels)
        pixels = _scene_bands(spec, frac, ts.timetuple().tm_yday)
        mask = (rng.random(shape) < spec.missing_rate) if spec.missing_rate > 0 \
            else np.zeros(shape, dtype=bool)
        if spec.noise_space == NOISE_REFLECTANCE and spec.noise > 0:
            pixels = np.clip(pixels + 0.1 * spec.noise * rng.standard_normal(pixels.shape), 0.0, None)
        frame = Frame(bands=(BAND_RED, BAND_GREEN, BAND_BLUE, BAND_NIR),
                      pixels=pixels.astype(np.float32), mask=mask, timestamp=ts)
        frames.append(frame)
        if spec.noise_space == NOISE_REFLECTANCE:
            seg = pseudo_segment(frame)
            maps.append(ProbMap(values=seg.values.astype(np.float32),
                                mask=seg.mask, timestamp=ts))
        else:
            clean = frac
            if spec.noise > 0:
                clean = np.clip(clean + spec.noise * rng.standard_normal(shape), 0.0, 1.0)
            maps.append(ProbMap(values=clean.astype(np.float32), mask=mask, timestamp=ts))

    loc = f"loc-{spec.seed:016x}"
    scene = SceneSeries(location_id=loc, frames=tuple(frames), pixel_size_m=spec.pixel_size_m)
    probs = ProbMapSeries(location_id=loc, maps=tuple(maps), pixel_size_m=spec.pixel_size_m)
    n_added = int(new_pixels.sum())
    truth = GroundTruth(
        expanded=spec.added_shed is not None,
        true_t_star=spec.true_t_star if spec.added_shed else None,
        true_added_pixels=n_added,
        true_added_area_m2=n_added * spec.pixel_size_m ** 2,
    )
    return scene, probs, truth


_MASK64 = (1 << 64) - 1


def split_seed(master_seed: int, index: int) -> int:
    """Per-location seed: splitmix64 finalizer of (master_seed XOR index)."""
    z = (master_seed ^ index) & _MASK64
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _place_rect(rng: np.random.Generator, shape: tuple[int, int], size: tuple[int, int],
                occupied: np.ndarray, attempts: int = 200) -> Rect | None:
    h, w = size
    max_r, max_c = shape[0] - h, shape[1] - w
    if max_r < 0 or max_c < 0:
        return None
    for _ in range(attempts):
        r0 = int(rng.integers(0, max_r + 1))
        c0 = int(rng.integers(0, max_c + 1))
        if not occupied[r0:r0 + h, c0:c0 + w].any():
            return (r0, c0, h, w)
    return None


def _random_location_spec(rng: np.random.Generator, template: SyntheticSpec,
                          expanded: bool, child_seed: int) -> SyntheticSpec:
    shape = (template.height, template.width)
    occupied = np.zeros(shape, dtype=bool)

    added = None
    t_star = None
    if expanded:
        h = min(int(rng.integers(5, 21)), max(1, template.height // 3))
        w = min(int(rng.integers(10, 41)), max(1, template.width // 3))
        added = _place_rect(rng, shape, (h, w), occupied)
        if added is None:
            raise ValueError(f"cannot place a {h}x{w} shed in {shape}")
        occupied |= _rect_mask(shape, added)
        lo = max(2, int(np.ceil(0.2 * template.n_frames)))
        hi = min(template.n_frames - 1, int(np.floor(0.8 * template.n_frames)))
        t_star = int(rng.integers(lo, hi + 1))

    base = []
    for _ in range(int(rng.integers(1, 4))):
        h = min(int(rng.integers(8, 31)), max(1, template.height // 3))
        w = min(int(rng.integers(15, 61)), max(1, template.width // 3))
        rect = _place_rect(rng, shape, (h, w), occupied)
        if rect is not None:
            base.append(rect)
            occupied |= _rect_mask(shape, rect)

    return replace(template, base_sheds=tuple(base), added_shed=added,
                   true_t_star=t_star, seed=child_seed)


def benchmark_specs(n_static: int = 200, n_expanded: int = 50,
                    template: SyntheticSpec | None = None,
                    seed: int = 0) -> list[tuple[str, SyntheticSpec]]:
    """Per-location specs for a benchmark, without touching disk."""
    if n_static < 0 or n_expanded < 0 or n_static + n_expanded < 1:
        raise ValueError("benchmark needs a non-negative, non-empty location count")
    if template is None:
        template = SyntheticSpec()
    out = []
    for i in range(n_static + n_expanded):
        child = split_seed(seed, i)
        rng = np.random.default_rng(child)
        expanded = i >= n_static
        spec = _random_location_spec(rng, template, expanded, child)
        out.append((f"loc_{i:05d}", spec))
    return out


def generate_benchmark(out_dir, n_static: int = 200, n_expanded: int = 50,
                       template: SyntheticSpec | None = None, seed: int = 0,
                       write_scenes: bool = True) -> dict:
    """Write a labeled benchmark tree and return its manifest.

    Layout: ``<out>/<location_id>/{scene,probs}/`` stacks plus ``labels.csv``
    and ``benchmark.json`` at the root.
    """
    if template is None:
        template = SyntheticSpec()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    specs = benchmark_specs(n_static, n_expanded, template, seed)

    rows = []
    entries = []
    for loc_id, spec in specs:
        scene, probs, truth = generate_location(spec)
        scene = replace(scene, location_id=loc_id)
        probs = replace(probs, location_id=loc_id)
        if write_scenes:
            write_scene_stack(scene, out_dir / loc_id / SCENE_DIR)
        write_prob_stack(probs, out_dir / loc_id / PROBS_DIR)
        rows.append({
            "location_id": loc_id,
            "expanded": int(truth.expanded),
            "true_t_star": "" if truth.true_t_star is None else truth.true_t_star,
            "true_area_m2": truth.true_added_area_m2,
        })
        entries.append({"location_id": loc_id, "seed": spec.seed,
                        "expanded": int(truth.expanded)})

    with open(out_dir / LABELS_FILE, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["location_id", "expanded", "true_t_star", "true_area_m2"])
        writer.writeheader()
        writer.writerows(rows)

    manifest = {
        "seed": seed,
        "n_static": n_static,
        "n_expanded": n_expanded,
        "template": {
            "width": template.width,
            "height": template.height,
            "n_frames": template.n_frames,
            "transition_frames": template.transition_frames,
            "noise": template.noise,
            "seasonal_amplitude": template.seasonal_amplitude,
            "missing_rate": template.missing_rate,
            "pixel_size_m": template.pixel_size_m,
            "noise_space": template.noise_space,
        },
        "locations": entries,
    }
    with open(out_dir / BENCHMARK_FILE, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest
