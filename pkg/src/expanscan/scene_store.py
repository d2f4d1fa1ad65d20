"""On-disk scene-stack format plus ingestion, clipping, and quality filtering.

A scene stack is a directory holding one ``manifest.json`` and, per frame, a
raw raster file and a mask file:

* ``manifest.json`` — ``{location_id, pixel_size_m, width, height, bands,
  timestamps, frame_files}`` with ISO-8601 date strings in ``timestamps``.
* each frame file — little-endian IEEE-754 float32, row-major,
  band-sequential (all of band 0, then band 1, ...), exactly
  ``width * height * len(bands)`` values.
* each mask file — ``width * height`` bytes, row-major, 0 = present,
  1 = missing.  The mask file name is the frame file name plus ``.mask``.

Pixel data is held as float32 so that a write/read cycle is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path

import numpy as np

BAND_RED = "RED"
BAND_GREEN = "GREEN"
BAND_BLUE = "BLUE"
BAND_NIR = "NIR"

MANIFEST_NAME = "manifest.json"

#: Frames with more than this fraction of missing pixels are discarded.
DEFAULT_MAX_MISSING = 0.15


class SceneFormatError(ValueError):
    """Raised when an on-disk stack violates the scene-stack format."""


@dataclass(frozen=True, eq=False)
class Frame:
    """One multi-band raster snapshot.

    ``pixels`` has shape ``(n_bands, height, width)`` and is stored as
    float32; ``mask`` has shape ``(height, width)`` with True marking
    missing pixels.
    """

    bands: tuple[str, ...]
    pixels: np.ndarray
    mask: np.ndarray
    timestamp: date

    def __post_init__(self):
        pixels = np.ascontiguousarray(self.pixels, dtype=np.float32)
        mask = np.ascontiguousarray(self.mask, dtype=bool)
        if pixels.ndim != 3 or pixels.shape[0] != len(self.bands):
            raise ValueError(
                f"pixels must be (n_bands, height, width) with n_bands="
                f"{len(self.bands)}, got shape {pixels.shape}"
            )
        if pixels.shape[1] < 1 or pixels.shape[2] < 1:
            raise ValueError("frame dimensions must be positive")
        if mask.shape != pixels.shape[1:]:
            raise ValueError(
                f"mask shape {mask.shape} does not match frame {pixels.shape[1:]}"
            )
        present = pixels[:, ~mask]
        if present.size and not (np.isfinite(present).all() and (present >= 0).all()):
            raise ValueError("unmasked pixel values must be finite and >= 0")
        pixels.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "bands", tuple(self.bands))
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "mask", mask)

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    def band(self, name: str) -> np.ndarray:
        """Return the 2-D array for one band; raises on unknown band name."""
        try:
            idx = self.bands.index(name)
        except ValueError:
            raise ValueError(f"frame has no {name!r} band (bands: {self.bands})")
        return self.pixels[idx]


@dataclass(frozen=True, eq=False)
class SceneSeries:
    """Time-ordered frames for one location."""

    location_id: str
    frames: tuple[Frame, ...]
    pixel_size_m: float

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) < 2:
            raise ValueError("a scene series needs at least 2 frames")
        first = frames[0]
        for prev, cur in zip(frames, frames[1:]):
            if cur.timestamp <= prev.timestamp:
                raise ValueError("frame timestamps must strictly increase")
        for f in frames:
            if (f.width, f.height, f.bands) != (first.width, first.height, first.bands):
                raise ValueError("all frames must share dimensions and bands")
        if not (self.pixel_size_m > 0):
            raise ValueError("pixel_size_m must be positive")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def bands(self) -> tuple[str, ...]:
        return self.frames[0].bands

    @property
    def timestamps(self) -> tuple[date, ...]:
        return tuple(f.timestamp for f in self.frames)


def _mask_file_name(frame_file: str) -> str:
    return frame_file + ".mask"


def read_raw_stack(path) -> tuple[dict, list[np.ndarray], list[np.ndarray]]:
    """Low-level reader: manifest dict plus per-frame pixel/mask arrays.

    Performs all format-level validation (payload sizes, timestamp order)
    but no semantic validation of pixel values; frames come back sorted by
    timestamp.  Pixel arrays have shape ``(n_bands, height, width)``.
    """
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneFormatError(f"unreadable manifest in {path}: {exc}")

    required = {
        "location_id",
        "pixel_size_m",
        "width",
        "height",
        "bands",
        "timestamps",
        "frame_files",
    }
    missing = required - manifest.keys()
    if missing:
        raise SceneFormatError(f"manifest missing fields: {sorted(missing)}")
    width = int(manifest["width"])
    height = int(manifest["height"])
    bands = list(manifest["bands"])
    timestamps = [date.fromisoformat(t) for t in manifest["timestamps"]]
    frame_files = list(manifest["frame_files"])
    if len(timestamps) != len(frame_files):
        raise SceneFormatError("timestamps and frame_files lengths differ")
    if len(set(timestamps)) != len(timestamps):
        raise SceneFormatError("duplicate timestamps (non-monotone series)")

    n_values = width * height * len(bands)
    pixels_list: list[np.ndarray] = []
    masks_list: list[np.ndarray] = []
    for fname in frame_files:
        raw = np.fromfile(path / fname, dtype="<f4")
        if raw.size != n_values:
            raise SceneFormatError(
                f"{fname}: expected {n_values} float32 values, found {raw.size}"
            )
        mask_raw = np.fromfile(path / _mask_file_name(fname), dtype=np.uint8)
        if mask_raw.size != width * height:
            raise SceneFormatError(
                f"{_mask_file_name(fname)}: expected {width * height} bytes, "
                f"found {mask_raw.size}"
            )
        pixels_list.append(raw.reshape(len(bands), height, width))
        masks_list.append(mask_raw.reshape(height, width) != 0)

    order = np.argsort(timestamps, kind="stable")
    manifest["timestamps"] = [timestamps[i] for i in order]
    pixels_list = [pixels_list[i] for i in order]
    masks_list = [masks_list[i] for i in order]
    return manifest, pixels_list, masks_list


def read_scene_stack(path) -> SceneSeries:
    """Read a scene-stack directory into a validated SceneSeries."""
    manifest, pixels_list, masks_list = read_raw_stack(path)
    bands = tuple(manifest["bands"])
    frames = tuple(
        Frame(bands=bands, pixels=px, mask=mk, timestamp=ts)
        for px, mk, ts in zip(pixels_list, masks_list, manifest["timestamps"])
    )
    return SceneSeries(
        location_id=str(manifest["location_id"]),
        frames=frames,
        pixel_size_m=float(manifest["pixel_size_m"]),
    )


def write_raw_stack(path, location_id: str, pixel_size_m: float,
                    bands: tuple[str, ...], timestamps, pixels_list, masks_list) -> None:
    """Low-level writer used by both scene and probability stacks."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    frame_files = [f"frame_{i:05d}.f32" for i in range(len(pixels_list))]
    manifest = {
        "location_id": location_id,
        "pixel_size_m": pixel_size_m,
        "width": int(pixels_list[0].shape[2]),
        "height": int(pixels_list[0].shape[1]),
        "bands": list(bands),
        "timestamps": [t.isoformat() for t in timestamps],
        "frame_files": frame_files,
    }
    with open(path / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    for fname, px, mk in zip(frame_files, pixels_list, masks_list):
        np.ascontiguousarray(px, dtype="<f4").tofile(path / fname)
        np.ascontiguousarray(mk, dtype=np.uint8).tofile(path / _mask_file_name(fname))


def write_scene_stack(series: SceneSeries, path) -> None:
    """Write a SceneSeries so that read_scene_stack round-trips bit-exactly."""
    write_raw_stack(
        path,
        series.location_id,
        series.pixel_size_m,
        series.bands,
        series.timestamps,
        [f.pixels for f in series.frames],
        [f.mask for f in series.frames],
    )


def clip_center(frame: Frame, out_width: int, out_height: int) -> Frame:
    """Centered window; an odd remainder leaves the extra pixel right/bottom."""
    if out_width < 1 or out_height < 1:
        raise ValueError("clip dimensions must be positive")
    if out_width > frame.width or out_height > frame.height:
        raise ValueError(
            f"clip window {out_width}x{out_height} exceeds frame "
            f"{frame.width}x{frame.height}"
        )
    row0 = (frame.height - out_height) // 2
    col0 = (frame.width - out_width) // 2
    return Frame(
        bands=frame.bands,
        pixels=frame.pixels[:, row0:row0 + out_height, col0:col0 + out_width],
        mask=frame.mask[row0:row0 + out_height, col0:col0 + out_width],
        timestamp=frame.timestamp,
    )


def missing_fraction(frame: Frame) -> float:
    """Fraction of pixels flagged missing, in [0, 1]."""
    return float(frame.mask.mean())


def filter_frames(series: SceneSeries, max_missing: float = DEFAULT_MAX_MISSING) -> SceneSeries:
    """Drop frames whose missing fraction exceeds ``max_missing``.

    Order is preserved.  Raises ValueError if fewer than 2 frames survive,
    since the series would be unusable for change detection.
    """
    if not 0.0 <= max_missing <= 1.0:
        raise ValueError("max_missing must lie in [0, 1]")
    kept = tuple(f for f in series.frames if missing_fraction(f) <= max_missing)
    if len(kept) < 2:
        raise ValueError(
            f"only {len(kept)} frames pass the {max_missing:.2f} missing-data "
            f"threshold; at least 2 are required"
        )
    return replace(series, frames=kept)
