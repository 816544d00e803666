"""Core domain types, physical constants, and CIR window preprocessing.

Positions are in cm, delays are fractional CIR sample indices; conversions
between the two happen only through :func:`toa_to_range` / :func:`toa_label`.
All types are frozen and all functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AllZeroCir, MissingLabel

# Window geometry: 10 samples kept before the detected first path,
# 152 from the first path onward (the first-path sample sits at offset 10).
PRE_SAMPLES = 10
POST_SAMPLES = 152
WINDOW_LEN = PRE_SAMPLES + POST_SAMPLES


@dataclass(frozen=True)
class PhysConstants:
    """Propagation constants: c in cm/ns, CIR sample spacing in ns."""

    c: float = 29.9792458
    delta_t: float = 1.0

    def __post_init__(self):
        if self.c <= 0 or self.delta_t <= 0:
            raise ValueError("c and delta_t must be positive")


@dataclass(frozen=True)
class Position2D:
    """A 2D point in cm."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def distance_to(self, other: "Position2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True, kw_only=True, eq=False)
class CirRecord:
    """One measured or simulated CIR with its link metadata.

    ``samples`` holds the CIR magnitude (arbitrary amplitude units).
    ``first_path_idx`` and ``toa_dwm`` are the device-reported first-path
    sample index and fractional ToA estimate. ``range_err_cm`` is the ranging
    error of the device estimate and is present only for labeled data.
    """

    env_id: str
    anchor_id: int
    tag_id: int
    rep_id: int = 0
    samples: np.ndarray
    first_path_idx: int
    toa_dwm: float
    anchor_pos: Position2D
    tag_pos: Position2D
    range_err_cm: float | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1D sequence")
        if np.any(samples < 0):
            raise ValueError("CIR magnitude samples must be non-negative")
        if not 0 <= self.first_path_idx < samples.size:
            raise ValueError("first_path_idx outside the sample buffer")
        if not 0 <= self.toa_dwm < samples.size:
            raise ValueError("toa_dwm outside the sample buffer")

    @property
    def n_raw(self) -> int:
        return int(self.samples.size)


@dataclass(frozen=True, eq=False)
class CirWindow:
    """The preprocessed 162-sample magnitude window fed to estimators.

    ``window_start`` is the raw index of the first real sample in the window
    (clamped at 0); when the record's first path lies closer than 10 samples
    to the buffer start, ``pad_left`` zeros are prepended so the first-path
    sample always sits at element 10.
    """

    values: np.ndarray
    window_start: int
    norm_factor: float
    pad_left: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (WINDOW_LEN,):
            raise ValueError(f"window must have exactly {WINDOW_LEN} samples")
        if self.norm_factor <= 0:
            raise ValueError("norm_factor must be positive")
        if self.window_start < 0 or self.pad_left < 0:
            raise ValueError("window_start and pad_left must be non-negative")

    def to_absolute(self, rel: float) -> float:
        """Convert a window-relative sample index to a raw-buffer index."""
        return self.window_start - self.pad_left + rel

    def to_relative(self, absolute: float) -> float:
        """Convert a raw-buffer sample index to a window-relative index."""
        return absolute - self.window_start + self.pad_left


def preprocess(record: CirRecord) -> CirWindow:
    """Cut the 162-sample window around the detected first path and max-normalize.

    The window spans raw indices [first_path_idx - 10, first_path_idx + 152);
    indices outside the raw buffer are zero-padded.

    Raises AllZeroCir when every raw sample in the window is zero.
    """
    start = record.first_path_idx - PRE_SAMPLES
    pad_left = max(0, -start)
    lo = max(start, 0)
    hi = min(start + WINDOW_LEN, record.n_raw)
    body = record.samples[lo:hi]
    pad_right = WINDOW_LEN - pad_left - body.size
    values = np.concatenate(
        [np.zeros(pad_left), body, np.zeros(pad_right)]
    )
    peak = values.max()
    if peak <= 0.0:
        raise AllZeroCir(
            f"window [{start}, {start + WINDOW_LEN}) of record "
            f"(env={record.env_id}, anchor={record.anchor_id}, tag={record.tag_id}) is all-zero"
        )
    return CirWindow(
        values=values / peak,
        window_start=lo,
        norm_factor=float(peak),
        pad_left=pad_left,
    )


def toa_label(record: CirRecord, k: PhysConstants = PhysConstants()) -> float:
    """Ground-truth ToA as a fractional sample index.

    The device ranging error is converted to a ToA error and subtracted from
    the device estimate: toa_dwm - range_err_cm / (c * delta_t).
    """
    if record.range_err_cm is None:
        raise MissingLabel(
            f"record (env={record.env_id}, anchor={record.anchor_id}, "
            f"tag={record.tag_id}) has no range_err_cm"
        )
    return record.toa_dwm - record.range_err_cm / (k.c * k.delta_t)


def toa_to_range(toa: float, k: PhysConstants = PhysConstants()):
    """Convert a fractional ToA sample index to a range in cm. Accepts arrays."""
    return toa * (k.c * k.delta_t)
