"""Conventional first-path ToA detectors (Peak, LDE) and exhaustive tuning.

Both detectors use a noise threshold relative to the strongest sample,
th = beta * max(cir), so they are invariant to positive scaling of the raw
CIR. Outputs are integer sample indices returned as floats; labels stay
fractional.

Window conventions (fixed so an independent reference can reproduce them):

* moving average: centered, window ``w_avg`` (odd), out-of-range samples
  read as zero;
* small moving maximum ``u_s[n] = max(y[n - w_small + 1 .. n])``: the most
  recent ``w_small`` averaged samples, current one included;
* large moving maximum ``u_l[n] = max(y[n - w_large .. n - 1])``: the
  ``w_large`` samples strictly before ``n``.

Out-of-range entries read as zero in all three filters. The leading edge is
the first ``n`` with ``u_s[n] >= beta * max(y)`` and
``u_s[n] > lede_factor * u_l[n]``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import WINDOW_LEN, CirWindow
from .errors import EmptyGrid, NoEdgeFound, NoPeakFound


@dataclass(frozen=True)
class PeakParams:
    """Noise threshold factor for the peak detector."""

    beta: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must be in (0, 1]")


@dataclass(frozen=True)
class LdeParams:
    """Leading-edge detector parameters: threshold, edge factor, filter windows."""

    beta: float = 0.2
    lede_factor: float = 2.0
    w_avg: int = 3
    w_small: int = 4
    w_large: int = 16

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must be in (0, 1]")
        if self.lede_factor <= 0:
            raise ValueError("lede_factor must be positive")
        if self.w_avg < 1 or self.w_avg % 2 == 0:
            raise ValueError("w_avg must be an odd integer >= 1")
        if self.w_small < 1:
            raise ValueError("w_small must be >= 1")
        if self.w_large <= self.w_small:
            raise ValueError("w_large must exceed w_small")


@dataclass(frozen=True)
class TuneGrid:
    """Per-parameter candidate lists for exhaustive search.

    For the peak detector only ``beta`` is used. Combinations violating
    parameter invariants (w_small >= w_large) are skipped.
    """

    beta: tuple = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6)
    lede_factor: tuple = (1.2, 1.5, 2.0, 3.0)
    w_avg: tuple = (1, 3, 5)
    w_small: tuple = (2, 4, 8)
    w_large: tuple = (8, 16, 32)


class TuneResult(NamedTuple):
    params: PeakParams | LdeParams
    mae: float


# Error charged for a window on which the detector finds nothing; keeps the
# exhaustive search total-ordered without special-casing failures.
FAILURE_PENALTY = float(WINDOW_LEN)


def _as_matrix(values) -> np.ndarray:
    out = np.asarray(values, dtype=float)
    if out.ndim == 1:
        out = out[None, :]
    return out


def peak_indices(values, beta: float) -> np.ndarray:
    """First local maximum at or above beta * max, per row; -1 when none exists.

    A sample qualifies when it is >= both neighbors (boundary neighbors read
    as -inf) and >= the threshold.
    """
    v = _as_matrix(values)
    thr = beta * v.max(axis=1, keepdims=True)
    left = np.empty_like(v)
    left[:, 0] = -np.inf
    left[:, 1:] = v[:, :-1]
    right = np.empty_like(v)
    right[:, -1] = -np.inf
    right[:, :-1] = v[:, 1:]
    ok = (v >= thr) & (v >= left) & (v >= right)
    idx = np.argmax(ok, axis=1)
    idx[~ok.any(axis=1)] = -1
    return idx


def leading_edge_indices(values, p: LdeParams) -> np.ndarray:
    """First index passing the LDE threshold and edge-factor conditions, per row.

    Returns -1 for rows where no index qualifies.
    """
    v = _as_matrix(values)
    n = v.shape[1]

    if p.w_avg == 1:
        y = v
    else:
        half = p.w_avg // 2
        yp = np.pad(v, ((0, 0), (half, half)))
        y = sliding_window_view(yp, p.w_avg, axis=1).sum(axis=2) / p.w_avg

    # u_s: trailing-inclusive max over the last w_small averaged samples.
    ys = np.pad(y, ((0, 0), (p.w_small - 1, 0)))
    u_s = sliding_window_view(ys, p.w_small, axis=1).max(axis=2)
    # u_l: max over the w_large samples strictly before n.
    yl = np.pad(y, ((0, 0), (p.w_large, 0)))
    u_l = sliding_window_view(yl[:, : n + p.w_large - 1], p.w_large, axis=1).max(axis=2)

    thr = p.beta * y.max(axis=1, keepdims=True)
    ok = (u_s >= thr) & (u_s > p.lede_factor * u_l)
    idx = np.argmax(ok, axis=1)
    idx[~ok.any(axis=1)] = -1
    return idx


def peak_toa(window: CirWindow, p: PeakParams) -> float:
    """ToA of the first peak above the noise threshold, window-relative."""
    idx = peak_indices(window.values, p.beta)[0]
    if idx < 0:
        raise NoPeakFound("no sample satisfies the peak conditions")
    return float(idx)


def lde_toa(window: CirWindow, p: LdeParams) -> float:
    """ToA of the first leading edge, window-relative."""
    idx = leading_edge_indices(window.values, p)[0]
    if idx < 0:
        raise NoEdgeFound("no sample satisfies the leading-edge conditions")
    return float(idx)


def _grid_points(kind: str, grid: TuneGrid) -> Iterable[PeakParams | LdeParams]:
    if kind == "peak":
        for beta in grid.beta:
            yield PeakParams(beta=beta)
    elif kind == "lde":
        combos = itertools.product(
            grid.beta, grid.lede_factor, grid.w_avg, grid.w_small, grid.w_large
        )
        for beta, factor, w_avg, w_small, w_large in combos:
            if w_small >= w_large:
                continue
            yield LdeParams(
                beta=beta,
                lede_factor=factor,
                w_avg=w_avg,
                w_small=w_small,
                w_large=w_large,
            )
    else:
        raise ValueError(f"unknown estimator kind {kind!r}")


def estimate_batch(kind: str, values, params) -> np.ndarray:
    """Detector output per row as floats; NaN where the detector finds nothing."""
    if kind == "peak":
        idx = peak_indices(values, params.beta)
    elif kind == "lde":
        idx = leading_edge_indices(values, params)
    else:
        raise ValueError(f"unknown estimator kind {kind!r}")
    out = idx.astype(float)
    out[idx < 0] = np.nan
    return out


def mean_abs_error(kind: str, values, params, labels) -> float:
    """MAE of a detector against fractional labels; failures cost FAILURE_PENALTY."""
    est = estimate_batch(kind, values, params)
    err = np.abs(est - np.asarray(labels, dtype=float))
    err[np.isnan(err)] = FAILURE_PENALTY
    return float(err.mean())


def tune(
    kind: str,
    grid: TuneGrid,
    windows: Sequence[CirWindow],
    labels: Sequence[float],
) -> TuneResult:
    """Exhaustive grid search minimizing mean absolute ToA error.

    Ties are broken by grid order (earliest candidate wins).
    """
    if len(windows) == 0 or len(windows) != len(labels):
        raise ValueError("need a non-empty, equally sized set of windows and labels")
    values = np.stack([w.values for w in windows])
    labels = np.asarray(labels, dtype=float)

    best: TuneResult | None = None
    for params in _grid_points(kind, grid):
        mae = mean_abs_error(kind, values, params, labels)
        if best is None or mae < best.mae:
            best = TuneResult(params, mae)
    if best is None:
        raise EmptyGrid(f"grid contains no valid {kind} parameter combination")
    return best
