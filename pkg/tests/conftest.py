import numpy as np
import pytest

from uwbpos.core import WINDOW_LEN, CirRecord, CirWindow, Position2D


def make_window(values, window_start=0, pad_left=0):
    """Wrap a raw array as a CirWindow, max-normalizing when needed."""
    v = np.asarray(values, dtype=float)
    peak = v.max()
    if peak > 0:
        return CirWindow(
            values=v / peak, window_start=window_start,
            norm_factor=float(peak), pad_left=pad_left,
        )
    return CirWindow(values=v, window_start=window_start, norm_factor=1.0,
                     pad_left=pad_left)


def random_window_values(rng):
    """One synthetic 162-sample magnitude window: noise plus a few bumps."""
    kind = rng.integers(0, 4)
    v = np.abs(rng.normal(0.0, rng.uniform(0.01, 0.2), WINDOW_LEN))
    if kind == 0:  # isolated impulses
        for _ in range(rng.integers(1, 4)):
            v[rng.integers(0, WINDOW_LEN)] += rng.uniform(0.3, 1.0)
    elif kind == 1:  # step edge
        v[rng.integers(5, WINDOW_LEN - 5):] += rng.uniform(0.3, 1.0)
    elif kind == 2:  # smooth multipath-like bumps
        t = np.arange(WINDOW_LEN, dtype=float)
        for _ in range(rng.integers(2, 6)):
            c = rng.uniform(5, WINDOW_LEN - 5)
            v += rng.uniform(0.1, 1.0) * np.exp(-0.5 * ((t - c) / rng.uniform(0.6, 3.0)) ** 2)
    # kind == 3: pure noise
    return v / v.max()


def random_windows(n, seed=0):
    rng = np.random.default_rng(seed)
    return [random_window_values(rng) for _ in range(n)]


def make_record(samples, first_path_idx, toa_dwm=None, range_err_cm=None,
                env_id="test", anchor_id=0, tag_id=0, rep_id=0,
                anchor_pos=None, tag_pos=None):
    samples = np.asarray(samples, dtype=float)
    return CirRecord(
        env_id=env_id,
        anchor_id=anchor_id,
        tag_id=tag_id,
        rep_id=rep_id,
        samples=samples,
        first_path_idx=first_path_idx,
        toa_dwm=float(first_path_idx) if toa_dwm is None else toa_dwm,
        anchor_pos=anchor_pos or Position2D(0.0, 0.0),
        tag_pos=tag_pos or Position2D(100.0, 100.0),
        range_err_cm=range_err_cm,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
