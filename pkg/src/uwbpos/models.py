"""The two CNN estimators: single-CIR ToA regression and multi-CIR
fingerprint-to-position regression.

Both share the same two-branch topology: a depth-1 and a depth-4 stack of
conv+ReLU blocks fed the same input, their outputs summed, then one more
conv+ReLU block, a flatten, and a single fully connected readout. The ToA
model maps 1x162 windows to the window-relative ToA; the fingerprint model
maps Lx162 stacks (one channel per anchor, fixed order) to 2D coordinates.

Regression targets are standardized with training-set statistics; the
wrappers apply the inverse at inference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import WINDOW_LEN, CirWindow, Position2D
from .errors import AnchorOrderMismatch, ShapeMismatch
from .net import (
    Conv1d,
    Flatten,
    FullyConnected,
    Network,
    ParallelSum,
    Relu,
    TrainConfig,
    network_from_dict,
    network_to_dict,
    predict,
    train,
)

KERNEL = 5
TOA_FILTERS = 16
FP_FILTERS = 32


@dataclass(frozen=True)
class FingerprintSet:
    """Per-anchor windows for one tag point, in a fixed anchor order."""

    windows: tuple
    anchor_ids: tuple
    position: Position2D
    incomplete: bool = False

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))
        object.__setattr__(self, "anchor_ids", tuple(self.anchor_ids))
        if len(self.windows) != len(self.anchor_ids):
            raise ValueError("one window per anchor id required")


def _conv_block(in_ch, out_ch, rng, dtype):
    return [Conv1d(in_ch, out_ch, KERNEL, rng=rng, dtype=dtype), Relu()]


def _build_two_branch(in_ch, n_filters, out_dim, seed, dtype):
    rng = np.random.default_rng(seed)
    branch_a = _conv_block(in_ch, n_filters, rng, dtype)
    branch_b = _conv_block(in_ch, n_filters, rng, dtype)
    for _ in range(3):
        branch_b += _conv_block(n_filters, n_filters, rng, dtype)
    layers = [
        ParallelSum(branch_a, branch_b),
        *_conv_block(n_filters, n_filters, rng, dtype),
        Flatten(),
        FullyConnected(n_filters * WINDOW_LEN, out_dim, rng=rng, dtype=dtype),
    ]
    return Network(layers, dtype=dtype)


def build_ann_toa(seed: int = 0, dtype=np.float32) -> Network:
    """ToA regressor: 1x162 input, 16 filters per conv, single output."""
    return _build_two_branch(1, TOA_FILTERS, 1, seed, dtype)


def build_ann_fp(n_anchors: int, seed: int = 0, dtype=np.float32) -> Network:
    """Fingerprint regressor: n_anchors x 162 input, 32 filters, 2 outputs."""
    if n_anchors < 1:
        raise ValueError("n_anchors must be >= 1")
    return _build_two_branch(n_anchors, FP_FILTERS, 2, seed, dtype)


def windows_to_input(windows) -> np.ndarray:
    """Stack CirWindows into a (n, 1, 162) array."""
    return np.stack([w.values for w in windows])[:, None, :]


def sets_to_input(sets) -> np.ndarray:
    """Stack FingerprintSets into a (n, L, 162) array."""
    return np.stack([[w.values for w in s.windows] for s in sets])


def _standardize_stats(y: np.ndarray):
    mean = y.mean(axis=0)
    std = y.std(axis=0)
    std = np.where(std < 1e-8, 1.0, std)
    return mean, std


@dataclass
class ToaEstimator:
    """Trained ToA network plus the target standardization it was fit with."""

    network: Network
    target_mean: float
    target_std: float

    def predict(self, X) -> np.ndarray:
        """Window-relative ToA estimates for a (n, 1, 162) input stack."""
        X = np.asarray(X)
        if X.ndim != 3 or X.shape[1] != 1 or X.shape[2] != WINDOW_LEN:
            raise ShapeMismatch(f"expected (n, 1, {WINDOW_LEN}), got {X.shape}")
        out = predict(self.network, X)[:, 0].astype(float)
        return out * self.target_std + self.target_mean


def estimate_toa(estimator: ToaEstimator, window: CirWindow) -> float:
    """Window-relative ToA for one window; absolute via window.to_absolute()."""
    return float(estimator.predict(windows_to_input([window]))[0])


@dataclass
class FpEstimator:
    """Trained fingerprint network with its anchor order and target scaling."""

    network: Network
    target_mean: np.ndarray
    target_std: np.ndarray
    anchor_ids: tuple

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X)
        n_anchors = len(self.anchor_ids)
        if X.ndim != 3 or X.shape[1] != n_anchors or X.shape[2] != WINDOW_LEN:
            raise ShapeMismatch(
                f"expected (n, {n_anchors}, {WINDOW_LEN}), got {X.shape}"
            )
        out = predict(self.network, X).astype(float)
        return out * self.target_std + self.target_mean


def estimate_position_fp(estimator: FpEstimator, fp: FingerprintSet) -> Position2D:
    """Map one fingerprint set to a 2D position in cm."""
    if fp.anchor_ids != tuple(estimator.anchor_ids):
        raise AnchorOrderMismatch(
            f"set anchors {fp.anchor_ids} != training anchors {tuple(estimator.anchor_ids)}"
        )
    xy = estimator.predict(sets_to_input([fp]))[0]
    return Position2D(float(xy[0]), float(xy[1]))


def train_toa_estimator(
    train_windows,
    train_labels,
    val_windows,
    val_labels,
    cfg: TrainConfig = TrainConfig(),
    arch_seed: int = 0,
):
    """Fit the ToA network on window-relative labels; returns (estimator, result)."""
    net = build_ann_toa(seed=arch_seed)
    y_tr = np.asarray(train_labels, dtype=float).reshape(-1, 1)
    y_val = np.asarray(val_labels, dtype=float).reshape(-1, 1)
    mean, std = _standardize_stats(y_tr)
    result = train(
        net,
        (windows_to_input(train_windows), (y_tr - mean) / std),
        (windows_to_input(val_windows), (y_val - mean) / std),
        cfg,
    )
    return ToaEstimator(net, float(mean[0]), float(std[0])), result


def train_fp_estimator(
    train_sets,
    val_sets,
    cfg: TrainConfig = TrainConfig(),
    arch_seed: int = 0,
):
    """Fit the fingerprint network on tag coordinates; returns (estimator, result)."""
    anchor_ids = tuple(train_sets[0].anchor_ids)
    for s in list(train_sets) + list(val_sets):
        if tuple(s.anchor_ids) != anchor_ids:
            raise AnchorOrderMismatch("all sets must share one anchor order")
    net = build_ann_fp(len(anchor_ids), seed=arch_seed)
    y_tr = np.array([[s.position.x, s.position.y] for s in train_sets])
    y_val = np.array([[s.position.x, s.position.y] for s in val_sets])
    mean, std = _standardize_stats(y_tr)
    result = train(
        net,
        (sets_to_input(train_sets), (y_tr - mean) / std),
        (sets_to_input(val_sets), (y_val - mean) / std),
        cfg,
    )
    return FpEstimator(net, mean, std, anchor_ids), result


# Checkpoint dicts: the network dump plus estimator metadata. JSON-encode for
# the on-disk form.

def toa_estimator_to_dict(est: ToaEstimator) -> dict:
    return {
        "estimator": "ann_toa",
        "target_mean": est.target_mean,
        "target_std": est.target_std,
        "network": network_to_dict(est.network),
    }


def toa_estimator_from_dict(d: dict) -> ToaEstimator:
    if d.get("estimator") != "ann_toa":
        raise ValueError("not an ann_toa checkpoint")
    return ToaEstimator(
        network_from_dict(d["network"]),
        float(d["target_mean"]),
        float(d["target_std"]),
    )


def fp_estimator_to_dict(est: FpEstimator) -> dict:
    return {
        "estimator": "ann_fp",
        "target_mean": [float(v) for v in est.target_mean],
        "target_std": [float(v) for v in est.target_std],
        "anchor_ids": list(est.anchor_ids),
        "network": network_to_dict(est.network),
    }


def fp_estimator_from_dict(d: dict) -> FpEstimator:
    if d.get("estimator") != "ann_fp":
        raise ValueError("not an ann_fp checkpoint")
    return FpEstimator(
        network_from_dict(d["network"]),
        np.array(d["target_mean"], dtype=float),
        np.array(d["target_std"], dtype=float),
        tuple(d["anchor_ids"]),
    )
