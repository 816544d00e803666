"""Minimal 1D-convolutional network engine with explicit backpropagation.

Layers cache what their backward pass needs during forward; calling
backward() without a cached forward raises NoForwardCache. Arrays are
float32 for training and float64 for gradient verification, selected per
network at build time. No autograd: every backward is written out, which is
what makes the finite-difference checks in the test suite meaningful.

Serialized form (``network_to_dict``): a versioned dict of layer specs in
construction order with parameters inline as flat lists, so checkpoints are
portable structured text once JSON-encoded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDataset, NoForwardCache, ShapeMismatch


def _init_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, shape).astype(dtype)


class Conv1d:
    """Same-padding 1D convolution, stride 1, odd kernel.

    out[b, o, n] = bias[o] + sum_{i,k} weights[o, i, k] * in[b, i, n + k - K//2]
    with zero padding outside the input.
    """

    kind = "conv1d"

    def __init__(self, in_ch, out_ch, kernel=5, *, rng=None, dtype=np.float32):
        if kernel % 2 == 0 or kernel < 1:
            raise ValueError("kernel must be odd")
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel = kernel
        rng = rng or np.random.default_rng(0)
        fan_in = in_ch * kernel
        self.weights = _init_uniform(rng, (out_ch, in_ch, kernel), fan_in, dtype)
        self.bias = _init_uniform(rng, (out_ch,), fan_in, dtype)
        self.dweights = np.zeros_like(self.weights)
        self.dbias = np.zeros_like(self.bias)
        self._cols = None
        self._in_shape = None

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] != self.in_ch:
            raise ShapeMismatch(
                f"conv1d expects (batch, {self.in_ch}, n), got {x.shape}"
            )
        b, _, n = x.shape
        pad = self.kernel // 2
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
        cols = np.lib.stride_tricks.sliding_window_view(xp, self.kernel, axis=2)
        # (b, in_ch, n, k) -> (b*n, in_ch*k) so the contraction is one GEMM
        cols = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(
            b * n, self.in_ch * self.kernel
        )
        self._cols = cols
        self._in_shape = x.shape
        w2d = self.weights.reshape(self.out_ch, -1)
        out = cols @ w2d.T + self.bias
        return out.reshape(b, n, self.out_ch).transpose(0, 2, 1)

    def backward(self, gout):
        if self._cols is None:
            raise NoForwardCache("conv1d backward without forward")
        b, _, n = self._in_shape
        pad = self.kernel // 2
        g2d = np.ascontiguousarray(gout.transpose(0, 2, 1)).reshape(b * n, self.out_ch)
        self.dweights = (g2d.T @ self._cols).reshape(self.weights.shape)
        self.dbias = g2d.sum(axis=0)
        gcols = (g2d @ self.weights.reshape(self.out_ch, -1)).reshape(
            b, n, self.in_ch, self.kernel
        )
        # accumulate channels-last to keep the k-loop copy-free
        gxp = np.zeros((b, n + 2 * pad, self.in_ch), dtype=gcols.dtype)
        for k in range(self.kernel):
            gxp[:, k : k + n, :] += gcols[:, :, :, k]
        self._cols = None
        return gxp[:, pad : pad + n, :].transpose(0, 2, 1)

    def param_grads(self):
        return [(self.weights, self.dweights), (self.bias, self.dbias)]


class Relu:
    kind = "relu"

    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0)

    def backward(self, gout):
        if self._mask is None:
            raise NoForwardCache("relu backward without forward")
        g = gout * self._mask
        self._mask = None
        return g

    def param_grads(self):
        return []


class Flatten:
    kind = "flatten"

    def __init__(self):
        self._in_shape = None

    def forward(self, x):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, gout):
        if self._in_shape is None:
            raise NoForwardCache("flatten backward without forward")
        g = gout.reshape(self._in_shape)
        self._in_shape = None
        return g

    def param_grads(self):
        return []


class FullyConnected:
    kind = "fully_connected"

    def __init__(self, in_dim, out_dim, *, rng=None, dtype=np.float32):
        self.in_dim = in_dim
        self.out_dim = out_dim
        rng = rng or np.random.default_rng(0)
        self.weights = _init_uniform(rng, (out_dim, in_dim), in_dim, dtype)
        self.bias = _init_uniform(rng, (out_dim,), in_dim, dtype)
        self.dweights = np.zeros_like(self.weights)
        self.dbias = np.zeros_like(self.bias)
        self._x = None

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeMismatch(
                f"fully_connected expects (batch, {self.in_dim}), got {x.shape}"
            )
        self._x = x
        return x @ self.weights.T + self.bias

    def backward(self, gout):
        if self._x is None:
            raise NoForwardCache("fully_connected backward without forward")
        self.dweights = gout.T @ self._x
        self.dbias = gout.sum(axis=0)
        g = gout @ self.weights
        self._x = None
        return g

    def param_grads(self):
        return [(self.weights, self.dweights), (self.bias, self.dbias)]


class ParallelSum:
    """Two layer stacks fed the same input; outputs summed elementwise.

    The upstream gradient passes into both branches unchanged; the input
    gradient is the sum of the branch input gradients.
    """

    kind = "parallel_sum"

    def __init__(self, branch_a, branch_b):
        self.branch_a = list(branch_a)
        self.branch_b = list(branch_b)

    def forward(self, x):
        ya = x
        for layer in self.branch_a:
            ya = layer.forward(ya)
        yb = x
        for layer in self.branch_b:
            yb = layer.forward(yb)
        if ya.shape != yb.shape:
            raise ShapeMismatch(f"branch outputs differ: {ya.shape} vs {yb.shape}")
        return ya + yb

    def backward(self, gout):
        ga = gout
        for layer in reversed(self.branch_a):
            ga = layer.backward(ga)
        gb = gout
        for layer in reversed(self.branch_b):
            gb = layer.backward(gb)
        return ga + gb

    def param_grads(self):
        out = []
        for layer in self.branch_a + self.branch_b:
            out.extend(layer.param_grads())
        return out


class Network:
    """An ordered layer stack with a fixed parameter traversal order."""

    def __init__(self, layers, dtype=np.float32):
        self.layers = list(layers)
        self.dtype = np.dtype(dtype)

    def forward(self, x):
        x = np.asarray(x, dtype=self.dtype)
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, gout):
        g = np.asarray(gout, dtype=self.dtype)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def param_grads(self):
        out = []
        for layer in self.layers:
            out.extend(layer.param_grads())
        return out

    def parameters(self):
        return [p for p, _ in self.param_grads()]

    def snapshot(self):
        return [p.copy() for p in self.parameters()]

    def restore(self, state):
        for p, saved in zip(self.parameters(), state, strict=True):
            p[...] = saved

    def iter_leaf_layers(self):
        """All layers depth-first, branches of a parallel_sum in order."""
        def walk(layers):
            for layer in layers:
                if isinstance(layer, ParallelSum):
                    yield layer
                    yield from walk(layer.branch_a)
                    yield from walk(layer.branch_b)
                else:
                    yield layer
        yield from walk(self.layers)


def mse_loss(pred, target):
    """Mean squared error over all elements and its gradient w.r.t. pred."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grad = (2.0 / diff.size) * diff
    return loss, grad


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    lr0: float = 1e-3
    max_epochs: int = 250
    patience_early: int = 25
    plateau_patience: int = 10
    plateau_factor: float = 0.5
    min_lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.plateau_factor < 1.0:
            raise ValueError("plateau_factor must be in (0, 1)")
        if self.patience_early < 1 or self.plateau_patience < 1:
            raise ValueError("patience values must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")


class Adam:
    """Adam with bias correction; moment buffers parallel the network params."""

    def __init__(self, network: Network, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(p) for p in network.parameters()]
        self.v = [np.zeros_like(p) for p in network.parameters()]

    def step(self, network: Network, lr: float):
        """One update from the gradients currently stored on the layers."""
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for (p, g), m, v in zip(network.param_grads(), self.m, self.v, strict=True):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainResult:
    history: list
    best_epoch: int
    best_val_loss: float


def predict(network: Network, X, batch_size: int = 256) -> np.ndarray:
    """Forward pass in chunks; concatenated outputs in input order."""
    X = np.asarray(X)
    outs = [
        network.forward(X[i : i + batch_size])
        for i in range(0, X.shape[0], batch_size)
    ]
    return np.concatenate(outs, axis=0)


def _dataset_loss(network, X, y, batch_size=256):
    loss, _ = mse_loss(predict(network, X, batch_size), np.asarray(y, network.dtype))
    return loss


def train(network: Network, train_data, val_data, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Adam training with per-epoch shuffling, LR-on-plateau decay, early stop.

    ``train_data`` / ``val_data`` are (X, y) array pairs. After each epoch the
    validation loss is computed; when it fails to improve for
    ``plateau_patience`` epochs the learning rate is multiplied by
    ``plateau_factor`` (floored at ``min_lr``), and training stops after
    ``patience_early`` epochs without improvement or at ``max_epochs``. The
    parameters of the best-validation epoch are restored before returning.
    """
    X_tr, y_tr = (np.asarray(a, dtype=network.dtype) for a in train_data)
    X_val, y_val = (np.asarray(a, dtype=network.dtype) for a in val_data)
    if X_tr.shape[0] == 0 or X_val.shape[0] == 0:
        raise EmptyDataset("train and validation sets must be non-empty")

    rng = np.random.default_rng(cfg.seed)
    opt = Adam(network, cfg)
    lr = cfg.lr0
    history = []
    best_val = np.inf
    best_epoch = 0
    best_state = network.snapshot()
    early_streak = 0
    plateau_streak = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(X_tr.shape[0])
        batch_losses = []
        for i in range(0, order.size, cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            pred = network.forward(X_tr[idx])
            loss, grad = mse_loss(pred, y_tr[idx])
            network.backward(grad.astype(network.dtype))
            opt.step(network, lr)
            batch_losses.append(loss)
        val_loss = _dataset_loss(network, X_val, y_val)
        history.append(EpochStats(epoch, float(np.mean(batch_losses)), val_loss, lr))

        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_state = network.snapshot()
            early_streak = 0
            plateau_streak = 0
        else:
            early_streak += 1
            plateau_streak += 1
            if early_streak >= cfg.patience_early:
                break
            if plateau_streak >= cfg.plateau_patience:
                lr = max(lr * cfg.plateau_factor, cfg.min_lr)
                plateau_streak = 0

    network.restore(best_state)
    return TrainResult(history=history, best_epoch=best_epoch, best_val_loss=best_val)


# ---------------------------------------------------------------------------
# Serialization: layer specs in construction order, parameters inline as flat
# lists. The field order below is the portable checkpoint contract.

def _layer_to_dict(layer):
    if isinstance(layer, Conv1d):
        return {
            "kind": layer.kind,
            "in_ch": layer.in_ch,
            "out_ch": layer.out_ch,
            "kernel": layer.kernel,
            "weights": [float(x) for x in layer.weights.ravel()],
            "bias": [float(x) for x in layer.bias.ravel()],
        }
    if isinstance(layer, FullyConnected):
        return {
            "kind": layer.kind,
            "in_dim": layer.in_dim,
            "out_dim": layer.out_dim,
            "weights": [float(x) for x in layer.weights.ravel()],
            "bias": [float(x) for x in layer.bias.ravel()],
        }
    if isinstance(layer, ParallelSum):
        return {
            "kind": layer.kind,
            "branch_a": [_layer_to_dict(l) for l in layer.branch_a],
            "branch_b": [_layer_to_dict(l) for l in layer.branch_b],
        }
    return {"kind": layer.kind}


def _layer_from_dict(d, dtype):
    kind = d["kind"]
    if kind == "conv1d":
        layer = Conv1d(d["in_ch"], d["out_ch"], d["kernel"], dtype=dtype)
        layer.weights = np.array(d["weights"], dtype=dtype).reshape(layer.weights.shape)
        layer.bias = np.array(d["bias"], dtype=dtype).reshape(layer.bias.shape)
        return layer
    if kind == "fully_connected":
        layer = FullyConnected(d["in_dim"], d["out_dim"], dtype=dtype)
        layer.weights = np.array(d["weights"], dtype=dtype).reshape(layer.weights.shape)
        layer.bias = np.array(d["bias"], dtype=dtype).reshape(layer.bias.shape)
        return layer
    if kind == "parallel_sum":
        return ParallelSum(
            [_layer_from_dict(l, dtype) for l in d["branch_a"]],
            [_layer_from_dict(l, dtype) for l in d["branch_b"]],
        )
    if kind == "relu":
        return Relu()
    if kind == "flatten":
        return Flatten()
    raise ValueError(f"unknown layer kind {kind!r}")


def network_to_dict(network: Network) -> dict:
    return {
        "format": "uwbpos-net",
        "version": 1,
        "dtype": network.dtype.name,
        "layers": [_layer_to_dict(l) for l in network.layers],
    }


def network_from_dict(d: dict) -> Network:
    if d.get("format") != "uwbpos-net" or d.get("version") != 1:
        raise ValueError("not a version-1 uwbpos-net checkpoint")
    dtype = np.dtype(d["dtype"])
    return Network([_layer_from_dict(l, dtype) for l in d["layers"]], dtype=dtype)
