"""Per-shape neural unsigned distance field.

A fully connected network over a Fourier encoding of the query point,
fitted with an L1 loss and Adam, with exact input gradients by
backpropagation. Training runs in float32; evaluation and input gradients
run in float64 on the stored float32 weights.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import FormatError, NumericalError, TruncatedFileError
from .fields import DistanceField
from .geometry import Box

log = logging.getLogger(__name__)

WEIGHTS_MAGIC = b"NUDW0001"
_CHUNK = 16384


@dataclass
class MlpConfig:
    n_frequencies: int = 8
    hidden_layers: int = 2
    hidden_width: int = 256
    activation: str = "relu"

    def __post_init__(self):
        if self.hidden_width < 1 or self.hidden_layers < 0 or self.n_frequencies < 0:
            raise ValueError("invalid MLP shape")
        if self.activation not in ("relu", "softplus"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def input_dim(self):
        return 3 + 6 * self.n_frequencies

    def layer_shapes(self):
        dims = [self.input_dim] + [self.hidden_width] * self.hidden_layers + [1]
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 4096
    max_epochs: int = 2000
    early_stop_patience: int = 50
    holdout_fraction: float = 0.1
    target_clamp: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must be in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainReport:
    epochs_run: int
    best_epoch: int
    final_train_l1: float
    final_val_l1: float
    stopped_early: bool
    train_curve: List[float] = field(default_factory=list)
    val_curve: List[float] = field(default_factory=list)


def frequencies(n):
    return (2.0 ** np.arange(n)) * np.pi


def encode(p, n_frequencies, dtype=np.float64):
    """[p, sin(f_k p), cos(f_k p)] with frequencies 2^k * pi, k-major."""
    p = np.asarray(p, dtype=dtype).reshape(-1, 3)
    if n_frequencies == 0:
        return p
    arg = (p[:, None, :] * frequencies(n_frequencies).astype(dtype)[None, :, None]).reshape(len(p), -1)
    return np.concatenate([p, np.sin(arg), np.cos(arg)], axis=1)


def encoding_backward(p, g_enc, n_frequencies):
    """Pull a gradient w.r.t. the encoding back to the 3D input."""
    g = g_enc[:, :3].copy()
    if n_frequencies == 0:
        return g
    f = frequencies(n_frequencies)
    arg = p[:, None, :] * f[None, :, None]
    k3 = 3 * n_frequencies
    gs = g_enc[:, 3:3 + k3].reshape(-1, n_frequencies, 3)
    gc = g_enc[:, 3 + k3:].reshape(-1, n_frequencies, 3)
    g += np.sum(f[None, :, None] * (gs * np.cos(arg) - gc * np.sin(arg)), axis=1)
    return g


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0)
    return np.logaddexp(0, z).astype(z.dtype, copy=False)


def _act_grad(z, kind):
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    return (0.5 * (1 + np.tanh(0.5 * z))).astype(z.dtype, copy=False)


class MlpField(DistanceField):
    """Network weights plus the DistanceField contract.

    `layers` is a list of (W (out, in), b (out,)) float32 pairs; the output
    layer is linear and `eval` clamps it at zero.
    """

    def __init__(self, cfg: MlpConfig, layers, domain: Optional[Box] = None):
        self.cfg = cfg
        self.layers = [(np.ascontiguousarray(W, dtype=np.float32), np.ascontiguousarray(b, dtype=np.float32))
                       for W, b in layers]
        expected = cfg.layer_shapes()
        got = [(W.shape[1], W.shape[0]) for W, _ in self.layers]
        if got != expected:
            raise ValueError(f"layer shapes {got} do not match config {expected}")
        self.domain = domain if domain is not None else Box.cube(1.0)
        self._refresh()

    def _refresh(self):
        self._layers64 = [(W.astype(np.float64), b.astype(np.float64)) for W, b in self.layers]

    def set_layers(self, layers):
        self.layers = [(np.array(W, dtype=np.float32), np.array(b, dtype=np.float32)) for W, b in layers]
        self._refresh()

    def n_parameters(self):
        return sum(W.size + b.size for W, b in self.layers)

    # -- forward / backward in float64

    def _forward_chunk(self, p):
        h = encode(p, self.cfg.n_frequencies)
        pre = []
        for W, b in self._layers64[:-1]:
            z = h @ W.T + b
            pre.append(z)
            h = _act(z, self.cfg.activation)
        W, b = self._layers64[-1]
        return (h @ W.T + b)[:, 0], pre

    def forward_raw(self, p):
        p = np.asarray(p, dtype=np.float64).reshape(-1, 3)
        out = np.empty(len(p))
        for s in range(0, len(p), _CHUNK):
            out[s:s + _CHUNK] = self._forward_chunk(p[s:s + _CHUNK])[0]
        return out

    def forward(self, p):
        return np.maximum(self.forward_raw(p), 0.0)

    def _raw_and_grad(self, p):
        raw, pre = self._forward_chunk(p)
        g = np.broadcast_to(self._layers64[-1][0], (len(p), self._layers64[-1][0].shape[1]))
        for (W, _), z in zip(reversed(self._layers64[:-1]), reversed(pre)):
            g = (g * _act_grad(z, self.cfg.activation)) @ W
        return raw, encoding_backward(p, g, self.cfg.n_frequencies)

    def input_gradient(self, p):
        """Exact d(raw output)/dp; the zero clamp is not differentiated."""
        p = np.asarray(p, dtype=np.float64)
        single = p.ndim == 1
        p = p.reshape(-1, 3)
        g = np.empty((len(p), 3))
        for s in range(0, len(p), _CHUNK):
            g[s:s + _CHUNK] = self._raw_and_grad(p[s:s + _CHUNK])[1]
        return g[0] if single else g

    def min_abs_preactivation(self, p):
        """Smallest |pre-activation| over hidden units, per point."""
        p = np.asarray(p, dtype=np.float64).reshape(-1, 3)
        _, pre = self._forward_chunk(p)
        if not pre:
            return np.full(len(p), np.inf)
        return np.min(np.concatenate([np.abs(z) for z in pre], axis=1), axis=1)

    def _eval_grad(self, q):
        d = np.empty(len(q))
        g = np.empty((len(q), 3))
        for s in range(0, len(q), _CHUNK):
            raw, gg = self._raw_and_grad(q[s:s + _CHUNK])
            d[s:s + _CHUNK] = np.maximum(raw, 0.0)
            g[s:s + _CHUNK] = gg
        return d, g


def init_mlp(cfg: MlpConfig, seed=0, domain=None) -> MlpField:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in cfg.layer_shapes():
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-lim, lim, size=(fan_out, fan_in)).astype(np.float32)
        layers.append((W, np.zeros(fan_out, dtype=np.float32)))
    return MlpField(cfg, layers, domain)


def zero_mlp(cfg: MlpConfig, domain=None) -> MlpField:
    return MlpField(cfg, [(np.zeros((o, i), np.float32), np.zeros(o, np.float32))
                          for i, o in cfg.layer_shapes()], domain)


# ------------------------------------------------------------------ training

class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


def _batch_loss_grad(params, X, y, act):
    """Mean L1 loss and parameter gradients for one batch (float32)."""
    n_hidden = len(params) // 2 - 1
    hs, zs = [X], []
    h = X
    for i in range(n_hidden):
        z = h @ params[2 * i].T + params[2 * i + 1]
        zs.append(z)
        h = _act(z, act)
        hs.append(h)
    out = (h @ params[-2].T)[:, 0] + params[-1][0]
    resid = out - y
    loss = float(np.mean(np.abs(resid)))
    go = (np.sign(resid) / len(y)).astype(np.float32)
    grads = [None] * len(params)
    grads[-2] = (go @ hs[-1])[None, :]
    grads[-1] = np.array([go.sum()], dtype=np.float32)
    g = np.outer(go, params[-2][0])
    for i in reversed(range(n_hidden)):
        g *= _act_grad(zs[i], act)
        grads[2 * i] = g.T @ hs[i]
        grads[2 * i + 1] = g.sum(axis=0)
        if i > 0:
            g = g @ params[2 * i]
    return loss, grads


def _predict32(params, X, act, chunk=_CHUNK):
    n_hidden = len(params) // 2 - 1
    out = np.empty(len(X), dtype=np.float32)
    for s in range(0, len(X), chunk):
        h = X[s:s + chunk]
        for i in range(n_hidden):
            h = _act(h @ params[2 * i].T + params[2 * i + 1], act)
        out[s:s + chunk] = (h @ params[-2].T)[:, 0] + params[-1][0]
    return out


def train(mlp: MlpField, samples, cfg: TrainConfig, progress=None) -> TrainReport:
    """Fit `mlp` in place to the sample set by minimising mean |raw - d|.

    A seeded `holdout_fraction` of the samples is held out for early
    stopping; the weights with the best validation L1 are restored at the
    end.
    """
    pos = np.asarray(samples.positions, dtype=np.float64)
    y = np.asarray(samples.distances, dtype=np.float32)
    if len(y) < 100:
        raise ValueError("training needs at least 100 samples")
    if cfg.target_clamp is not None:
        y = np.minimum(y, np.float32(cfg.target_clamp))
    X = encode(pos, mlp.cfg.n_frequencies).astype(np.float32)
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(len(y))
    n_val = max(1, int(round(cfg.holdout_fraction * len(y))))
    val, tr = perm[:n_val], perm[n_val:]
    Xv, yv = X[val], y[val]
    act = mlp.cfg.activation
    params = []
    for W, b in mlp.layers:
        params += [W.copy(), b.copy()]
    opt = _Adam(params, cfg.learning_rate)
    best = np.inf
    best_params = [p.copy() for p in params]
    best_epoch = 0
    wait = 0
    train_curve, val_curve = [], []
    stopped = False
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = tr[rng.permutation(len(tr))]
        total = 0.0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grads = _batch_loss_grad(params, X[idx], y[idx], act)
            if not np.isfinite(loss):
                raise NumericalError(
                    f"training loss became {loss} at epoch {epoch}; "
                    f"lower the learning rate (currently {cfg.learning_rate:g})")
            opt.step(params, grads)
            total += loss * len(idx)
        train_l1 = total / len(order)
        val_l1 = float(np.mean(np.abs(_predict32(params, Xv, act) - yv)))
        if not np.isfinite(val_l1):
            raise NumericalError(f"validation loss became {val_l1} at epoch {epoch}; "
                                 f"lower the learning rate (currently {cfg.learning_rate:g})")
        train_curve.append(train_l1)
        val_curve.append(val_l1)
        if progress is not None:
            progress(epoch, train_l1, val_l1)
        if val_l1 < best:
            best, best_epoch, wait = val_l1, epoch, 0
            best_params = [p.copy() for p in params]
        else:
            wait += 1
            if wait >= cfg.early_stop_patience:
                stopped = True
                break
    mlp.set_layers([(best_params[2 * i], best_params[2 * i + 1]) for i in range(len(best_params) // 2)])
    log.info("trained %d epochs, best val L1 %.5f at epoch %d", epoch, best, best_epoch)
    return TrainReport(epoch, best_epoch, train_curve[-1] if train_curve else float("nan"),
                       float(best), stopped, train_curve, val_curve)


# ------------------------------------------------------------------ file I/O

def save_weights(mlp: MlpField, path):
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<II", mlp.cfg.n_frequencies, len(mlp.layers)))
        for W, b in mlp.layers:
            out_dim, in_dim = W.shape
            fh.write(struct.pack("<II", in_dim, out_dim))
            fh.write(W.astype("<f4").tobytes())
            fh.write(b.astype("<f4").tobytes())


def weights_file_size(cfg: MlpConfig):
    return 16 + sum(8 + 4 * (i * o + o) for i, o in cfg.layer_shapes())


def load_weights(path, activation="relu", domain=None) -> MlpField:
    """Read a weights file; the activation is not stored and defaults to relu."""
    data = Path(path).read_bytes()
    if len(data) < 16:
        raise TruncatedFileError("weights file shorter than its header", offset=len(data))
    if data[:8] != WEIGHTS_MAGIC:
        raise FormatError(f"bad weights magic {data[:8]!r}", offset=0)
    n_freq, n_layers = struct.unpack_from("<II", data, 8)
    pos = 16
    layers = []
    for _ in range(n_layers):
        if pos + 8 > len(data):
            raise TruncatedFileError("weights file truncated", offset=pos)
        in_dim, out_dim = struct.unpack_from("<II", data, pos)
        pos += 8
        need = 4 * (in_dim * out_dim + out_dim)
        if pos + need > len(data):
            raise TruncatedFileError("weights file truncated", offset=len(data))
        W = np.frombuffer(data, "<f4", in_dim * out_dim, pos).reshape(out_dim, in_dim)
        pos += 4 * in_dim * out_dim
        b = np.frombuffer(data, "<f4", out_dim, pos)
        pos += 4 * out_dim
        layers.append((W.copy(), b.copy()))
    if pos != len(data):
        raise FormatError("trailing bytes after the last layer", offset=pos)
    if not layers or layers[-1][0].shape[0] != 1:
        raise FormatError("network must end in a single output")
    width = layers[0][0].shape[0] if len(layers) > 1 else 1
    cfg = MlpConfig(n_frequencies=n_freq, hidden_layers=len(layers) - 1,
                    hidden_width=width, activation=activation)
    try:
        return MlpField(cfg, layers, domain)
    except ValueError as e:
        raise FormatError(f"inconsistent layer shapes: {e}") from None
