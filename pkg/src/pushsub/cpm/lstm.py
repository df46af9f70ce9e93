"""Stacked LSTM with a linear head, forward pass and backpropagation through time.

Parameters live in a flat ``dict[str, ndarray]`` so the optimiser and the
gradient checks can treat them uniformly.  Gate order inside the stacked
weight matrices is (input, forget, cell, output).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scaler import MinMaxScaler

CLE = "cle"
CTE = "cte"
HEAD_SIZE = {CLE: 1, CTE: 3}


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LstmModel:
    kind: str
    params: dict
    input_scaler: MinMaxScaler | None = None
    output_scaler: MinMaxScaler | None = None
    seq_len: int = 20
    metadata: dict = field(default_factory=dict)

    @property
    def n_layers(self) -> int:
        return sum(1 for k in self.params if k.endswith(".W") and k.startswith("L"))

    @property
    def hidden(self) -> int:
        return self.params["L0.U"].shape[1]

    @property
    def input_dim(self) -> int:
        return self.params["L0.W"].shape[1]

    @property
    def head_size(self) -> int:
        return self.params["head.W"].shape[0]


def init_params(D: int, H: int, K: int, rng, n_layers: int = 2) -> dict:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias +1."""
    bound = 1.0 / np.sqrt(H)
    p = {}
    for li in range(n_layers):
        d_in = D if li == 0 else H
        p[f"L{li}.W"] = rng.uniform(-bound, bound, size=(4 * H, d_in))
        p[f"L{li}.U"] = rng.uniform(-bound, bound, size=(4 * H, H))
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0
        p[f"L{li}.b"] = b
    p["head.W"] = rng.uniform(-bound, bound, size=(K, H))
    p["head.b"] = np.zeros(K)
    return p


def init_model(kind: str, rng, D: int = 12, H: int = 32, n_layers: int = 2, seq_len: int = 20) -> LstmModel:
    return LstmModel(kind, init_params(D, H, HEAD_SIZE[kind], rng, n_layers), seq_len=seq_len)


def _layer_count(params: dict) -> int:
    return sum(1 for k in params if k.startswith("L") and k.endswith(".W"))


def forward(params: dict, X: np.ndarray, keep_cache: bool = True):
    """X: (B, T, D) already scaled.  Returns (head output (B, K), cache).

    Internally the sequence is stored time-major so every per-step slice is
    contiguous.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 3:
        raise ValueError(f"expected (B, T, D) input, got shape {X.shape}")
    B, T, D = X.shape
    if D != params["L0.W"].shape[1]:
        raise ValueError(f"input has {D} features, model expects {params['L0.W'].shape[1]}")
    inp = np.ascontiguousarray(np.swapaxes(X, 0, 1))  # (T, B, D)
    caches = []
    for li in range(_layer_count(params)):
        W, U, b = params[f"L{li}.W"], params[f"L{li}.U"], params[f"L{li}.b"]
        H = U.shape[1]
        xw = inp @ W.T + b  # (T, B, 4H)
        UT = np.ascontiguousarray(U.T)
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs = np.empty((T, B, H))
        if keep_cache:
            gates = np.empty((T, B, 4 * H))
            cs = np.empty((T, B, H))
        for t in range(T):
            z = xw[t] + h @ UT
            a = _sigmoid(z)
            a[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
            i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
            c = f * c + i * g
            h = o * np.tanh(c)
            hs[t] = h
            if keep_cache:
                gates[t] = a
                cs[t] = c
        if keep_cache:
            caches.append((inp, gates, cs, hs))
        inp = hs
    h_last = inp[-1]
    out = h_last @ params["head.W"].T + params["head.b"]
    return out, (caches, h_last)


def backward(params: dict, cache, dout: np.ndarray) -> dict:
    """Gradients of a loss with d(loss)/d(out) = ``dout`` w.r.t. every parameter."""
    caches, h_last = cache
    grads = {"head.W": dout.T @ h_last, "head.b": dout.sum(axis=0)}
    dh_top = dout @ params["head.W"]  # (B, H)
    dseq = None
    for li in reversed(range(len(caches))):
        inp, gates, cs, hs = caches[li]
        W, U = params[f"L{li}.W"], params[f"L{li}.U"]
        T, B, H = hs.shape
        if dseq is None:
            dseq = np.zeros((T, B, H))
            dseq[-1] = dh_top
        dz_all = np.empty((T, B, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        c0 = np.zeros((B, H))
        for t in reversed(range(T)):
            a = gates[t]
            i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
            c_prev = cs[t - 1] if t > 0 else c0
            dh = dseq[t] + dh_next
            tc = np.tanh(cs[t])
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = dz_all[t]
            dz[:, :H] = dc * g * i * (1.0 - i)
            dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
            dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz @ U
        h_prev = np.concatenate([np.zeros((1, B, H)), hs[:-1]], axis=0)
        dz2 = dz_all.reshape(T * B, 4 * H)
        grads[f"L{li}.W"] = dz2.T @ inp.reshape(T * B, -1)
        grads[f"L{li}.U"] = dz2.T @ h_prev.reshape(T * B, H)
        grads[f"L{li}.b"] = dz2.sum(axis=0)
        dseq = (dz2 @ W).reshape(T, B, -1)  # gradient w.r.t. this layer's input sequence
    return grads


def mse_loss(out: np.ndarray, y: np.ndarray):
    """Mean squared error on a (B, 1) prediction; returns (loss, dloss/dout)."""
    y = np.asarray(y, dtype=float).reshape(-1, 1)
    diff = out - y
    B = len(diff)
    return float(np.mean(diff ** 2)), 2.0 * diff / B


def cross_entropy_loss(logits: np.ndarray, y: np.ndarray):
    """Mean softmax cross-entropy; returns (loss, dloss/dlogits)."""
    y = np.asarray(y, dtype=int).reshape(-1)
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    B = len(y)
    loss = float(np.mean(lse - z[np.arange(B), y]))
    p = np.exp(z - lse[:, None])
    p[np.arange(B), y] -= 1.0
    return loss, p / B


def loss_fn(kind: str):
    return mse_loss if kind == CLE else cross_entropy_loss


def loss_and_grads(params: dict, kind: str, X: np.ndarray, y: np.ndarray):
    out, cache = forward(params, X)
    loss, dout = loss_fn(kind)(out, y)
    return loss, backward(params, cache, dout)


def predict_raw(model: LstmModel, windows: np.ndarray, batch: int = 4096) -> np.ndarray:
    """Head output for raw (unscaled) windows (B, T, D); CLE output is inverted to metres."""
    W = np.asarray(windows, dtype=float)
    if W.ndim == 2:
        W = W[None]
    X = model.input_scaler.apply(W) if model.input_scaler is not None else W
    outs = [forward(model.params, X[k:k + batch], keep_cache=False)[0] for k in range(0, len(X), batch)]
    out = np.concatenate(outs) if outs else np.zeros((0, model.head_size))
    if model.kind == CLE and model.output_scaler is not None:
        out = model.output_scaler.invert(out)
    return out


def lstm_forward(model: LstmModel, window) -> np.ndarray | float:
    """Single-window inference: contact offset in metres (CLE) or 3 logits (CTE)."""
    w = np.asarray(window, dtype=float)
    if w.shape != (model.seq_len, model.input_dim):
        raise ValueError(f"window must be {(model.seq_len, model.input_dim)}, got {w.shape}")
    out = predict_raw(model, w[None])[0]
    return float(out[0]) if model.kind == CLE else out
