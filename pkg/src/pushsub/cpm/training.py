"""Windowed sequence datasets and the training loop for both CPM networks."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .lstm import CLE, CTE, HEAD_SIZE, LstmModel, forward, init_params, loss_and_grads, loss_fn
from .optim import Adam, AdamConfig
from .scaler import MinMaxScaler

log = logging.getLogger(__name__)

SEQ_LEN = 20


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    early_stop: bool = False
    patience: int = 30
    hidden: int = 32
    n_layers: int = 2
    window_stride: int = 1  # keep every k-th window of each trial (1 = all)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.window_stride < 1:
            raise ValueError("epochs, batch_size and window_stride must be >= 1")


@dataclass
class SequenceDataset:
    X: np.ndarray  # (N, T, D) raw norms
    l: np.ndarray  # (N,) contact offset at the final tick (nan without contact)
    ctype: np.ndarray  # (N,) contact class at the final tick
    trial_ids: np.ndarray  # (N,)
    ticks: np.ndarray  # (N,) index of the final tick inside its trial

    def __len__(self):
        return len(self.X)

    def subset(self, mask) -> "SequenceDataset":
        return SequenceDataset(self.X[mask], self.l[mask], self.ctype[mask], self.trial_ids[mask], self.ticks[mask])

    def for_kind(self, kind: str) -> "SequenceDataset":
        """CLE trains only on windows that end in contact."""
        return self.subset(self.ctype > 0) if kind == CLE else self

    def thinned(self, stride: int) -> "SequenceDataset":
        """Every ``stride``-th window of each trial, counted from its first window."""
        if stride == 1:
            return self
        return self.subset((self.ticks - (self.X.shape[1] - 1)) % stride == 0)

    def targets(self, kind: str) -> np.ndarray:
        return self.l if kind == CLE else self.ctype


def make_windows(trials, seq_len: int = SEQ_LEN) -> SequenceDataset:
    """Slice each trial into every contiguous window of ``seq_len`` ticks.

    ``trials`` is an iterable of ``(trial_id, norms (n, D), l (n,), ctype (n,))``.
    A trial with n ticks yields max(0, n - seq_len + 1) windows labelled with
    the state at their final tick.
    """
    Xs, ls, cs, ids, ticks = [], [], [], [], []
    D = None
    for tid, norms, l, ct in trials:
        norms = np.asarray(norms, dtype=float)
        D = norms.shape[1]
        n = len(norms)
        if n < seq_len:
            continue
        idx = np.arange(seq_len - 1, n)
        win = np.lib.stride_tricks.sliding_window_view(norms, (seq_len, D))[:, 0]
        Xs.append(win)
        ls.append(np.asarray(l, dtype=float)[idx])
        cs.append(np.asarray(ct, dtype=int)[idx])
        ids.append(np.full(len(idx), tid))
        ticks.append(idx)
    if not Xs:
        D = D or 0
        return SequenceDataset(np.zeros((0, seq_len, D)), np.zeros(0), np.zeros(0, int), np.zeros(0, int), np.zeros(0, int))
    return SequenceDataset(np.concatenate(Xs), np.concatenate(ls), np.concatenate(cs),
                           np.concatenate(ids), np.concatenate(ticks))


def _evaluate(params, kind, X, y, chunk=4096) -> float:
    fn = loss_fn(kind)
    total = 0.0
    for k in range(0, len(X), chunk):
        out, _ = forward(params, X[k:k + chunk], keep_cache=False)
        total += fn(out, y[k:k + chunk])[0] * len(out)
    return total / len(X)


def train(train_set: SequenceDataset, val_set: SequenceDataset, kind: str, cfg: TrainConfig = TrainConfig()):
    """Fit one network; returns (model at the best validation epoch, curve).

    ``curve`` is a list of (epoch, train_loss, val_loss) rows.
    """
    if kind not in (CLE, CTE):
        raise ValueError(f"unknown model kind {kind!r}")
    tr = train_set.for_kind(kind).thinned(cfg.window_stride)
    va = val_set.for_kind(kind).thinned(cfg.window_stride)
    if len(tr) == 0 or len(va) == 0:
        raise ValueError("training and validation splits must both be non-empty")
    overlap = np.intersect1d(np.unique(tr.trial_ids), np.unique(va.trial_ids))
    if len(overlap):
        raise ValueError(f"train/val splits share trial ids {overlap[:5].tolist()}")

    in_scaler = MinMaxScaler.fit(tr.X)
    Xtr, Xva = in_scaler.apply(tr.X), in_scaler.apply(va.X)
    out_scaler = None
    ytr, yva = tr.targets(kind), va.targets(kind)
    if kind == CLE:
        out_scaler = MinMaxScaler.fit(ytr)
        ytr = out_scaler.apply(ytr[:, None])[:, 0]
        yva = out_scaler.apply(yva[:, None])[:, 0]

    rng = np.random.default_rng(cfg.seed)
    params = init_params(tr.X.shape[2], cfg.hidden, HEAD_SIZE[kind], rng, cfg.n_layers)
    opt = Adam(AdamConfig(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps))
    best = (np.inf, params, 0)
    curve = []
    n = len(Xtr)
    since_best = 0
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        total = 0.0
        for k in range(0, n, cfg.batch_size):
            idx = perm[k:k + cfg.batch_size]
            loss, grads = loss_and_grads(params, kind, Xtr[idx], ytr[idx])
            params = opt.step(params, grads)
            total += loss * len(idx)
        train_loss = total / n
        val_loss = _evaluate(params, kind, Xva, yva)
        curve.append((epoch, train_loss, val_loss))
        log.debug("%s epoch %d train %.6f val %.6f", kind, epoch, train_loss, val_loss)
        if val_loss < best[0]:
            best = (val_loss, params, epoch)
            since_best = 0
        else:
            since_best += 1
            if cfg.early_stop and since_best >= cfg.patience:
                break
    meta = {"seed": cfg.seed, "epochs": len(curve), "best_epoch": best[2], "best_val_loss": best[0],
            "learning_rate": cfg.learning_rate, "batch_size": cfg.batch_size}
    model = LstmModel(kind, {k: v.copy() for k, v in best[1].items()}, in_scaler, out_scaler,
                      seq_len=tr.X.shape[1], metadata=meta)
    return model, curve
