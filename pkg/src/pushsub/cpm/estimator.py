from __future__ import annotations

from collections import deque

import numpy as np

from ..world import ContactState, ContactType
from .lstm import CLE, CTE, LstmModel, predict_raw


class CpmEstimator:
    """Ring buffer of proximity norms feeding the location and type networks.

    Until ``seq_len`` ticks have been seen the buffer is left-padded with the
    first observed vector.
    """

    def __init__(self, cle: LstmModel, cte: LstmModel, half_width: float, front_x: float):
        if cle.kind != CLE or cte.kind != CTE:
            raise ValueError("expected a (CLE, CTE) model pair")
        if cle.seq_len != cte.seq_len:
            raise ValueError("CLE and CTE must use the same sequence length")
        self.cle, self.cte = cle, cte
        self.half_width, self.front_x = half_width, front_x
        self.buf: deque = deque(maxlen=cle.seq_len)
        self.last_l_hat = float("nan")
        self.last_logits = None

    def reset(self):
        self.buf.clear()

    def window(self) -> np.ndarray:
        items = list(self.buf)
        pad = [items[0]] * (self.buf.maxlen - len(items))
        return np.array(pad + items)

    def update(self, norms) -> ContactState:
        self.buf.append(np.asarray(norms, dtype=float).copy())
        return predict(self.cle, self.cte, self.window(), self.half_width, self.front_x, self)


def predict(cle: LstmModel, cte: LstmModel, window, half_width: float, front_x: float, sink=None) -> ContactState:
    """Contact estimate from one full window of raw norms."""
    w = np.asarray(window, dtype=float)[None]
    l_hat = float(np.clip(predict_raw(cle, w)[0, 0], -half_width, half_width))
    logits = predict_raw(cte, w)[0]
    ctype = ContactType(int(np.argmax(logits)))
    if sink is not None:
        sink.last_l_hat, sink.last_logits = l_hat, logits
    if ctype == ContactType.NO_CONTACT:
        return ContactState.none()
    return ContactState(ctype, l_hat, (front_x, l_hat))
