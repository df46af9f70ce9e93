from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEGENERATE_WIDTH = 1e-9


@dataclass
class MinMaxScaler:
    """Per-feature affine map of [min, max] onto [0, 1]."""

    min: np.ndarray
    max: np.ndarray
    degenerate: np.ndarray

    @classmethod
    def fit(cls, data) -> "MinMaxScaler":
        x = np.asarray(data, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        x = x.reshape(-1, x.shape[-1])
        if len(x) == 0:
            raise ValueError("cannot fit a scaler on empty data")
        lo, hi = x.min(axis=0), x.max(axis=0)
        deg = ~(hi > lo)
        hi = np.where(deg, lo + DEGENERATE_WIDTH, hi)
        return cls(lo, hi, deg)

    def apply(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.min) / (self.max - self.min)

    def invert(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) * (self.max - self.min) + self.min


# functional aliases
def scaler_fit(data) -> MinMaxScaler:
    return MinMaxScaler.fit(data)


def scaler_apply(s: MinMaxScaler, x) -> np.ndarray:
    return s.apply(x)


def scaler_invert(s: MinMaxScaler, x) -> np.ndarray:
    return s.invert(x)
