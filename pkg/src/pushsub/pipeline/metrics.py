"""Trial summaries and the evaluation statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import angle_diff


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # min(W+, W-)
    w_plus: float
    p_value: float
    n: int
    exact: bool
    valid: bool = True
    reason: str = ""


# --------------------------------------------------------------------------
# per-trial quantities


def delta_theta_norm(thetas, times) -> tuple[float, bool]:
    """Total absolute rotation divided by elapsed time, over samples up to the closest approach.

    Returns ``(value, defined)``; a zero time span gives ``(0.0, False)``.
    """
    th = np.asarray(thetas, dtype=float)
    tt = np.asarray(times, dtype=float)
    if len(th) != len(tt):
        raise ValueError("thetas and times must have equal length")
    if len(th) < 2 or tt[-1] - tt[0] <= 0.0:
        return 0.0, False
    swept = 0.0
    for a, b in zip(th[:-1], th[1:]):
        swept += abs(angle_diff(float(b), float(a)))
    return swept / float(tt[-1] - tt[0]), True


def _closest(ticks):
    best, idx = None, None
    for i, r in enumerate(ticks):
        d = r.get("dist")
        if d is not None and (best is None or d < best):
            best, idx = d, i
    return best, idx


def summarize(header: dict, ticks: list) -> dict:
    """Summary of one trial log; a pure function of the logged records."""
    trial = header["trial"]
    period = header["control_period"]
    min_d, i_min = _closest(ticks)
    success = min_d is not None and min_d <= trial["d_succ"]

    loss = 0.0
    for r in ticks:
        if r["gt"]["type"] == 0:
            loss += period
    if success:
        reason = "success"
    elif trial["kind"] == "push" and loss > trial["contact_loss_max"]:
        reason = "contact_loss"
    else:
        reason = "timeout"

    t_min, dtn, dtn_ok = None, 0.0, False
    if i_min is not None:
        t_min = ticks[i_min]["t"]
        seg = ticks[: i_min + 1]
        dtn, dtn_ok = delta_theta_norm([r["robot"][2] for r in seg], [r["t"] for r in seg])

    conf = [[0] * 3 for _ in range(3)]
    sq, n_sq = 0.0, 0
    has_est = False
    for r in ticks:
        e = r.get("est")
        if e is None:
            continue
        has_est = True
        g = r["gt"]
        conf[g["type"]][e["type"]] += 1
        if g["type"] and e["type"]:
            sq += (e["l"] - g["l"]) ** 2
            n_sq += 1
    rmse = math.sqrt(sq / n_sq) if n_sq else None

    return {
        "type": "summary",
        "success": bool(success),
        "reason": reason,
        "min_distance": min_d,
        "t_min": t_min,
        "delta_theta_norm": dtn,
        "delta_theta_norm_defined": dtn_ok,
        "rmse_l": rmse,
        "rmse_ticks": n_sq,
        "confusion": conf if has_est else None,
        "mean_abs_l_true": _mean_abs(ticks, "gt"),
        "mean_abs_l_est": _mean_abs(ticks, "est") if has_est else None,
        "contact_loss_time": loss,
        "n_ticks": len(ticks),
        "n_commands": sum(r["cmd"] is not None for r in ticks),
        "duration": len(ticks) * period,
    }


def _mean_abs(ticks, key):
    vals = [abs(r[key]["l"]) for r in ticks if r.get(key) is not None and r[key]["type"]]
    return float(np.mean(vals)) if vals else None


def mean_abs_l(logs, source: str = "truth") -> tuple[float, float]:
    """Mean |l| (``source="truth"``) or |l_hat| (``"estimate"``) with its standard error across trials.

    Each trial contributes the mean over its contact ticks; trials without
    contact ticks are skipped.
    """
    key = {"truth": "gt", "estimate": "est"}[source]
    per_trial = []
    for log in logs:
        ticks = log.ticks if hasattr(log, "ticks") else log
        m = _mean_abs(ticks, key)
        if m is not None:
            per_trial.append(m)
    if not per_trial:
        return math.nan, math.nan
    a = np.asarray(per_trial)
    se = float(a.std(ddof=1) / math.sqrt(len(a))) if len(a) > 1 else math.nan
    return float(a.mean()), se


def accuracy(confusion) -> float:
    c = np.asarray(confusion, dtype=float)
    return float(np.trace(c) / c.sum()) if c.sum() else math.nan


def contact_accuracy(confusion) -> float:
    """Contact vs no-contact accuracy, merging point and line."""
    c = np.asarray(confusion, dtype=float)
    if not c.sum():
        return math.nan
    return float((c[0, 0] + c[1:, 1:].sum()) / c.sum())


# --------------------------------------------------------------------------
# Wilcoxon signed-rank


def _midranks(a: np.ndarray) -> np.ndarray:
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(len(a))
    s = a[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[j + 1] == s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_null(ranks2: np.ndarray) -> np.ndarray:
    """Counts of each value of 2*W+ over all sign assignments (ranks given doubled, integral)."""
    total = int(ranks2.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in ranks2.astype(np.int64):
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:len(counts) - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(x, y=None, exact_max_n: int = 20, min_n: int = 5,
                         alternative: str = "two-sided") -> WilcoxonResult:
    """Signed-rank test on paired samples (or on differences when ``y`` is None).

    Zero differences are dropped.  For ``n <= exact_max_n`` the p-value comes
    from the exact null distribution; above that a normal approximation with
    tie correction and continuity correction is used.  Fewer than ``min_n``
    non-zero differences give an invalid result with ``p_value = nan``.
    ``alternative`` is "two-sided", "greater" (x > y) or "less".
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    d = np.asarray(x, dtype=float) if y is None else np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    if d.ndim != 1:
        raise ValueError("expected 1-D samples")
    if not np.all(np.isfinite(d)):
        raise ValueError("differences must be finite")
    d = d[d != 0.0]
    n = len(d)
    if n < min_n:
        why = "all differences are zero" if n == 0 else f"only {n} non-zero differences"
        return WilcoxonResult(math.nan, math.nan, math.nan, n, False, False, why)
    r = _midranks(np.abs(d))
    w_plus = float(r[d > 0].sum())
    total = n * (n + 1) / 2.0
    stat = min(w_plus, total - w_plus)
    if n <= exact_max_n:
        counts = _exact_null(np.round(2 * r))
        k = int(round(2 * w_plus))
        lower = counts[: k + 1].sum() / counts.sum()  # P(W+ <= w_plus)
        upper = counts[k:].sum() / counts.sum()  # P(W+ >= w_plus)
        p = {"two-sided": 2.0 * min(lower, upper), "greater": upper, "less": lower}[alternative]
        return WilcoxonResult(stat, w_plus, min(1.0, float(p)), n, True)
    _, t = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float((t ** 3 - t).sum()) / 48.0
    sd = math.sqrt(var)
    dev = w_plus - total / 2.0
    if alternative == "two-sided":
        p = math.erfc(max(abs(dev) - 0.5, 0.0) / sd / math.sqrt(2.0))
    elif alternative == "greater":
        p = 0.5 * math.erfc((dev - 0.5) / sd / math.sqrt(2.0))
    else:
        p = 0.5 * math.erfc((-dev - 0.5) / sd / math.sqrt(2.0))
    return WilcoxonResult(stat, w_plus, min(1.0, p), n, False)
