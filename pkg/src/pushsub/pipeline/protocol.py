"""Target grids, data collection, evaluation suites and the on-disk formats."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import multiprocessing as mp
from dataclasses import dataclass, field

import numpy as np

from ..config import WorkbenchConfig
from ..cpm.training import SequenceDataset, make_windows
from .metrics import accuracy, contact_accuracy, mean_abs_l, summarize, wilcoxon_signed_rank
from .trial import NO_CONTACT, PUSH, SensingMode, TrialConfig, TrialLog, run_trial, trial_seed


class LogParseError(ValueError):
    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


@dataclass(frozen=True)
class TargetGrid:
    points: tuple

    def __len__(self):
        return len(self.points)


def generate_target_grid(kind: str = "train", spec=None) -> TargetGrid:
    """``train``: 24 points on a 1 m lattice over [-2, 2]^2 without the origin.
    ``val``: (+-3, +-3) and (0, +-3).  ``custom``: ``spec`` is either a list of
    points or a mapping ``{half_extent, step}`` giving a square lattice without
    the origin.
    """
    if kind == "train":
        spec = {"half_extent": 2, "step": 1.0}
    elif kind == "val":
        return TargetGrid(((-3.0, -3.0), (-3.0, 3.0), (3.0, -3.0), (3.0, 3.0), (0.0, -3.0), (0.0, 3.0)))
    elif kind != "custom":
        raise ValueError(f"unknown grid kind {kind!r}")
    if isinstance(spec, dict):
        n, s = int(spec["half_extent"]), float(spec.get("step", 1.0))
        pts = tuple((i * s, j * s) for i in range(-n, n + 1) for j in range(-n, n + 1) if (i, j) != (0, 0))
        return TargetGrid(pts)
    pts = tuple((float(p[0]), float(p[1])) for p in spec)
    if not pts:
        raise ValueError("custom grid is empty")
    return TargetGrid(pts)


def load_grid_file(path) -> TargetGrid:
    """Custom targets from a CSV file with ``x,y`` columns (a header row is optional)."""
    pts = []
    with open(path) as f:
        for i, row in enumerate(csv.reader(f), 1):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                pts.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if i == 1:
                    continue
                raise ValueError(f"{path}:{i}: expected x,y") from None
    return generate_target_grid("custom", pts)


# --------------------------------------------------------------------------
# trial plans


def push_plan(wb: WorkbenchConfig, grid: TargetGrid, split: str, mode=SensingMode.SKIN,
              objects=None, frictions=None, first_id: int = 0) -> list[TrialConfig]:
    pr = wb.protocol
    objects = objects or pr.objects
    frictions = frictions or pr.friction_sets
    plan = []
    for fr in frictions:
        for ob in objects:
            for tg in grid.points:
                i = len(plan)
                plan.append(TrialConfig(ob, fr, tg, mode, pr.d_succ, pr.t_max, pr.contact_loss_max,
                                        trial_seed(wb.seed, split, i), first_id + i, PUSH))
    return plan


def no_contact_plan(wb: WorkbenchConfig, objects=None, frictions=None, first_id: int = 0) -> list[TrialConfig]:
    pr = wb.protocol
    objects = objects or pr.objects
    frictions = frictions or pr.friction_sets
    plan = []
    for i in range(pr.no_contact_trials):
        ob = objects[i % len(objects)]
        fr = frictions[(i // len(objects)) % len(frictions)]
        plan.append(TrialConfig(ob, fr, None, SensingMode.SKIN, pr.d_succ, pr.t_max, pr.contact_loss_max,
                                trial_seed(wb.seed, "nocontact", i), first_id + i, NO_CONTACT))
    return plan


def collection_plan(wb: WorkbenchConfig, objects=None, frictions=None) -> tuple[list, list]:
    train = push_plan(wb, generate_target_grid("train"), "train", objects=objects, frictions=frictions)
    train += no_contact_plan(wb, objects, frictions, first_id=len(train))
    val = push_plan(wb, generate_target_grid("val"), "val", objects=objects, frictions=frictions,
                    first_id=len(train))
    return train, val


def _run_one(args):
    cfg, wb, models = args
    return run_trial(cfg, wb, models)


def run_many(plan, wb: WorkbenchConfig, models=None, jobs: int = 1) -> list[TrialLog]:
    """Run trials, in parallel when ``jobs > 1``; results come back in plan order."""
    items = [(c, wb, models) for c in plan]
    if jobs <= 1 or len(items) <= 1:
        return [_run_one(a) for a in items]
    with mp.get_context("fork").Pool(min(jobs, len(items))) as pool:
        return pool.map(_run_one, items, chunksize=1)


def collect_dataset(wb: WorkbenchConfig, jobs: int = 1, objects=None, frictions=None):
    """Skin-driven collection with LiDAR recorded alongside; returns (train logs, val logs)."""
    train_plan, val_plan = collection_plan(wb, objects, frictions)
    logs = run_many(train_plan + val_plan, wb, jobs=jobs)
    return logs[:len(train_plan)], logs[len(train_plan):]


# --------------------------------------------------------------------------
# line-delimited files


def _dump(rec) -> str:
    return json.dumps(rec, separators=(",", ":"), allow_nan=False)


def write_log(path, log: TrialLog) -> None:
    with open(path, "w") as f:
        f.write(_dump(log.header) + "\n")
        for r in log.ticks:
            f.write(_dump(r) + "\n")
        f.write(_dump(log.summary) + "\n")


def _read_records(path):
    with open(path) as f:
        for i, line in enumerate(f, 1):
            if not line.endswith("\n"):
                raise LogParseError(path, i, "truncated record (no newline)")
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise LogParseError(path, i, f"invalid JSON ({e.msg})") from None
            if not isinstance(rec, dict) or "type" not in rec and "trial_id" not in rec:
                raise LogParseError(path, i, "record is not an object with a type")
            yield i, rec


_TICK_KEYS = ("tick", "t", "robot", "object", "gt", "est", "norms", "dist", "mode", "cmd")


def read_log(path) -> TrialLog:
    header, ticks, summary, last = None, [], None, 0
    for i, rec in _read_records(path):
        last = i
        kind = rec.get("type")
        if i == 1:
            if kind != "header":
                raise LogParseError(path, i, "first record must be the header")
            header = rec
        elif summary is not None:
            raise LogParseError(path, i, "record after the summary")
        elif kind == "tick":
            missing = [k for k in _TICK_KEYS if k not in rec]
            if missing:
                raise LogParseError(path, i, f"tick record lacks {', '.join(missing)}")
            if rec["tick"] != len(ticks):
                raise LogParseError(path, i, f"expected tick {len(ticks)}, got {rec['tick']}")
            ticks.append(rec)
        elif kind == "summary":
            summary = rec
        else:
            raise LogParseError(path, i, f"unexpected record type {kind!r}")
    if header is None:
        raise LogParseError(path, 1, "empty log")
    if summary is None:
        raise LogParseError(path, last + 1, "missing summary record (log truncated)")
    return TrialLog(header, ticks, summary)


def replay(path) -> tuple[dict, dict, list]:
    """Recompute the summary of a stored log; returns (recomputed, stored, mismatching keys)."""
    log = read_log(path)
    try:
        again = summarize(log.header, log.ticks)
    except (KeyError, TypeError, IndexError, ValueError) as e:
        raise LogParseError(path, 0, f"inconsistent records: {e}") from None
    bad = [k for k in sorted(set(again) | set(log.summary)) if again.get(k) != log.summary.get(k)]
    return again, log.summary, bad


def dataset_records(log: TrialLog):
    tid = log.header["trial"]["trial_id"]
    for r in log.ticks:
        yield {"trial_id": tid, "tick": r["tick"], "t": r["t"], "norms": r["norms"], "l": r["gt"]["l"],
               "contact_type": r["gt"]["type"], "robot": r["robot"], "object": r["object"], "mode": r["mode"]}


def write_dataset(path, logs, config_hash: str, split: str) -> str:
    """Write one split; returns the SHA-256 of the file."""
    h = hashlib.sha256()
    with open(path, "w") as f:
        head = {"type": "header", "config_hash": config_hash, "split": split, "n_trials": len(logs),
                "trial_ids": [lg.header["trial"]["trial_id"] for lg in logs]}
        for rec in [head] + [r for lg in logs for r in dataset_records(lg)]:
            line = _dump(rec) + "\n"
            f.write(line)
            h.update(line.encode())
    return h.hexdigest()


def read_dataset(path) -> tuple[dict, list]:
    """Returns (header, trials) with trials as (trial_id, norms, l, ctype) ready for windowing."""
    header, by_id = None, {}
    for i, rec in _read_records(path):
        if i == 1:
            if rec.get("type") != "header":
                raise LogParseError(path, i, "first record must be the dataset header")
            header = rec
            continue
        try:
            tid = int(rec["trial_id"])
            norms = [float(v) for v in rec["norms"]]
            ct = int(rec["contact_type"])
            l = math.nan if rec["l"] is None else float(rec["l"])
        except (KeyError, TypeError, ValueError) as e:
            raise LogParseError(path, i, f"bad tick record ({e})") from None
        by_id.setdefault(tid, []).append((norms, l, ct))
    if header is None:
        raise LogParseError(path, 1, "empty dataset")
    trials = [(tid, np.array([r[0] for r in rows]), np.array([r[1] for r in rows]), np.array([r[2] for r in rows]))
              for tid, rows in by_id.items()]
    return header, trials


def windows_from_file(path, seq_len: int) -> SequenceDataset:
    return make_windows(read_dataset(path)[1], seq_len)


# --------------------------------------------------------------------------
# evaluation


@dataclass
class SuiteResult:
    mode: str
    logs: list
    rows: list = field(default_factory=list)


def evaluate_suite(wb: WorkbenchConfig, models, grid: TargetGrid, mode, objects=None, frictions=None,
                   jobs: int = 1) -> SuiteResult:
    """Every (friction, object, target) combination in ``mode``; seeds depend only on the combination."""
    mode = SensingMode(mode)
    if mode != SensingMode.SKIN and models is None:
        raise ValueError(f"mode {mode.value} needs trained models")
    plan = push_plan(wb, grid, "eval", mode, objects, frictions)
    logs = run_many(plan, wb, models if mode != SensingMode.SKIN else None, jobs)
    rows = []
    for cfg, lg in zip(plan, logs):
        s = lg.summary
        rows.append({"object": cfg.object, "friction": cfg.friction_set, "target_x": cfg.target[0],
                     "target_y": cfg.target[1], "success": int(s["success"]), "min_distance": s["min_distance"],
                     "t_min": s["t_min"], "delta_theta_norm": s["delta_theta_norm"], "reason": s["reason"]})
    return SuiteResult(mode.value, logs, rows)


def success_table(results, objects, frictions) -> tuple[list, list]:
    """Success counts: one row per mode, one column per (object, friction)."""
    header = ["mode"] + [f"{o}/{f}" for o in objects for f in frictions]
    table = []
    for res in results:
        row = [res.mode]
        for o in objects:
            for f in frictions:
                sel = [r for r in res.rows if r["object"] == o and r["friction"] == f]
                row.append(f"{sum(r['success'] for r in sel)}/{len(sel)}")
        table.append(row)
    return header, table


def success_rate(res: SuiteResult) -> float:
    return sum(r["success"] for r in res.rows) / len(res.rows) if res.rows else math.nan


def metrics_rows(res: SuiteResult) -> list[dict]:
    """Aggregate metrics per (object, friction) and overall."""
    groups = {}
    for row, lg in zip(res.rows, res.logs):
        groups.setdefault((row["object"], row["friction"]), []).append((row, lg))
    groups[("all", "all")] = list(zip(res.rows, res.logs))
    out = []
    for (o, f), items in groups.items():
        logs = [lg for _, lg in items]
        conf = np.zeros((3, 3), int)
        sq, n_sq = 0.0, 0
        for lg in logs:
            s = lg.summary
            if s["confusion"] is not None:
                conf += np.asarray(s["confusion"])
            if s["rmse_l"] is not None:
                sq += s["rmse_l"] ** 2 * s["rmse_ticks"]
                n_sq += s["rmse_ticks"]
        ml, ml_se = mean_abs_l(logs, "truth")
        has_est = conf.sum() > 0
        mle, mle_se = mean_abs_l(logs, "estimate") if has_est else (math.nan, math.nan)
        out.append({
            "mode": res.mode, "object": o, "friction": f, "trials": len(items),
            "success_rate": sum(r["success"] for r, _ in items) / len(items),
            "rmse_l": math.sqrt(sq / n_sq) if n_sq else math.nan,
            "type_accuracy": accuracy(conf) if has_est else math.nan,
            "contact_accuracy": contact_accuracy(conf) if has_est else math.nan,
            "delta_theta_norm": float(np.mean([lg.summary["delta_theta_norm"] for lg in logs])),
            "mean_abs_l": ml, "mean_abs_l_se": ml_se, "mean_abs_l_hat": mle, "mean_abs_l_hat_se": mle_se,
        })
    return out


def wilcoxon_rows(res: SuiteResult, baseline: SuiteResult | None = None) -> list[dict]:
    """Paired comparisons: |l| vs |l_hat| per trial, and ΔΘ_norm against a skin-driven baseline."""
    rows = []

    def add(name, a, b):
        r = wilcoxon_signed_rank(a, b)
        rows.append({"comparison": name, "n_pairs": len(a), "n_nonzero": r.n, "W": r.statistic,
                     "W_plus": r.w_plus, "p_value": r.p_value, "exact": int(r.exact), "valid": int(r.valid),
                     "mean_a": float(np.mean(a)) if len(a) else math.nan,
                     "mean_b": float(np.mean(b)) if len(b) else math.nan, "note": r.reason})

    pairs = [(lg.summary["mean_abs_l_true"], lg.summary["mean_abs_l_est"]) for lg in res.logs
             if lg.summary["mean_abs_l_true"] is not None and lg.summary.get("mean_abs_l_est") is not None]
    if pairs:
        a, b = map(list, zip(*pairs))
        add("mean_abs_l_true_vs_est", a, b)
    if baseline is not None:
        if len(baseline.logs) != len(res.logs):
            raise ValueError("baseline suite must cover the same trials")
        a = [lg.summary["delta_theta_norm"] for lg in res.logs]
        b = [lg.summary["delta_theta_norm"] for lg in baseline.logs]
        add(f"delta_theta_norm_{res.mode}_vs_{baseline.mode}", a, b)
    return rows


def write_csv(path, rows, header=None) -> None:
    with open(path, "w", newline="") as f:
        if header is not None:
            w = csv.writer(f)
            w.writerow(header)
            w.writerows(rows)
            return
        if not rows:
            f.write("")
            return
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
