"""pushsub command line: collect, train, eval, replay.

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, WorkbenchConfig, load_config
from .cpm import CLE, CTE, ModelFormatError, load_model, save_model, train
from .cpm.training import TrainConfig
from .pipeline import protocol as P
from .pipeline.trial import GroundTruthEstimator, SensingMode, TypeConfusion, make_estimator

log = logging.getLogger("pushsub")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class ValidationError(Exception):
    pass


def _csv_list(s):
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="YAML workbench config (defaults are used for missing keys)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. rps.K_v=0.4 (repeatable)")
    p.add_argument("--seed", type=int, help="global seed (overrides the config)")
    p.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="pushsub", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("collect", parents=[common], help="skin-driven data collection with LiDAR recorded")
    c.add_argument("--objects", type=_csv_list, help="comma separated subset of protocol objects")
    c.add_argument("--frictions", type=_csv_list, help="comma separated subset of friction sets")

    t = sub.add_parser("train", parents=[common], help="train the CLE or CTE network")
    t.add_argument("--dataset", required=True, help="directory written by collect")
    t.add_argument("--kind", required=True, choices=[CLE, CTE])
    t.add_argument("--epochs", type=int, help="override train.epochs")

    e = sub.add_parser("eval", parents=[common], help="run an evaluation suite")
    e.add_argument("--models", help="directory holding cle.cpm and cte.cpm")
    e.add_argument("--grid", default="train", choices=["train", "val", "custom"])
    e.add_argument("--grid-file", help="CSV of x,y targets for --grid custom")
    e.add_argument("--mode", default="skin", choices=[m.value for m in SensingMode])
    e.add_argument("--objects", type=_csv_list)
    e.add_argument("--frictions", type=_csv_list)
    e.add_argument("--baseline", action="store_true",
                   help="also run the skin-driven suite on the same trials for paired statistics")
    e.add_argument("--ground-truth-estimator", action="store_true",
                   help="feed the skin reading through the estimator slot instead of the CPM")
    e.add_argument("--type-confusion", type=float, default=0.0, metavar="RATE",
                   help="swap point/line labels of the estimate with this probability")

    r = sub.add_parser("replay", parents=[common], help="recompute a trial log's summary")
    r.add_argument("--log", required=True)
    return ap


def _config(args) -> WorkbenchConfig:
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"output_dir={json.dumps(args.out)}")
    return load_config(args.config, overrides)


def _out_dir(path, force: bool, must_be_empty: bool = True) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise ValidationError(f"{out} exists and is not a directory")
    if must_be_empty and out.exists() and any(out.iterdir()) and not force:
        raise ValidationError(f"output directory {out} is not empty (use --force)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check_subset(names, allowed, what):
    if names is None:
        return None
    bad = [n for n in names if n not in allowed]
    if bad:
        raise ValidationError(f"unknown {what}: {', '.join(bad)}")
    return names


# --------------------------------------------------------------------------


def cmd_collect(args, wb: WorkbenchConfig) -> int:
    objects = _check_subset(args.objects, wb.objects, "objects") or wb.protocol.objects
    frictions = _check_subset(args.frictions, wb.friction_sets, "friction sets") or wb.protocol.friction_sets
    out = _out_dir(wb.output_dir, args.force)
    train_plan, val_plan = P.collection_plan(wb, objects, frictions)
    logs = P.run_many(train_plan + val_plan, wb, jobs=args.jobs)
    train_logs, val_logs = logs[:len(train_plan)], logs[len(train_plan):]
    (out / "logs").mkdir(exist_ok=True)
    for lg in logs:
        P.write_log(out / "logs" / f"trial_{lg.header['trial']['trial_id']:04d}.jsonl", lg)
    h = wb.hash()
    n_push = len(frictions) * len(objects)
    manifest = {
        "config_hash": h,
        "seed": wb.seed,
        "objects": list(objects),
        "friction_sets": list(frictions),
        "formula": {"train": f"{len(frictions)} x 24 x {len(objects)} + {wb.protocol.no_contact_trials}",
                    "val": f"{len(frictions)} x 6 x {len(objects)}"},
        "train": {"file": "train.jsonl", "trials": len(train_logs), "sha256": P.write_dataset(out / "train.jsonl", train_logs, h, "train"),
                  "successes": sum(lg.summary["success"] for lg in train_logs if lg.header["trial"]["kind"] == "push")},
        "val": {"file": "val.jsonl", "trials": len(val_logs), "sha256": P.write_dataset(out / "val.jsonl", val_logs, h, "val"),
                "successes": sum(lg.summary["success"] for lg in val_logs)},
        "trial_seeds": {str(lg.header["trial"]["trial_id"]): lg.header["trial"]["seed"] for lg in logs},
    }
    assert manifest["train"]["trials"] == n_push * 24 + wb.protocol.no_contact_trials
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    print(f"train_trials={len(train_logs)} val_trials={len(val_logs)}")
    print(f"train_successes={manifest['train']['successes']} val_successes={manifest['val']['successes']}")
    print(f"out={out}")
    return EXIT_OK


def _load_manifest(ds: Path) -> dict:
    mf = ds / "manifest.json"
    if not mf.is_file():
        raise ValidationError(f"{ds} has no manifest.json")
    try:
        manifest = json.loads(mf.read_text())
        for split in ("train", "val"):
            path = ds / manifest[split]["file"]
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            if digest != manifest[split]["sha256"]:
                raise ValidationError(f"{path} does not match its manifest checksum")
    except (KeyError, OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"invalid dataset manifest in {ds}: {e}") from None
    return manifest


def cmd_train(args, wb: WorkbenchConfig) -> int:
    ds = Path(args.dataset)
    _load_manifest(ds)
    seq_len = 20
    tr = P.windows_from_file(ds / "train.jsonl", seq_len)
    va = P.windows_from_file(ds / "val.jsonl", seq_len)
    if tr.X.shape[2] != wb.roi.S:
        raise ValidationError(f"dataset has {tr.X.shape[2]} columns but the ROI defines S={wb.roi.S}")
    if args.kind == CLE and (not np.any(tr.ctype > 0) or not np.any(va.ctype > 0)):
        raise ValidationError("cle needs contact windows in both splits")
    if args.kind == CTE and len(np.unique(tr.ctype)) < 2:
        raise ValidationError("cte needs at least two contact classes in the training split")
    out = _out_dir(wb.output_dir, args.force, must_be_empty=False)
    model_path = out / f"{args.kind}.cpm"
    if model_path.exists() and not args.force:
        raise ValidationError(f"{model_path} exists (use --force)")
    cfg = wb.train
    if args.epochs is not None:
        cfg = TrainConfig(**{**cfg.__dict__, "epochs": args.epochs})
    model, curve = train(tr, va, args.kind, cfg)
    model.metadata["config_hash"] = wb.hash()
    save_model(model, model_path)
    P.write_csv(out / f"{args.kind}_curve.csv", [list(r) for r in curve], ["epoch", "train_loss", "val_loss"])
    print(f"model={model_path} epochs={len(curve)} best_epoch={model.metadata['best_epoch']} "
          f"best_val_loss={model.metadata['best_val_loss']:.6g}")
    return EXIT_OK


def _load_models(path, wb: WorkbenchConfig):
    if path is None:
        raise ValidationError("--models is required unless --mode skin")
    d = Path(path)
    models = []
    for kind in (CLE, CTE):
        f = d / f"{kind}.cpm"
        if not f.is_file():
            raise ValidationError(f"missing model file {f}")
        m = load_model(f)
        if m.kind != kind:
            raise ValidationError(f"{f} holds a {m.kind} model")
        if m.input_scaler.min.shape[-1] != wb.roi.S:
            raise ValidationError(f"{f} expects {m.input_scaler.min.shape[-1]} inputs, ROI has S={wb.roi.S}")
        models.append(m)
    return tuple(models)


def cmd_eval(args, wb: WorkbenchConfig) -> int:
    objects = _check_subset(args.objects, wb.objects, "objects") or wb.protocol.objects
    frictions = _check_subset(args.frictions, wb.friction_sets, "friction sets") or wb.protocol.friction_sets
    if args.grid == "custom":
        if not args.grid_file:
            raise ValidationError("--grid custom needs --grid-file")
        grid = P.load_grid_file(args.grid_file)
    else:
        grid = P.generate_target_grid(args.grid)
    mode = SensingMode(args.mode)
    models = None
    if mode != SensingMode.SKIN:
        if args.ground_truth_estimator:
            models = GroundTruthEstimator()
        else:
            models = make_estimator(_load_models(args.models, wb), wb.robot)
        if args.type_confusion > 0:
            models = TypeConfusion(models, args.type_confusion, seed=wb.seed)
    out = _out_dir(wb.output_dir, args.force)
    res = P.evaluate_suite(wb, models, grid, mode, objects, frictions, args.jobs)
    results = [res]
    base = None
    if args.baseline and mode != SensingMode.SKIN:
        base = P.evaluate_suite(wb, None, grid, SensingMode.SKIN, objects, frictions, args.jobs)
        results.append(base)
    (out / "logs").mkdir(exist_ok=True)
    for r in results:
        for i, lg in enumerate(r.logs):
            P.write_log(out / "logs" / f"{r.mode}_{i:04d}.jsonl", lg)
    header, table = P.success_table(results, objects, frictions)
    P.write_csv(out / "success_table.csv", table, header)
    P.write_csv(out / "min_distance.csv", [dict(mode=r.mode, **row) for r in results for row in r.rows])
    P.write_csv(out / "metrics.csv", [m for r in results for m in P.metrics_rows(r)])
    P.write_csv(out / "wilcoxon.csv", P.wilcoxon_rows(res, base))
    for r in results:
        print(f"mode={r.mode} success_rate={P.success_rate(r):.4f} trials={len(r.rows)}")
    print(f"out={out}")
    return EXIT_OK


def cmd_replay(args, wb: WorkbenchConfig) -> int:
    again, stored, bad = P.replay(args.log)
    for k in sorted(again):
        if k != "type":
            print(f"{k}={json.dumps(again[k])}")
    if bad:
        print(f"mismatch={','.join(bad)}")
        return EXIT_INVALID
    print("summary_match=true")
    return EXIT_OK


COMMANDS = {"collect": cmd_collect, "train": cmd_train, "eval": cmd_eval, "replay": cmd_replay}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        wb = _config(args)
        print(f"config_hash={wb.hash()}")
        return COMMANDS[args.cmd](args, wb)
    except (ConfigError, ValidationError, ModelFormatError, P.LogParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
