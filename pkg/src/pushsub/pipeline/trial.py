"""One pushing trial: 10 Hz sense -> descriptor -> (CPM or skin) -> RPS -> physics loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..config import WorkbenchConfig
from ..cpm.estimator import CpmEstimator
from ..descriptor import descriptor_pipeline, lidar_norms
from ..geometry import Pose2
from ..rps import RpsMode, rps_step
from ..sensors import contact_skin_read, depth_render, lidar_scan
from ..world import (ContactState, ContactType, ControlCommand, ObjectSpec, RobotSpec, WorldState,
                     contact_point_world, object_outline, step)
from .metrics import summarize


class SensingMode(str, Enum):
    SKIN = "skin"
    LIDAR = "lidar"
    DEPTH = "depth"


PUSH, NO_CONTACT = "push", "no_contact"


@dataclass(frozen=True)
class TrialConfig:
    object: str
    friction_set: str
    target: tuple | None
    sensing_mode: SensingMode = SensingMode.SKIN
    d_succ: float = 0.05
    t_max: float = 300.0
    contact_loss_max: float = 150.0
    seed: int = 0
    trial_id: int = 0
    kind: str = PUSH

    def __post_init__(self):
        object.__setattr__(self, "sensing_mode", SensingMode(self.sensing_mode))
        if not self.d_succ > 0 or not self.t_max > 0 or not self.contact_loss_max > 0:
            raise ValueError("d_succ, t_max and contact_loss_max must be positive")
        if self.kind not in (PUSH, NO_CONTACT):
            raise ValueError(f"unknown trial kind {self.kind!r}")
        if self.kind == PUSH:
            if self.target is None or len(self.target) != 2 or not all(map(math.isfinite, self.target)):
                raise ValueError("a push trial needs a finite 2-D target")
            object.__setattr__(self, "target", (float(self.target[0]), float(self.target[1])))

    def to_dict(self) -> dict:
        return {"object": self.object, "friction_set": self.friction_set,
                "target": list(self.target) if self.target is not None else None,
                "sensing_mode": self.sensing_mode.value, "d_succ": self.d_succ, "t_max": self.t_max,
                "contact_loss_max": self.contact_loss_max, "seed": self.seed, "trial_id": self.trial_id,
                "kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "TrialConfig":
        d = dict(d)
        if d.get("target") is not None:
            d["target"] = tuple(d["target"])
        return cls(**d)


@dataclass
class TrialLog:
    header: dict
    ticks: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def config(self) -> TrialConfig:
        return TrialConfig.from_dict(self.header["trial"])


# --------------------------------------------------------------------------
# estimators plugged into the "estimated" slot


class GroundTruthEstimator:
    """Returns the skin reading unchanged; used to check that sensing is the only change."""

    def reset(self, seed: int = 0):
        pass

    def update(self, norms, truth: ContactState) -> ContactState:
        return truth


class TypeConfusion:
    """Wraps an estimator and swaps point and line labels with probability ``rate``."""

    def __init__(self, inner, rate: float = 1.0, seed: int = 0):
        self.inner, self.rate, self.seed = inner, rate, seed
        self.rng = np.random.default_rng(seed)

    def reset(self, seed: int = 0):
        # reseeded per trial so results do not depend on trial order
        self.rng = np.random.default_rng([self.seed, seed])
        self.inner.reset(seed)

    def update(self, norms, truth: ContactState) -> ContactState:
        est = self.inner.update(norms, truth)
        if est.in_contact and self.rng.random() < self.rate:
            flipped = ContactType.LINE if est.contact_type == ContactType.POINT else ContactType.POINT
            return ContactState(flipped, est.l, est.p_C_R)
        return est


class _CpmAdapter:
    def __init__(self, est: CpmEstimator):
        self.est = est

    def reset(self, seed: int = 0):
        self.est.reset()

    def update(self, norms, truth: ContactState) -> ContactState:
        return self.est.update(norms)


def make_estimator(models, robot: RobotSpec):
    """``models`` is a (cle, cte) pair or anything with ``update(norms, truth)``."""
    if models is None:
        return None
    if isinstance(models, tuple):
        cle, cte = models
        return _CpmAdapter(CpmEstimator(cle, cte, robot.half_width, robot.front_x))
    if not hasattr(models, "update"):
        raise TypeError("models must be a (cle, cte) pair or an estimator")
    return models


# --------------------------------------------------------------------------


def trial_seed(global_seed: int, split: str, index: int) -> int:
    tag = {"train": 0, "val": 1, "nocontact": 2, "eval": 3}[split]
    return int(np.random.SeedSequence([global_seed, tag, index]).generate_state(1)[0])


def place_object(robot_pose: Pose2, robot: RobotSpec, obj: ObjectSpec, gap: float, y: float, theta: float) -> Pose2:
    """Object pose whose nearest point lies ``gap`` ahead of the face, offset ``y`` along it."""
    probe = Pose2(0.0, y, theta)
    if obj.shape == "circle":
        near = -obj.radius
    else:
        near = float(object_outline(obj, probe)[:, 0].min())
    local = np.array([robot.front_x + gap - near, y])
    p = robot_pose.to_world(local)
    return Pose2(p[0], p[1], robot_pose.theta + theta)


def initial_state(cfg: TrialConfig, wb: WorkbenchConfig, obj: ObjectSpec, rng) -> tuple[WorldState, ControlCommand]:
    robot = wb.robot
    pr = wb.protocol
    rpose = Pose2(-robot.front_x, 0.0, 0.0)
    if cfg.kind == NO_CONTACT:
        gap = rng.uniform(0.05, 0.2)
        y = rng.uniform(-0.1, 0.1)
        th = math.radians(rng.uniform(-10.0, 10.0))
        away = ControlCommand(-rng.uniform(0.05, 0.15), rng.uniform(-0.05, 0.05), rng.uniform(-0.1, 0.1))
    else:
        gap = pr.initial_gap
        y = rng.uniform(-pr.jitter_y, pr.jitter_y)
        th = math.radians(rng.uniform(-pr.jitter_deg, pr.jitter_deg))
        away = None
    return WorldState(rpose, place_object(rpose, robot, obj, gap, y, th)), away


def _pose(p: Pose2) -> list:
    return [p.x, p.y, p.theta]


def _cs(c: ContactState | None):
    if c is None:
        return None
    return {"type": int(c.contact_type), "l": c.l if c.in_contact else None}


def run_trial(cfg: TrialConfig, wb: WorkbenchConfig, models=None) -> TrialLog:
    """Run one trial; ``models`` is required unless the skin drives the controller."""
    if cfg.object not in wb.objects:
        raise ValueError(f"unknown object {cfg.object!r}")
    if cfg.friction_set not in wb.friction_sets:
        raise ValueError(f"unknown friction set {cfg.friction_set!r}")
    if cfg.sensing_mode != SensingMode.SKIN and models is None:
        raise ValueError(f"sensing mode {cfg.sensing_mode.value} needs CPM models")
    robot, pr, roi = wb.robot, wb.protocol, wb.roi
    obj = wb.object_spec(cfg.object, cfg.friction_set)
    lidar, camera = wb.lidar.build(), wb.camera.build()
    estimator = make_estimator(models, robot) if cfg.sensing_mode != SensingMode.SKIN else None
    if estimator is not None:
        estimator.reset(cfg.seed)

    ss = np.random.SeedSequence(cfg.seed).spawn(3)
    rng_place, rng_lidar, rng_cam = (np.random.default_rng(s) for s in ss)
    state, scripted = initial_state(cfg, wb, obj, rng_place)
    target = np.asarray(cfg.target) if cfg.target is not None else None
    period, n_sub = pr.control_period, pr.substeps
    t_end = pr.no_contact_duration if cfg.kind == NO_CONTACT else cfg.t_max

    header = {"type": "header", "config_hash": wb.hash(), "trial": cfg.to_dict(), "control_period": period,
              "physics_dt": pr.physics_dt, "substeps": n_sub, "object_spec": obj.name,
              "mu_ground": obj.mu_ground, "mu_robot": obj.mu_robot, "t_end": t_end}
    log = TrialLog(header)
    mode = RpsMode()
    loss, k = 0.0, 0
    while True:
        t = k * period
        truth = contact_skin_read(state, robot, obj)
        if cfg.sensing_mode == SensingMode.DEPTH:
            frame = depth_render(state, camera, obj, rng_cam)
            norms = descriptor_pipeline(frame, camera.mount, roi, robot.base_height, "depth")
        else:
            norms = lidar_norms(lidar_scan(state, lidar, obj, rng_lidar), lidar.mount, roi, robot.base_height)
        est = estimator.update(norms, truth) if estimator is not None else None
        driving = truth if est is None else est

        dist = None
        if cfg.kind == PUSH and driving.in_contact:
            dist = float(np.hypot(*(target - contact_point_world(state, driving, robot))))
        if not truth.in_contact:
            loss += period

        rec = {"type": "tick", "tick": k, "t": t, "robot": _pose(state.robot), "object": _pose(state.object),
               "gt": _cs(truth), "est": _cs(est), "norms": [float(v) for v in norms], "dist": dist,
               "mode": mode.mode.value, "cmd": None}
        done = (dist is not None and dist <= cfg.d_succ) or \
               (cfg.kind == PUSH and loss > cfg.contact_loss_max) or t >= t_end - 1e-9
        if done:
            log.ticks.append(rec)
            break
        if scripted is not None:
            cmd = scripted
        else:
            cmd, mode = rps_step(driving, state.robot, target, mode, wb.rps, period, robot.front_x)
            rec["mode"] = mode.mode.value
        rec["cmd"] = list(cmd.as_tuple())
        log.ticks.append(rec)
        for _ in range(n_sub):
            state = step(state, cmd, pr.physics_dt, robot, obj)
        k += 1
    log.summary = summarize(log.header, log.ticks)
    return log
