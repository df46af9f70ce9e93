"""Reactive pushing strategy: body-frame velocity commands from the contact state."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import Pose2, angle_diff
from .world import ContactState, ControlCommand


@dataclass(frozen=True)
class RpsParams:
    K_v: float = 0.3
    K_h: float = 3.0  # calibrated on the skin-driven baseline, see README
    L: float = 0.5
    eta: float = 3.0
    zeta: float = 0.1
    beta: float = 0.2
    k: float = 30.0
    d_th: float = 0.05
    realign_enter: float = 0.25
    realign_exit: float = 0.15
    realign_omega_scale: float = 0.2
    loss_creep_vx: float = 0.01
    tan_clamp: float = 1.2  # bound on K_h * heading error inside the tangent

    def __post_init__(self):
        for name in ("K_v", "K_h", "L", "eta", "zeta", "beta", "k", "d_th",
                     "realign_enter", "realign_exit", "loss_creep_vx"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.zeta < self.eta:
            raise ValueError("zeta must be smaller than eta")
        if not self.realign_exit < self.realign_enter:
            raise ValueError("realign_exit must be smaller than realign_enter")


class Mode(str, Enum):
    NORMAL = "normal"
    REALIGNMENT = "realignment"
    CONTACT_LOSS = "contact_loss"


@dataclass(frozen=True)
class RpsMode:
    mode: Mode = Mode.NORMAL
    time_in_mode: float = 0.0


def compute_v_star(robot: Pose2, p_C_R, target, K_v: float):
    """Speed set-point and displacement from the contact point to the target."""
    p_c = robot.to_world(np.asarray(p_C_R, dtype=float))
    d = np.asarray(target, dtype=float) - p_c
    return K_v * float(np.hypot(*d)), d


def compute_adaptive_rate(l: float, d_norm: float, params: RpsParams) -> float:
    if d_norm <= params.d_th:
        return 0.0
    p = params
    mag = p.zeta + (p.eta - p.zeta) / (1.0 + math.exp((p.beta - abs(l)) * p.k))
    return mag * float(np.sign(l))


def compute_linear_velocity(v_star: float, a_r: float):
    s = math.sqrt(1.0 + a_r * a_r)
    return v_star / s, a_r * v_star / s


def compute_angular_velocity(v_x: float, d, theta: float, params: RpsParams) -> float:
    theta_star = math.atan2(d[1], d[0])
    arg = params.K_h * angle_diff(theta_star, theta)
    arg = min(max(arg, -params.tan_clamp), params.tan_clamp)
    return v_x * math.tan(arg) / params.L


def _next_mode(contact: ContactState, mode: RpsMode, params: RpsParams, dt: float) -> RpsMode:
    if not contact.in_contact:
        new = Mode.CONTACT_LOSS
    elif mode.mode == Mode.REALIGNMENT:
        new = Mode.NORMAL if abs(contact.l) < params.realign_exit else Mode.REALIGNMENT
    else:
        new = Mode.REALIGNMENT if abs(contact.l) > params.realign_enter else Mode.NORMAL
    if new == mode.mode:
        return RpsMode(new, mode.time_in_mode + dt)
    return RpsMode(new, 0.0)


def rps_step(contact: ContactState, robot: Pose2, target, mode: RpsMode, params: RpsParams,
             dt: float, front_x: float = 0.32):
    """One controller tick: returns (command, new mode)."""
    new_mode = _next_mode(contact, mode, params, dt)
    if new_mode.mode == Mode.CONTACT_LOSS:
        return ControlCommand(params.loss_creep_vx, 0.0, 0.0), new_mode

    p_C_R = (front_x, contact.l)
    v_star, d = compute_v_star(robot, p_C_R, target, params.K_v)
    d_norm = float(np.hypot(*d))
    if d_norm <= params.d_th:
        return ControlCommand(0.0, 0.0, 0.0), new_mode

    if new_mode.mode == Mode.REALIGNMENT:
        a_r = params.eta * float(np.sign(contact.l))
    else:
        a_r = compute_adaptive_rate(contact.l, d_norm, params)
    v_x, v_y = compute_linear_velocity(v_star, a_r)
    omega = compute_angular_velocity(v_x, d, robot.theta, params)
    if new_mode.mode == Mode.REALIGNMENT:
        omega *= params.realign_omega_scale
    return ControlCommand(v_x, v_y, omega), new_mode
