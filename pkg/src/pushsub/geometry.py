"""Planar poses, rigid transforms and angle arithmetic."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def _check_finite(*vals: float) -> None:
    for v in vals:
        if not math.isfinite(v):
            raise ValueError(f"non-finite angle: {v!r}")


def wrap_angle(a: float) -> float:
    """Wrap ``a`` into [-pi, pi); pi itself maps to -pi."""
    _check_finite(a)
    # in-range angles pass through untouched, which keeps wrapping exactly odd there
    if -math.pi <= a < math.pi:
        return a
    w = math.fmod(a + math.pi, TWO_PI)
    if w < 0.0:
        w += TWO_PI
    w -= math.pi
    # fmod rounding can land exactly on +pi
    if w >= math.pi:
        w -= TWO_PI
    return w


def angle_diff(a: float, b: float) -> float:
    _check_finite(a, b)
    return wrap_angle(a - b)


def rot2(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def rotation(self) -> np.ndarray:
        return rot2(self.theta)

    def to_world(self, p) -> np.ndarray:
        """Map a point (or Nx2 array) from this pose's frame into the parent frame."""
        p = np.asarray(p, dtype=float)
        return p @ self.rotation().T + self.position

    def to_local(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return (p - self.position) @ self.rotation()


def _check_rotation(R: np.ndarray, n: int) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (n, n):
        raise ValueError(f"rotation must be {n}x{n}, got {R.shape}")
    if not np.allclose(R.T @ R, np.eye(n), atol=1e-9) or abs(np.linalg.det(R) - 1.0) > 1e-9:
        raise ValueError("rotation is not orthonormal with det +1")
    return R


@dataclass(frozen=True)
class Transform2:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _check_rotation(self.rotation, 2))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(2))

    @classmethod
    def from_pose(cls, pose: Pose2) -> "Transform2":
        return cls(pose.rotation(), pose.position)

    def apply(self, pts) -> np.ndarray:
        return np.asarray(pts, dtype=float) @ self.rotation.T + self.translation

    def inverse(self) -> "Transform2":
        Rt = self.rotation.T
        return Transform2(Rt, -Rt @ self.translation)


@dataclass(frozen=True)
class Transform3:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _check_rotation(self.rotation, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> "Transform3":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rpy(cls, translation, roll: float = 0.0, pitch: float = 0.0, yaw: float = 0.0) -> "Transform3":
        cr, sr = math.cos(roll), math.sin(roll)
        cp, sp = math.cos(pitch), math.sin(pitch)
        Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
        Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
        return cls(yaw_matrix(yaw) @ Ry @ Rx, translation)

    def inverse(self) -> "Transform3":
        Rt = self.rotation.T
        return Transform3(Rt, -Rt @ self.translation)

    def compose(self, other: "Transform3") -> "Transform3":
        """self * other (apply ``other`` first)."""
        return Transform3(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)


def transform_points(T: Transform3, pts) -> np.ndarray:
    """Apply ``T`` to an (N, 3) array of points; order and count are preserved."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    return pts @ T.rotation.T + T.translation
