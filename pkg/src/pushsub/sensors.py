"""Virtual planar LiDAR, segmented depth camera and the ground-truth contact skin."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import Transform3
from .world import (ContactState, ObjectSpec, RobotSpec, WorldState, classify_contact,
                    contact_manifold, object_outline)


def _default_lidar_mount() -> Transform3:
    return Transform3.from_rpy((0.0, 0.0, 0.3))


def _default_camera_mount() -> Transform3:
    return look_at((0.1, 0.0, 1.1), (0.5, 0.0, 0.0))


def look_at(eye, target) -> Transform3:
    """Camera frame (x right, y down, z optical axis) looking from ``eye`` at ``target``."""
    eye, target = np.asarray(eye, float), np.asarray(target, float)
    z = target - eye
    z /= np.linalg.norm(z)
    up = np.array([0.0, 0.0, 1.0])
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Transform3(np.column_stack([x, y, z]), eye)


@dataclass(frozen=True)
class LidarConfig:
    mount: Transform3 = field(default_factory=_default_lidar_mount)
    beams_per_scan: int = 128
    fov: float = math.radians(90.0)
    range_max: float = 10.0
    noise_sigma: float = 0.005
    rate: float = 10.0

    def __post_init__(self):
        if self.range_max <= 0 or self.beams_per_scan < 1 or self.noise_sigma < 0:
            raise ValueError("invalid LiDAR configuration")
        if abs(self.mount.rotation[2, 2] - 1.0) > 1e-9:
            raise ValueError("the planar LiDAR ring must be mounted level (z axis up)")

    @property
    def beam_azimuths(self) -> np.ndarray:
        if self.beams_per_scan == 1:
            return np.zeros(1)
        return np.linspace(-self.fov / 2, self.fov / 2, self.beams_per_scan)


@dataclass(frozen=True)
class CameraConfig:
    mount: Transform3 = field(default_factory=_default_camera_mount)
    fx: float = 150.0
    fy: float = 150.0
    cx: float = 79.5
    cy: float = 59.5
    width: int = 160
    height: int = 120
    depth_noise_sigma: float = 0.01
    rate: float = 10.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if self.depth_noise_sigma < 0:
            raise ValueError("noise must be non-negative")


@dataclass
class SegmentedDepthFrame:
    depth: np.ndarray  # (height, width) metres along the optical axis, 0 = no return
    mask: np.ndarray  # (height, width) bool, object silhouette
    fx: float
    fy: float
    cx: float
    cy: float


def _object_geometry_robot(state: WorldState, obj: ObjectSpec):
    """Object outline in the robot frame: (polygon (M,2), circle (3,))."""
    if obj.shape == "circle":
        c = state.robot.to_local(state.object.position)
        return np.zeros((0, 2)), np.array([c[0], c[1], obj.radius])
    return state.robot.to_local(object_outline(obj, state.object)), np.zeros(3)


def lidar_scan(state: WorldState, cfg: LidarConfig, obj: ObjectSpec, rng=None) -> np.ndarray:
    """One planar scan; returns the (N, 3) hit points in the sensor frame."""
    poly, circle = _object_geometry_robot(state, obj)
    R, t = cfg.mount.rotation, cfg.mount.translation
    az = cfg.beam_azimuths
    dirs_l = np.column_stack([np.cos(az), np.sin(az)])
    dirs_r = dirs_l @ R[:2, :2].T
    seg_a = poly
    seg_b = np.roll(poly, -1, axis=0)
    circles = circle[None, :] if obj.shape == "circle" else np.zeros((0, 3))
    ranges = kernels.ray_cast_2d(t[:2].copy(), np.ascontiguousarray(dirs_r), np.ascontiguousarray(seg_a),
                                 np.ascontiguousarray(seg_b), circles)
    hit = ranges <= cfg.range_max
    r = ranges[hit]
    if cfg.noise_sigma > 0 and rng is not None and len(r):
        r = r + rng.normal(0.0, cfg.noise_sigma, size=len(r))
    d = dirs_l[hit]
    return np.column_stack([r * d[:, 0], r * d[:, 1], np.zeros(len(r))])


def pixel_rays(cfg: CameraConfig) -> np.ndarray:
    """Unnormalised camera-frame rays (z = 1) for every pixel, row-major."""
    v, u = np.mgrid[0:cfg.height, 0:cfg.width]
    return np.column_stack([((u - cfg.cx) / cfg.fx).ravel(), ((v - cfg.cy) / cfg.fy).ravel(),
                            np.ones(cfg.width * cfg.height)])


def depth_render(state: WorldState, cfg: CameraConfig, obj: ObjectSpec, rng=None) -> SegmentedDepthFrame:
    poly, circle = _object_geometry_robot(state, obj)
    R, t = cfg.mount.rotation, cfg.mount.translation
    rays_c = pixel_rays(cfg)
    dirs_r = np.ascontiguousarray(rays_c @ R.T)
    t_obj, t_ground = kernels.prism_cast(t.copy(), dirs_r, np.ascontiguousarray(poly), float(obj.height), circle)
    # rays have unit z in the camera frame, so the hit parameter is the depth
    mask = t_obj <= t_ground
    mask &= np.isfinite(t_obj)
    depth = np.where(mask, t_obj, np.where(np.isfinite(t_ground), t_ground, 0.0))
    if cfg.depth_noise_sigma > 0 and rng is not None:
        hits = depth > 0
        depth = depth + np.where(hits, rng.normal(0.0, cfg.depth_noise_sigma, size=depth.shape), 0.0)
        depth = np.where(hits, np.maximum(depth, 1e-6), 0.0)
    shape = (cfg.height, cfg.width)
    return SegmentedDepthFrame(depth.reshape(shape), mask.reshape(shape), cfg.fx, cfg.fy, cfg.cx, cfg.cy)


def extract_mask_boundary(frame: SegmentedDepthFrame) -> np.ndarray:
    """(u, v) pixels of the mask with at least one 4-neighbour outside it."""
    m = np.asarray(frame.mask, dtype=bool)
    padded = np.pad(m, 1, constant_values=False)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:])
    v, u = np.nonzero(m & ~interior)
    return np.column_stack([u, v])


def deproject(frame: SegmentedDepthFrame, pixels) -> tuple[np.ndarray, int]:
    """Pinhole back-projection of pixels to camera-frame points.

    Returns (points, dropped) where ``dropped`` counts pixels without depth.
    """
    px = np.asarray(pixels, dtype=int).reshape(-1, 2)
    u, v = px[:, 0], px[:, 1]
    z = frame.depth[v, u]
    ok = z > 0
    u, v, z = u[ok], v[ok], z[ok]
    pts = np.column_stack([z * (u - frame.cx) / frame.fx, z * (v - frame.cy) / frame.fy, z])
    return pts, int((~ok).sum())


def project(frame: SegmentedDepthFrame, pts) -> np.ndarray:
    """Camera-frame points -> (u, v, z)."""
    p = np.asarray(pts, dtype=float).reshape(-1, 3)
    z = p[:, 2]
    return np.column_stack([frame.fx * p[:, 0] / z + frame.cx, frame.fy * p[:, 1] / z + frame.cy, z])


def contact_skin_read(state: WorldState, robot: RobotSpec, obj: ObjectSpec) -> ContactState:
    """Skin reading: the contact manifold widened to the skin's sensing band.

    The physics keeps the tight manifold; the wider band keeps near-flush faces,
    tilted by a fraction of a millimetre, labelled as the line contact they look like.
    """
    return classify_contact(contact_manifold(state, robot, obj, tol=robot.skin_range), robot.front_x)
