"""Proximity vector field: a fixed-size descriptor of what lies in front of the
pushing face, shared by every sensing modality."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import Transform3, transform_points


@dataclass(frozen=True)
class RoiConfig:
    eps_x_min: float = 0.3
    eps_x_max: float = 0.62
    eps_y_min: float = -0.3
    eps_y_max: float = 0.3
    eps_z_min: float = -0.4
    eps_z_max: float = 0.5
    g_x: float = 0.02
    g_y: float = 0.05

    def __post_init__(self):
        for ax in "xyz":
            if not getattr(self, f"eps_{ax}_min") < getattr(self, f"eps_{ax}_max"):
                raise ValueError(f"ROI bounds on {ax} must satisfy min < max")
        if self.g_x <= 0 or self.g_y <= 0:
            raise ValueError("cell sizes must be positive")
        for span, g in ((self.eps_x_max - self.eps_x_min, self.g_x), (self.eps_y_max - self.eps_y_min, self.g_y)):
            if abs(span / g - round(span / g)) > 1e-9:
                raise ValueError("ROI span must be a whole number of cells")

    @property
    def M(self) -> int:
        return int(round((self.eps_x_max - self.eps_x_min) / self.g_x))

    @property
    def S(self) -> int:
        return int(round((self.eps_y_max - self.eps_y_min) / self.g_y))

    def a_edges(self) -> np.ndarray:
        """Row edges a_0..a_M; the last edge is pinned to eps_x_max."""
        a = self.eps_x_min + np.arange(self.M + 1) * self.g_x
        a[-1] = self.eps_x_max
        return a

    def b_edges(self) -> np.ndarray:
        b = self.eps_y_min + np.arange(self.S + 1) * self.g_y
        b[-1] = self.eps_y_max
        return b

    def max_norm(self) -> float:
        return self.eps_x_max - (self.eps_x_min + self.g_x / 2)


@dataclass
class VoxelGrid:
    cells: list  # M x S nested lists of (3,) points
    M: int
    S: int
    a_edges: np.ndarray
    b_edges: np.ndarray


@dataclass(frozen=True)
class ProximityField:
    starts: np.ndarray  # (S, 3)
    ends: np.ndarray  # (S, 3)
    norms: np.ndarray  # (S,)


def proximity_starts(cfg: RoiConfig, h_b: float) -> np.ndarray:
    s = np.arange(cfg.S)
    return np.column_stack([
        np.full(cfg.S, cfg.eps_x_min + cfg.g_x / 2),
        cfg.eps_y_min + cfg.g_y * (1 + 2 * s) / 2,
        np.full(cfg.S, h_b),
    ])


def roi_filter(points, cfg: RoiConfig) -> np.ndarray:
    """Keep points strictly inside all six ROI bounds."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    keep = (
        (cfg.eps_x_min < p[:, 0]) & (p[:, 0] < cfg.eps_x_max)
        & (cfg.eps_y_min < p[:, 1]) & (p[:, 1] < cfg.eps_y_max)
        & (cfg.eps_z_min < p[:, 2]) & (p[:, 2] < cfg.eps_z_max)
    )
    return p[keep]


def bev_project(points, h_b: float) -> np.ndarray:
    p = np.array(points, dtype=float).reshape(-1, 3)
    p[:, 2] = h_b
    return p


def _cell_index(v: np.ndarray, edges: np.ndarray) -> np.ndarray:
    return np.searchsorted(edges, v, side="right") - 1


def voxelize(points, cfg: RoiConfig) -> VoxelGrid:
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    a, b = cfg.a_edges(), cfg.b_edges()
    M, S = cfg.M, cfg.S
    m = _cell_index(p[:, 0], a)
    s = _cell_index(p[:, 1], b)
    bad = (m < 0) | (m >= M) | (s < 0) | (s >= S)
    if np.any(bad):
        raise ValueError(f"{int(bad.sum())} point(s) outside the voxel grid; apply roi_filter first")
    cells = [[[] for _ in range(S)] for _ in range(M)]
    for i in range(len(p)):
        cells[m[i]][s[i]].append(p[i])
    return VoxelGrid(cells, M, S, a, b)


def proximity_from_grid(grid: VoxelGrid, cfg: RoiConfig, h_b: float) -> ProximityField:
    starts = proximity_starts(cfg, h_b)
    ends = starts.copy()
    ends[:, 0] = cfg.eps_x_max
    for s in range(grid.S):
        for m in range(grid.M):
            cell = grid.cells[m][s]
            if cell:
                total = 0.0
                for q in cell:
                    total += q[0]
                ends[s, 0] = total / len(cell)
                break
    return ProximityField(starts, ends, np.linalg.norm(ends - starts, axis=1))


def bin_edge_points(points, cfg: RoiConfig) -> list:
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    s = _cell_index(p[:, 1], cfg.b_edges())
    return [p[s == k] for k in range(cfg.S)]


def proximity_from_edges(bins, cfg: RoiConfig, h_b: float) -> ProximityField:
    starts = proximity_starts(cfg, h_b)
    ends = starts.copy()
    for s, pts in enumerate(bins):
        ends[s, 0] = float(np.min(pts[:, 0])) if len(pts) else cfg.eps_x_max
    return ProximityField(starts, ends, np.linalg.norm(ends - starts, axis=1))


def _norms_from_end_x(end_x: np.ndarray, cfg: RoiConfig) -> np.ndarray:
    return np.abs(end_x - (cfg.eps_x_min + cfg.g_x / 2))


def lidar_norms(cloud_sensor, mount: Transform3, cfg: RoiConfig, h_b: float) -> np.ndarray:
    """Fast LiDAR path: transform, filter, project and grid-reduce in one go."""
    pts = roi_filter(transform_points(mount, cloud_sensor), cfg)
    end_x = kernels.grid_proximity(pts[:, 0].copy(), pts[:, 1].copy(), cfg.a_edges(), cfg.b_edges(), cfg.eps_x_max)
    return _norms_from_end_x(end_x, cfg)


def edge_norms(edge_points_cam, mount: Transform3, cfg: RoiConfig, h_b: float) -> np.ndarray:
    """Depth path from deprojected silhouette points (camera frame)."""
    pts = bev_project(roi_filter(transform_points(mount, edge_points_cam), cfg), h_b)
    return proximity_from_edges(bin_edge_points(pts, cfg), cfg, h_b).norms


def descriptor_pipeline(raw, mount: Transform3, cfg: RoiConfig, h_b: float, modality: str) -> np.ndarray:
    """Sensor output -> S proximity norms.

    ``raw`` is an (N, 3) cloud in the LiDAR frame for ``modality="lidar"``,
    or a :class:`~pushsub.sensors.SegmentedDepthFrame` for ``"depth"``.
    """
    if modality == "lidar":
        pts = bev_project(roi_filter(transform_points(mount, raw), cfg), h_b)
        return proximity_from_grid(voxelize(pts, cfg), cfg, h_b).norms
    if modality == "depth":
        from .sensors import deproject, extract_mask_boundary

        cam_pts, _ = deproject(raw, extract_mask_boundary(raw))
        return edge_norms(cam_pts, mount, cfg, h_b)
    raise ValueError(f"unknown modality {modality!r}")
