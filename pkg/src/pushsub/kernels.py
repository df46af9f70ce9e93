"""Hot numeric kernels.

Every kernel has a vectorised numpy implementation and a loop implementation
compiled with numba.  The numba path is used when numba imports and the
environment variable ``PUSHSUB_NO_NUMBA`` is not set to a truthy value; both
paths return identical results up to floating point summation order (the
ray casts are bit-identical, see tests/test_kernels.py).
"""
from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("PUSHSUB_NO_NUMBA", "").lower() in ("1", "true", "yes")

try:  # pragma: no cover - exercised implicitly
    if _DISABLE:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

USE_NUMBA = HAVE_NUMBA and not _DISABLE

_PAR_EPS = 1e-15


# ---------------------------------------------------------------------------
# 2D ray casting (planar LiDAR ring)


def ray_cast_2d_numpy(origin, dirs, seg_a, seg_b, circles):
    """Distance along each unit ray to the first hit, ``inf`` on a miss.

    origin: (2,), dirs: (N, 2), seg_a/seg_b: (M, 2) segment end points,
    circles: (K, 3) rows of (cx, cy, r).
    """
    n = dirs.shape[0]
    best = np.full(n, np.inf)
    if seg_a.shape[0]:
        e = seg_b - seg_a  # (M, 2)
        w = seg_a - origin  # (M, 2)
        # solve origin + t d = a + s e
        den = dirs[:, None, 0] * e[None, :, 1] - dirs[:, None, 1] * e[None, :, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (w[None, :, 0] * e[None, :, 1] - w[None, :, 1] * e[None, :, 0]) / den
            s = (w[None, :, 0] * dirs[:, None, 1] - w[None, :, 1] * dirs[:, None, 0]) / den
        ok = (np.abs(den) > _PAR_EPS) & (t >= 0.0) & (s >= 0.0) & (s <= 1.0)
        t = np.where(ok, t, np.inf)
        best = np.minimum(best, t.min(axis=1))
    for cx, cy, r in circles:
        fx, fy = origin[0] - cx, origin[1] - cy
        b = dirs[:, 0] * fx + dirs[:, 1] * fy
        c = fx * fx + fy * fy - r * r
        disc = b * b - c
        with np.errstate(invalid="ignore"):
            sq = np.sqrt(disc)
        t0 = -b - sq
        t1 = -b + sq
        t = np.where(t0 >= 0.0, t0, np.where(t1 >= 0.0, t1, np.inf))
        t = np.where(disc >= 0.0, t, np.inf)
        best = np.minimum(best, t)
    return best


@njit(cache=True)
def _ray_cast_2d_loop(origin, dirs, seg_a, seg_b, circles):
    n = dirs.shape[0]
    out = np.full(n, np.inf)
    for i in range(n):
        dx, dy = dirs[i, 0], dirs[i, 1]
        best = np.inf
        for j in range(seg_a.shape[0]):
            ex = seg_b[j, 0] - seg_a[j, 0]
            ey = seg_b[j, 1] - seg_a[j, 1]
            wx = seg_a[j, 0] - origin[0]
            wy = seg_a[j, 1] - origin[1]
            den = dx * ey - dy * ex
            if abs(den) <= _PAR_EPS:
                continue
            t = (wx * ey - wy * ex) / den
            s = (wx * dy - wy * dx) / den
            if t >= 0.0 and s >= 0.0 and s <= 1.0 and t < best:
                best = t
        for k in range(circles.shape[0]):
            fx = origin[0] - circles[k, 0]
            fy = origin[1] - circles[k, 1]
            r = circles[k, 2]
            b = dx * fx + dy * fy
            c = fx * fx + fy * fy - r * r
            disc = b * b - c
            if disc < 0.0:
                continue
            sq = np.sqrt(disc)
            t0 = -b - sq
            t1 = -b + sq
            t = t0 if t0 >= 0.0 else (t1 if t1 >= 0.0 else np.inf)
            if t < best:
                best = t
        out[i] = best
    return out


# ---------------------------------------------------------------------------
# 3D ray casting against an extruded polygon / cylinder standing on z = 0


def _point_in_polygon_numpy(px, py, poly):
    inside = np.zeros(px.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        cond = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= cond & (px < xc)
    return inside


def prism_cast_numpy(origin, dirs, poly, height, circle):
    """First-hit distance of rays against a vertical prism and the ground.

    ``poly`` is an (M, 2) CCW polygon (ignored when ``circle`` has a positive
    radius); ``circle`` is (cx, cy, r).  Returns (t_object, t_ground) arrays,
    ``inf`` on a miss.
    """
    ox, oy, oz = origin
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    n = dirs.shape[0]
    t_obj = np.full(n, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = np.where(dz < -_PAR_EPS, -oz / dz, np.inf)
        t_ground = np.where(t_ground >= 0.0, t_ground, np.inf)
        # top cap
        t_top = np.where(np.abs(dz) > _PAR_EPS, (height - oz) / dz, np.inf)
    t_top = np.where(t_top >= 0.0, t_top, np.inf)
    tx, ty = ox + t_top * dx, oy + t_top * dy
    if circle[2] > 0.0:
        cx, cy, r = circle
        in_top = (tx - cx) ** 2 + (ty - cy) ** 2 <= r * r
        t_obj = np.where(np.isfinite(t_top) & in_top, t_top, t_obj)
        fx, fy = ox - cx, oy - cy
        a = dx * dx + dy * dy
        b = dx * fx + dy * fy
        c = fx * fx + fy * fy - r * r
        disc = b * b - a * c
        with np.errstate(invalid="ignore", divide="ignore"):
            sq = np.sqrt(disc)
            t0 = (-b - sq) / a
        z0 = oz + t0 * dz
        ok = (disc >= 0.0) & (a > _PAR_EPS) & (t0 >= 0.0) & (z0 >= 0.0) & (z0 <= height)
        t_obj = np.minimum(t_obj, np.where(ok, t0, np.inf))
    else:
        safe_top = np.where(np.isfinite(t_top), tx, 0.0), np.where(np.isfinite(t_top), ty, 0.0)
        in_top = _point_in_polygon_numpy(safe_top[0], safe_top[1], poly) & np.isfinite(t_top)
        t_obj = np.where(in_top, t_top, t_obj)
        m = len(poly)
        for j in range(m):
            ax, ay = poly[j]
            bx, by = poly[(j + 1) % m]
            ex, ey = bx - ax, by - ay
            wx, wy = ax - ox, ay - oy
            den = dx * ey - dy * ex
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (wx * ey - wy * ex) / den
                s = (wx * dy - wy * dx) / den
            z = oz + t * dz
            ok = (np.abs(den) > _PAR_EPS) & (t >= 0.0) & (s >= 0.0) & (s <= 1.0) & (z >= 0.0) & (z <= height)
            t_obj = np.minimum(t_obj, np.where(ok, t, np.inf))
    return t_obj, t_ground


@njit(cache=True)
def _prism_cast_loop(origin, dirs, poly, height, circle):
    n = dirs.shape[0]
    t_obj = np.full(n, np.inf)
    t_ground = np.full(n, np.inf)
    ox, oy, oz = origin[0], origin[1], origin[2]
    m = poly.shape[0]
    for i in range(n):
        dx, dy, dz = dirs[i, 0], dirs[i, 1], dirs[i, 2]
        if dz < -_PAR_EPS:
            tg = -oz / dz
            if tg >= 0.0:
                t_ground[i] = tg
        best = np.inf
        if abs(dz) > _PAR_EPS:
            tt = (height - oz) / dz
            if tt >= 0.0:
                tx = ox + tt * dx
                ty = oy + tt * dy
                if circle[2] > 0.0:
                    if (tx - circle[0]) ** 2 + (ty - circle[1]) ** 2 <= circle[2] * circle[2]:
                        best = tt
                else:
                    inside = False
                    for j in range(m):
                        x1, y1 = poly[j, 0], poly[j, 1]
                        x2, y2 = poly[(j + 1) % m, 0], poly[(j + 1) % m, 1]
                        if (y1 > ty) != (y2 > ty):
                            xc = x1 + (ty - y1) * (x2 - x1) / (y2 - y1)
                            if tx < xc:
                                inside = not inside
                    if inside:
                        best = tt
        if circle[2] > 0.0:
            fx = ox - circle[0]
            fy = oy - circle[1]
            a = dx * dx + dy * dy
            b = dx * fx + dy * fy
            c = fx * fx + fy * fy - circle[2] * circle[2]
            disc = b * b - a * c
            if disc >= 0.0 and a > _PAR_EPS:
                t0 = (-b - np.sqrt(disc)) / a
                z0 = oz + t0 * dz
                if t0 >= 0.0 and z0 >= 0.0 and z0 <= height and t0 < best:
                    best = t0
        else:
            for j in range(m):
                ax, ay = poly[j, 0], poly[j, 1]
                ex = poly[(j + 1) % m, 0] - ax
                ey = poly[(j + 1) % m, 1] - ay
                wx = ax - ox
                wy = ay - oy
                den = dx * ey - dy * ex
                if abs(den) <= _PAR_EPS:
                    continue
                t = (wx * ey - wy * ex) / den
                s = (wx * dy - wy * dx) / den
                z = oz + t * dz
                if t >= 0.0 and s >= 0.0 and s <= 1.0 and z >= 0.0 and z <= height and t < best:
                    best = t
        t_obj[i] = best
    return t_obj, t_ground


# ---------------------------------------------------------------------------
# grid proximity: closest occupied cell per column, mean x inside it


def grid_proximity_numpy(x, y, a_edges, b_edges, x_far):
    """Per column: mean x of the closest occupied cell, or ``x_far`` if empty.

    ``a_edges`` (M+1) and ``b_edges`` (S+1) are the half-open cell edges; all
    points must already lie inside the grid.
    """
    S = len(b_edges) - 1
    out = np.full(S, float(x_far))
    if len(x) == 0:
        return out
    m = np.searchsorted(a_edges, x, side="right") - 1
    s = np.searchsorted(b_edges, y, side="right") - 1
    order = np.lexsort((m, s))
    m, s, xs = m[order], s[order], x[order]
    # first row of each column after sorting by (s, m)
    first = np.ones(len(s), dtype=bool)
    first[1:] = s[1:] != s[:-1]
    col_min = np.repeat(m[first], np.diff(np.append(np.flatnonzero(first), len(s))))
    sel = m == col_min
    cols = s[sel]
    sums = np.bincount(cols, weights=xs[sel], minlength=S)
    counts = np.bincount(cols, minlength=S)
    occ = counts > 0
    out[occ] = sums[occ] / counts[occ]
    return out


@njit(cache=True)
def _grid_proximity_loop(x, y, a_edges, b_edges, x_far):
    M = a_edges.shape[0] - 1
    S = b_edges.shape[0] - 1
    best_m = np.full(S, M)
    sums = np.zeros(S)
    counts = np.zeros(S, dtype=np.int64)
    # each point's cell; the cell lookups mirror searchsorted(side="right") - 1
    for i in range(x.shape[0]):
        m = np.searchsorted(a_edges, x[i], side="right") - 1
        s = np.searchsorted(b_edges, y[i], side="right") - 1
        if m < best_m[s]:
            best_m[s] = m
            sums[s] = x[i]
            counts[s] = 1
        elif m == best_m[s]:
            sums[s] += x[i]
            counts[s] += 1
    out = np.full(S, x_far)
    for s in range(S):
        if counts[s] > 0:
            out[s] = sums[s] / counts[s]
    return out


if USE_NUMBA:
    ray_cast_2d = _ray_cast_2d_loop
    prism_cast = _prism_cast_loop
    grid_proximity = _grid_proximity_loop
else:
    ray_cast_2d = ray_cast_2d_numpy
    prism_cast = prism_cast_numpy
    grid_proximity = grid_proximity_numpy

# loop variants stay reachable for benchmarking / equivalence tests
ray_cast_2d_loop = _ray_cast_2d_loop
prism_cast_loop = _prism_cast_loop
grid_proximity_loop = _grid_proximity_loop
