"""Quasi-static planar pushing of a rigid object by the flat front face of an
omnidirectional base.

Ground friction uses an ellipsoidal limit surface centred on the object's centre
of pressure (COP): a support wrench ``(fx, fy, m)`` produces a twist proportional
to ``(fx, fy, m / rho**2)`` with ``rho`` the support radius.  The face/object
interface is a Coulomb contact with coefficient ``mu_robot``.  Line contacts are
represented by their two extreme points, which span every admissible pressure
distribution along the face.  Each step solves the resulting contact modes
(separate, stick, slide) for the object twist, integrates both bodies as exact
rigid motions and finally removes any residual penetration along the face
normal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from .geometry import Pose2, rot2

GRAVITY = 9.81
MANIFOLD_TOL = 1e-4
POINT_SPAN = 0.05
_EPS = 1e-10


class ContactType(IntEnum):
    NO_CONTACT = 0
    POINT = 1
    LINE = 2


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    shape: str  # "polygon" or "circle"
    mass: float
    support_radius: float
    mu_ground: float = 0.3
    mu_robot: float = 0.35
    vertices: tuple | None = None  # CCW, object frame
    radius: float | None = None
    height: float = 0.8
    cop_offset: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.shape not in ("polygon", "circle"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.mass <= 0 or self.support_radius <= 0 or self.height <= 0:
            raise ValueError("mass, support_radius and height must be positive")
        if self.mu_ground < 0 or self.mu_robot < 0:
            raise ValueError("friction coefficients must be non-negative")
        if self.shape == "circle":
            if self.radius is None or self.radius <= 0:
                raise ValueError("circle needs a positive radius")
        else:
            v = np.asarray(self.vertices, dtype=float)
            if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
                raise ValueError("polygon needs an (N>=3, 2) vertex list")
            if _signed_area(v) <= 0:
                raise ValueError("polygon vertices must be counter-clockwise")
            if not _is_simple(v):
                raise ValueError("polygon must be simple")
            object.__setattr__(self, "vertices", tuple(map(tuple, v.tolist())))
        object.__setattr__(self, "cop_offset", tuple(float(c) for c in self.cop_offset))

    @property
    def vertex_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def with_friction(self, mu_ground: float, mu_robot: float) -> "ObjectSpec":
        return replace(self, mu_ground=mu_ground, mu_robot=mu_robot)

    def near_extent(self) -> float:
        """Distance from the object origin to its boundary along -x (object frame)."""
        if self.shape == "circle":
            return self.radius
        return -float(self.vertex_array[:, 0].min())


def box(name: str, length: float, width: float, mass: float, height: float = 0.8, **kw) -> ObjectSpec:
    hx, hy = length / 2, width / 2
    verts = ((-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy))
    # mean distance of a uniform rectangle from its centre, used as support radius
    kw.setdefault("support_radius", _rect_mean_radius(length, width))
    return ObjectSpec(name=name, shape="polygon", vertices=verts, mass=mass, height=height, **kw)


def cylinder(name: str, radius: float, mass: float, height: float = 0.7, **kw) -> ObjectSpec:
    kw.setdefault("support_radius", 2.0 * radius / 3.0)
    return ObjectSpec(name=name, shape="circle", radius=radius, mass=mass, height=height, **kw)


def _rect_mean_radius(a: float, b: float, n: int = 64) -> float:
    xs = (np.arange(n) + 0.5) / n - 0.5
    X, Y = np.meshgrid(xs * a, xs * b)
    return float(np.hypot(X, Y).mean())


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


def _is_simple(v: np.ndarray) -> bool:
    n = len(v)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                return False
    return True


@dataclass(frozen=True)
class RobotSpec:
    half_width: float = 0.3
    front_x: float = 0.32
    base_height: float = 0.3
    body_depth: float = 0.64
    max_lin_speed: float = 0.5
    max_ang_speed: float = 1.0
    skin_range: float = 0.005  # the skin reports anything within this distance of the face

    def __post_init__(self):
        if self.half_width <= 0 or self.front_x <= 0 or self.body_depth <= 0:
            raise ValueError("robot dimensions must be positive")
        if not MANIFOLD_TOL <= self.skin_range < self.body_depth:
            raise ValueError("skin_range must lie in [manifold tolerance, body_depth)")
        if self.max_lin_speed <= 0 or self.max_ang_speed <= 0:
            raise ValueError("velocity limits must be positive")


@dataclass(frozen=True)
class WorldState:
    robot: Pose2
    object: Pose2
    t: float = 0.0
    rng_seed: int = 0


@dataclass(frozen=True)
class ContactManifold:
    segments: tuple = ()  # ((y_lo, y_hi), ...) sorted, disjoint, robot frame

    @property
    def empty(self) -> bool:
        return len(self.segments) == 0


@dataclass(frozen=True)
class ContactState:
    contact_type: ContactType
    l: float = math.nan
    p_C_R: tuple = (math.nan, math.nan)

    @property
    def in_contact(self) -> bool:
        return self.contact_type != ContactType.NO_CONTACT

    @classmethod
    def none(cls) -> "ContactState":
        return cls(ContactType.NO_CONTACT)


@dataclass(frozen=True)
class ControlCommand:
    v_x: float = 0.0
    v_y: float = 0.0
    omega: float = 0.0

    def as_tuple(self) -> tuple:
        return (self.v_x, self.v_y, self.omega)


# --------------------------------------------------------------------------
# geometry of the object relative to the face


def object_outline(obj: ObjectSpec, pose: Pose2) -> np.ndarray:
    """Polygon vertices in the world frame."""
    return pose.to_world(obj.vertex_array)


def cop_world(obj: ObjectSpec, pose: Pose2) -> np.ndarray:
    return pose.to_world(np.asarray(obj.cop_offset))


def _object_in_robot(state: WorldState, obj: ObjectSpec):
    """Return (vertices or centre) of the object in the robot frame."""
    if obj.shape == "circle":
        return state.robot.to_local(state.object.position)
    return state.robot.to_local(object_outline(obj, state.object))


def penetration_depth(state: WorldState, robot: RobotSpec, obj: ObjectSpec) -> float:
    """How far the object reaches behind the face plane inside the face strip."""
    hw, fx = robot.half_width, robot.front_x
    local = _object_in_robot(state, obj)
    if obj.shape == "circle":
        cx, cy = local
        yc = min(max(cy, -hw), hw)
        dy = yc - cy
        if abs(dy) >= obj.radius:
            return 0.0
        xmin = cx - math.sqrt(obj.radius ** 2 - dy * dy)
    else:
        cand = []
        n = len(local)
        for i in range(n):
            p, q = local[i], local[(i + 1) % n]
            if -hw <= p[1] <= hw:
                cand.append(p[0])
            for yb in (-hw, hw):
                if (p[1] - yb) * (q[1] - yb) < 0:
                    s = (yb - p[1]) / (q[1] - p[1])
                    cand.append(p[0] + s * (q[0] - p[0]))
        if not cand:
            return 0.0
        xmin = min(cand)
    if xmin >= fx or xmin <= fx - robot.body_depth:
        return 0.0
    return fx - xmin


def contact_manifold(state: WorldState, robot: RobotSpec, obj: ObjectSpec, tol: float = MANIFOLD_TOL) -> ContactManifold:
    """Intervals of the face (robot-frame y) touched by the object boundary."""
    hw, fx = robot.half_width, robot.front_x
    lo_x, hi_x = fx - robot.body_depth, fx + tol
    local = _object_in_robot(state, obj)
    raw = []
    if obj.shape == "circle":
        cx, cy = local
        r = obj.radius
        d = cx - fx
        if d - r <= tol and d - r >= -robot.body_depth:
            w = math.sqrt(r * r - d * d) if abs(d) < r else 0.0
            raw.append((cy - w, cy + w))
    else:
        n = len(local)
        for i in range(n):
            p, q = local[i], local[(i + 1) % n]
            seg = _clip_segment_x(p, q, lo_x, hi_x)
            if seg is not None:
                a, b = seg
                raw.append((min(a[1], b[1]), max(a[1], b[1])))
    clipped = []
    for a, b in raw:
        a, b = max(a, -hw), min(b, hw)
        if a <= b:
            clipped.append((a, b))
    return ContactManifold(tuple(_merge_intervals(clipped)))


def _clip_segment_x(p, q, lo: float, hi: float):
    """Clip segment pq to lo <= x <= hi."""
    t0, t1 = 0.0, 1.0
    dx = q[0] - p[0]
    for bound, sign in ((lo, -1.0), (hi, 1.0)):
        # constraint: sign * x <= sign * bound
        num = sign * (bound - p[0])
        den = sign * dx
        if den == 0.0:
            if num < 0:
                return None
            continue
        s = num / den
        if den > 0:
            t1 = min(t1, s)
        else:
            t0 = max(t0, s)
    if t0 > t1:
        return None
    a = (p[0] + t0 * dx, p[1] + t0 * (q[1] - p[1]))
    b = (p[0] + t1 * dx, p[1] + t1 * (q[1] - p[1]))
    return a, b


def _merge_intervals(iv):
    iv = sorted(iv)
    out = []
    for a, b in iv:
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def classify_contact(m: ContactManifold, front_x: float = RobotSpec.front_x) -> ContactState:
    """Contact labelling rule: narrow, unbroken contact is a point, anything else a line."""
    if m.empty:
        return ContactState.none()
    segs = m.segments
    lo, hi = segs[0][0], segs[-1][1]
    span = hi - lo
    max_gap = max((segs[i + 1][0] - segs[i][1] for i in range(len(segs) - 1)), default=0.0)
    if span < POINT_SPAN and max_gap <= POINT_SPAN:
        lengths = np.array([b - a for a, b in segs])
        mids = np.array([(a + b) / 2 for a, b in segs])
        l = float(np.average(mids, weights=lengths)) if lengths.sum() > 0 else float(mids.mean())
        ctype = ContactType.POINT
    else:
        l = 0.5 * (lo + hi)
        ctype = ContactType.LINE
    return ContactState(ctype, l, (front_x, l))


# --------------------------------------------------------------------------
# dynamics


def clamp_command(cmd: ControlCommand, robot: RobotSpec) -> tuple:
    """Scale the whole twist so both speed limits hold (path curvature is kept)."""
    vx, vy, w = cmd.v_x, cmd.v_y, cmd.omega
    if not all(math.isfinite(c) for c in (vx, vy, w)):
        raise ValueError(f"non-finite command {cmd!r}")
    speed = math.hypot(vx, vy)
    scale = 1.0
    if speed > robot.max_lin_speed:
        scale = robot.max_lin_speed / speed
    if abs(w) * scale > robot.max_ang_speed:
        scale = robot.max_ang_speed / abs(w)
    return vx * scale, vy * scale, w * scale


def _cross_z(w: float, r) -> np.ndarray:
    return np.array([-w * r[1], w * r[0]])


def rigid_motion(pos: np.ndarray, theta: float, v: np.ndarray, w: float, ref: np.ndarray, dt: float):
    """Move a body by the constant planar twist (v at point ``ref``, w) for dt."""
    phi = w * dt
    if abs(phi) < 1e-13:
        return pos + v * dt, theta
    centre = ref + np.array([-v[1], v[0]]) / w
    return centre + rot2(phi) @ (pos - centre), theta + phi


def _point_modes(r, vp, n, t, mu, rho2):
    """Candidate object twists for a single contact, in preference order.

    Returns list of twists (vx, vy, w) as arrays; empty list if the pusher moves away.
    """
    if vp @ n <= _EPS:
        return [np.zeros(3)]
    J = np.array([[1.0, 0.0, -r[1]], [0.0, 1.0, r[0]]])
    A = np.array([1.0, 1.0, 1.0 / rho2])
    K = (J * A) @ J.T
    f = np.linalg.solve(K, vp)
    fn, ft = f @ n, f @ t
    out = []
    if fn > 0 and abs(ft) <= mu * fn * (1 + 1e-12) + _EPS:
        out.append(A * (J.T @ f))
    sgn = 1.0 if ft >= 0 else -1.0
    e = n + sgn * mu * t
    lam = (vp @ n) / ((K @ e) @ n)
    if lam >= 0:
        out.append(lam * A * (J.T @ e))
    return out


def solve_object_twist(contacts, cop, robot_pos, v_r, w_r, n, t, mu, rho):
    """Quasi-static object twist (vx, vy, w at the COP) for 1 or 2 face contacts."""
    rho2 = rho * rho
    vps = [v_r + _cross_z(w_r, p - robot_pos) for p in contacts]
    if all(vp @ n <= _EPS for vp in vps):
        return np.zeros(3)
    rs = [p - cop for p in contacts]
    if len(contacts) == 1:
        return _point_modes(rs[0], vps[0], n, t, mu, rho2)[0]

    a = rs[0] @ n
    b1, b2 = rs[0] @ t, rs[1] @ t

    # line contact, sticking: object follows the face rigidly
    v_o = v_r + _cross_z(w_r, cop - robot_pos)
    Fn, Ft, M = v_o @ n, v_o @ t, rho2 * w_r
    lam1 = (a * Ft - M - b2 * Fn) / (b1 - b2)
    lam2 = Fn - lam1
    if Fn > 0 and lam1 >= -_EPS and lam2 >= -_EPS and abs(Ft) <= mu * Fn * (1 + 1e-12) + _EPS:
        return np.array([v_o[0], v_o[1], w_r])

    # line contact, sliding along the face while co-rotating
    lam_sum = vps[0] @ n + w_r * b1
    if lam_sum > 0:
        for sig in (1.0, -1.0):
            rhs = a * sig * mu * lam_sum - rho2 * w_r
            l1 = (rhs - b2 * lam_sum) / (b1 - b2)
            l2 = lam_sum - l1
            if l1 < -_EPS or l2 < -_EPS:
                continue
            vel = lam_sum * (n + sig * mu * t)
            rel = sig * mu * lam_sum + w_r * a - vps[0] @ t
            if sig * rel <= _EPS:
                return np.array([vel[0], vel[1], w_r])

    # single extreme point in contact, the other one must not penetrate
    best = None
    for i in (0, 1):
        j = 1 - i
        for V in _point_modes(rs[i], vps[i], n, t, mu, rho2):
            vcj = V[:2] + _cross_z(V[2], rs[j])
            if (vcj - vps[j]) @ n >= -1e-9:
                return V
            if best is None:
                best = V
    return best if best is not None else np.zeros(3)


def _contact_points(state: WorldState, robot: RobotSpec, obj: ObjectSpec):
    m = contact_manifold(state, robot, obj)
    if m.empty:
        return []
    lo, hi = m.segments[0][0], m.segments[-1][1]
    pts = [(robot.front_x, lo)] if hi - lo <= 1e-9 else [(robot.front_x, lo), (robot.front_x, hi)]
    return [state.robot.to_world(p) for p in pts]


def step(state: WorldState, cmd: ControlCommand, dt: float, robot: RobotSpec, obj: ObjectSpec) -> WorldState:
    if not (0.0 < dt <= 0.1):
        raise ValueError(f"dt must be in (0, 0.1], got {dt}")
    vx, vy, w = clamp_command(cmd, robot)
    rp, rth = state.robot.position, state.robot.theta
    R = rot2(rth)
    v_r = R @ np.array([vx, vy])
    n, t = R[:, 0], R[:, 1]

    op, oth = state.object.position, state.object.theta
    V = np.zeros(3)
    contacts = _contact_points(state, robot, obj)
    cop = cop_world(obj, state.object)
    if contacts:
        V = solve_object_twist(contacts, cop, rp, v_r, w, n, t, obj.mu_robot, obj.support_radius)

    new_rp, new_rth = rigid_motion(rp, rth, v_r, w, rp, dt)
    if np.any(V != 0.0):
        op, oth = rigid_motion(op, oth, V[:2], V[2], cop, dt)
    new = WorldState(Pose2(*new_rp, new_rth), Pose2(*op, oth), state.t + dt, state.rng_seed)
    return resolve_penetration(new, robot, obj)


def resolve_penetration(state: WorldState, robot: RobotSpec, obj: ObjectSpec) -> WorldState:
    depth = penetration_depth(state, robot, obj)
    if depth <= 0.0:
        return state
    n = state.robot.rotation()[:, 0]
    p = state.object.position + depth * n
    return replace(state, object=Pose2(p[0], p[1], state.object.theta))


def contact_point_world(state: WorldState, cs: ContactState, robot: RobotSpec) -> np.ndarray | None:
    if not cs.in_contact:
        return None
    return state.robot.to_world(np.array([robot.front_x, cs.l]))
