"""World model: extended-target geometry, AGV trajectory, ray casting.

Scenes are loaded from YAML documents (see ``configs/default_scene.yaml`` and
the schema notes in the README), validated once, and treated as immutable
afterwards.  All operations here are pure functions of their inputs, so a
single Scene can be shared across parallel Monte Carlo trials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import yaml

BOUNDARY_TOL = 1e-6


class SceneValidationError(ValueError):
    """A scene document violates the schema or a geometric invariant."""


class GeometryError(ValueError):
    """A geometric precondition was violated (e.g. ray origin inside a target)."""


def wrap_angle(a: float) -> float:
    """Normalize an angle to [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class Pose:
    """2D pose; heading is normalized to [-pi, pi) on construction."""

    x: float
    y: float
    heading: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y) and np.isfinite(self.heading)):
            raise SceneValidationError("pose components must be finite")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Rectangle:
    center: tuple[float, float]
    width: float
    height: float
    rotation: float = 0.0

    def __post_init__(self):
        if not self.width > 0:
            raise SceneValidationError("rectangle width must be > 0")
        if not self.height > 0:
            raise SceneValidationError("rectangle height must be > 0")

    def _to_local(self, points: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        rot = np.array([[c, s], [-s, c]])
        return (np.atleast_2d(points) - np.asarray(self.center)) @ rot.T

    def corners(self) -> np.ndarray:
        hw, hh = self.width / 2.0, self.height / 2.0
        local = np.array([[hw, hh], [-hw, hh], [-hw, -hh], [hw, -hh]])
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.asarray(self.center)

    def segments(self) -> np.ndarray:
        """Boundary as an array of shape (4, 2, 2): (segment, endpoint, xy)."""
        pts = self.corners()
        return np.stack([np.stack([pts[i], pts[(i + 1) % 4]]) for i in range(4)])

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """Signed distance to the boundary; negative inside."""
        local = self._to_local(points)
        q = np.abs(local) - np.array([self.width / 2.0, self.height / 2.0])
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise SceneValidationError("circle radius must be > 0")

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        d = np.linalg.norm(np.atleast_2d(points) - np.asarray(self.center), axis=-1)
        return d - self.radius


Shape = Union[Rectangle, Circle]


def reference_points(shape: Shape, k: int) -> np.ndarray:
    """Pick ``k`` representative boundary points of a shape.

    Rectangles use side midpoints in the order right, left, top, bottom
    (local frame, before rotation), cycling when k > 4.  Circles use k
    equally spaced boundary points starting at angle 0.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if isinstance(shape, Circle):
        ang = 2.0 * math.pi * np.arange(k) / k
        return np.asarray(shape.center) + shape.radius * np.stack(
            [np.cos(ang), np.sin(ang)], axis=-1
        )
    hw, hh = shape.width / 2.0, shape.height / 2.0
    mids = np.array([[hw, 0.0], [-hw, 0.0], [0.0, hh], [0.0, -hh]])
    local = mids[np.arange(k) % 4]
    c, s = math.cos(shape.rotation), math.sin(shape.rotation)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.asarray(shape.center)


@dataclass(frozen=True)
class ExtendedTarget:
    id: int
    shape: Shape
    reference_points: np.ndarray  # (k, 2), all on the shape boundary

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.reference_points, dtype=float))
        if pts.size == 0:
            raise SceneValidationError(f"target {self.id}: reference_points empty")
        sd = self.shape.signed_distance(pts)
        if np.any(np.abs(sd) > BOUNDARY_TOL):
            raise SceneValidationError(
                f"target {self.id}: reference point off boundary (|sd|={np.abs(sd).max():.2e})"
            )
        object.__setattr__(self, "reference_points", pts)


@dataclass(frozen=True)
class Trajectory:
    waypoints: np.ndarray  # (n, 2)
    speed: float
    step_interval: float

    def __post_init__(self):
        wp = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        if wp.shape[0] < 2:
            raise SceneValidationError("trajectory needs >= 2 waypoints")
        if not self.speed > 0:
            raise SceneValidationError("trajectory speed must be > 0")
        if not self.step_interval > 0:
            raise SceneValidationError("trajectory step_interval must be > 0")
        object.__setattr__(self, "waypoints", wp)

    @property
    def closed(self) -> bool:
        return bool(np.allclose(self.waypoints[0], self.waypoints[-1]))

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)

    @property
    def total_length(self) -> float:
        return float(self.segment_lengths.sum())


def trajectory_pose(trajectory: Trajectory, t: float) -> Pose:
    """Constant-speed pose along the waypoint chain at time ``t``.

    Closed loops wrap; open paths clamp to the final pose.  Heading is the
    direction of travel of the active segment.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    lengths = trajectory.segment_lengths
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    total = cum[-1]
    s = trajectory.speed * t
    if trajectory.closed:
        s = s % total
    else:
        s = min(s, total)
    # active segment: last i with cum[i] <= s (clamped to a real segment)
    i = int(np.searchsorted(cum, s, side="right") - 1)
    i = min(i, len(lengths) - 1)
    frac = (s - cum[i]) / lengths[i]
    p = trajectory.waypoints[i] + frac * (trajectory.waypoints[i + 1] - trajectory.waypoints[i])
    d = trajectory.waypoints[i + 1] - trajectory.waypoints[i]
    return Pose(float(p[0]), float(p[1]), math.atan2(d[1], d[0]))


@dataclass(frozen=True)
class RayHit:
    point: np.ndarray
    range: float
    target_id: int


@dataclass(frozen=True)
class GroundTruthScan:
    """Vectorized raycast results; ``bearings`` are relative to the pose heading."""

    bearings: np.ndarray    # (n,)
    ranges: np.ndarray      # (n,)
    points: np.ndarray      # (n, 2) world frame
    target_ids: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.ranges)


@dataclass
class Scene:
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    targets: list[ExtendedTarget]
    trajectory: Trajectory
    # flattened primitive caches for vectorized ray casting
    _seg_a: np.ndarray = field(init=False, repr=False)
    _seg_b: np.ndarray = field(init=False, repr=False)
    _seg_tid: np.ndarray = field(init=False, repr=False)
    _circ_c: np.ndarray = field(init=False, repr=False)
    _circ_r: np.ndarray = field(init=False, repr=False)
    _circ_tid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.bounds_min = np.asarray(self.bounds_min, dtype=float)
        self.bounds_max = np.asarray(self.bounds_max, dtype=float)
        seg_a, seg_b, seg_tid = [], [], []
        circ_c, circ_r, circ_tid = [], [], []
        for tgt in self.targets:
            if isinstance(tgt.shape, Rectangle):
                for seg in tgt.shape.segments():
                    seg_a.append(seg[0])
                    seg_b.append(seg[1])
                    seg_tid.append(tgt.id)
            else:
                circ_c.append(np.asarray(tgt.shape.center, dtype=float))
                circ_r.append(tgt.shape.radius)
                circ_tid.append(tgt.id)
        self._seg_a = np.array(seg_a).reshape(-1, 2)
        self._seg_b = np.array(seg_b).reshape(-1, 2)
        self._seg_tid = np.array(seg_tid, dtype=int)
        self._circ_c = np.array(circ_c).reshape(-1, 2)
        self._circ_r = np.array(circ_r, dtype=float)
        self._circ_tid = np.array(circ_tid, dtype=int)
        self._validate()

    def _validate(self):
        if not np.all(self.bounds_max > self.bounds_min):
            raise SceneValidationError("bounds: max must exceed min componentwise")
        for tgt in self.targets:
            if isinstance(tgt.shape, Rectangle):
                extreme = tgt.shape.corners()
            else:
                c = np.asarray(tgt.shape.center)
                r = tgt.shape.radius
                extreme = np.array([c - r, c + r])
            if np.any(extreme < self.bounds_min) or np.any(extreme > self.bounds_max):
                raise SceneValidationError(f"target {tgt.id} extends outside scene bounds")
        wp = self.trajectory.waypoints
        for tgt in self.targets:
            if np.any(tgt.shape.signed_distance(wp) <= 0.0):
                raise SceneValidationError(
                    f"trajectory waypoint inside target {tgt.id}"
                )
        for i in range(len(wp) - 1):
            if self._segment_blocked(wp[i], wp[i + 1]):
                raise SceneValidationError(
                    f"trajectory segment {i} intersects a target"
                )

    def _segment_blocked(self, p0: np.ndarray, p1: np.ndarray) -> bool:
        d = p1 - p0
        length = float(np.linalg.norm(d))
        if length == 0.0:
            return False
        u = d / length
        t, _ = _cast_rays(self, p0, u[None, :])
        return bool(t[0] < length)

    def contains_point_in_target(self, point: np.ndarray) -> bool:
        for tgt in self.targets:
            if float(tgt.shape.signed_distance(point)[0]) < 0.0:
                return True
        return False


def _cast_rays(scene: Scene, origin: np.ndarray, dirs: np.ndarray, eps: float = 1e-9):
    """Distance to the nearest boundary per unit direction, inf when no hit.

    Returns (ranges, target_ids); used by both raycast and validation.
    """
    nb = dirs.shape[0]
    best_t = np.full(nb, np.inf)
    best_tid = np.full(nb, -1, dtype=int)
    if len(scene._seg_a):
        a, b = scene._seg_a, scene._seg_b
        d = b - a
        ao = a - origin  # (S, 2)
        denom = dirs[:, 0:1] * d[None, :, 1] - dirs[:, 1:2] * d[None, :, 0]  # (B, S)
        num_t = ao[:, 0] * d[:, 1] - ao[:, 1] * d[:, 0]  # (S,)
        num_s = ao[None, :, 0] * dirs[:, 1:2] - ao[None, :, 1] * dirs[:, 0:1]  # (B, S)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num_t[None, :] / denom
            s = num_s / denom
        valid = (np.abs(denom) > 1e-15) & (t > eps) & (s >= 0.0) & (s <= 1.0)
        t = np.where(valid, t, np.inf)
        idx = np.argmin(t, axis=1)
        tmin = t[np.arange(nb), idx]
        upd = tmin < best_t
        best_t[upd] = tmin[upd]
        best_tid[upd] = scene._seg_tid[idx[upd]]
    if len(scene._circ_c):
        oc = scene._circ_c - origin  # (C, 2)
        proj = dirs @ oc.T  # (B, C)
        d2 = np.sum(oc**2, axis=1)[None, :] - proj**2
        disc = scene._circ_r[None, :] ** 2 - d2
        sq = np.sqrt(np.maximum(disc, 0.0))
        t1 = proj - sq
        t2 = proj + sq
        t = np.where(t1 > eps, t1, np.where(t2 > eps, t2, np.inf))
        t = np.where(disc >= 0.0, t, np.inf)
        idx = np.argmin(t, axis=1)
        tmin = t[np.arange(nb), idx]
        upd = tmin < best_t
        best_t[upd] = tmin[upd]
        best_tid[upd] = scene._circ_tid[idx[upd]]
    return best_t, best_tid


def raycast(scene: Scene, origin: np.ndarray, bearing: float) -> Optional[RayHit]:
    """Nearest first-reflection point of a single ray, or None."""
    origin = np.asarray(origin, dtype=float)
    if scene.contains_point_in_target(origin):
        raise GeometryError("ray origin lies inside a target")
    u = np.array([[math.cos(bearing), math.sin(bearing)]])
    t, tid = _cast_rays(scene, origin, u)
    if not np.isfinite(t[0]):
        return None
    return RayHit(point=origin + t[0] * u[0], range=float(t[0]), target_id=int(tid[0]))


def ground_truth_scan(
    scene: Scene, pose: Pose, bearings: Sequence[float]
) -> GroundTruthScan:
    """Raycast a fan of bearings (relative to the pose heading); misses dropped."""
    bearings = np.asarray(bearings, dtype=float)
    if bearings.size == 0:
        raise ValueError("bearings must be non-empty")
    origin = pose.position
    if scene.contains_point_in_target(origin):
        raise GeometryError("scan origin lies inside a target")
    world = pose.heading + bearings
    dirs = np.stack([np.cos(world), np.sin(world)], axis=-1)
    t, tid = _cast_rays(scene, origin, dirs)
    hit = np.isfinite(t)
    points = origin + t[hit, None] * dirs[hit]
    return GroundTruthScan(
        bearings=bearings[hit], ranges=t[hit], points=points, target_ids=tid[hit]
    )


# ---------------------------------------------------------------------------
# scene document parsing


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise SceneValidationError(f"{where}: missing field '{key}'")
    return mapping[key]


def _parse_target(doc: dict, default_ref_count: int) -> ExtendedTarget:
    tid = int(_require(doc, "id", "target"))
    where = f"target {tid}"
    kind = _require(doc, "kind", where)
    if kind == "rect":
        shape: Shape = Rectangle(
            center=tuple(_require(doc, "center", where)),
            width=float(_require(doc, "width", where)),
            height=float(_require(doc, "height", where)),
            rotation=float(doc.get("rotation", 0.0)),
        )
    elif kind == "circle":
        shape = Circle(
            center=tuple(_require(doc, "center", where)),
            radius=float(_require(doc, "radius", where)),
        )
    else:
        raise SceneValidationError(f"{where}: unknown kind '{kind}' (expected rect|circle)")
    if "ref_points" in doc:
        refs = np.asarray(doc["ref_points"], dtype=float)
    else:
        refs = reference_points(shape, int(doc.get("ref_count", default_ref_count)))
    return ExtendedTarget(id=tid, shape=shape, reference_points=refs)


def load_scene(source: Union[str, Path, dict], default_ref_count: int = 4) -> Scene:
    """Parse and validate a scene document (YAML path, YAML text, or mapping)."""
    if isinstance(source, dict):
        doc = source
    else:
        p = Path(source)
        text = p.read_text() if p.exists() else str(source)
        doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise SceneValidationError("scene document must be a mapping")
    bounds = _require(doc, "bounds", "scene")
    tr = _require(doc, "trajectory", "scene")
    targets = [_parse_target(t, default_ref_count) for t in _require(doc, "targets", "scene")]
    ids = [t.id for t in targets]
    if len(set(ids)) != len(ids):
        raise SceneValidationError("duplicate target ids")
    trajectory = Trajectory(
        waypoints=np.asarray(_require(tr, "waypoints", "trajectory"), dtype=float),
        speed=float(_require(tr, "speed", "trajectory")),
        step_interval=float(_require(tr, "step_interval", "trajectory")),
    )
    return Scene(
        bounds_min=np.asarray(_require(bounds, "min", "bounds"), dtype=float),
        bounds_max=np.asarray(_require(bounds, "max", "bounds"), dtype=float),
        targets=targets,
        trajectory=trajectory,
    )
