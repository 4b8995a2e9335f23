"""Rigid poses, trajectories, and detector-to-world transforms.

Rotations are stored as unit quaternions in (w, x, y, z) order and map
detector-frame vectors into the world frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

logger = logging.getLogger(__name__)

IDENTITY_QUAT = (1.0, 0.0, 0.0, 0.0)


class NonUnitDirection(ValueError):
    pass


class OutOfRange(ValueError):
    pass


class TrajectoryError(ValueError):
    pass


def normalize_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ValueError("zero quaternion")
    return q / n


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def yaw_quat(yaw: float) -> np.ndarray:
    """Rotation about +z by ``yaw`` radians."""
    return quat_from_axis_angle((0.0, 0.0, 1.0), yaw)


def _rot(q) -> Rotation:
    return Rotation.from_quat(q, scalar_first=True)


def slerp(q0, q1, u):
    """Shortest-path spherical interpolation, vectorized over ``u``.

    ``q0``/``q1`` may be single quaternions or arrays of shape (n, 4)
    matching ``u``.
    """
    q0 = np.atleast_2d(np.asarray(q0, dtype=float))
    q1 = np.atleast_2d(np.asarray(q1, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))[:, None]
    dot = np.sum(q0 * q1, axis=-1, keepdims=True)
    # q and -q are the same rotation; take the short way round
    q1 = np.where(dot < 0.0, -q1, q1)
    dot = np.abs(dot)
    near = dot > 0.9995
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    sin_theta = np.sin(theta)
    safe = np.where(near, 1.0, sin_theta)
    a = np.where(near, 1.0 - u, np.sin((1.0 - u) * theta) / safe)
    b = np.where(near, u, np.sin(u * theta) / safe)
    out = a * q0 + b * q1
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


@dataclass(frozen=True)
class Pose:
    """Detector pose at time ``t``: world = R(rotation) @ p_det + translation."""

    t: float
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.array(IDENTITY_QUAT))

    def __post_init__(self):
        tr = np.array(self.translation, dtype=float).reshape(3)
        q = np.array(self.rotation, dtype=float).reshape(4)
        # renormalizing an already-unit quaternion can flip low bits; skip it
        # so poses round-trip exactly through text files
        if abs(np.linalg.norm(q) - 1.0) > 1e-12:
            q = normalize_quat(q)
        tr.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "translation", tr)
        object.__setattr__(self, "rotation", q)

    @property
    def matrix(self) -> np.ndarray:
        return _rot(self.rotation).as_matrix()

    def inverse(self) -> "Pose":
        r_inv = _rot(self.rotation).inv()
        return Pose(self.t, -r_inv.apply(self.translation), r_inv.as_quat(scalar_first=True))

    def compose(self, other: "Pose") -> "Pose":
        """``self ∘ other``: apply ``other`` first. Keeps ``self.t``."""
        r = _rot(self.rotation)
        q = (r * _rot(other.rotation)).as_quat(scalar_first=True)
        return Pose(self.t, r.apply(other.translation) + self.translation, q)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return (
            self.t == other.t
            and np.array_equal(self.translation, other.translation)
            and np.array_equal(self.rotation, other.rotation)
        )

    def __hash__(self):
        return hash((self.t, self.translation.tobytes(), self.rotation.tobytes()))


def transform_point(pose: Pose, p_det) -> np.ndarray:
    """Map a detector-frame point (or an (n, 3) array of points) to world."""
    p = np.asarray(p_det, dtype=float)
    return _rot(pose.rotation).apply(p) + pose.translation


def transform_direction(pose: Pose, d_det) -> np.ndarray:
    d = np.asarray(d_det, dtype=float)
    norms = np.linalg.norm(d, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise NonUnitDirection(f"direction norm {norms} is not 1")
    out = _rot(pose.rotation).apply(d)
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


class Trajectory:
    """Time-ordered poses with linear/slerp interpolation between knots."""

    def __init__(self, poses: Iterable[Pose]):
        poses = list(poses)
        if not poses:
            raise TrajectoryError("trajectory must contain at least one pose")
        times = np.array([p.t for p in poses])
        if np.any(np.diff(times) <= 0):
            raise TrajectoryError("trajectory timestamps must be strictly increasing")
        self.poses: tuple[Pose, ...] = tuple(poses)
        self.times = times
        self.translations = np.array([p.translation for p in poses])
        self.rotations = np.array([p.rotation for p in poses])
        for a in (self.times, self.translations, self.rotations):
            a.setflags(write=False)

    def __len__(self):
        return len(self.poses)

    def __iter__(self):
        return iter(self.poses)

    def __getitem__(self, i) -> Pose:
        return self.poses[i]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.poses == other.poses

    @property
    def t_first(self) -> float:
        return float(self.times[0])

    @property
    def t_last(self) -> float:
        return float(self.times[-1])

    def interpolate(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized lookup: translations (n, 3) and quaternions (n, 4)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < self.times[0]) or np.any(t > self.times[-1]):
            raise OutOfRange(
                f"t outside trajectory span [{self.t_first}, {self.t_last}]"
            )
        if len(self.poses) == 1:
            n = len(t)
            return np.repeat(self.translations, n, axis=0), np.repeat(self.rotations, n, axis=0)
        i = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        t0, t1 = self.times[i], self.times[i + 1]
        u = (t - t0) / (t1 - t0)
        trans = self.translations[i] + u[:, None] * (self.translations[i + 1] - self.translations[i])
        quats = slerp(self.rotations[i], self.rotations[i + 1], u)
        # knots are returned exactly
        at_knot0 = u == 0.0
        at_knot1 = u == 1.0
        trans[at_knot0] = self.translations[i[at_knot0]]
        quats[at_knot0] = self.rotations[i[at_knot0]]
        trans[at_knot1] = self.translations[i[at_knot1] + 1]
        quats[at_knot1] = self.rotations[i[at_knot1] + 1]
        return trans, quats

    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.translations, axis=0), axis=1)))


def pose_at(traj: Trajectory, t: float) -> Pose:
    trans, quats = traj.interpolate(t)
    return Pose(t, trans[0], quats[0])


def read_trajectory(path) -> Trajectory:
    """Parse ``t x y z qw qx qy qz`` lines; ``#`` starts a comment line."""
    poses = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise TrajectoryError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
        v = [float(x) for x in parts]
        poses.append(Pose(v[0], v[1:4], v[4:8]))
    return Trajectory(poses)


def format_trajectory(traj: Trajectory, header: Sequence[str] = ()) -> str:
    lines = [f"# {h}" for h in header]
    lines.append("# t x y z qw qx qy qz")
    for p in traj:
        vals = [p.t, *p.translation, *p.rotation]
        lines.append(" ".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def write_trajectory(traj: Trajectory, path, header: Sequence[str] = ()) -> None:
    Path(path).write_text(format_trajectory(traj, header))
