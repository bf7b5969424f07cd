"""Camera models, rigid-transform algebra, rotation parameterizations and
angular error metrics.

Conventions used across the package:

* Poses map world points into the camera frame: ``x_cam = R @ x_world + t``.
* Pixel coordinates follow the pixel-center convention: the integer pair
  (u, v) addresses the center of pixel (u, v).
* Rotations are stored as 3x3 orthonormal matrices with det = +1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateInputError,
    InvalidInputError,
    UndefinedAngleError,
)

ORTHONORMALITY_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        if not (0 < self.cx < self.width) or not (0 < self.cy < self.height):
            raise InvalidInputError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class Pose:
    """Rigid world-to-camera transform: ``x_cam = rotation @ x_world + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = _frozen(self.rotation)
        t = _frozen(self.translation).reshape(3)
        if R.shape != (3, 3):
            raise InvalidInputError(f"rotation must be 3x3, got {R.shape}")
        err = np.abs(R.T @ R - np.eye(3)).max()
        if err > ORTHONORMALITY_TOL:
            raise InvalidInputError(f"rotation not orthonormal (max deviation {err:.3e})")
        if abs(np.linalg.det(R) - 1.0) > ORTHONORMALITY_TOL:
            raise InvalidInputError(f"rotation has det {np.linalg.det(R):.12f}, expected +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def center(self) -> np.ndarray:
        """Camera center in world coordinates, -R^T t."""
        return -self.rotation.T @ self.translation

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform world points (..., 3) into the camera frame."""
        return points @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        """3x4 row-major [R | t]."""
        return np.concatenate([self.rotation, self.translation[:, None]], axis=1)


def pose_compose(a: Pose, b: Pose) -> Pose:
    """Compose two poses: (a o b)(x) = a(b(x))."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def pose_inverse(p: Pose) -> Pose:
    return Pose(p.rotation.T, -p.rotation.T @ p.translation)


def relative_pose(i: Pose, j: Pose) -> Pose:
    """Transform from camera-i coordinates to camera-j coordinates, P_j o P_i^-1."""
    return pose_compose(j, pose_inverse(i))


def project_to_rotation(M: np.ndarray) -> np.ndarray:
    """Nearest rotation to ``M`` via SVD with determinant sign correction."""
    U, _, Vt = np.linalg.svd(M)
    d = np.sign(np.linalg.det(U @ Vt))
    return U @ np.diag([1.0, 1.0, d]) @ Vt


def axis_angle_rotation(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rodrigues formula for a rotation of ``angle_rad`` about ``axis``."""
    a = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(a)
    if n == 0:
        raise DegenerateInputError("rotation axis must be nonzero")
    a = a / n
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + math.sin(angle_rad) * K + (1 - math.cos(angle_rad)) * (K @ K)


def backproject(pixel: np.ndarray, depth: float, intr: CameraIntrinsics) -> np.ndarray:
    """Lift a pixel at the given metric depth into the camera frame.

    Returns ((u - cx) / fx * d, (v - cy) / fy * d, d).
    """
    if depth <= 0:
        raise InvalidInputError(f"depth must be positive, got {depth}")
    u, v = float(pixel[0]), float(pixel[1])
    return np.array([(u - intr.cx) / intr.fx * depth, (v - intr.cy) / intr.fy * depth, depth])


def backproject_grid(depth: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Lift every pixel of a depth image; returns (H, W, 3) camera-frame points.

    Rows with non-positive depth produce garbage and must be masked by the
    caller; no validity handling happens here.
    """
    h, w = depth.shape
    u = np.arange(w, dtype=np.float64)
    v = np.arange(h, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    x = (uu - intr.cx) / intr.fx * depth
    y = (vv - intr.cy) / intr.fy * depth
    return np.stack([x, y, depth], axis=-1)


def project(point: np.ndarray, intr: CameraIntrinsics) -> tuple[np.ndarray, float]:
    """Project a camera-frame point to (pixel, depth). Pixel may leave the image."""
    p = np.asarray(point, dtype=np.float64)
    z = float(p[2])
    if z <= 0:
        raise BehindCameraError(f"point depth {z} is not in front of the camera")
    return np.array([intr.fx * p[0] / z + intr.cx, intr.fy * p[1] / z + intr.cy]), z


def project_many(points: np.ndarray, intr: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection of (..., 3) camera points.

    Returns (pixels (..., 2), depths (...,), in_front mask). Points behind the
    camera are flagged rather than raising; their pixels are undefined.
    """
    p = np.asarray(points, dtype=np.float64)
    z = p[..., 2]
    in_front = z > 0
    zs = np.where(in_front, z, 1.0)
    px = np.stack([intr.fx * p[..., 0] / zs + intr.cx, intr.fy * p[..., 1] / zs + intr.cy], axis=-1)
    return px, z, in_front


def rot6d_encode(R: np.ndarray) -> np.ndarray:
    """First two columns of a rotation matrix as a 6-vector (a1, a2)."""
    R = np.asarray(R, dtype=np.float64)
    return np.concatenate([R[:, 0], R[:, 1]])


def rot6d_decode(r: np.ndarray) -> np.ndarray:
    """Gram-Schmidt two 3-vectors into a rotation matrix.

    b1 = a1 / |a1|; b2 = normalized (a2 - (b1.a2) b1); b3 = b1 x b2. The
    result is invariant to positive scaling of either input vector.
    """
    r = np.asarray(r, dtype=np.float64).reshape(6)
    a1, a2 = r[:3], r[3:]
    n1 = np.linalg.norm(a1)
    if n1 < 1e-12:
        raise DegenerateInputError("first 6d column has zero norm")
    b1 = a1 / n1
    u2 = a2 - (b1 @ a2) * b1
    n2 = np.linalg.norm(u2)
    if n2 < 1e-12 * max(1.0, np.linalg.norm(a2)) or n2 < 1e-300:
        raise DegenerateInputError("6d columns are parallel")
    b2 = u2 / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=1)


def plucker_field(pose: Pose, intr: CameraIntrinsics) -> np.ndarray:
    """Per-pixel Plucker ray encoding r = (d, o x d), shape (H, W, 6).

    d is the world-frame unit direction through each pixel center and o the
    camera center in world coordinates.
    """
    h, w = intr.height, intr.width
    u = np.arange(w, dtype=np.float64)
    v = np.arange(h, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    dirs_cam = np.stack([(uu - intr.cx) / intr.fx, (vv - intr.cy) / intr.fy, np.ones_like(uu)], axis=-1)
    dirs_world = dirs_cam @ pose.rotation  # R^T applied to rows
    dirs_world /= np.linalg.norm(dirs_world, axis=-1, keepdims=True)
    o = pose.center()
    moment = np.cross(np.broadcast_to(o, dirs_world.shape), dirs_world)
    return np.concatenate([dirs_world, moment], axis=-1)


def rotation_geodesic_deg(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic angle between two rotations in degrees.

    arccos((trace(Ra^T Rb) - 1) / 2) with the argument clamped to [-1, 1]
    to absorb rounding.
    """
    c = (np.trace(np.asarray(Ra).T @ np.asarray(Rb)) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def translation_angle_deg(ta: np.ndarray, tb: np.ndarray) -> float:
    """Angle between two translation directions in degrees."""
    a = np.asarray(ta, dtype=np.float64).reshape(3)
    b = np.asarray(tb, dtype=np.float64).reshape(3)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedAngleError("translation angle undefined for zero vectors")
    c = float(a @ b) / (na * nb)
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def save_poses_text(poses: list[Pose], path) -> None:
    """Write poses as stacked 3x4 row-major [R|t] blocks separated by blank lines."""
    blocks = []
    for p in poses:
        m = p.matrix()
        blocks.append("\n".join(" ".join(f"{x:.17g}" for x in row) for row in m))
    with open(path, "w") as f:
        f.write("\n\n".join(blocks) + "\n")


def load_poses_text(path) -> list[Pose]:
    """Read one or more stacked 3x4 pose blocks written by :func:`save_poses_text`."""
    with open(path) as f:
        rows = [line.split() for line in f if line.strip()]
    if len(rows) % 3 != 0:
        raise InvalidInputError(f"{path}: pose file must hold 3-row blocks, got {len(rows)} rows")
    poses = []
    for k in range(0, len(rows), 3):
        m = np.array([[float(x) for x in rows[k + r]] for r in range(3)])
        if m.shape != (3, 4):
            raise InvalidInputError(f"{path}: pose rows must have 4 columns")
        poses.append(Pose(m[:, :3], m[:, 3]))
    return poses
