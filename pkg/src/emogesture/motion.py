"""Pose data model: 6D rotations, motion offsets, skeletons and clip files.

A pose sequence is an ``N x (J*6)`` array; each joint contributes the first two
columns of its local rotation matrix, stacked as ``(c1x, c1y, c1z, c2x, c2y, c2z)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import LoadError, ShapeError, ValidationError

ORTHO_TOL = 1e-5


@dataclass(frozen=True)
class SkeletonSpec:
    parents: tuple[int, ...]
    offsets: np.ndarray = field(repr=False)
    names: tuple[str, ...] = ()

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.float64)
        object.__setattr__(self, "offsets", offsets)
        j = len(self.parents)
        if j < 2:
            raise ValidationError(f"skeleton needs at least 2 joints, got {j}")
        if offsets.shape != (j, 3):
            raise ShapeError(f"bone offsets must be ({j}, 3), got {offsets.shape}")
        if not np.all(np.isfinite(offsets)):
            raise ValidationError("bone offsets must be finite")
        roots = [k for k, p in enumerate(self.parents) if p < 0]
        if len(roots) != 1:
            raise ValidationError(f"skeleton must have exactly one root, found {len(roots)}")
        for k, p in enumerate(self.parents):
            if p >= j or p == k:
                raise ValidationError(f"joint {k} has invalid parent {p}")
        self.order  # raises on cycles

    @property
    def n_joints(self) -> int:
        return len(self.parents)

    @property
    def order(self) -> np.ndarray:
        """Joint indices sorted so every parent precedes its children."""
        children = [[] for _ in self.parents]
        root = None
        for k, p in enumerate(self.parents):
            if p < 0:
                root = k
            else:
                children[p].append(k)
        out, stack = [], [root]
        while stack:
            k = stack.pop()
            out.append(k)
            stack.extend(reversed(children[k]))
        if len(out) != self.n_joints:
            raise ValidationError("parent graph is not a tree")
        return np.asarray(out, dtype=np.int64)


# Upper body used by the synthetic corpus (J=16).
UPPER_BODY_JOINTS = (
    "spine", "chest", "neck", "head",
    "l_clavicle", "l_shoulder", "l_elbow", "l_wrist",
    "r_clavicle", "r_shoulder", "r_elbow", "r_wrist",
    "l_finger_a", "l_finger_b", "r_finger_a", "r_finger_b",
)
_UPPER_BODY_PARENTS = (-1, 0, 1, 2, 1, 4, 5, 6, 1, 8, 9, 10, 7, 7, 11, 11)
_UPPER_BODY_OFFSETS = (
    (0.0, 0.0, 0.0), (0.0, 0.25, 0.0), (0.0, 0.2, 0.0), (0.0, 0.12, 0.0),
    (0.08, 0.15, 0.0), (0.12, 0.0, 0.0), (0.28, 0.0, 0.0), (0.25, 0.0, 0.0),
    (-0.08, 0.15, 0.0), (-0.12, 0.0, 0.0), (-0.28, 0.0, 0.0), (-0.25, 0.0, 0.0),
    (0.08, 0.0, 0.02), (0.08, 0.0, -0.02), (-0.08, 0.0, 0.02), (-0.08, 0.0, -0.02),
)


def upper_body_skeleton() -> SkeletonSpec:
    return SkeletonSpec(_UPPER_BODY_PARENTS, np.array(_UPPER_BODY_OFFSETS), UPPER_BODY_JOINTS)


@dataclass(frozen=True)
class PoseSequence:
    frames: np.ndarray
    fps: float = 15.0

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 2 or frames.shape[1] % 6:
            raise ShapeError(f"pose frames must be N x (J*6), got {frames.shape}")
        if frames.shape[0] < 2:
            raise ShapeError(f"pose sequence needs at least 2 frames, got {frames.shape[0]}")
        if not np.all(np.isfinite(frames)):
            raise ValidationError("pose frames contain non-finite values")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_joints(self) -> int:
        return self.frames.shape[1] // 6


def rot6d_to_matrix(r6) -> np.ndarray:
    """Map 6D coefficients ``(..., 6)`` to rotation matrices ``(..., 3, 3)``.

    Gram-Schmidt on the two 3-vectors; the third column is their cross
    product. Raises :class:`DegenerateRotationError` for zero or parallel
    inputs.
    """
    r6 = np.asarray(r6, dtype=np.float64)
    if r6.shape[-1] != 6:
        raise ShapeError(f"last axis must have 6 coefficients, got {r6.shape}")
    return kernels.rot6d_to_matrix(r6).reshape(r6.shape[:-1] + (3, 3))


def matrix_to_rot6d(mat) -> np.ndarray:
    mat = np.asarray(mat, dtype=np.float64)
    if mat.shape[-2:] != (3, 3):
        raise ShapeError(f"expected (..., 3, 3) matrices, got {mat.shape}")
    eye = np.eye(3)
    gram = np.swapaxes(mat, -1, -2) @ mat
    if not np.all(np.abs(gram - eye) <= ORTHO_TOL):
        raise ValidationError("input is not orthonormal within 1e-5")
    return np.concatenate([mat[..., :, 0], mat[..., :, 1]], axis=-1)


def geodesic_angle(ra, rb) -> np.ndarray:
    ra = np.asarray(ra, dtype=np.float64)
    return kernels.geodesic_angle(ra, rb).reshape(ra.shape[:-2])


def motion_offsets(frames) -> np.ndarray:
    """First differences along time: ``out[i] = frames[i+1] - frames[i]``."""
    if isinstance(frames, PoseSequence):
        frames = frames.frames
    if not hasattr(frames, "shape"):
        frames = np.asarray(frames)
    if frames.shape[-2] < 2:
        raise ShapeError(f"motion offsets need at least 2 frames, got {frames.shape[-2]}")
    return frames[..., 1:, :] - frames[..., :-1, :]


def jerk(frames) -> float:
    """Mean Euclidean norm of the third temporal difference."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[-2] < 4:
        raise ShapeError("jerk needs at least 4 frames")
    d3 = np.diff(frames, n=3, axis=-2)
    return float(np.linalg.norm(d3, axis=-1).mean())


def forward_kinematics(pose: PoseSequence | np.ndarray, skeleton: SkeletonSpec) -> np.ndarray:
    """Joint positions ``N x J x 3`` with the root pinned at the origin."""
    frames = pose.frames if isinstance(pose, PoseSequence) else np.asarray(pose)
    if frames.shape[1] != skeleton.n_joints * 6:
        raise ShapeError(
            f"pose has {frames.shape[1]} columns but skeleton needs {skeleton.n_joints * 6}"
        )
    n = frames.shape[0]
    mats = rot6d_to_matrix(frames.reshape(n, skeleton.n_joints, 6))
    parents = np.asarray(skeleton.parents, dtype=np.int64)
    return kernels.forward_kinematics(mats, parents, skeleton.offsets, skeleton.order)


def axis_angle_to_matrix(aa) -> np.ndarray:
    from scipy.spatial.transform import Rotation

    aa = np.asarray(aa, dtype=np.float64)
    return Rotation.from_rotvec(aa.reshape(-1, 3)).as_matrix().reshape(aa.shape[:-1] + (3, 3))


# -- pose clip files ---------------------------------------------------------
# <stem>.f32 holds little-endian float32 N x (J*6); <stem>.json is the header.


def save_pose(path, pose: PoseSequence) -> Path:
    path = Path(path).with_suffix(".f32")
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(pose.frames, dtype="<f4")
    path.write_bytes(data.tobytes())
    header = {
        "n_frames": int(pose.n_frames),
        "n_joints": int(pose.n_joints),
        "fps": float(pose.fps),
        "dtype": "f32le",
    }
    path.with_suffix(".json").write_text(json.dumps(header, indent=1))
    return path


def read_pose_header(path) -> dict:
    hpath = Path(path).with_suffix(".json")
    try:
        header = json.loads(hpath.read_text())
    except FileNotFoundError:
        raise LoadError(f"missing pose header {hpath}") from None
    except json.JSONDecodeError as exc:
        raise LoadError(f"corrupt pose header {hpath}: {exc}") from None
    missing = {"n_frames", "n_joints", "fps", "dtype"} - header.keys()
    if missing:
        raise LoadError(f"pose header {hpath} lacks {sorted(missing)}")
    if header["dtype"] != "f32le":
        raise LoadError(f"unsupported pose dtype {header['dtype']!r} in {hpath}")
    return header


def load_pose(path, expected_joints: int | None = None) -> PoseSequence:
    path = Path(path).with_suffix(".f32")
    header = read_pose_header(path)
    n, j = int(header["n_frames"]), int(header["n_joints"])
    if expected_joints is not None and j != expected_joints:
        raise LoadError(f"{path}: file has J={j} but manifest expects J={expected_joints}")
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise LoadError(f"missing pose data {path}") from None
    if len(raw) != n * j * 6 * 4:
        raise LoadError(
            f"{path}: {len(raw)} bytes does not match header shape {n}x{j * 6} float32"
        )
    frames = np.frombuffer(raw, dtype="<f4").reshape(n, j * 6).astype(np.float32)
    return PoseSequence(frames, float(header["fps"]))
