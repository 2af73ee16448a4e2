"""Per-frame motion features: [6D joint rotations | root displacement | contacts].

Column layout for J joints and C foot joints is ``J*6 + 3 + C``; joint ``j``
owns columns ``6j:6j+6``, the root displacement follows at ``6J:6J+3`` and the
contact labels fill the tail.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError
from .motion_io import RawMotion, Skeleton, quat_continuity

Q = 6
_EPS = 1e-8


@dataclass
class MotionFeatures:
    data: np.ndarray
    frame_time: float
    num_joints: int
    num_contacts: int = 0
    skeleton_ref: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or len(self.data) < 1:
            raise ValueError("feature matrix must be (H, D) with H >= 1")
        if self.data.shape[1] != self.width:
            raise ValueError(
                f"expected {self.width} columns for J={self.num_joints}, C={self.num_contacts}, "
                f"got {self.data.shape[1]}"
            )

    @property
    def width(self) -> int:
        return self.num_joints * Q + 3 + self.num_contacts

    @property
    def num_frames(self) -> int:
        return len(self.data)

    @property
    def rotation_columns(self) -> slice:
        return slice(0, self.num_joints * Q)

    @property
    def root_columns(self) -> slice:
        return slice(self.num_joints * Q, self.num_joints * Q + 3)

    @property
    def contact_columns(self) -> slice:
        return slice(self.num_joints * Q + 3, self.width)

    def replace(self, data: np.ndarray) -> MotionFeatures:
        """Same layout and metadata, new frames."""
        return MotionFeatures(data, self.frame_time, self.num_joints, self.num_contacts,
                              self.skeleton_ref)


@dataclass(frozen=True)
class RootAnchor:
    initial_root_position: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.initial_root_position, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(pos)):
            raise ValueError("root anchor must be finite")
        object.__setattr__(self, "initial_root_position", pos)


def quat_to_matrix_np(q: np.ndarray) -> np.ndarray:
    w, x, y, z = np.moveaxis(q, -1, 0)
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def matrix_to_quat_np(m: np.ndarray) -> np.ndarray:
    """Rotation matrices (..., 3, 3) to unit quaternions (w, x, y, z), branch per largest diagonal term."""
    m00, m11, m22 = m[..., 0, 0], m[..., 1, 1], m[..., 2, 2]
    trace = m00 + m11 + m22
    cand = np.stack([trace, m00, m11, m22], axis=-1)
    choice = np.argmax(cand, axis=-1)

    # w largest
    s = np.sqrt(np.maximum(1.0 + trace, 0.0)) * 2
    q0 = np.stack([0.25 * s, (m[..., 2, 1] - m[..., 1, 2]), (m[..., 0, 2] - m[..., 2, 0]),
                   (m[..., 1, 0] - m[..., 0, 1])], axis=-1)
    q0[..., 1:] /= np.where(s == 0, 1, s)[..., None]
    # x largest
    s = np.sqrt(np.maximum(1.0 + m00 - m11 - m22, 0.0)) * 2
    q1 = np.stack([(m[..., 2, 1] - m[..., 1, 2]), 0.25 * s, (m[..., 0, 1] + m[..., 1, 0]),
                   (m[..., 0, 2] + m[..., 2, 0])], axis=-1)
    q1[..., [0, 2, 3]] /= np.where(s == 0, 1, s)[..., None]
    # y largest
    s = np.sqrt(np.maximum(1.0 + m11 - m00 - m22, 0.0)) * 2
    q2 = np.stack([(m[..., 0, 2] - m[..., 2, 0]), (m[..., 0, 1] + m[..., 1, 0]), 0.25 * s,
                   (m[..., 1, 2] + m[..., 2, 1])], axis=-1)
    q2[..., [0, 1, 3]] /= np.where(s == 0, 1, s)[..., None]
    # z largest
    s = np.sqrt(np.maximum(1.0 + m22 - m00 - m11, 0.0)) * 2
    q3 = np.stack([(m[..., 1, 0] - m[..., 0, 1]), (m[..., 0, 2] + m[..., 2, 0]),
                   (m[..., 1, 2] + m[..., 2, 1]), 0.25 * s], axis=-1)
    q3[..., [0, 1, 2]] /= np.where(s == 0, 1, s)[..., None]

    q = np.choose(choice[..., None], [q0, q1, q2, q3])
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return np.where(q[..., :1] < 0, -q, q)


def rotation_to_6d(q: np.ndarray) -> np.ndarray:
    """First two rotation-matrix columns, ``[m00, m10, m20, m01, m11, m21]``. Works on (..., 4)."""
    m = quat_to_matrix_np(np.asarray(q, dtype=np.float64))
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def six_d_to_matrix(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    a1, a2 = v[..., :3], v[..., 3:6]
    n1 = np.linalg.norm(a1, axis=-1)
    n2 = np.linalg.norm(a2, axis=-1)
    b1 = a1 / np.where(n1 > _EPS, n1, 1.0)[..., None]
    u2 = a2 - np.sum(a2 * b1, axis=-1, keepdims=True) * b1
    nu = np.linalg.norm(u2, axis=-1)
    bad = (n1 <= _EPS) | (n2 <= _EPS) | (nu <= _EPS * np.maximum(n2, 1.0))
    if np.any(bad):
        where = np.argwhere(np.atleast_1d(bad))[0]
        if len(where) >= 2:
            loc = f"frame {where[0]}, joint {where[1]}"
        else:
            loc = f"index {tuple(int(i) for i in where)}"
        raise DegenerateError(f"degenerate 6D rotation at {loc}: axes parallel or near zero")
    b2 = u2 / nu[..., None]
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def six_d_to_rotation(v: np.ndarray) -> np.ndarray:
    """Gram-Schmidt the two 3-vectors into a rotation; returns unit quaternions (w >= 0)."""
    return matrix_to_quat_np(six_d_to_matrix(v))


def encode(skeleton: Skeleton, motion: RawMotion, labels: np.ndarray | None = None):
    """RawMotion + contact labels -> (MotionFeatures, RootAnchor)."""
    T, J = motion.num_frames, motion.num_joints
    if J != skeleton.num_joints:
        raise ValueError("motion joint count does not match skeleton")
    C = len(skeleton.foot_joints)
    if labels is None:
        labels = np.zeros((T, 0))
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != (T, C):
        raise ValueError(f"contact labels must have shape ({T}, {C})")
    if T < 2:
        raise ValueError("encoding needs at least 2 frames")

    O = motion.root_positions
    V = np.empty_like(O)
    V[1:] = O[1:] - O[:-1]
    V[0] = V[1]
    rot = rotation_to_6d(motion.rotations).reshape(T, J * Q)
    data = np.concatenate([rot, V, labels], axis=1)
    feats = MotionFeatures(data, motion.frame_time, J, C, skeleton.signature())
    return feats, RootAnchor(O[0].copy())


def decode(features: MotionFeatures, anchor: RootAnchor | None, skeleton: Skeleton,
           close_loop: bool = False):
    """Features -> (RawMotion, binary contact labels).

    ``close_loop`` removes the linear root drift so the last root position
    equals the first one; used for looping output.
    """
    J, C = skeleton.num_joints, len(skeleton.foot_joints)
    if features.num_joints != J or features.num_contacts != C:
        raise ValueError("feature layout does not match skeleton")
    if anchor is None:
        anchor = RootAnchor(np.zeros(3))
    data = features.data
    H = len(data)
    V = data[:, features.root_columns]
    O = np.empty((H, 3))
    O[0] = anchor.initial_root_position
    if H > 1:
        O[1:] = anchor.initial_root_position + np.cumsum(V[1:], axis=0)
    if close_loop and H > 1:
        drift = O[-1] - O[0]
        O = O - np.linspace(0.0, 1.0, H)[:, None] * drift
        O[-1] = O[0]
    q = six_d_to_rotation(data[:, features.rotation_columns].reshape(H, J, Q))
    labels = (data[:, features.contact_columns] >= 0.5).astype(np.float64)
    return RawMotion(features.frame_time, O, quat_continuity(q)), labels
