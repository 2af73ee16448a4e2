"""BVH reading/writing, forward kinematics and foot-contact labels.

Rotations are kept as unit quaternions in (w, x, y, z) order, shape (T, J, 4).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import BVHParseError, ConfigError

POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")
ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")
_CHANNEL_LOOKUP = {c.lower(): c for c in POSITION_CHANNELS + ROTATION_CHANNELS}

# contact threshold per frame, as a fraction of character height
DEFAULT_CONTACT_FRACTION = 0.006
FOOT_NAME_PATTERN = re.compile(r"(foot|toe|ankle)", re.IGNORECASE)


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int | None
    offset: np.ndarray
    channels: tuple[str, ...] = ()
    end_sites: tuple[tuple[float, float, float], ...] = ()

    @property
    def rotation_axes(self) -> str:
        return "".join(c[0] for c in self.channels if c in ROTATION_CHANNELS)

    @property
    def has_position(self) -> bool:
        return any(c in POSITION_CHANNELS for c in self.channels)


@dataclass(frozen=True)
class Skeleton:
    joints: tuple[Joint, ...]
    foot_joints: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "foot_joints", tuple(int(i) for i in self.foot_joints))
        if not self.joints:
            raise ConfigError("skeleton has no joints")
        roots = [i for i, j in enumerate(self.joints) if j.parent is None]
        if roots != [0]:
            raise ConfigError("skeleton must have exactly one root joint at index 0")
        for i, j in enumerate(self.joints[1:], start=1):
            if not 0 <= j.parent < i:
                raise ConfigError(f"joint {j.name!r} is not in topological order")
        names = self.names
        if len(set(names)) != len(names):
            raise ConfigError("joint names must be unique")
        for f in self.foot_joints:
            if not 0 <= f < len(self.joints):
                raise ConfigError(f"foot joint index {f} out of range")

    @property
    def num_joints(self) -> int:
        return len(self.joints)

    @property
    def names(self) -> list[str]:
        return [j.name for j in self.joints]

    @property
    def parents(self) -> list[int | None]:
        return [j.parent for j in self.joints]

    @property
    def offsets(self) -> np.ndarray:
        return np.stack([j.offset for j in self.joints])

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigError(f"unknown joint name {name!r}") from None

    def children(self, idx: int) -> list[int]:
        return [i for i, j in enumerate(self.joints) if j.parent == idx]

    def with_feet(self, foot_joints) -> Skeleton:
        """Copy with a new foot-joint list (indices or names)."""
        idx = [self.index(f) if isinstance(f, str) else int(f) for f in foot_joints]
        return Skeleton(self.joints, tuple(idx))

    def signature(self) -> str:
        return "|".join(f"{j.name}<{j.parent}" for j in self.joints) + f"#C{len(self.foot_joints)}"


@dataclass
class RawMotion:
    frame_time: float
    root_positions: np.ndarray
    rotations: np.ndarray
    # per-joint translation channels of non-root joints; None when absent
    translations: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.root_positions = np.asarray(self.root_positions, dtype=np.float64)
        self.rotations = np.asarray(self.rotations, dtype=np.float64)
        if self.rotations.ndim != 3 or self.rotations.shape[2] != 4:
            raise ValueError("rotations must have shape (T, J, 4)")
        if self.root_positions.shape != (self.rotations.shape[0], 3):
            raise ValueError("root_positions must have shape (T, 3)")

    @property
    def num_frames(self) -> int:
        return self.rotations.shape[0]

    @property
    def num_joints(self) -> int:
        return self.rotations.shape[1]


def quat_continuity(q: np.ndarray) -> np.ndarray:
    """Pick the hemisphere of each quaternion so consecutive frames agree.

    Frame 0 is put on w >= 0; later frames are flipped when their dot product
    with the previous frame is negative. Works on (T, J, 4).
    """
    q = np.array(q, dtype=np.float64)
    first = np.where(q[0, :, :1] < 0, -1.0, 1.0)
    q[0] *= first
    if len(q) > 1:
        dots = np.sum(q[1:] * q[:-1], axis=-1)
        signs = np.cumprod(np.where(dots < 0, -1.0, 1.0), axis=0)
        q[1:] *= signs[..., None]
    return q


def euler_to_quat(angles_deg: np.ndarray, axes: str) -> np.ndarray:
    """Intrinsic rotations applied in channel order (BVH convention), (N, k) -> (N, 4)."""
    if not axes:
        out = np.zeros((len(angles_deg), 4))
        out[:, 0] = 1.0
        return out
    rot = Rotation.from_euler(axes.upper(), angles_deg, degrees=True)
    return rot.as_quat(scalar_first=True)


def quat_to_euler(q: np.ndarray, axes: str) -> np.ndarray:
    if not axes:
        return np.zeros((len(q), 0))
    seq = axes.upper()
    # scipy needs three axes; pad with the missing ones and drop them afterwards
    padded = seq + "".join(a for a in "XYZ" if a not in seq)
    if len(seq) < 3:
        padded = padded[:3]
    angles = Rotation.from_quat(q, scalar_first=True).as_euler(padded, degrees=True)
    return angles[:, : len(seq)]


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    shape = q.shape[:-1]
    m = Rotation.from_quat(q.reshape(-1, 4), scalar_first=True).as_matrix()
    return m.reshape(shape + (3, 3))


# ---------------------------------------------------------------------------
# parsing


class _Lines:
    def __init__(self, text: str):
        self.lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
        self.pos = 0

    def next_tokens(self):
        while self.pos < len(self.lines):
            self.pos += 1
            tokens = self.lines[self.pos - 1].split()
            if tokens:
                return tokens, self.pos
        raise BVHParseError("unexpected end of file", self.pos)


def _floats(tokens, n, lineno, what):
    if len(tokens) != n:
        raise BVHParseError(f"{what} expects {n} numbers, got {len(tokens)}", lineno)
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise BVHParseError(f"non-numeric value in {what}", lineno) from None


def parse_bvh(text: str) -> tuple[Skeleton, RawMotion]:
    src = _Lines(text)
    tokens, lineno = src.next_tokens()
    if tokens[0].upper() != "HIERARCHY":
        raise BVHParseError("expected HIERARCHY", lineno)

    joints: list[dict] = []
    stack: list[int | None] = []  # joint index per open brace; None for End Site

    tokens, lineno = src.next_tokens()
    if tokens[0].upper() != "ROOT" or len(tokens) < 2:
        raise BVHParseError("expected ROOT <name>", lineno)
    pending = {"name": " ".join(tokens[1:]), "parent": None, "kind": "joint"}

    while True:
        if pending is not None:
            tokens, lineno = src.next_tokens()
            if tokens != ["{"]:
                raise BVHParseError("expected '{'", lineno)
            if pending["kind"] == "joint":
                joints.append({"name": pending["name"], "parent": pending["parent"],
                               "offset": None, "channels": (), "end_sites": []})
                stack.append(len(joints) - 1)
            else:
                stack.append(None)
                joints[pending["parent"]]["end_sites"].append(None)
            pending = None

        tokens, lineno = src.next_tokens()
        key = tokens[0].upper()
        current = stack[-1] if stack else None
        if key == "OFFSET":
            off = _floats(tokens[1:], 3, lineno, "OFFSET")
            if current is None:
                owner = joints[_innermost_joint(stack)]
                owner["end_sites"][-1] = tuple(off)
            else:
                joints[current]["offset"] = np.array(off)
        elif key == "CHANNELS":
            if current is None:
                raise BVHParseError("End Site cannot declare channels", lineno)
            try:
                n = int(tokens[1])
            except (IndexError, ValueError):
                raise BVHParseError("CHANNELS expects a count", lineno) from None
            names = tokens[2:]
            if len(names) != n:
                raise BVHParseError(f"CHANNELS declares {n} but lists {len(names)}", lineno)
            chans = []
            for c in names:
                if c.lower() not in _CHANNEL_LOOKUP:
                    raise BVHParseError(f"unknown channel {c!r}", lineno)
                chans.append(_CHANNEL_LOOKUP[c.lower()])
            joints[current]["channels"] = tuple(chans)
        elif key == "JOINT":
            if current is None:
                raise BVHParseError("JOINT inside End Site", lineno)
            pending = {"name": " ".join(tokens[1:]), "parent": current, "kind": "joint"}
        elif key == "END":
            if current is None:
                raise BVHParseError("nested End Site", lineno)
            pending = {"parent": current, "kind": "end"}
        elif key == "}":
            stack.pop()
            if not stack:
                break
        elif key == "ROOT":
            raise BVHParseError("multiple ROOT joints are not supported", lineno)
        else:
            raise BVHParseError(f"unexpected token {tokens[0]!r}", lineno)

    for j in joints:
        if j["offset"] is None:
            raise BVHParseError(f"joint {j['name']!r} has no OFFSET")
        if any(e is None for e in j["end_sites"]):
            raise BVHParseError(f"End Site of {j['name']!r} has no OFFSET")

    try:
        skeleton = Skeleton(tuple(
            Joint(j["name"], j["parent"], j["offset"], j["channels"], tuple(j["end_sites"]))
            for j in joints
        ))
    except ConfigError as exc:
        raise BVHParseError(str(exc)) from None

    tokens, lineno = src.next_tokens()
    if tokens[0].upper() != "MOTION":
        raise BVHParseError("expected MOTION", lineno)
    tokens, lineno = src.next_tokens()
    if tokens[0] != "Frames:" or len(tokens) != 2:
        raise BVHParseError("expected 'Frames: <n>'", lineno)
    try:
        n_frames = int(tokens[1])
    except ValueError:
        raise BVHParseError("frame count is not an integer", lineno) from None
    tokens, lineno = src.next_tokens()
    if tokens[:2] != ["Frame", "Time:"] or len(tokens) != 3:
        raise BVHParseError("expected 'Frame Time: <seconds>'", lineno)
    frame_time = _floats(tokens[2:], 1, lineno, "Frame Time")[0]

    n_channels = sum(len(j.channels) for j in skeleton.joints)
    rows = []
    for i in range(src.pos, len(src.lines)):
        toks = src.lines[i].split()
        if not toks:
            continue
        rows.append(_floats(toks, n_channels, i + 1, "frame row"))
    if len(rows) != n_frames:
        raise BVHParseError(f"header declares {n_frames} frames but {len(rows)} rows follow",
                            len(src.lines))
    if n_frames < 2:
        raise BVHParseError("motion needs at least 2 frames")
    data = np.array(rows, dtype=np.float64).reshape(n_frames, n_channels)
    return skeleton, channels_to_motion(skeleton, data, frame_time)


def _innermost_joint(stack):
    for s in reversed(stack):
        if s is not None:
            return s
    raise BVHParseError("End Site outside any joint")


def channels_to_motion(skeleton: Skeleton, data: np.ndarray, frame_time: float) -> RawMotion:
    T = len(data)
    J = skeleton.num_joints
    rotations = np.empty((T, J, 4))
    root_positions = np.tile(skeleton.joints[0].offset, (T, 1)).astype(np.float64)
    translations = None
    col = 0
    for j, joint in enumerate(skeleton.joints):
        idx = {c: col + k for k, c in enumerate(joint.channels)}
        col += len(joint.channels)
        rot_cols = [idx[c] for c in joint.channels if c in ROTATION_CHANNELS]
        rotations[:, j] = euler_to_quat(data[:, rot_cols], joint.rotation_axes)
        if joint.has_position:
            pos = np.tile(joint.offset, (T, 1)).astype(np.float64)
            for a, c in enumerate(POSITION_CHANNELS):
                if c in idx:
                    pos[:, a] = data[:, idx[c]]
            if j == 0:
                root_positions = pos
            else:
                if translations is None:
                    translations = np.tile(skeleton.offsets, (T, 1, 1))
                translations[:, j] = pos
    return RawMotion(frame_time, root_positions, quat_continuity(rotations), translations)


def motion_to_channels(skeleton: Skeleton, motion: RawMotion) -> np.ndarray:
    if motion.num_joints != skeleton.num_joints:
        raise ValueError("motion joint count does not match skeleton")
    q = motion.rotations.copy()
    # one canonical hemisphere so identical rotations print identically
    q *= np.where(q[..., :1] < 0, -1.0, 1.0)
    columns = []
    for j, joint in enumerate(skeleton.joints):
        angles = quat_to_euler(q[:, j], joint.rotation_axes)
        if j == 0:
            pos = motion.root_positions
        elif motion.translations is not None:
            pos = motion.translations[:, j]
        else:
            pos = np.tile(joint.offset, (motion.num_frames, 1))
        k = 0
        for c in joint.channels:
            if c in POSITION_CHANNELS:
                columns.append(pos[:, POSITION_CHANNELS.index(c)])
            else:
                columns.append(angles[:, k])
                k += 1
    if not columns:
        return np.zeros((motion.num_frames, 0))
    return np.stack(columns, axis=1)


def _fmt(v: float) -> str:
    if abs(v) < 1e-10:
        return "0"
    return "%.8g" % v


def write_bvh(skeleton: Skeleton, motion: RawMotion) -> str:
    out = ["HIERARCHY"]

    def emit(j, depth):
        joint = skeleton.joints[j]
        pad = "\t" * depth
        out.append(f"{pad}{'ROOT' if joint.parent is None else 'JOINT'} {joint.name}")
        out.append(pad + "{")
        out.append(f"{pad}\tOFFSET {' '.join(_fmt(v) for v in joint.offset)}")
        if joint.channels:
            out.append(f"{pad}\tCHANNELS {len(joint.channels)} {' '.join(joint.channels)}")
        for c in skeleton.children(j):
            emit(c, depth + 1)
        for site in joint.end_sites:
            out.append(f"{pad}\tEnd Site")
            out.append(pad + "\t{")
            out.append(f"{pad}\t\tOFFSET {' '.join(_fmt(v) for v in site)}")
            out.append(pad + "\t}")
        out.append(pad + "}")

    emit(0, 0)
    data = motion_to_channels(skeleton, motion)
    out.append("MOTION")
    out.append(f"Frames: {motion.num_frames}")
    out.append(f"Frame Time: {_fmt(motion.frame_time)}")
    for row in data:
        out.append(" ".join(_fmt(v) for v in row))
    return "\n".join(out) + "\n"


def read_bvh_file(path) -> tuple[Skeleton, RawMotion]:
    with open(path, "r", encoding="utf-8") as f:
        return parse_bvh(f.read())


def write_bvh_file(path, skeleton: Skeleton, motion: RawMotion) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(write_bvh(skeleton, motion))


# ---------------------------------------------------------------------------
# kinematics


def forward_kinematics(skeleton: Skeleton, motion: RawMotion) -> np.ndarray:
    """Global joint positions, shape (T, J, 3)."""
    T, J = motion.num_frames, skeleton.num_joints
    local = quat_to_matrix(motion.rotations)
    glob = np.empty((T, J, 3, 3))
    pos = np.empty((T, J, 3))
    pos[:, 0] = motion.root_positions
    glob[:, 0] = local[:, 0]
    offsets = skeleton.offsets
    for j in range(1, J):
        p = skeleton.joints[j].parent
        off = motion.translations[:, j] if motion.translations is not None else offsets[j]
        off = np.broadcast_to(off, (T, 3))
        pos[:, j] = pos[:, p] + np.einsum("tab,tb->ta", glob[:, p], off)
        glob[:, j] = glob[:, p] @ local[:, j]
    return pos


def rest_pose_positions(skeleton: Skeleton) -> np.ndarray:
    """Joint and end-site positions at identity rotations and zero root."""
    pos = np.zeros((skeleton.num_joints, 3))
    sites = []
    for j, joint in enumerate(skeleton.joints):
        if joint.parent is not None:
            pos[j] = pos[joint.parent] + joint.offset
        sites.extend(pos[j] + np.asarray(s) for s in joint.end_sites)
    return np.vstack([pos] + [np.array(sites).reshape(-1, 3)])


def character_height(skeleton: Skeleton) -> float:
    pts = rest_pose_positions(skeleton)
    return float(np.max(pts.max(axis=0) - pts.min(axis=0)))


def default_contact_threshold(skeleton: Skeleton) -> float:
    return DEFAULT_CONTACT_FRACTION * character_height(skeleton)


def guess_foot_joints(skeleton: Skeleton) -> list[int]:
    return [i for i, n in enumerate(skeleton.names) if FOOT_NAME_PATTERN.search(n)]


def compute_contact_labels(positions: np.ndarray, foot_joints, velocity_threshold: float) -> np.ndarray:
    """Binary (T, C) labels: 1 where the foot moved at most `velocity_threshold` since the last frame."""
    foot_joints = list(foot_joints)
    T = positions.shape[0]
    if T < 2:
        raise ValueError("contact labels need at least 2 frames")
    if not foot_joints:
        return np.zeros((T, 0))
    feet = positions[:, foot_joints]
    speed = np.linalg.norm(feet[1:] - feet[:-1], axis=-1)
    labels = np.empty((T, len(foot_joints)))
    labels[1:] = (speed <= velocity_threshold).astype(np.float64)
    labels[0] = labels[1]
    return labels
