"""Procedural humanoid clips for demos and tests (no mocap assets ship with the package)."""
from __future__ import annotations

import numpy as np

from .motion_io import Joint, RawMotion, Skeleton, channels_to_motion

ROT = ("Zrotation", "Xrotation", "Yrotation")
POS = ("Xposition", "Yposition", "Zposition")


def humanoid_skeleton(detail: str = "full") -> Skeleton:
    """A biped rig. ``detail="full"`` gives 65 joints (hands with four-bone fingers), ``"lite"`` 22."""
    joints: list[Joint] = []

    def add(name, parent, offset, end=None):
        chans = POS + ROT if parent is None else ROT
        ends = (tuple(end),) if end is not None else ()
        joints.append(Joint(name, parent, np.array(offset, dtype=float), chans, ends))
        return len(joints) - 1

    hips = add("Hips", None, (0, 95, 0))
    spine = add("Spine", hips, (0, 10, 0))
    spine1 = add("Spine1", spine, (0, 12, 0))
    spine2 = add("Spine2", spine1, (0, 12, 0))
    top = spine2
    if detail == "full":
        top = add("Spine3", spine2, (0, 8, 0))
    neck = add("Neck", top, (0, 12, 0))
    head = add("Head", neck, (0, 10, 0), end=None if detail == "full" else (0, 18, 0))
    if detail == "full":
        add("LeftEye", head, (3, 8, 8), end=(0, 0, 2))
        add("RightEye", head, (-3, 8, 8), end=(0, 0, 2))

    for side, sx in (("Left", 1.0), ("Right", -1.0)):
        sh = add(f"{side}Shoulder", top, (sx * 6, 10, 0))
        arm = add(f"{side}Arm", sh, (sx * 12, 0, 0))
        fore = add(f"{side}ForeArm", arm, (sx * 27, 0, 0))
        hand = add(f"{side}Hand", fore, (sx * 25, 0, 0), end=None if detail == "full" else (sx * 8, 0, 0))
        if detail == "full":
            for k, finger in enumerate(("Thumb", "Index", "Middle", "Ring", "Pinky")):
                prev = hand
                for seg in range(1, 5):
                    off = (sx * (4 if seg == 1 else 2.5), 0, (k - 2) * 1.8 if seg == 1 else 0)
                    prev = add(f"{side}Hand{finger}{seg}", prev, off,
                               end=(sx * 1.5, 0, 0) if seg == 4 else None)

    for side, sx in (("Left", 1.0), ("Right", -1.0)):
        up = add(f"{side}UpLeg", hips, (sx * 9, -5, 0))
        leg = add(f"{side}Leg", up, (0, -42, 0))
        foot = add(f"{side}Foot", leg, (0, -42, 0))
        add(f"{side}ToeBase", foot, (0, -6, 12), end=(0, 0, 6))

    skel = Skeleton(tuple(joints))
    feet = [i for i, n in enumerate(skel.names) if n.endswith("Foot") or n.endswith("ToeBase")]
    return skel.with_feet(feet)


def _smooth_noise(rng, n, width, scale):
    """Band-limited noise: white noise convolved with a Gaussian kernel of ``scale`` frames."""
    pad = int(4 * scale)
    raw = rng.standard_normal((n + 2 * pad, width))
    t = np.arange(-pad, pad + 1)
    kern = np.exp(-0.5 * (t / scale) ** 2)
    kern /= np.sqrt(np.sum(kern ** 2))
    out = np.stack([np.convolve(raw[:, c], kern, mode="valid") for c in range(width)], axis=1)
    return out[:n]


def dance_clip(skeleton: Skeleton, frames: int = 500, seed: int = 0, frame_time: float = 1 / 30,
               travel: float = 0.0, rare_moves: int | None = None, amplitude: float = 1.0,
               gesture_amplitude: float = 60.0, gesture_density: float = 0.3) -> RawMotion:
    """A dance-like clip: a dominant cycle with drifting tempo plus a few one-off moves.

    Each rotation channel is a sum of two harmonics of a shared phase, with
    small band-limited noise on top. ``rare_moves`` Gaussian-windowed gestures
    (large offsets on a random subset of joints, ~40 frames each) are
    inserted once each; by default one per 150 frames. The root sways around
    the origin and drifts ``travel`` units per frame along +Z. ``amplitude``
    scales the cycle and the sway but not the gestures, which are set by
    ``gesture_amplitude`` (degrees) and ``gesture_density`` (fraction of
    rotation channels each gesture moves).
    """
    rng = np.random.default_rng(seed)
    J = skeleton.num_joints
    tempo = 0.16 + 0.03 * np.tanh(_smooth_noise(rng, frames, 1, 60.0)[:, 0])
    phase = np.cumsum(tempo)

    n_rot = 3 * J
    amp = rng.uniform(5, 30, size=n_rot)
    for j, name in enumerate(skeleton.names):
        if "Hand" in name and name[-1].isdigit():
            amp[3 * j:3 * j + 3] *= 0.4
        if name == "Hips":
            amp[3 * j:3 * j + 3] *= 0.3
    harmonics = rng.integers(1, 3, size=n_rot)
    offsets = rng.uniform(0, 2 * np.pi, size=(n_rot, 2))
    angles = amplitude * (
        amp * np.sin(phase[:, None] * harmonics + offsets[:, 0])
        + 0.3 * amp * np.sin(phase[:, None] * 0.5 + offsets[:, 1])
        + 2.0 * _smooth_noise(rng, frames, n_rot, 10.0)
    )

    if rare_moves is None:
        rare_moves = max(1, frames // 150)
    t = np.arange(frames)
    centers = np.sort(rng.uniform(25, frames - 25, size=rare_moves)) if frames > 50 else []
    for c in centers:
        window = np.exp(-0.5 * ((t - c) / 10.0) ** 2)
        chosen = rng.random(n_rot) < gesture_density
        bump = np.where(chosen, rng.uniform(-gesture_amplitude, gesture_amplitude, size=n_rot), 0.0)
        angles += window[:, None] * bump

    sway = amplitude * _smooth_noise(rng, frames, 3, 25.0) * np.array([4.0, 1.0, 4.0])
    root = np.array([0.0, 95.0, 0.0]) + sway
    root[:, 2] += travel * np.arange(frames)

    data = []
    for j, joint in enumerate(skeleton.joints):
        for c in joint.channels:
            if c in POS:
                data.append(root[:, POS.index(c)])
            else:
                data.append(angles[:, 3 * j + ROT.index(c)])
    return channels_to_motion(skeleton, np.stack(data, axis=1), frame_time)
