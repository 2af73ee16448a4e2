"""Multi-stage synthesis driver, constraints and heterogeneous reassembly."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .genmatch import (
    DEFAULT_BLOCK_ROWS,
    PartExemplars,
    SkeletalPart,
    partition_skeleton,
    run_stage_tracks,
    slice_part,
)
from .motion_io import Skeleton
from .pyramid import StagePlan, plan_stages, resample, round_half_away
from .representation import Q, MotionFeatures


@dataclass
class SynthesisConfig:
    patch_size: int = 11
    coarse_k: float = 4.0
    alpha: float = 0.01
    iterations: int = 5
    ratio: float = 4.0 / 3.0
    frames: int | None = None  # None: twice the first example
    seed: int = 0
    parts: object = "whole"
    noise: object = "from-example"  # or {"mean": ..., "std": ...}
    block_rows: int = DEFAULT_BLOCK_ROWS

    def validate(self):
        if self.patch_size < 2:
            raise ConfigError("patch_size must be >= 2")
        if self.coarse_k * self.patch_size < self.patch_size:
            raise ConfigError("coarse_k * patch_size must be >= patch_size")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if not self.ratio > 1:
            raise ConfigError("ratio must be > 1")
        if self.frames is not None and self.frames < self.patch_size:
            raise ConfigError(f"frames ({self.frames}) must be >= patch_size ({self.patch_size})")
        if self.block_rows < 1:
            raise ConfigError("block_rows must be positive")
        if not (self.noise == "from-example" or isinstance(self.noise, dict)):
            raise ConfigError("noise must be 'from-example' or a mapping with mean/std")
        return self

    def output_length(self, example_lengths) -> int:
        return int(self.frames) if self.frames is not None else 2 * int(example_lengths[0])


@dataclass
class Keyframe:
    index: int  # frame index at the coarsest stage
    pose: np.ndarray


@dataclass
class FixedPartial:
    part: str | SkeletalPart
    track: np.ndarray  # (F, part width) or (F, full width)


@dataclass
class ConstraintSet:
    keyframes: list[Keyframe] = field(default_factory=list)
    fixed_partial: FixedPartial | None = None
    loop: bool = False

    @property
    def empty(self) -> bool:
        return not self.keyframes and self.fixed_partial is None and not self.loop


@dataclass
class PartsContext:
    parts: list[SkeletalPart]
    num_joints: int
    num_contacts: int

    def find(self, part) -> SkeletalPart:
        name = part.name if isinstance(part, SkeletalPart) else part
        for p in self.parts:
            if p.name == name:
                return p
        raise ConfigError(f"constraint part {name!r} is not in the partition")


def noise_moments(level1_tracks):
    """Per-channel mean and std of the pooled coarsest-stage examples."""
    pooled = np.concatenate([np.asarray(t) for t in level1_tracks])
    return pooled.mean(axis=0), pooled.std(axis=0)


def _noise_override(noise, width):
    try:
        mean = np.broadcast_to(np.asarray(noise.get("mean", 0.0), dtype=np.float64), (width,))
        std = np.broadcast_to(np.asarray(noise.get("std", 1.0), dtype=np.float64), (width,))
    except ValueError:
        raise ConfigError(f"noise mean/std must be scalars or length-{width} lists") from None
    if np.any(std < 0):
        raise ConfigError("noise std must be >= 0")
    return mean, std


def _gaussian(length, moments, seed):
    mean, std = moments
    rng = np.random.default_rng(seed)
    return mean + std * rng.standard_normal((length, len(mean)))


def init_coarse_guess(plan: StagePlan, config: SynthesisConfig, exemplar_level_1) -> np.ndarray:
    """Gaussian noise of the coarsest synthesis length, one draw per (frame, channel).

    Moments come from the pooled coarsest-stage examples unless ``config.noise``
    overrides them.
    """
    tracks = [e.data if isinstance(e, MotionFeatures) else np.asarray(e) for e in exemplar_level_1]
    if isinstance(config.noise, dict):
        moments = _noise_override(config.noise, tracks[0].shape[1])
    else:
        moments = noise_moments(tracks)
    return _gaussian(plan.synthesis_lengths[0], moments, config.seed)


def keyframe_row(index: int, stage: int, plan: StagePlan) -> int:
    f1 = plan.synthesis_lengths[0]
    fs = plan.synthesis_lengths[stage]
    if f1 == 1:
        return 0
    return round_half_away(index * (fs - 1) / (f1 - 1))


def apply_constraints(track: np.ndarray, constraints: ConstraintSet | None, stage: int,
                      plan: StagePlan, context: PartsContext) -> np.ndarray:
    """Overwrite constrained rows/columns of a stage-``stage`` (0-based) track."""
    if constraints is None or constraints.empty:
        return track
    track = np.array(track, dtype=np.float64)
    fs = plan.synthesis_lengths[stage]
    if len(track) != fs:
        raise ValueError(f"track has {len(track)} frames, stage {stage} expects {fs}")

    if constraints.fixed_partial is not None:
        part = context.find(constraints.fixed_partial.part)
        cols = part.columns(context.num_joints, context.num_contacts)
        pinned = _partial_columns(constraints.fixed_partial.track, cols, track.shape[1])
        track[:, cols] = resample(pinned, fs)

    f1 = plan.synthesis_lengths[0]
    for kf in constraints.keyframes:
        if not 0 <= kf.index < f1:
            raise ConfigError(f"keyframe index {kf.index} outside the coarsest stage (0..{f1 - 1})")
        pose = np.asarray(kf.pose, dtype=np.float64).reshape(-1)
        if pose.shape[0] != track.shape[1]:
            raise ConfigError("keyframe pose width does not match the feature layout")
        track[keyframe_row(kf.index, stage, plan)] = pose

    if constraints.loop:
        if fs < 2:
            raise ConfigError("looping needs at least 2 frames")
        track[-1] = track[0]
    return track


def _partial_columns(track, cols, full_width):
    track = np.asarray(track, dtype=np.float64)
    if track.ndim != 2:
        raise ConfigError("fixed partial track must be a 2D matrix")
    if track.shape[1] == full_width:
        return track[:, cols]
    if track.shape[1] == len(cols):
        return track
    raise ConfigError(f"fixed partial track has {track.shape[1]} columns, expected {len(cols)} or {full_width}")


def _unpack_examples(examples):
    if isinstance(examples, MotionFeatures):
        examples = [examples]
    feats, skels = [], []
    for item in examples:
        if isinstance(item, MotionFeatures):
            feats.append(item)
            skels.append(None)
        else:
            f, s = item
            feats.append(f)
            skels.append(s)
    return feats, skels


def _stage_loop(plan, part_tracks, part_sources, parts, J, C, config, constraints, moments):
    """Shared coarse-to-fine loop.

    ``part_tracks[b]`` are the full-length exemplar tracks of part ``b`` and
    ``part_sources[b]`` the plan example index of each of them.
    """
    context = PartsContext(list(parts), J, C)
    p = config.patch_size
    guess = None
    for s in range(plan.num_stages):
        lengths = plan.example_lengths[s]
        part_ex = []
        for tracks, srcs in zip(part_tracks, part_sources):
            staged = [t if lengths[e] == len(t) else resample(t, lengths[e]) for t, e in zip(tracks, srcs)]
            part_ex.append(PartExemplars(staged, p, stage=s + 1))
        if guess is None:
            guess = _gaussian(plan.synthesis_lengths[0], moments, config.seed)
            guess = apply_constraints(guess, constraints, 0, plan, context)
        else:
            guess = resample(guess, plan.synthesis_lengths[s])
        guess = run_stage_tracks(guess, parts, part_ex, J, C, config.alpha, config.iterations,
                                 config.block_rows)
        guess = apply_constraints(guess, constraints, s, plan, context)
    return guess


def _column_moments(parts, level1_tracks, J, C, width):
    """Per-column noise moments assembled from per-part example statistics."""
    mean = np.zeros(width)
    std = np.zeros(width)
    count = np.zeros(width)
    for part, tracks in zip(parts, level1_tracks):
        m, s = noise_moments(tracks)
        cols = part.columns(J, C)
        mean[cols] += m
        std[cols] += s
        count[cols] += 1
    if np.all(count == 1):
        return mean, std
    return mean / count, std / count


def synthesize(examples, config: SynthesisConfig | None = None,
               constraints: ConstraintSet | None = None) -> MotionFeatures:
    """Generate a new motion from one or more examples sharing a skeleton.

    ``examples`` holds ``(MotionFeatures, Skeleton)`` pairs; bare
    MotionFeatures are accepted when the partition is ``"whole"``.
    """
    config = (config or SynthesisConfig()).validate()
    feats, skels = _unpack_examples(examples)
    if not feats:
        raise ConfigError("at least one example is required")
    ref = feats[0]
    for f in feats[1:]:
        if f.width != ref.width or f.num_joints != ref.num_joints:
            raise ConfigError("examples must share one skeleton; use reassemble for mixed skeletons")
        if f.skeleton_ref and ref.skeleton_ref and f.skeleton_ref != ref.skeleton_ref:
            raise ConfigError("examples must share one skeleton; use reassemble for mixed skeletons")
    skeleton = next((s for s in skels if s is not None), None)
    if skeleton is None:
        if config.parts not in (None, "whole"):
            raise ConfigError("a skeleton is needed to resolve part specs")
        parts = [SkeletalPart("whole", tuple(range(ref.num_joints)), True)]
    else:
        parts = partition_skeleton(skeleton, config.parts)

    J, C = ref.num_joints, ref.num_contacts
    F = config.output_length([f.num_frames for f in feats])
    plan = plan_stages([f.num_frames for f in feats], F, config.patch_size, config.coarse_k, config.ratio)
    _check_constraint_shapes(constraints, F)

    part_tracks = [[slice_part(f, part) for f in feats] for part in parts]
    if isinstance(config.noise, dict):
        moments = _noise_override(config.noise, ref.width)
    else:
        level1 = [resample(f.data, n) for f, n in zip(feats, plan.example_lengths[0])]
        moments = noise_moments(level1)
    sources = [list(range(len(feats)))] * len(parts)
    data = _stage_loop(plan, part_tracks, sources, parts, J, C, config, constraints, moments)
    return MotionFeatures(data, ref.frame_time, J, C, ref.skeleton_ref)


def _check_constraint_shapes(constraints, F):
    if constraints is None:
        return
    if constraints.fixed_partial is not None and len(constraints.fixed_partial.track) < 2:
        raise ConfigError("fixed partial track needs at least 2 frames")
    if constraints.loop and F < 2:
        raise ConfigError("looping needs at least 2 frames")


@dataclass
class ReassemblySource:
    features: MotionFeatures
    skeleton: Skeleton
    joints: list  # target-skeleton joint names forming this part
    name: str = ""
    mapping: dict = field(default_factory=dict)  # target joint name -> source joint name


def _source_columns(src: ReassemblySource, part: SkeletalPart, target: Skeleton) -> np.ndarray:
    cols = []
    for j in part.joint_indices:
        tname = target.names[j]
        sname = src.mapping.get(tname, tname)
        if sname not in src.skeleton.names:
            raise ConfigError(f"part {part.name!r}: target joint {tname!r} has no match {sname!r} in its source")
        s = src.skeleton.names.index(sname)
        cols.append(np.arange(s * Q, s * Q + Q))
    if part.include_root_motion:
        Js = src.skeleton.num_joints
        cols.append(np.arange(Js * Q, Js * Q + 3))
        source_feet = [src.skeleton.names[i] for i in src.skeleton.foot_joints]
        for f in target.foot_joints:
            tname = target.names[f]
            sname = src.mapping.get(tname, tname)
            if sname not in source_feet:
                raise ConfigError(f"part {part.name!r}: foot joint {tname!r} has no contact label in its source")
            cols.append(np.array([Js * Q + 3 + source_feet.index(sname)]))
    return np.concatenate(cols)


def reassemble(sources, target_skeleton: Skeleton, config: SynthesisConfig | None = None,
               constraints: ConstraintSet | None = None) -> MotionFeatures:
    """Synthesize a target skeleton whose parts each draw patches from their own source clip."""
    config = (config or SynthesisConfig()).validate()
    if not sources:
        raise ConfigError("reassembly needs at least one source")
    specs = [{"name": s.name or f"part{k}", "joints": list(s.joints)} for k, s in enumerate(sources)]
    parts = partition_skeleton(target_skeleton, specs)
    J, C = target_skeleton.num_joints, len(target_skeleton.foot_joints)
    width = J * Q + 3 + C

    part_tracks = []
    for src, part in zip(sources, parts):
        cols = _source_columns(src, part, target_skeleton)
        part_tracks.append([src.features.data[:, cols]])

    lengths = [s.features.num_frames for s in sources]
    F = config.output_length(lengths)
    plan = plan_stages(lengths, F, config.patch_size, config.coarse_k, config.ratio)
    _check_constraint_shapes(constraints, F)
    if isinstance(config.noise, dict):
        moments = _noise_override(config.noise, width)
    else:
        level1 = [[resample(t[0], plan.example_lengths[0][b])] for b, t in enumerate(part_tracks)]
        moments = _column_moments(parts, level1, J, C, width)
    data = _stage_loop(plan, part_tracks, [[b] for b in range(len(parts))], parts, J, C, config,
                       constraints, moments)
    return MotionFeatures(data, sources[0].features.frame_time, J, C, target_skeleton.signature())
