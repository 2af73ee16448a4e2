"""Patch-based generative matching for one pyramid stage.

Every iteration extracts length-``p`` windows from the current guess, matches
each against the example windows under a completeness-normalized squared L2
distance, and rebuilds the guess by averaging the matched windows. With a
skeleton partition this happens per part and the parts are averaged back
together on their shared joints.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DegenerateError
from .motion_io import Skeleton
from .representation import Q, MotionFeatures

DEFAULT_BLOCK_ROWS = 4096


@dataclass(frozen=True)
class SkeletalPart:
    name: str
    joint_indices: tuple[int, ...]
    include_root_motion: bool = False

    def columns(self, num_joints: int, num_contacts: int) -> np.ndarray:
        """Feature columns owned by this part, in layout order."""
        cols = [np.arange(j * Q, j * Q + Q) for j in self.joint_indices]
        if self.include_root_motion:
            cols.append(np.arange(num_joints * Q, num_joints * Q + 3 + num_contacts))
        return np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)

    def width(self, num_contacts: int) -> int:
        return len(self.joint_indices) * Q + (3 + num_contacts if self.include_root_motion else 0)


def whole_part(skeleton: Skeleton) -> SkeletalPart:
    return SkeletalPart("whole", tuple(range(skeleton.num_joints)), True)


def partition_skeleton(skeleton: Skeleton, part_specs) -> list[SkeletalPart]:
    """Validate user part specs into SkeletalParts.

    ``part_specs`` is ``"whole"`` or a list whose items are either joint-name
    lists or mappings ``{"name": ..., "joints": [...]}``.
    """
    if part_specs is None or part_specs == "whole":
        return [whole_part(skeleton)]
    if isinstance(part_specs, str) or not part_specs:
        raise ConfigError(f"invalid part spec {part_specs!r}")

    parts = []
    for k, spec in enumerate(part_specs):
        if isinstance(spec, dict):
            name = str(spec.get("name", f"part{k}"))
            joints = spec.get("joints")
        else:
            name, joints = f"part{k}", spec
        if not joints:
            raise ConfigError(f"part {name!r} has no joints")
        idx = []
        for j in joints:
            try:
                i = skeleton.index(j) if isinstance(j, str) else int(j)
            except ConfigError:
                raise ConfigError(f"part {name!r}: unknown joint {j!r}") from None
            if not 0 <= i < skeleton.num_joints:
                raise ConfigError(f"part {name!r}: joint index {i} out of range")
            if i not in idx:
                idx.append(i)
        idx.sort()
        members = set(idx)
        tops = [i for i in idx if skeleton.joints[i].parent not in members]
        if len(tops) != 1:
            raise ConfigError(f"part {name!r} is not a connected subtree")
        parts.append(SkeletalPart(name, tuple(idx), 0 in members))

    covered = set().union(*(p.joint_indices for p in parts))
    missing = [skeleton.names[i] for i in range(skeleton.num_joints) if i not in covered]
    if missing:
        raise ConfigError(f"joints not covered by any part: {', '.join(missing)}")
    if not any(p.include_root_motion for p in parts):
        raise ConfigError("no part contains the root joint")
    if len(parts) > 1:
        _check_overlaps(parts)
    return parts


def _check_overlaps(parts):
    sets = [set(p.joint_indices) for p in parts]
    for a, pa in enumerate(parts):
        if not any(sets[a] & sets[b] for b in range(len(parts)) if b != a):
            raise ConfigError(f"part {pa.name!r} shares no overlap joint with any other part")
    seen = {0}
    frontier = [0]
    while frontier:
        a = frontier.pop()
        for b in range(len(parts)):
            if b not in seen and sets[a] & sets[b]:
                seen.add(b)
                frontier.append(b)
    if len(seen) != len(parts):
        lost = next(parts[b].name for b in range(len(parts)) if b not in seen)
        raise ConfigError(f"part {lost!r} is not linked to the other parts through overlap joints")


def overlap_joints(parts) -> list[int]:
    counts: dict[int, int] = {}
    for p in parts:
        for j in p.joint_indices:
            counts[j] = counts.get(j, 0) + 1
    return sorted(j for j, c in counts.items() if c > 1)


def slice_part(features, part: SkeletalPart, num_joints: int | None = None,
               num_contacts: int | None = None) -> np.ndarray:
    if isinstance(features, MotionFeatures):
        num_joints, num_contacts, data = features.num_joints, features.num_contacts, features.data
    else:
        data = np.asarray(features)
    return data[:, part.columns(num_joints, num_contacts)]


@dataclass
class PatchSet:
    patches: np.ndarray  # (N, p*d), frame-major
    source_frame: np.ndarray
    source_example: np.ndarray
    p: int

    @property
    def dim(self) -> int:
        return self.patches.shape[1] // self.p

    def __len__(self):
        return len(self.patches)


def extract_patches(tracks, p: int, stage: int | None = None) -> PatchSet:
    """All stride-1 windows of ``p`` frames from every track, flattened frame-major."""
    chunks, frames, examples = [], [], []
    for e, track in enumerate(tracks):
        track = np.asarray(track, dtype=np.float64)
        H = len(track)
        if H < p:
            where = f" at stage {stage}" if stage is not None else ""
            raise ConfigError(f"example {e}{where} has {H} frames, fewer than the patch size {p}")
        win = sliding_window_view(track, p, axis=0)  # (H-p+1, d, p)
        chunks.append(np.ascontiguousarray(win.transpose(0, 2, 1)).reshape(H - p + 1, -1))
        frames.append(np.arange(H - p + 1))
        examples.append(np.full(H - p + 1, e))
    return PatchSet(np.concatenate(chunks), np.concatenate(frames), np.concatenate(examples), p)


def distance_matrix(X: PatchSet, Y: PatchSet, block_rows: int = DEFAULT_BLOCK_ROWS) -> np.ndarray:
    """Squared L2 distance between every pair of patches, computed in row blocks."""
    if X.patches.shape[1] != Y.patches.shape[1] or X.p != Y.p:
        raise ValueError("patch sets differ in patch length or feature width")
    yy = np.einsum("ij,ij->i", Y.patches, Y.patches)
    out = np.empty((len(X), len(Y)))
    for i0 in range(0, len(X), block_rows):
        xb = X.patches[i0:i0 + block_rows]
        xx = np.einsum("ij,ij->i", xb, xb)
        blk = xx[:, None] + yy[None, :] - 2.0 * (xb @ Y.patches.T)
        np.maximum(blk, 0.0, out=out[i0:i0 + block_rows])
    return out


def normalize_distances(D: np.ndarray, alpha: float) -> np.ndarray:
    """Divide every column by ``alpha`` plus its minimum over the synthesized patches."""
    D = np.asarray(D, dtype=np.float64)
    if alpha < 0:
        raise ConfigError("alpha must be >= 0")
    denom = alpha + D.min(axis=0)
    if np.any(denom <= 0):
        raise DegenerateError("zero denominator; α=0 with exact matches")
    return D / denom[None, :]


def nearest_matches(D_hat: np.ndarray) -> np.ndarray:
    # np.argmin returns the first minimum, i.e. ties go to the lowest index
    return np.argmin(D_hat, axis=1)


def _coverage_counts(n_windows: int, p: int, length: int) -> np.ndarray:
    t = np.arange(length)
    return (np.minimum(t, n_windows - 1) - np.maximum(0, t - p + 1) + 1).astype(np.float64)


def blend_patches(matches, Y: PatchSet, output_length: int) -> np.ndarray:
    """Average voting: each frame is the mean of every matched patch frame covering it."""
    matches = np.asarray(matches)
    p, d = Y.p, Y.dim
    n = len(matches)
    if n != output_length - p + 1:
        raise ValueError(f"expected {output_length - p + 1} matches, got {n}")
    chosen = Y.patches[matches].reshape(n, p, d)
    out = np.zeros((output_length, d))
    for k in range(p):
        out[k:k + n] += chosen[:, k]
    return out / _coverage_counts(n, p, output_length)[:, None]


def assemble_parts(partials, num_joints: int, num_contacts: int) -> np.ndarray:
    """Merge per-part tracks into full feature rows, averaging shared columns."""
    if not partials:
        raise ValueError("no parts to assemble")
    lengths = {len(track) for _, track in partials}
    if len(lengths) != 1:
        raise ValueError("part tracks differ in frame count")
    H = lengths.pop()
    width = num_joints * Q + 3 + num_contacts
    acc = np.zeros((H, width))
    count = np.zeros(width)
    for part, track in partials:
        cols = part.columns(num_joints, num_contacts)
        acc[:, cols] += track
        count[cols] += 1
    if np.any(count == 0):
        raise ValueError("parts leave some feature columns uncovered")
    if np.all(count == 1):
        return acc
    return acc / count


class PartExemplars:
    """Example frames of one part at one stage, pooled, with their window table."""

    def __init__(self, tracks, p: int, stage: int | None = None):
        self.p = p
        self.tracks = [np.ascontiguousarray(t, dtype=np.float64) for t in tracks]
        starts, offset = [], 0
        for e, t in enumerate(self.tracks):
            if len(t) < p:
                where = f" at stage {stage}" if stage is not None else ""
                raise ConfigError(f"example {e}{where} has {len(t)} frames, fewer than the patch size {p}")
            starts.append(offset + np.arange(len(t) - p + 1))
            offset += len(t)
        self.frames = np.concatenate(self.tracks)
        self.starts = np.concatenate(starts)
        self.norms = np.concatenate([_window_sums(np.einsum("ij,ij->i", t, t), p) for t in self.tracks])

    def __len__(self):
        return len(self.starts)

    def patch_set(self) -> PatchSet:
        return extract_patches(self.tracks, self.p)

    def distances(self, track: np.ndarray, block_rows: int = DEFAULT_BLOCK_ROWS) -> np.ndarray:
        """Squared L2 from every window of ``track`` to every example window.

        Uses the frame-level Gram matrix and sums its diagonals over the patch
        length, which avoids materializing the flattened patches.
        """
        p = self.p
        n = len(track) - p + 1
        xx = _window_sums(np.einsum("ij,ij->i", track, track), p)
        out = np.empty((n, len(self)))
        col = 0
        for y in self.tracks:
            m = len(y) - p + 1
            for i0 in range(0, n, block_rows):
                i1 = min(n, i0 + block_rows)
                gram = track[i0:i1 + p - 1] @ y.T
                cross = gram[: i1 - i0, :m].copy()
                for k in range(1, p):
                    cross += gram[k:k + i1 - i0, k:k + m]
                out[i0:i1, col:col + m] = cross
            col += m
        out *= -2.0
        out += xx[:, None]
        out += self.norms[None, :]
        np.maximum(out, 0.0, out=out)
        return out

    def blend(self, matches: np.ndarray, output_length: int) -> np.ndarray:
        p = self.p
        n = len(matches)
        base = self.starts[matches]
        out = np.zeros((output_length, self.frames.shape[1]))
        for k in range(p):
            out[k:k + n] += self.frames[base + k]
        return out / _coverage_counts(n, p, output_length)[:, None]


def _window_sums(values: np.ndarray, p: int) -> np.ndarray:
    return sliding_window_view(values, p).sum(axis=1)


def match_and_blend(guess_part: np.ndarray, exemplars: PartExemplars, alpha: float,
                    block_rows: int = DEFAULT_BLOCK_ROWS) -> np.ndarray:
    D = exemplars.distances(guess_part, block_rows)
    matches = nearest_matches(normalize_distances(D, alpha))
    return exemplars.blend(matches, len(guess_part))


def run_stage_tracks(guess: np.ndarray, parts, part_exemplars, num_joints: int, num_contacts: int,
                     alpha: float, iterations: int, block_rows: int = DEFAULT_BLOCK_ROWS) -> np.ndarray:
    """Core loop over prepared per-part exemplars (shared by plain synthesis and reassembly)."""
    guess = np.array(guess, dtype=np.float64)
    cols = [part.columns(num_joints, num_contacts) for part in parts]
    for _ in range(iterations):
        partials = [
            (part, match_and_blend(guess[:, c], ex, alpha, block_rows))
            for part, c, ex in zip(parts, cols, part_exemplars)
        ]
        guess = assemble_parts(partials, num_joints, num_contacts)
    return guess


def run_stage(guess: MotionFeatures, exemplars, parts, p: int, alpha: float, E: int,
              block_rows: int = DEFAULT_BLOCK_ROWS, stage: int | None = None) -> MotionFeatures:
    if E < 0:
        raise ConfigError("iteration count must be >= 0")
    if guess.num_frames < p:
        raise ConfigError(f"synthesized track has {guess.num_frames} frames, fewer than the patch size {p}")
    for ex in exemplars:
        if ex.width != guess.width:
            raise ValueError("example and guess feature layouts differ")
    part_ex = [PartExemplars([slice_part(ex, part) for ex in exemplars], p, stage) for part in parts]
    data = run_stage_tracks(guess.data, parts, part_ex, guess.num_joints, guess.num_contacts,
                            alpha, E, block_rows)
    return guess.replace(data)
