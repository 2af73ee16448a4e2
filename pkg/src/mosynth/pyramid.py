"""Coarse-to-fine stage planning and temporal resampling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .representation import MotionFeatures


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


@dataclass(frozen=True)
class StagePlan:
    num_stages: int
    example_lengths: tuple[tuple[int, ...], ...]  # [stage][example]
    synthesis_lengths: tuple[int, ...]
    ratio: float
    scales: tuple[float, ...]

    def stage_length(self, full_length: int, stage: int, p: int) -> int:
        """Length of an arbitrary track (e.g. a constraint) at a 0-based stage."""
        if stage == self.num_stages - 1:
            return full_length
        return max(p, round_half_away(full_length * self.scales[stage]))


def plan_stages(example_lengths, output_length: int, p: int, K: float, r: float) -> StagePlan:
    """Per-stage lengths for every example and for the synthesized track.

    The shortest example is ``K*p`` frames at the coarsest stage and grows by
    ``r`` per stage; the last stage is always full length. Every other track
    (longer examples, the output) follows the same relative scale.
    """
    lengths = [int(n) for n in example_lengths]
    if not lengths:
        raise ConfigError("at least one example is required")
    if p < 1:
        raise ConfigError("patch size must be positive")
    if not r > 1:
        raise ConfigError("pyramid ratio r must be > 1")
    coarse = K * p
    if coarse < p:
        raise ConfigError("K*p must be at least p")
    if output_length < p:
        raise ConfigError(f"output length {output_length} is shorter than the patch size {p}")
    t_min = min(lengths)
    if coarse > t_min + 1e-9:
        raise ConfigError(f"shortest example ({t_min} frames) is shorter than K*p = {coarse:g}")

    steps = math.log(t_min / coarse) / math.log(r)
    S = max(1, math.ceil(steps - 1e-9) + 1)
    scales = [coarse * r ** s / t_min for s in range(S - 1)] + [1.0]

    def track(n):
        out = [max(p, round_half_away(n * c)) for c in scales[:-1]] + [n]
        return out

    per_example = [track(n) for n in lengths]
    example_by_stage = tuple(tuple(e[s] for e in per_example) for s in range(S))
    return StagePlan(S, example_by_stage, tuple(track(output_length)), float(r), tuple(scales))


def resample(features, new_length: int):
    """Linear interpolation along time with endpoints preserved.

    Accepts a MotionFeatures or a bare (H, D) array and returns the same kind.
    """
    if new_length < 1:
        raise ValueError("new_length must be >= 1")
    data = features.data if isinstance(features, MotionFeatures) else np.asarray(features, dtype=np.float64)
    H = len(data)
    if new_length == H:
        out = data.copy()
    elif new_length == 1 or H == 1:
        out = np.repeat(data[:1], new_length, axis=0)
    else:
        pos = np.arange(new_length) * ((H - 1) / (new_length - 1))
        lo = np.minimum(np.floor(pos).astype(np.int64), H - 2)
        frac = (pos - lo)[:, None]
        out = data[lo] * (1.0 - frac) + data[lo + 1] * frac
        # exact endpoint copies; the blend above may round in the last bit
        out[0] = data[0]
        out[-1] = data[-1]
    if isinstance(features, MotionFeatures):
        return features.replace(out)
    return out


def build_exemplar_pyramid(examples, plan: StagePlan):
    """``pyramid[s][e]``: example ``e`` resampled to its stage-``s`` length."""
    if len(plan.example_lengths[-1]) != len(examples):
        raise ValueError("plan does not match the number of examples")
    return [
        [ex if n == ex.num_frames and s == plan.num_stages - 1 else resample(ex, n)
         for ex, n in zip(examples, plan.example_lengths[s])]
        for s in range(plan.num_stages)
    ]
