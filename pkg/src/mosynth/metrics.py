"""Evaluation metrics: coverage, set diversity, patch distances, time/memory probe.

Patch distances here are computed on explicitly flattened windows, independent
of the Gram-diagonal shortcut used by the matcher.
"""
from __future__ import annotations

import time
import tracemalloc
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .representation import MotionFeatures

DEFAULT_TAU = 0.05


@dataclass
class MetricReport:
    coverage: float
    set_diversity: float | None
    global_patch_distance: float
    local_patch_distance: float
    wall_time: float = 0.0
    peak_memory: int = 0

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if v is None:
                lines.append(f"{k}: n/a")
            elif isinstance(v, float):
                lines.append(f"{k}: {v:.6g}")
            else:
                lines.append(f"{k}: {v}")
        return "\n".join(lines) + "\n"


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, MotionFeatures) else np.asarray(x, dtype=np.float64)


def flat_patches(track: np.ndarray, p: int) -> np.ndarray:
    if len(track) < p:
        raise ValueError(f"track of {len(track)} frames is shorter than the patch size {p}")
    win = sliding_window_view(track, p, axis=0)  # (n, d, p)
    return np.ascontiguousarray(win.transpose(0, 2, 1)).reshape(len(win), -1)


def nearest_rms(queries: np.ndarray, pool: np.ndarray, block: int = 2048) -> tuple[np.ndarray, np.ndarray]:
    """For each query row, RMS distance to the closest pool row and its index."""
    pp = np.einsum("ij,ij->i", pool, pool)
    best = np.empty(len(queries))
    arg = np.empty(len(queries), dtype=np.int64)
    for i0 in range(0, len(queries), block):
        q = queries[i0:i0 + block]
        d2 = np.einsum("ij,ij->i", q, q)[:, None] + pp[None, :] - 2.0 * (q @ pool.T)
        arg[i0:i0 + block] = np.argmin(d2, axis=1)
        best[i0:i0 + block] = np.maximum(d2[np.arange(len(q)), arg[i0:i0 + block]], 0.0)
    return np.sqrt(best / queries.shape[1]), arg


def coverage_detail(examples, synthesized, p: int, tau: float = DEFAULT_TAU):
    """Per exemplar patch: (example index, start frame, nearest RMS distance, covered flag)."""
    synth = flat_patches(_data(synthesized), p)
    rows = []
    for e, ex in enumerate(examples):
        rms, _ = nearest_rms(flat_patches(_data(ex), p), synth)
        for start, r in enumerate(rms):
            rows.append((e, start, float(r), bool(r <= tau)))
    return rows


def coverage(examples, synthesized, p: int, tau: float = DEFAULT_TAU) -> float:
    """Percentage of exemplar windows that have a synthesized window within RMS ``tau``."""
    rows = coverage_detail(examples, synthesized, p, tau)
    return 100.0 * sum(r[3] for r in rows) / len(rows)


def _rotation_block(x, num_joints=None) -> np.ndarray:
    if isinstance(x, MotionFeatures):
        return x.data[:, x.rotation_columns]
    if num_joints is None:
        raise ValueError("num_joints is required for bare arrays")
    return np.asarray(x)[:, : num_joints * 6]


def set_diversity(outputs, example, num_joints: int | None = None) -> float:
    """Mean across-sample std of the rotation channels, over the example's rotation std."""
    if len(outputs) < 2:
        raise ValueError("set diversity needs at least two outputs")
    rots = [_rotation_block(o, num_joints) for o in outputs]
    if len({r.shape for r in rots}) != 1:
        raise ValueError("outputs must share length and layout")
    stack = np.stack(rots)
    std = np.std(stack, axis=0)
    # float rounding leaves ~1e-17 on channels where every output agrees
    std[np.ptp(stack, axis=0) == 0] = 0.0
    spread = std.mean()
    ref = np.std(_rotation_block(example, num_joints))
    if ref == 0:
        raise ValueError("example rotations have zero spread")
    return float(spread / ref)


def patch_distance(examples, synthesized, p: int) -> float:
    """Mean RMS distance from each synthesized window to its nearest exemplar window."""
    pool = np.concatenate([flat_patches(_data(e), p) for e in examples])
    rms, _ = nearest_rms(flat_patches(_data(synthesized), p), pool)
    return float(rms.mean())


def evaluate(examples, outputs, p: int = 11, tau: float = DEFAULT_TAU,
             global_p: int | None = None) -> MetricReport:
    """Full report; coverage and patch distances are averaged over ``outputs``."""
    owns_trace = not tracemalloc.is_tracing()
    if owns_trace:
        tracemalloc.start()
    start = time.perf_counter()
    global_p = 2 * p + 1 if global_p is None else global_p
    cov = float(np.mean([coverage(examples, o, p, tau) for o in outputs]))
    local = float(np.mean([patch_distance(examples, o, p) for o in outputs]))
    min_len = min(min(_data(o).shape[0] for o in outputs), min(_data(e).shape[0] for e in examples))
    if min_len >= global_p:
        glob = float(np.mean([patch_distance(examples, o, global_p) for o in outputs]))
    else:
        glob = local
    div = None
    if len(outputs) >= 2 and len({_data(o).shape for o in outputs}) == 1:
        div = set_diversity(outputs, examples[0])
    elapsed = time.perf_counter() - start
    peak = tracemalloc.get_traced_memory()[1]
    if owns_trace:
        tracemalloc.stop()
    return MetricReport(cov, div, glob, local, elapsed, int(peak))


def distance_rows(plan, p: int) -> list[int]:
    """Rows of the per-part distance matrix at every stage (synthesized windows)."""
    return [n - p + 1 for n in plan.synthesis_lengths]


def scaling_probe(example, config, frame_counts, skeleton=None):
    """Time and peak traced memory of one synthesis per requested output length.

    Returns ``[(frames, seconds, bytes), ...]`` in the given order.
    """
    from dataclasses import replace

    from .synthesizer import synthesize

    item = (example, skeleton) if skeleton is not None else example
    results = []
    for F in frame_counts:
        cfg = replace(config, frames=int(F))
        tracemalloc.start()
        t0 = time.perf_counter()
        synthesize([item], cfg)
        elapsed = time.perf_counter() - t0
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        results.append((int(F), elapsed, int(peak)))
    return results


def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares slope, intercept and coefficient of determination."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)
