"""Command-line entry point.

Exit codes: 0 success, 2 configuration, 3 BVH parse, 4 numeric, 5 I/O, 1 other.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

import numpy as np
from threadpoolctl import threadpool_limits

from . import metrics
from .config import JobConfig, load_config
from .errors import ConfigError, MosynthError
from .motion_io import (
    compute_contact_labels,
    default_contact_threshold,
    forward_kinematics,
    guess_foot_joints,
    read_bvh_file,
    write_bvh_file,
)
from .representation import RootAnchor, decode, encode
from .synthesizer import (
    ConstraintSet,
    FixedPartial,
    Keyframe,
    ReassemblySource,
    reassemble,
    synthesize,
)

EXIT_IO = 5
DEFAULT_PROBE_FRAMES = "1000,2000,4000,8000,16000"


# ---------------------------------------------------------------------------
# loading helpers

class Clip:
    """A BVH file with its skeleton (feet resolved), features and anchor."""

    def __init__(self, path, job: JobConfig):
        self.path = path
        skeleton, motion = read_bvh_file(path)
        feet = job.foot_joints if job.foot_joints is not None else guess_foot_joints(skeleton)
        self.skeleton = skeleton.with_feet(feet)
        threshold = job.contact_threshold
        if threshold is None:
            threshold = default_contact_threshold(self.skeleton)
        if motion.num_frames < 2:
            raise ConfigError(f"{path}: needs at least 2 frames")
        labels = compute_contact_labels(forward_kinematics(self.skeleton, motion),
                                        self.skeleton.foot_joints, threshold)
        self.features, self.anchor = encode(self.skeleton, motion, labels)


def _anchor(job: JobConfig, clip: Clip):
    if job.anchor == "example":
        return clip.anchor
    if job.anchor == "origin":
        return None
    return RootAnchor(np.asarray(job.anchor, dtype=np.float64))


def _write(path, feats, clip: Clip, job: JobConfig, close_loop=False):
    motion, _ = decode(feats, _anchor(job, clip), clip.skeleton, close_loop=close_loop)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    write_bvh_file(path, clip.skeleton, motion)


def _sample_paths(path, count):
    if count == 1:
        return [path]
    stem, ext = os.path.splitext(path)
    return [f"{stem}_{k:03d}{ext or '.bvh'}" for k in range(count)]


def _job(args) -> JobConfig:
    job = load_config(getattr(args, "config", None))
    overrides = {}
    for flag, key in (("frames", "frames"), ("seed", "seed"), ("alpha", "alpha"),
                      ("patch_size", "patch_size"), ("iterations", "iterations"),
                      ("coarse_k", "coarse_k"), ("ratio", "ratio")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    job.synthesis = replace(job.synthesis, **overrides).validate()
    if getattr(args, "foot_joints", None):
        job.foot_joints = [s.strip() for s in args.foot_joints.split(",") if s.strip()]
    if getattr(args, "contact_threshold", None) is not None:
        job.contact_threshold = args.contact_threshold
    if getattr(args, "anchor", None) is not None:
        job.anchor = args.anchor
    if getattr(args, "tau", None) is not None:
        job.tau = args.tau
    if getattr(args, "threads", None) is not None:
        job.threads = args.threads
    return job


def _inputs(args, job):
    if not args.input:
        raise ConfigError("at least one -i/--input clip is required")
    return [Clip(p, job) for p in args.input]


def _keyframes(job, clips):
    out = []
    for k, spec in enumerate(job.keyframes):
        if spec.pose is not None:
            pose = np.asarray(spec.pose, dtype=np.float64)
        else:
            if not 0 <= spec.example < len(clips):
                raise ConfigError(f"keyframe {k}: example {spec.example} not among the inputs")
            data = clips[spec.example].features.data
            if not 0 <= spec.example_frame < len(data):
                raise ConfigError(f"keyframe {k}: example_frame {spec.example_frame} out of range")
            pose = data[spec.example_frame]
        out.append(Keyframe(spec.frame, pose))
    return out


def _constraints(job, clips, loop=False, completion=None):
    fixed = None
    if completion is not None:
        part, track_path = completion
        track = Clip(track_path, job)
        if track.features.width != clips[0].features.width:
            raise ConfigError("completion track skeleton does not match the examples")
        fixed = FixedPartial(part, track.features.data)
    return ConstraintSet(_keyframes(job, clips), fixed, loop or job.loop)


def _synth_samples(args, job, clips, constraints, close_loop=False):
    items = [(c.features, c.skeleton) for c in clips]
    paths = _sample_paths(args.output, args.samples)
    for k, path in enumerate(paths):
        cfg = replace(job.synthesis, seed=job.synthesis.seed + k)
        feats = synthesize(items, cfg, constraints)
        _write(path, feats, clips[0], job, close_loop)
        print(f"wrote {path} ({feats.num_frames} frames)")
    return 0


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args):
    job = _job(args)
    clips = _inputs(args, job)
    return _synth_samples(args, job, clips, _constraints(job, clips), close_loop=job.loop)


def cmd_complete(args):
    job = _job(args)
    clips = _inputs(args, job)
    part = args.part or (job.completion.part if job.completion else None)
    track = args.track or (job.completion.track if job.completion else None)
    if not part or not track:
        raise ConfigError("complete needs a part name and a partial track (--part/--track or config)")
    if job.synthesis.parts in (None, "whole"):
        raise ConfigError("complete needs a skeleton partition in the config 'parts' section")
    return _synth_samples(args, job, clips, _constraints(job, clips, completion=(part, track)),
                          close_loop=job.loop)


def cmd_keyframe(args):
    job = _job(args)
    if not job.keyframes:
        raise ConfigError("keyframe needs constraints.keyframes in the config")
    clips = _inputs(args, job)
    return _synth_samples(args, job, clips, _constraints(job, clips), close_loop=job.loop)


def cmd_loop(args):
    job = _job(args)
    clips = _inputs(args, job)
    return _synth_samples(args, job, clips, _constraints(job, clips, loop=True), close_loop=True)


def cmd_reassemble(args):
    job = _job(args)
    if not job.sources:
        raise ConfigError("reassemble needs reassemble.sources in the config")
    source_clips = [Clip(s.file, job) for s in job.sources]
    target = Clip(job.target, job) if job.target else source_clips[0]
    sources = [ReassemblySource(c.features, c.skeleton, s.joints, s.name, s.mapping)
               for s, c in zip(job.sources, source_clips)]
    constraints = ConstraintSet(_keyframes(job, [target]), None, job.loop)
    paths = _sample_paths(args.output, args.samples)
    for k, path in enumerate(paths):
        cfg = replace(job.synthesis, seed=job.synthesis.seed + k)
        feats = reassemble(sources, target.skeleton, cfg, constraints)
        _write(path, feats, target, job, close_loop=job.loop)
        print(f"wrote {path} ({feats.num_frames} frames)")
    return 0


def cmd_eval(args):
    job = _job(args)
    clips = _inputs(args, job)
    if not args.generated:
        raise ConfigError("eval needs at least one -g/--generated clip")
    outs = [Clip(p, job) for p in args.generated]
    for o in outs:
        if o.features.width != clips[0].features.width:
            raise ConfigError(f"{o.path}: skeleton does not match the examples")
    examples = [c.features for c in clips]
    generated = [o.features for o in outs]
    p = job.synthesis.patch_size
    report = metrics.evaluate(examples, generated, p, job.tau, job.global_patch)
    text = report.to_text()
    sys.stdout.write(text)
    if args.report_dir:
        from .plotting import coverage_figure

        os.makedirs(args.report_dir, exist_ok=True)
        with open(os.path.join(args.report_dir, "report.txt"), "w", encoding="utf-8") as f:
            f.write(text)
        with open(os.path.join(args.report_dir, "coverage.csv"), "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["output", "example", "start", "rms", "covered"])
            for k, g in enumerate(generated):
                rows = metrics.coverage_detail(examples, g, p, job.tau)
                for e, start, rms, ok in rows:
                    w.writerow([k, e, start, f"{rms:.6g}", int(ok)])
                coverage_figure(rows, job.tau, os.path.join(args.report_dir, f"coverage_{k:03d}.png"),
                                title=os.path.basename(outs[k].path))
        print(f"report written to {args.report_dir}")
    return 0


def cmd_probe(args):
    job = _job(args)
    clips = _inputs(args, job)
    try:
        counts = [int(x) for x in args.frame_counts.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"invalid --frame-counts {args.frame_counts!r}") from None
    if not counts or counts != sorted(counts):
        raise ConfigError("--frame-counts must be a non-empty ascending list")
    results = metrics.scaling_probe(clips[0].features, job.synthesis, counts, clips[0].skeleton)
    out = sys.stdout if args.output in (None, "-") else open(args.output, "w", newline="", encoding="utf-8")
    try:
        w = csv.writer(out)
        w.writerow(["frames", "seconds", "peak_bytes"])
        for F, secs, peak in results:
            w.writerow([F, f"{secs:.6f}", peak])
    finally:
        if out is not sys.stdout:
            out.close()
    slope, _, r2 = metrics.linear_fit([r[0] for r in results], [r[1] for r in results])
    print(f"time slope: {slope:.3g} s/frame, R^2 = {r2:.4f}", file=sys.stderr)
    plot = args.plot
    if plot is None and args.output not in (None, "-"):
        plot = os.path.splitext(args.output)[0] + ".png"
    if plot:
        from .plotting import scaling_figure

        scaling_figure(results, plot)
    return 0


def cmd_demo(args):
    from .demo import dance_clip, humanoid_skeleton
    from .motion_io import write_bvh

    skeleton = humanoid_skeleton(args.detail)
    motion = dance_clip(skeleton, args.frames, seed=args.seed, travel=args.travel)
    directory = os.path.dirname(os.path.abspath(args.output))
    os.makedirs(directory, exist_ok=True)
    with open(args.output, "w", encoding="utf-8", newline="\n") as f:
        f.write(write_bvh(skeleton, motion))
    print(f"wrote {args.output} ({args.frames} frames, {skeleton.num_joints} joints)")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _common(p, inputs=True, output=True):
    if inputs:
        p.add_argument("-i", "--input", action="append", default=[], help="example BVH (repeatable)")
    if output:
        p.add_argument("-o", "--output", required=True, help="output BVH path")
        p.add_argument("--samples", type=int, default=1, help="number of outputs (seed, seed+1, ...)")
    p.add_argument("--config", help="YAML job document")
    p.add_argument("--frames", type=int, help="output length F (default: 2x the first example)")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float, help="completeness knob")
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--coarse-k", dest="coarse_k", type=float)
    p.add_argument("--ratio", type=float, help="stage length ratio r")
    p.add_argument("--foot-joints", dest="foot_joints", help="comma-separated foot joint names")
    p.add_argument("--contact-threshold", dest="contact_threshold", type=float)
    p.add_argument("--anchor", choices=["origin", "example"], help="root start of written output")
    p.add_argument("--threads", type=int, help="cap BLAS threads")


def build_parser():
    parser = argparse.ArgumentParser(prog="mosynth", description="Example-based motion synthesis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize new clips from examples")
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("complete", help="synthesize around a pinned partial-body track")
    _common(p)
    p.add_argument("--part", help="name of the pinned part (from the config partition)")
    p.add_argument("--track", help="BVH holding the pinned motion")
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("keyframe", help="synthesize through keyframes listed in the config")
    _common(p)
    p.set_defaults(func=cmd_keyframe)

    p = sub.add_parser("loop", help="synthesize a clip whose last frame equals its first")
    _common(p)
    p.set_defaults(func=cmd_loop)

    p = sub.add_parser("reassemble", help="combine parts of different skeletons (config driven)")
    _common(p, inputs=False)
    p.set_defaults(func=cmd_reassemble)

    p = sub.add_parser("eval", help="print coverage, diversity and patch distances")
    _common(p, output=False)
    p.add_argument("-g", "--generated", action="append", default=[], help="generated BVH (repeatable)")
    p.add_argument("--tau", type=float, help="coverage RMS threshold")
    p.add_argument("--report-dir", dest="report_dir", help="write report.txt, coverage.csv and figures here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("probe", help="time and memory against output length")
    _common(p, output=False)
    p.add_argument("-o", "--output", help="CSV path (default stdout)")
    p.add_argument("--frame-counts", dest="frame_counts", default=DEFAULT_PROBE_FRAMES)
    p.add_argument("--plot", help="PNG path (default: next to the CSV)")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("demo", help="write a procedural dance clip for trying the tools")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--frames", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--detail", choices=["full", "lite"], default="full")
    p.add_argument("--travel", type=float, default=0.0, help="root drift per frame along +Z")
    p.set_defaults(func=cmd_demo)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "samples", 1) < 1:
        parser.error("--samples must be >= 1")
    try:
        threads = getattr(args, "threads", None)
        if threads is None and getattr(args, "config", None):
            threads = load_config(args.config).threads
        if threads is not None and threads < 1:
            raise ConfigError("--threads must be >= 1")
        if threads is not None:
            with threadpool_limits(limits=threads):
                return args.func(args)
        return args.func(args)
    except MosynthError as exc:
        print(f"mosynth: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"mosynth: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"mosynth: error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
