"""YAML job documents shared by every CLI command.

Layout (all sections optional)::

    synthesis: {patch_size, coarse_k, alpha, iterations, ratio, frames, seed, noise, block_rows}
    parts: whole | [{name, joints: [...]}, ...]
    contacts: {foot_joints: [...], threshold: 0.5}
    constraints:
      loop: true
      keyframes: [{frame: 3, example: 0, example_frame: 40}, {frame: 9, pose: [...]}]
      completion: {part: lower, track: lower.bvh}
    reassemble:
      target: zombie.bvh
      sources: [{file: zombie.bvh, name: body, joints: [...], mapping: {a: b}}, ...]
    eval: {tau: 0.05, global_patch: 23}
    output: {anchor: origin | example | [x, y, z]}
    threads: 4

Relative file paths are resolved against the document's directory.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

import yaml

from .errors import ConfigError
from .metrics import DEFAULT_TAU
from .synthesizer import SynthesisConfig

_SYNTH_KEYS = {f.name for f in fields(SynthesisConfig)} - {"parts"}
_TOP_KEYS = {"synthesis", "parts", "contacts", "constraints", "reassemble", "eval", "output", "threads"}


@dataclass
class KeyframeSpec:
    frame: int
    example: int | None = None
    example_frame: int | None = None
    pose: list | None = None


@dataclass
class CompletionSpec:
    part: str
    track: str


@dataclass
class SourceSpec:
    file: str
    joints: list
    name: str = ""
    mapping: dict = field(default_factory=dict)


@dataclass
class JobConfig:
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    foot_joints: list | None = None
    contact_threshold: float | None = None
    loop: bool = False
    keyframes: list = field(default_factory=list)
    completion: CompletionSpec | None = None
    target: str | None = None
    sources: list = field(default_factory=list)
    tau: float = DEFAULT_TAU
    global_patch: int | None = None
    anchor: object = "origin"
    threads: int | None = None


def _mapping(value, where):
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{where} must be a mapping")
    return value


def _check_keys(doc, allowed, where):
    extra = sorted(set(doc) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(map(str, extra))}")


def _path(value, base_dir, where):
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{where} must be a file path")
    return value if os.path.isabs(value) else os.path.join(base_dir, value)


def _keyframe(item, k):
    if not isinstance(item, dict) or "frame" not in item:
        raise ConfigError(f"keyframe {k} needs a 'frame' index")
    _check_keys(item, {"frame", "example", "example_frame", "pose"}, f"keyframe {k}")
    spec = KeyframeSpec(int(item["frame"]), item.get("example"), item.get("example_frame"), item.get("pose"))
    if spec.pose is None:
        if spec.example_frame is None:
            raise ConfigError(f"keyframe {k} needs 'pose' or 'example_frame'")
        spec.example = int(spec.example or 0)
        spec.example_frame = int(spec.example_frame)
    elif not isinstance(spec.pose, list):
        raise ConfigError(f"keyframe {k}: pose must be a list of numbers")
    return spec


def parse_config(doc, base_dir: str = ".") -> JobConfig:
    doc = _mapping(doc, "config document")
    _check_keys(doc, _TOP_KEYS, "config")
    job = JobConfig()

    synth = _mapping(doc.get("synthesis"), "synthesis")
    _check_keys(synth, _SYNTH_KEYS, "synthesis")
    try:
        job.synthesis = SynthesisConfig(**synth, parts=doc.get("parts", "whole"))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None

    contacts = _mapping(doc.get("contacts"), "contacts")
    _check_keys(contacts, {"foot_joints", "threshold"}, "contacts")
    job.foot_joints = contacts.get("foot_joints")
    if contacts.get("threshold") is not None:
        job.contact_threshold = float(contacts["threshold"])
        if job.contact_threshold < 0:
            raise ConfigError("contacts.threshold must be >= 0")

    cons = _mapping(doc.get("constraints"), "constraints")
    _check_keys(cons, {"loop", "keyframes", "completion"}, "constraints")
    job.loop = bool(cons.get("loop", False))
    job.keyframes = [_keyframe(item, k) for k, item in enumerate(cons.get("keyframes") or [])]
    if cons.get("completion") is not None:
        comp = _mapping(cons["completion"], "constraints.completion")
        _check_keys(comp, {"part", "track"}, "constraints.completion")
        if "part" not in comp:
            raise ConfigError("constraints.completion needs a 'part'")
        job.completion = CompletionSpec(str(comp["part"]), _path(comp.get("track"), base_dir, "completion track"))

    re_doc = _mapping(doc.get("reassemble"), "reassemble")
    _check_keys(re_doc, {"target", "sources"}, "reassemble")
    if re_doc.get("target") is not None:
        job.target = _path(re_doc["target"], base_dir, "reassemble.target")
    for k, src in enumerate(re_doc.get("sources") or []):
        src = _mapping(src, f"reassemble source {k}")
        _check_keys(src, {"file", "joints", "name", "mapping"}, f"reassemble source {k}")
        if not src.get("joints"):
            raise ConfigError(f"reassemble source {k} needs 'joints'")
        job.sources.append(SourceSpec(_path(src.get("file"), base_dir, f"reassemble source {k} file"),
                                      list(src["joints"]), str(src.get("name", f"part{k}")),
                                      dict(_mapping(src.get("mapping"), "mapping"))))

    ev = _mapping(doc.get("eval"), "eval")
    _check_keys(ev, {"tau", "global_patch"}, "eval")
    job.tau = float(ev.get("tau", DEFAULT_TAU))
    if ev.get("global_patch") is not None:
        job.global_patch = int(ev["global_patch"])

    out = _mapping(doc.get("output"), "output")
    _check_keys(out, {"anchor"}, "output")
    job.anchor = out.get("anchor", "origin")
    if not (job.anchor in ("origin", "example") or (isinstance(job.anchor, list) and len(job.anchor) == 3)):
        raise ConfigError("output.anchor must be 'origin', 'example' or [x, y, z]")

    if doc.get("threads") is not None:
        job.threads = int(doc["threads"])
        if job.threads < 1:
            raise ConfigError("threads must be >= 1")
    return job


def load_config(path: str | None) -> JobConfig:
    if path is None:
        return JobConfig()
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return parse_config(doc or {}, os.path.dirname(os.path.abspath(path)))
