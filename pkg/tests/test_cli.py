import csv

import numpy as np
import pytest
import yaml

from mosynth.cli import run
from mosynth.config import load_config, parse_config
from mosynth.errors import ConfigError
from mosynth.motion_io import parse_bvh, read_bvh_file

LOWER = ["Hips", "LeftUpLeg", "LeftLeg", "LeftFoot", "LeftToeBase",
         "RightUpLeg", "RightLeg", "RightFoot", "RightToeBase"]


def _motion_rows(path):
    text = open(path).read()
    return text.split("Frame Time:")[1].strip().split("\n")[1:]


@pytest.fixture(scope="module")
def clip_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("clips")
    assert run(["demo", "-o", str(d / "dance.bvh"), "--frames", "150", "--detail", "lite", "--seed", "4"]) == 0
    assert run(["demo", "-o", str(d / "other.bvh"), "--frames", "150", "--detail", "lite", "--seed", "5"]) == 0
    assert run(["demo", "-o", str(d / "full.bvh"), "--frames", "100", "--detail", "full", "--seed", "6"]) == 0
    assert run(["demo", "-o", str(d / "long.bvh"), "--seed", "1"]) == 0
    return d


def _cfg(tmp_path, doc):
    path = tmp_path / "job.yaml"
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def test_synth_is_byte_identical(clip_dir, tmp_path):
    src = str(clip_dir / "dance.bvh")
    a, b = tmp_path / "a.bvh", tmp_path / "b.bvh"
    assert run(["synth", "-i", src, "-o", str(a), "--frames", "200", "--seed", "7"]) == 0
    assert run(["synth", "-i", src, "-o", str(b), "--frames", "200", "--seed", "7"]) == 0
    assert a.read_bytes() == b.read_bytes()
    _, motion = read_bvh_file(a)
    assert motion.num_frames == 200


def test_synth_does_not_touch_inputs(clip_dir, tmp_path):
    src = clip_dir / "dance.bvh"
    before = src.read_bytes()
    run(["synth", "-i", str(src), "-o", str(tmp_path / "x.bvh")])
    assert src.read_bytes() == before


def test_samples_and_default_length(clip_dir, tmp_path):
    out = tmp_path / "out.bvh"
    assert run(["synth", "-i", str(clip_dir / "dance.bvh"), "-o", str(out), "--samples", "3"]) == 0
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["out_000.bvh", "out_001.bvh", "out_002.bvh"]
    rows = [_motion_rows(tmp_path / f) for f in files]
    assert all(len(r) == 300 for r in rows)
    assert rows[0] != rows[1]


def test_loop_rows_identical(clip_dir, tmp_path):
    out = tmp_path / "loop.bvh"
    assert run(["loop", "-i", str(clip_dir / "dance.bvh"), "-o", str(out), "--frames", "300"]) == 0
    rows = _motion_rows(out)
    assert len(rows) == 300 and rows[0] == rows[-1]


def test_eval_prints_report(clip_dir, tmp_path, capsys):
    # default demo clip: 500 frames, 65 joints
    src = str(clip_dir / "long.bvh")
    out = str(tmp_path / "out.bvh")
    run(["synth", "-i", src, "-o", out])
    capsys.readouterr()
    assert run(["eval", "-i", src, "-g", out, "--report-dir", str(tmp_path / "rep")]) == 0
    text = capsys.readouterr().out
    values = dict(line.split(": ", 1) for line in text.splitlines() if ": " in line)
    assert float(values["coverage"]) >= 95
    assert values["set_diversity"] == "n/a"
    assert int(values["peak_memory"]) > 0
    rep = tmp_path / "rep"
    assert (rep / "report.txt").exists() and (rep / "coverage_000.png").stat().st_size > 0
    with open(rep / "coverage.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 500 - 11 + 1
    covered = 100 * sum(int(r["covered"]) for r in rows) / len(rows)
    assert covered == pytest.approx(float(values["coverage"]), abs=1e-3)


def test_probe_writes_csv_and_plot(clip_dir, tmp_path):
    out = tmp_path / "probe.csv"
    assert run(["probe", "-i", str(clip_dir / "dance.bvh"), "--frame-counts", "100,200", "-o", str(out)]) == 0
    with open(out) as f:
        rows = list(csv.DictReader(f))
    assert [int(r["frames"]) for r in rows] == [100, 200]
    assert all(float(r["seconds"]) > 0 and int(r["peak_bytes"]) > 0 for r in rows)
    assert (tmp_path / "probe.png").stat().st_size > 0


def test_keyframe_from_config(clip_dir, tmp_path):
    cfg = _cfg(tmp_path, {"synthesis": {"frames": 200, "seed": 3},
                          "constraints": {"keyframes": [{"frame": 5, "example": 0, "example_frame": 60}]}})
    assert run(["keyframe", "-i", str(clip_dir / "dance.bvh"), "-o", str(tmp_path / "k.bvh"), "--config", cfg]) == 0


def test_keyframe_without_pins_is_config_error(clip_dir, tmp_path, capsys):
    code = run(["keyframe", "-i", str(clip_dir / "dance.bvh"), "-o", str(tmp_path / "k.bvh")])
    assert code == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("mosynth: error:") and "\n" not in err


def test_complete_from_flags(clip_dir, tmp_path):
    upper = ["Hips"] + [n for n in read_bvh_file(clip_dir / "dance.bvh")[0].names if n not in LOWER]
    cfg = _cfg(tmp_path, {"parts": [{"name": "lower", "joints": LOWER}, {"name": "upper", "joints": upper}]})
    out = tmp_path / "c.bvh"
    assert run(["complete", "-i", str(clip_dir / "dance.bvh"), "-o", str(out), "--config", cfg,
                "--part", "lower", "--track", str(clip_dir / "other.bvh"), "--frames", "150"]) == 0
    skel, motion = read_bvh_file(out)
    _, pinned = read_bvh_file(clip_dir / "other.bvh")
    for name in ["LeftLeg", "RightUpLeg"]:
        j = skel.index(name)
        dot = np.abs(np.sum(motion.rotations[:, j] * pinned.rotations[:, j], axis=-1))
        assert np.degrees(2 * np.arccos(np.clip(dot, 0, 1))).max() < 1e-3


def test_reassemble_from_config(clip_dir, tmp_path):
    arm = ["Spine2", "RightShoulder", "RightArm", "RightForeArm", "RightHand"]
    lite = read_bvh_file(clip_dir / "dance.bvh")[0]
    body = [n for n in lite.names if n not in arm[1:]]
    cfg = _cfg(tmp_path, {
        "synthesis": {"frames": 120},
        "reassemble": {"target": str(clip_dir / "dance.bvh"), "sources": [
            {"file": str(clip_dir / "dance.bvh"), "name": "body", "joints": body},
            {"file": str(clip_dir / "full.bvh"), "name": "arm", "joints": arm, "mapping": {"Spine2": "Spine3"}},
        ]}})
    out = tmp_path / "r.bvh"
    assert run(["reassemble", "-o", str(out), "--config", cfg]) == 0
    skel, motion = read_bvh_file(out)
    assert skel.names == lite.names and motion.num_frames == 120


@pytest.mark.parametrize("argv_tail, code", [
    (["--frames", "3"], 2),
    (["--alpha", "0"], 4),
])
def test_exit_codes(clip_dir, tmp_path, argv_tail, code):
    assert run(["synth", "-i", str(clip_dir / "dance.bvh"), "-o", str(tmp_path / "x.bvh")] + argv_tail) == code


def test_exit_codes_parse_and_io(tmp_path):
    bad = tmp_path / "bad.bvh"
    bad.write_text("HIERARCHY\nROOT a\n{\nOFFSET 0 0\n")
    assert run(["synth", "-i", str(bad), "-o", str(tmp_path / "x.bvh")]) == 3
    assert run(["synth", "-i", str(tmp_path / "missing.bvh"), "-o", str(tmp_path / "x.bvh")]) == 5


def test_threads_flag(clip_dir, tmp_path):
    a, b = tmp_path / "a.bvh", tmp_path / "b.bvh"
    src = str(clip_dir / "dance.bvh")
    assert run(["synth", "-i", src, "-o", str(a), "--threads", "1"]) == 0
    assert run(["synth", "-i", src, "-o", str(b), "--threads", "4"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_anchor_example_keeps_start(clip_dir, tmp_path):
    out = tmp_path / "a.bvh"
    run(["synth", "-i", str(clip_dir / "dance.bvh"), "-o", str(out), "--anchor", "example"])
    _, src = read_bvh_file(clip_dir / "dance.bvh")
    _, gen = read_bvh_file(out)
    np.testing.assert_allclose(gen.root_positions[0], src.root_positions[0], atol=1e-5)
    run(["synth", "-i", str(clip_dir / "dance.bvh"), "-o", str(out)])
    np.testing.assert_allclose(read_bvh_file(out)[1].root_positions[0], 0, atol=1e-9)


def test_demo_round_trips(clip_dir):
    skel, motion = parse_bvh(open(clip_dir / "dance.bvh").read())
    assert skel.num_joints == 22 and motion.num_frames == 150


# ---- config documents ----------------------------------------------------------

def test_config_flags_override(clip_dir, tmp_path):
    cfg = _cfg(tmp_path, {"synthesis": {"frames": 120, "seed": 1}})
    a, b = tmp_path / "a.bvh", tmp_path / "b.bvh"
    run(["synth", "-i", str(clip_dir / "dance.bvh"), "-o", str(a), "--config", cfg])
    run(["synth", "-i", str(clip_dir / "dance.bvh"), "-o", str(b), "--config", cfg, "--frames", "130"])
    assert len(_motion_rows(a)) == 120 and len(_motion_rows(b)) == 130


def test_config_full_document(tmp_path):
    (tmp_path / "t.bvh").write_text("")
    job = parse_config({
        "synthesis": {"alpha": 0.5, "noise": {"mean": 0, "std": 1}},
        "parts": [["Hips"]],
        "contacts": {"foot_joints": ["LeftFoot"], "threshold": 0.3},
        "constraints": {"loop": True, "keyframes": [{"frame": 2, "pose": [0.0]}],
                        "completion": {"part": "lower", "track": "t.bvh"}},
        "eval": {"tau": 0.1, "global_patch": 31},
        "output": {"anchor": [0, 90, 0]},
        "threads": 2,
    }, str(tmp_path))
    assert job.synthesis.alpha == 0.5 and job.synthesis.parts == [["Hips"]]
    assert job.loop and job.keyframes[0].pose == [0.0]
    assert job.completion.track == str(tmp_path / "t.bvh")
    assert job.tau == 0.1 and job.global_patch == 31 and job.threads == 2


@pytest.mark.parametrize("doc, fragment", [
    ({"synthesis": {"alfa": 1}}, "alfa"),
    ({"bogus": 1}, "bogus"),
    ({"constraints": {"keyframes": [{"example": 0}]}}, "frame"),
    ({"constraints": {"keyframes": [{"frame": 0}]}}, "pose"),
    ({"output": {"anchor": "moon"}}, "anchor"),
    ({"threads": 0}, "threads"),
    ({"reassemble": {"sources": [{"file": "a.bvh"}]}}, "joints"),
])
def test_config_errors(doc, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(doc)


def test_config_invalid_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("synthesis: [unclosed\n")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_config(str(p))
