import numpy as np
import pytest

from mosynth.demo import dance_clip, humanoid_skeleton
from mosynth.motion_io import (
    Joint,
    Skeleton,
    compute_contact_labels,
    default_contact_threshold,
    forward_kinematics,
)
from mosynth.representation import encode


def features_for(skeleton, motion):
    labels = compute_contact_labels(forward_kinematics(skeleton, motion), skeleton.foot_joints,
                                    default_contact_threshold(skeleton))
    return encode(skeleton, motion, labels)


@pytest.fixture(scope="session")
def full_skeleton():
    return humanoid_skeleton("full")


@pytest.fixture(scope="session")
def lite_skeleton():
    return humanoid_skeleton("lite")


@pytest.fixture(scope="session")
def lite_clip(lite_skeleton):
    motion = dance_clip(lite_skeleton, 120, seed=3)
    feats, anchor = features_for(lite_skeleton, motion)
    return lite_skeleton, motion, feats, anchor


@pytest.fixture(scope="session")
def dance_500(full_skeleton):
    motion = dance_clip(full_skeleton, 500, seed=1)
    return features_for(full_skeleton, motion)[0]


@pytest.fixture
def chain_skeleton():
    """Three joints in a line along +X, root with position channels."""
    return Skeleton((
        Joint("root", None, np.zeros(3), ("Xposition", "Yposition", "Zposition",
                                          "Zrotation", "Xrotation", "Yrotation")),
        Joint("mid", 0, np.array([1.0, 0, 0]), ("Zrotation", "Xrotation", "Yrotation")),
        Joint("tip", 1, np.array([1.0, 0, 0]), ("Zrotation", "Xrotation", "Yrotation"),
              ((0.5, 0.0, 0.0),)),
    ), foot_joints=(2,))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LOG = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LOG):
            terminalreporter.write_line(line)
