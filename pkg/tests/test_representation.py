import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from mosynth.errors import DegenerateError
from mosynth.motion_io import RawMotion
from mosynth.representation import (
    RootAnchor,
    decode,
    encode,
    rotation_to_6d,
    six_d_to_matrix,
    six_d_to_rotation,
)


def test_identity_to_6d():
    np.testing.assert_array_equal(rotation_to_6d(np.array([1.0, 0, 0, 0])), [1, 0, 0, 0, 1, 0])


def test_ninety_about_z_to_6d():
    # Rz(90) = [[0,-1,0],[1,0,0],[0,0,1]]; first column (0,1,0), second (-1,0,0)
    q = np.array([np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)])
    np.testing.assert_allclose(rotation_to_6d(q), [0, 1, 0, -1, 0, 0], atol=1e-15)


def test_antipodal_quaternions_share_6d():
    q = Rotation.random(50, random_state=1).as_quat(scalar_first=True)
    np.testing.assert_allclose(rotation_to_6d(q), rotation_to_6d(-q), atol=1e-15)


def test_6d_matches_scipy_matrix():
    rot = Rotation.random(30, random_state=5)
    m = rot.as_matrix()
    expected = np.concatenate([m[:, :, 0], m[:, :, 1]], axis=1)
    np.testing.assert_allclose(rotation_to_6d(rot.as_quat(scalar_first=True)), expected, atol=1e-14)


def test_gram_schmidt_identity_and_scale():
    np.testing.assert_allclose(six_d_to_rotation(np.array([1.0, 0, 0, 0, 1, 0])), [1, 0, 0, 0])
    np.testing.assert_allclose(six_d_to_rotation(np.array([2.0, 0, 0, 0, 3, 0])), [1, 0, 0, 0])


def test_gram_schmidt_by_hand():
    # a1 = (1,1,0) -> b1 = (1,1,0)/sqrt2; a2 = (0,1,0) -> u = (-1/2, 1/2, 0) -> b2 = (-1,1,0)/sqrt2
    m = six_d_to_matrix(np.array([1.0, 1, 0, 0, 1, 0]))
    r = 1 / np.sqrt(2)
    np.testing.assert_allclose(m, [[r, -r, 0], [r, r, 0], [0, 0, 1]], atol=1e-15)


def test_6d_round_trip_thousand_rotations():
    q = Rotation.random(1000, random_state=7).as_quat(scalar_first=True)
    back = six_d_to_rotation(rotation_to_6d(q))
    err = np.minimum(np.abs(back - q).max(axis=1), np.abs(back + q).max(axis=1))
    assert err.max() < 1e-6
    np.testing.assert_allclose(np.linalg.norm(back, axis=1), 1.0, atol=1e-9)


def test_unit_norm_on_perturbed_input():
    v = np.random.default_rng(0).normal(size=(500, 6))
    q = six_d_to_rotation(v)
    assert np.abs(np.linalg.norm(q, axis=1) - 1).max() < 1e-9


@pytest.mark.parametrize("v", [[0, 0, 0, 0, 1, 0], [1, 0, 0, 2, 0, 0], [1, 0, 0, 0, 0, 0]])
def test_degenerate_6d_raises(v):
    with pytest.raises(DegenerateError):
        six_d_to_rotation(np.array(v, dtype=float))


def test_degenerate_error_names_frame_and_joint():
    v = np.tile([1.0, 0, 0, 0, 1, 0], (4, 3, 1))
    v[2, 1] = [1, 0, 0, 3, 0, 0]
    with pytest.raises(DegenerateError, match="frame 2, joint 1"):
        six_d_to_rotation(v)


def _motion(O, J=2, seed=0):
    T = len(O)
    q = Rotation.random(T * J, random_state=seed).as_quat(scalar_first=True).reshape(T, J, 4)
    return RawMotion(1 / 30, np.asarray(O, dtype=float), q)


def _two_joint(chain_skeleton):
    from mosynth.motion_io import Skeleton

    return Skeleton(chain_skeleton.joints[:2])


def test_constant_root_gives_zero_velocity(chain_skeleton):
    skel = _two_joint(chain_skeleton)
    feats, anchor = encode(skel, _motion(np.full((4, 3), 2.0)))
    np.testing.assert_array_equal(feats.data[:, feats.root_columns], 0)
    np.testing.assert_array_equal(anchor.initial_root_position, [2, 2, 2])


def test_consecutive_differences(chain_skeleton):
    skel = _two_joint(chain_skeleton)
    feats, _ = encode(skel, _motion([[0, 0, 0], [1, 0, 0], [3, 0, 0]]))
    np.testing.assert_array_equal(feats.data[:, feats.root_columns], [[1, 0, 0], [1, 0, 0], [2, 0, 0]])
    assert feats.width == 2 * 6 + 3


def test_encode_translation_invariant(lite_clip):
    skel, motion, feats, _ = lite_clip
    labels = feats.data[:, feats.contact_columns]
    shifted = RawMotion(motion.frame_time, motion.root_positions + 4.0, motion.rotations)
    f2, a2 = encode(skel, shifted, labels)
    np.testing.assert_allclose(f2.data, feats.data, atol=1e-12)
    np.testing.assert_allclose(a2.initial_root_position, motion.root_positions[0] + 4.0)


def test_decode_zero_velocity(chain_skeleton):
    skel = _two_joint(chain_skeleton)
    feats, _ = encode(skel, _motion(np.zeros((5, 3))))
    motion, _ = decode(feats, RootAnchor([5, 0, 0]), skel)
    np.testing.assert_array_equal(motion.root_positions, np.tile([5.0, 0, 0], (5, 1)))


def test_encode_decode_round_trip(lite_clip):
    skel, motion, feats, anchor = lite_clip
    back, labels = decode(feats, anchor, skel)
    np.testing.assert_allclose(back.root_positions, motion.root_positions, atol=1e-5)
    err = np.minimum(np.abs(back.rotations - motion.rotations).max(-1),
                     np.abs(back.rotations + motion.rotations).max(-1))
    assert err.max() < 1e-5
    np.testing.assert_array_equal(labels, feats.data[:, feats.contact_columns])
    again, _ = encode(skel, back, labels)
    np.testing.assert_allclose(again.data, feats.data, atol=1e-5)


def test_blended_labels_threshold(chain_skeleton):
    skel = chain_skeleton
    feats, anchor = encode(skel, _motion(np.zeros((2, 3)), J=3), np.zeros((2, 1)))
    feats.data[:, feats.contact_columns] = [[0.4], [0.6]]
    _, labels = decode(feats, anchor, skel)
    np.testing.assert_array_equal(labels, [[0], [1]])


def test_close_loop_returns_to_start(chain_skeleton):
    skel = _two_joint(chain_skeleton)
    feats, anchor = encode(skel, _motion(np.cumsum(np.ones((6, 3)), axis=0)))
    motion, _ = decode(feats, anchor, skel, close_loop=True)
    np.testing.assert_array_equal(motion.root_positions[-1], motion.root_positions[0])
