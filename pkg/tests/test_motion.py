import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from emogesture import motion
from emogesture.errors import DegenerateRotationError, LoadError, ShapeError, ValidationError
from emogesture.motion import PoseSequence, SkeletonSpec

from .conftest import random_rotations


def gram_schmidt_oracle(r):
    a1, a2 = np.array(r[:3], float), np.array(r[3:], float)
    b1 = a1 / np.sqrt(np.sum(a1 * a1))
    proj = np.sum(b1 * a2)
    b2 = a2 - proj * b1
    b2 = b2 / np.sqrt(np.sum(b2 * b2))
    b3 = np.array([b1[1] * b2[2] - b1[2] * b2[1],
                   b1[2] * b2[0] - b1[0] * b2[2],
                   b1[0] * b2[1] - b1[1] * b2[0]])
    return np.column_stack([b1, b2, b3])


def axis_angle_oracle(axis, angle):
    # Rodrigues formula, independent of scipy
    k = np.asarray(axis, float) / np.linalg.norm(axis)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * kx @ kx


def test_identity(backend):
    np.testing.assert_array_equal(motion.rot6d_to_matrix([1, 0, 0, 0, 1, 0]), np.eye(3))


def test_quarter_turn_about_z(backend):
    r = motion.rot6d_to_matrix([0, 1, 0, -1, 0, 0])
    np.testing.assert_allclose(r, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)


def test_random_matches_gram_schmidt_oracle(backend, rng):
    for r in rng.normal(size=(50, 6)):
        np.testing.assert_allclose(motion.rot6d_to_matrix(r), gram_schmidt_oracle(r), atol=1e-10)


def test_output_is_proper_rotation(backend, rng):
    mats = motion.rot6d_to_matrix(rng.normal(size=(200, 6)))
    np.testing.assert_allclose(np.swapaxes(mats, 1, 2) @ mats, np.broadcast_to(np.eye(3), mats.shape), atol=1e-6)
    np.testing.assert_allclose(np.linalg.det(mats), 1.0, atol=1e-9)


@pytest.mark.parametrize("bad", [
    [0, 0, 0, 0, 1, 0],
    [1, 0, 0, 0, 0, 0],
    [1, 2, 3, 2, 4, 6],
    [1, 0, 0, -3, 0, 0],
    [1, 0, 0, 1, 1e-9, 0],
])
def test_degenerate_input_rejected(backend, bad):
    with pytest.raises(DegenerateRotationError):
        motion.rot6d_to_matrix(bad)


def test_degenerate_row_in_batch_rejected(backend, rng):
    r = rng.normal(size=(10, 6))
    r[7] = 0.0
    with pytest.raises(DegenerateRotationError, match="row 7"):
        motion.rot6d_to_matrix(r)


@given(arrays(np.float64, 6, elements=st.floats(-10, 10)), st.floats(1e-3, 1e3))
@settings(max_examples=200, deadline=None)
def test_positive_scaling_gives_same_matrix(r, scale):
    try:
        ref = motion.rot6d_to_matrix(r)
    except DegenerateRotationError:
        return
    np.testing.assert_allclose(motion.rot6d_to_matrix(r * scale), ref, atol=1e-9)


def test_matrix_to_rot6d_known_values():
    np.testing.assert_array_equal(motion.matrix_to_rot6d(np.eye(3)), [1, 0, 0, 0, 1, 0])
    rz = [[0, -1, 0], [1, 0, 0], [0, 0, 1]]
    np.testing.assert_array_equal(motion.matrix_to_rot6d(rz), [0, 1, 0, -1, 0, 0])


def test_matrix_to_rot6d_rejects_non_orthonormal():
    with pytest.raises(ValidationError):
        motion.matrix_to_rot6d(np.diag([1.0, 2.0, 1.0]))


def test_axis_angle_round_trip(backend, rng):
    for _ in range(100):
        axis, angle = rng.normal(size=3), rng.uniform(0, np.pi)
        r = axis_angle_oracle(axis, angle)
        back = motion.rot6d_to_matrix(motion.matrix_to_rot6d(r))
        assert motion.geodesic_angle(r, back) < 1e-6


def test_round_trip_1000_rotations(backend, rng):
    mats = random_rotations(rng, 1000)
    back = motion.rot6d_to_matrix(motion.matrix_to_rot6d(mats))
    assert motion.geodesic_angle(mats, back).max() < 1e-6


# -- offsets -----------------------------------------------------------------


def test_offsets_constant_sequence_is_zero():
    frames = np.tile(np.arange(12.0), (5, 1))
    np.testing.assert_array_equal(motion.motion_offsets(frames), np.zeros((4, 12)))


def test_offsets_linear_ramp():
    v = np.linspace(-1, 1, 12)
    frames = np.arange(7)[:, None] * v
    np.testing.assert_allclose(motion.motion_offsets(frames), np.tile(v, (6, 1)), atol=1e-15)


def test_offsets_match_subtraction_oracle(rng):
    frames = rng.normal(size=(9, 18))
    out = motion.motion_offsets(PoseSequence(frames))
    oracle = np.array([[frames[i + 1, c] - frames[i, c] for c in range(18)] for i in range(8)])
    np.testing.assert_array_equal(out, oracle)
    assert out.shape == (8, 18)


def test_offsets_reconstruct_last_frame(rng):
    frames = rng.normal(size=(30, 12))
    np.testing.assert_allclose(frames[0] + motion.motion_offsets(frames).sum(0), frames[-1], atol=1e-12)


def test_offsets_need_two_frames():
    with pytest.raises(ShapeError):
        motion.motion_offsets(np.zeros((1, 6)))


def test_pose_sequence_validation():
    with pytest.raises(ShapeError):
        PoseSequence(np.zeros((1, 6)))
    with pytest.raises(ShapeError):
        PoseSequence(np.zeros((3, 7)))
    with pytest.raises(ValidationError):
        PoseSequence(np.full((3, 6), np.nan))


def test_jerk_not_increased_by_smoothing(rng):
    frames = np.cumsum(rng.normal(size=(60, 12)), axis=0)
    kernel = np.ones(5) / 5
    smooth = np.stack([np.convolve(np.pad(c, 2, mode="edge"), kernel, mode="valid") for c in frames.T], 1)
    assert motion.jerk(smooth) <= motion.jerk(frames) + 1e-9


# -- skeleton / forward kinematics ------------------------------------------


def identity_pose(n, j):
    return np.tile([1.0, 0, 0, 0, 1, 0], (n, j))


def test_fk_identity_gives_cumulative_offsets(backend):
    sk = motion.upper_body_skeleton()
    pos = motion.forward_kinematics(identity_pose(2, sk.n_joints), sk)
    for k, p in enumerate(sk.parents):
        expected = np.zeros(3)
        j = k
        while sk.parents[j] >= 0:
            expected += sk.offsets[j]
            j = sk.parents[j]
        np.testing.assert_allclose(pos[:, k], np.tile(expected, (2, 1)), atol=1e-12)


def test_fk_two_joint_chain(backend):
    sk = SkeletonSpec((-1, 0), np.array([[0.0, 0, 0], [1.0, 0, 0]]))
    frames = np.array([[0, 1, 0, -1, 0, 0, 1, 0, 0, 0, 1, 0]] * 2, dtype=float)
    pos = motion.forward_kinematics(frames, sk)
    np.testing.assert_allclose(pos[0, 1], [0, 1, 0], atol=1e-15)
    np.testing.assert_array_equal(pos[:, 0], 0.0)


def test_fk_matches_recursive_oracle(backend, rng):
    sk = SkeletonSpec((-1, 0, 1), rng.normal(size=(3, 3)))
    mats = random_rotations(rng, 12).reshape(4, 3, 3, 3)
    frames = motion.matrix_to_rot6d(mats).reshape(4, 18)

    def oracle(t, k):
        if sk.parents[k] < 0:
            return mats[t, k], np.zeros(3)
        g_par, p_par = oracle(t, sk.parents[k])
        return g_par @ mats[t, k], p_par + g_par @ sk.offsets[k]

    pos = motion.forward_kinematics(frames, sk)
    for t in range(4):
        for k in range(3):
            np.testing.assert_allclose(pos[t, k], oracle(t, k)[1], atol=1e-10)


def test_fk_unsorted_parents(backend):
    sk = SkeletonSpec((2, 0, -1), np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 0]]))
    pos = motion.forward_kinematics(identity_pose(1, 3), sk)
    np.testing.assert_allclose(pos[0], [[1, 0, 0], [1, 1, 0], [0, 0, 0]])


def test_fk_dimension_mismatch():
    with pytest.raises(ShapeError):
        motion.forward_kinematics(identity_pose(2, 3), motion.upper_body_skeleton())


@pytest.mark.parametrize("parents", [(-1,), (-1, -1), (1, 0), (-1, 5), (-1, 2, 1)])
def test_invalid_skeletons(parents):
    with pytest.raises((ValidationError, ShapeError)):
        SkeletonSpec(parents, np.zeros((len(parents), 3)))


# -- clip files --------------------------------------------------------------


def test_pose_file_round_trip_bit_exact(tmp_path, rng):
    pose = PoseSequence(rng.normal(size=(60, 96)).astype(np.float32), 15.0)
    path = motion.save_pose(tmp_path / "clip", pose)
    header = json.loads(path.with_suffix(".json").read_text())
    assert header == {"n_frames": 60, "n_joints": 16, "fps": 15.0, "dtype": "f32le"}
    assert path.stat().st_size == 60 * 96 * 4
    back = motion.load_pose(path)
    assert back.frames.tobytes() == pose.frames.tobytes()


def test_pose_file_errors(tmp_path, rng):
    pose = PoseSequence(rng.normal(size=(4, 12)).astype(np.float32))
    path = motion.save_pose(tmp_path / "clip", pose)
    with pytest.raises(LoadError, match="J=2.*J=16"):
        motion.load_pose(path, expected_joints=16)
    path.with_suffix(".json").write_text("{not json")
    with pytest.raises(LoadError, match="corrupt"):
        motion.load_pose(path)
    motion.save_pose(tmp_path / "clip", pose)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(LoadError, match="bytes"):
        motion.load_pose(path)
