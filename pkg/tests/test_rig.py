import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from synthface.errors import InvalidParameterError, InvalidRigError
from synthface.rig import (FaceRig, bind_pose_mesh, euler_to_rotation, forward_kinematics, joint_locations,
                           joint_order, linear_blend_skinning, load_rig, posed_mesh, save_rig, vertex_normals,
                           zero_params)

angles = st.lists(st.floats(-2 * math.pi, 2 * math.pi), min_size=3, max_size=3)


def _rot_z(a):
    return np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1.0]])


def _kwargs(rig, **changes):
    kw = {f: getattr(rig, f) for f in rig.__dataclass_fields__ if f != "_hash"}
    kw.update(changes)
    return kw


class TestEuler:
    def test_zero_is_identity(self):
        assert np.array_equal(euler_to_rotation([0, 0, 0]), np.eye(3))

    def test_quarter_turn_about_z(self):
        out = euler_to_rotation([0, 0, math.pi / 2]) @ [1, 0, 0]
        assert np.allclose(out, [0, 1, 0], atol=1e-12)

    @given(angles)
    def test_orthonormal_and_proper(self, a):
        r = euler_to_rotation(a)
        assert np.allclose(r.T @ r, np.eye(3), atol=1e-12)
        assert abs(np.linalg.det(r) - 1) < 1e-12
        assert np.allclose(r @ np.linalg.inv(r), np.eye(3), atol=1e-12)

    @given(angles)
    def test_matches_scipy_intrinsic_xyz(self, a):
        assert np.allclose(euler_to_rotation(a), oracles.rotation(a), atol=1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidParameterError):
            euler_to_rotation([0, np.nan, 0])


class TestBindPose:
    def test_zero_params_give_template(self, rng):
        rig = oracles.random_rig(rng)
        beta, psi, _ = zero_params(rig)
        assert np.array_equal(bind_pose_mesh(rig, beta, psi).vertices, rig.template_vertices)

    def test_one_hot_identity(self, rng):
        rig = oracles.random_rig(rng)
        beta = np.zeros(rig.num_identity)
        beta[2] = 1.0
        out = bind_pose_mesh(rig, beta, np.zeros(rig.num_expression)).vertices
        assert np.allclose(out, rig.template_vertices + rig.identity_basis[2], atol=1e-15)

    def test_matches_loop_oracle(self, rng):
        rig = oracles.random_rig(rng)
        beta, psi = rng.normal(size=rig.num_identity), rng.normal(size=rig.num_expression)
        got = bind_pose_mesh(rig, beta, psi).vertices
        assert np.max(np.abs(got - oracles.bind_pose(rig, beta, psi))) < 1e-12

    def test_linearity(self, rng):
        rig = oracles.random_rig(rng)
        t = rig.template_vertices
        p1 = rng.normal(size=rig.num_identity + rig.num_expression)
        p2 = rng.normal(size=rig.num_identity + rig.num_expression)
        a, b = rng.normal(size=2)

        def disp(p):
            return bind_pose_mesh(rig, p[:rig.num_identity], p[rig.num_identity:]).vertices - t

        assert np.allclose(disp(a * p1 + b * p2), a * disp(p1) + b * disp(p2), atol=1e-10)

    def test_dimension_mismatch(self, rng):
        rig = oracles.random_rig(rng)
        with pytest.raises(InvalidParameterError):
            bind_pose_mesh(rig, np.zeros(rig.num_identity + 1), np.zeros(rig.num_expression))


class TestJoints:
    def test_zero_identity_keeps_template_joints(self, rng):
        rig = oracles.random_rig(rng)
        assert np.array_equal(joint_locations(rig, np.zeros(rig.num_identity)), rig.template_joints)

    def test_weight_concentrated_on_one_vertex(self, rng):
        rig = oracles.random_rig(rng, n=6, k=2)
        w = np.zeros((2, 6))
        w[0, :] = 1.0
        w[0, 4], w[1, 4] = 0.0, 1.0
        rig = FaceRig(**_kwargs(rig, skinning_weights=w))
        beta = rng.normal(size=rig.num_identity)
        moved = joint_locations(rig, beta)[1] - rig.template_joints[1]
        assert np.allclose(moved, np.einsum("i,ik->k", beta, rig.identity_basis[:, 4]), atol=1e-14)

    @pytest.mark.parametrize("normalize", [True, False])
    def test_matches_loop_oracle(self, rng, normalize):
        rig = oracles.random_rig(rng)
        beta = rng.normal(size=rig.num_identity)
        got = joint_locations(rig, beta, normalize_rows=normalize)
        assert np.max(np.abs(got - oracles.joints(rig, beta, normalize))) < 1e-12


class TestKinematics:
    def test_zero_pose_identity_transforms(self, rng):
        rig = oracles.random_rig(rng, k=4)
        out = forward_kinematics(rig, np.zeros((4, 3)), rig.template_joints)
        assert np.array_equal(out, np.broadcast_to(np.eye(4), (4, 4, 4)))

    def test_root_only_rotation(self, rng):
        rig = oracles.random_rig(rng, k=4)
        theta = np.zeros((4, 3))
        theta[0] = rng.normal(size=3)
        out = forward_kinematics(rig, theta, rig.template_joints)
        r, c = oracles.rotation(theta[0]), rig.template_joints[0]
        expected = np.eye(4)
        expected[:3, :3], expected[:3, 3] = r, c - r @ c
        for t in out:
            assert np.allclose(t, expected, atol=1e-12)

    def test_two_joint_chain_hand_composed(self):
        rng = np.random.default_rng(3)
        rig = oracles.random_rig(rng, k=2)
        j = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        theta = np.array([[0.0, 0.0, math.pi / 2], [0.0, 0.0, math.pi / 2]])
        out = forward_kinematics(rig, theta, j)
        # joint 1 tip at (2, 0, 0): local quarter turn about (1,0,0) -> (1,1,0); root turn -> (-1,1,0)
        tip = out[1] @ [2.0, 0.0, 0.0, 1.0]
        assert np.allclose(tip[:3], [-1.0, 1.0, 0.0], atol=1e-12)
        a = np.eye(4)
        a[:3, :3] = _rot_z(math.pi / 2)
        b = np.eye(4)
        b[:3, :3] = _rot_z(math.pi / 2)
        b[:3, 3] = j[1] - _rot_z(math.pi / 2) @ j[1]
        assert np.allclose(out[1], a @ b, atol=1e-12)

    def test_matches_recursive_oracle(self, rng):
        rig = oracles.random_rig(rng, k=5)
        theta = rng.normal(size=(5, 3))
        got = forward_kinematics(rig, theta, rig.template_joints)
        want = oracles.global_transforms(rig, theta, rig.template_joints)
        assert np.allclose(got, want, atol=1e-12)

    def test_cycle_rejected(self):
        with pytest.raises(InvalidRigError):
            joint_order([-1, 2, 1])

    def test_root_must_be_first(self):
        with pytest.raises(InvalidRigError):
            joint_order([1, -1])


class TestSkinning:
    def test_identity_transforms(self, rng):
        x = rng.normal(size=(7, 3))
        w = np.full((2, 7), 0.5)
        assert np.allclose(linear_blend_skinning(x, np.stack([np.eye(4)] * 2), w), x, atol=1e-15)

    def test_quarter_turn(self):
        t = np.eye(4)
        t[:3, :3] = _rot_z(math.pi / 2)
        out = linear_blend_skinning([[1.0, 0, 0]], t[None], np.ones((1, 1)))
        assert np.allclose(out, [[0, 1, 0]], atol=1e-12)

    def test_half_blend(self):
        t = np.eye(4)
        t[:3, :3] = _rot_z(math.pi / 2)
        out = linear_blend_skinning([[1.0, 0, 0]], np.stack([np.eye(4), t]), np.full((2, 1), 0.5))
        assert np.allclose(out, [[0.5, 0.5, 0]], atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidParameterError):
            linear_blend_skinning(np.zeros((3, 3)), np.stack([np.eye(4)] * 2), np.ones((2, 4)))


class TestPosedMesh:
    def test_zero_params_give_template(self, rig):
        beta, psi, theta = zero_params(rig)
        assert np.max(np.abs(posed_mesh(rig, beta, psi, theta).vertices - rig.template_vertices)) <= 1e-12

    def test_root_rotation_is_rigid(self, rng):
        rig = oracles.random_rig(rng, k=3)
        beta, psi = rng.normal(size=rig.num_identity), rng.normal(size=rig.num_expression)
        theta = np.zeros((3, 3))
        theta[0] = rng.normal(size=3)
        bind = bind_pose_mesh(rig, beta, psi).vertices
        posed = posed_mesh(rig, beta, psi, theta).vertices
        d0 = np.linalg.norm(bind[:, None] - bind[None], axis=2)
        d1 = np.linalg.norm(posed[:, None] - posed[None], axis=2)
        assert np.max(np.abs(d0 - d1)) < 1e-9

    def test_matches_pipeline_oracle(self, rng):
        for _ in range(5):
            rig = oracles.random_rig(rng, k=int(rng.integers(1, 5)))
            beta, psi = rng.normal(size=rig.num_identity), rng.normal(size=rig.num_expression)
            theta = rng.normal(size=(rig.num_joints, 3))
            got = posed_mesh(rig, beta, psi, theta).vertices
            assert np.max(np.abs(got - oracles.posed(rig, beta, psi, theta))) < 1e-10


class TestValidation:
    def test_weights_must_sum_to_one(self, rng):
        rig = oracles.random_rig(rng)
        w = rig.skinning_weights.copy()
        w[0, 0] += 1e-6
        with pytest.raises(InvalidRigError, match="sum to 1"):
            FaceRig(**_kwargs(rig, skinning_weights=w))

    def test_face_index_range(self, rng):
        rig = oracles.random_rig(rng)
        faces = rig.faces.copy()
        faces[0, 0] = rig.num_vertices
        with pytest.raises(InvalidRigError, match="face index"):
            FaceRig(**_kwargs(rig, faces=faces))

    def test_barycentric_sum(self, rng):
        from synthface.rig import LandmarkAnchors

        rig = oracles.random_rig(rng)
        bad = LandmarkAnchors(np.array([0]), np.array([[0.5, 0.5, 0.1]]))
        with pytest.raises(InvalidRigError, match="barycentric"):
            FaceRig(**_kwargs(rig, landmarks=bad))

    def test_rig_is_read_only(self, rig):
        with pytest.raises(ValueError):
            rig.template_vertices[0, 0] = 1.0


class TestNormals:
    def test_unit_length(self, rig):
        n = vertex_normals(rig.template_vertices, rig.faces)
        assert np.allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-6)

    def test_flat_triangle(self):
        n = vertex_normals(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]]), np.array([[0, 1, 2]]))
        assert np.allclose(n, [[0, 0, 1]] * 3)


class TestRigFile:
    def test_round_trip(self, rig, tmp_path):
        save_rig(tmp_path / "rig.npz", rig)
        loaded = load_rig(tmp_path / "rig.npz")
        assert loaded.content_hash() == rig.content_hash()
        assert loaded.joint_names == rig.joint_names

    def test_invalid_weights_rejected_with_rule(self, rig, tmp_path):
        from synthface.rig import _rig_arrays

        arrays = {k: np.array(v) for k, v in _rig_arrays(rig).items()}
        arrays["skinning_weights"][0, 0] += 0.5
        arrays["format_version"] = np.array(1)
        np.savez(tmp_path / "bad.npz", **arrays)
        with pytest.raises(InvalidRigError, match="sum to 1"):
            load_rig(tmp_path / "bad.npz")

    def test_version_checked(self, rig, tmp_path):
        from synthface.rig import _rig_arrays

        arrays = dict(_rig_arrays(rig))
        arrays["format_version"] = np.array(99)
        np.savez(tmp_path / "v.npz", **arrays)
        with pytest.raises(InvalidRigError, match="version"):
            load_rig(tmp_path / "v.npz")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pose_oracle_property(seed):
    rng = np.random.default_rng(seed)
    rig = oracles.random_rig(rng, n=8, k=int(rng.integers(1, 5)), nb=2, ne=2)
    beta, psi = rng.normal(size=2), rng.normal(size=2)
    theta = rng.uniform(-math.pi, math.pi, size=(rig.num_joints, 3))
    got = posed_mesh(rig, beta, psi, theta).vertices
    assert np.max(np.abs(got - oracles.posed(rig, beta, psi, theta))) < 1e-10
