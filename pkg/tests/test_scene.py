import math

import numpy as np
import pytest
from scipy import stats

from synthface.config import CameraConfig, CollectionConfig, GenerationConfig
from synthface.desk import ExpressionLibrary
from synthface.errors import ConfigurationError
from synthface.rig import FaceRig, bind_pose_mesh, joint_locations
from synthface.scene import (AssetSlots, GazeParams, SceneDescription, apply_gaze, assemble_scene, attach_proxies,
                             eyelid_pose, head_bounds, look_at_rotation, sample_assets, sample_camera,
                             sample_expression)
from synthface.semantic import SemanticClass


def _library(n=3, entries=None, sequence=None):
    entries = np.ones((1, n)) if entries is None else entries
    sequence = np.full((4, n), 2.0) if sequence is None else sequence
    return ExpressionLibrary(entries, sequence)


class TestExpression:
    def test_single_entry_library(self):
        lib = _library(entries=np.array([[0.1, 0.2, 0.3]]))
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert np.array_equal(sample_expression(lib, rng, 0.0), [0.1, 0.2, 0.3])

    def test_always_sequence(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert np.all(sample_expression(_library(), rng, 1.0) == 2.0)

    def test_sequence_fraction(self):
        rng = np.random.default_rng(1)
        draws = [sample_expression(_library(), rng, 0.25)[0] == 2.0 for _ in range(10_000)]
        assert 0.22 <= np.mean(draws) <= 0.28

    def test_empty_library(self):
        with pytest.raises(ConfigurationError):
            ExpressionLibrary(np.zeros((0, 3)), np.zeros((1, 3)))


class TestGaze:
    def test_zero_gaze_leaves_pose(self, rig):
        theta = np.zeros((rig.num_joints, 3))
        assert np.array_equal(apply_gaze(theta, GazeParams(0.0, 0.0), rig), theta)

    def test_sets_both_eyes(self, rig, rng):
        theta = rng.normal(size=(rig.num_joints, 3))
        out = apply_gaze(theta, GazeParams(yaw=0.2, pitch=0.1), rig)
        for name in ("left_eye", "right_eye"):
            assert np.array_equal(out[rig.joint_index(name)], [0.1, 0.2, 0.0])
        for name in ("neck", "head"):
            assert np.array_equal(out[rig.joint_index(name)], theta[rig.joint_index(name)])

    def test_rig_without_eyes(self, rig):
        kwargs = {f: getattr(rig, f) for f in rig.__dataclass_fields__ if f != "_hash"}
        kwargs["joint_names"] = ("neck", "head", "a", "b")
        other = FaceRig(**kwargs)
        with pytest.raises(ConfigurationError):
            apply_gaze(np.zeros((4, 3)), GazeParams(), other)


class TestEyelids:
    def test_zero_pitch(self):
        psi = np.linspace(-0.5, 0.5, 6)
        coupling = np.zeros(6)
        coupling[3] = 1.0
        assert np.array_equal(eyelid_pose(psi, GazeParams(0.3, 0.0), coupling), psi)

    def test_linear_coupling(self):
        psi = np.zeros(6)
        coupling = np.zeros(6)
        coupling[3] = 1.0
        out = eyelid_pose(psi, GazeParams(0.0, 0.2), coupling)
        assert out[3] == pytest.approx(0.2)
        assert np.all(np.delete(out, 3) == 0)

    def test_clamped(self):
        psi = np.zeros(6)
        psi[3] = 0.95
        coupling = np.zeros(6)
        coupling[3] = 1.0
        assert eyelid_pose(psi, GazeParams(0.0, 0.2), coupling, (-1.0, 1.0))[3] == 1.0


class TestCamera:
    def test_degenerate_ranges(self, rig):
        cfg = CameraConfig(azimuth_deg=(10, 10), elevation_deg=(5, 5), distance_m=(0.6, 0.6), focal_mm=(50, 50),
                           aperture_f=(4, 4), lookat_jitter=0.0, framing="shell")
        a = sample_camera(cfg, head_bounds(rig), np.random.default_rng(0))
        b = sample_camera(cfg, head_bounds(rig), np.random.default_rng(99))
        assert a == b

    def _shell(self):
        return CameraConfig(framing="shell")

    @pytest.mark.parametrize("framing", ["shell", "fill"])
    def test_positions_inside_shell(self, rig, framing):
        cfg = CameraConfig(framing=framing)
        lo, hi = head_bounds(rig)
        rng = np.random.default_rng(2)
        for _ in range(10_000):
            cam = sample_camera(cfg, (lo, hi), rng)
            target = np.array(cam.look_at)
            assert np.all(target >= lo) and np.all(target <= hi)
            offset = np.array(cam.position) - target
            d = np.linalg.norm(offset)
            assert cfg.distance_m[0] - 1e-12 <= d <= cfg.distance_m[1] + 1e-12
            az = math.degrees(math.atan2(offset[0], offset[2]))
            el = math.degrees(math.asin(offset[1] / d))
            assert cfg.azimuth_deg[0] - 1e-9 <= az <= cfg.azimuth_deg[1] + 1e-9
            assert cfg.elevation_deg[0] - 1e-9 <= el <= cfg.elevation_deg[1] + 1e-9
            assert cfg.focal_mm[0] <= cam.focal_mm <= cfg.focal_mm[1]

    def test_azimuth_uniform(self, rig):
        rng = np.random.default_rng(3)
        bounds = head_bounds(rig)
        az = []
        for _ in range(10_000):
            cam = sample_camera(self._shell(), bounds, rng)
            off = np.array(cam.position) - np.array(cam.look_at)
            az.append(math.degrees(math.atan2(off[0], off[2])))
        counts, _ = np.histogram(az, bins=12, range=(-60, 60))
        assert stats.chisquare(counts).pvalue > 0.01

    def test_look_at_axes(self):
        r = look_at_rotation([0.0, 0.0, 2.0], [0.0, 0.0, 0.0])
        assert np.allclose(r, [[1, 0, 0], [0, -1, 0], [0, 0, -1]], atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0)


class TestAssets:
    def test_hair_toggle(self):
        cfg = GenerationConfig(hair_enabled=False)
        for seed in range(200):
            a = sample_assets(cfg, seed)
            assert a.hair_style is None and a.beard is None

    def test_clothing_toggle(self):
        cfg = GenerationConfig(clothing_enabled=False)
        for seed in range(200):
            a = sample_assets(cfg, seed)
            assert a.outfit is None and a.headwear is None and a.facewear is None and a.eyewear is None

    def test_ids_within_collections(self):
        cfg = GenerationConfig(collections=CollectionConfig(p_hair=1, p_beard=1, p_outfit=1, p_headwear=1,
                                                            p_facewear=1, p_eyewear=1))
        c = cfg.collections
        for seed in range(300):
            a = sample_assets(cfg, seed)
            assert 0 <= a.hair_style < c.hair_styles and 0 <= a.eyebrow < c.eyebrows
            assert 0 <= a.beard < c.beards and 0 <= a.eyelashes < c.eyelashes
            assert 0 <= a.outfit < c.outfits and 0 <= a.headwear < c.headwear
            assert 0 <= a.facewear < c.facewear and 0 <= a.eyewear < c.eyewear
            assert 0 <= a.melanin <= 1 and 0 <= a.grayness <= 1

    def test_hair_and_outfit_independent(self):
        cfg = GenerationConfig(collections=CollectionConfig(p_hair=1, p_outfit=1))
        hair, outfit = zip(*[(a.hair_style, a.outfit) for a in (sample_assets(cfg, s) for s in range(1000))])
        assert stats.pearsonr(hair, outfit).pvalue > 0.01


class TestAssemble:
    def test_same_seed_same_bytes(self, assets):
        cfg = GenerationConfig()
        assert assemble_scene(cfg, assets, 17).to_json() == assemble_scene(cfg, assets, 17).to_json()

    def test_round_trip_serialization(self, assets):
        scene = assemble_scene(GenerationConfig(), assets, 5)
        again = SceneDescription.from_dict(scene.to_dict())
        assert again.to_json() == scene.to_json()

    def test_independent_streams(self, assets):
        # changing the hair collection must not move the camera
        a = assemble_scene(GenerationConfig(), assets, 9)
        b = assemble_scene(GenerationConfig(collections=CollectionConfig(hair_styles=3, p_hair=0.5)), assets, 9)
        assert a.camera == b.camera
        assert np.array_equal(a.identity, b.identity)

    def test_gaze_layered_on_expression(self, assets):
        scene = assemble_scene(GenerationConfig(), assets, 21)
        rig = assets.rig
        assert np.array_equal(scene.pose[rig.joint_index("left_eye")], [scene.gaze.pitch, scene.gaze.yaw, 0.0])
        assert abs(scene.gaze.yaw) <= math.pi / 4 and abs(scene.gaze.pitch) <= math.pi / 4


class TestProxies:
    def _scene(self, assets, **slots):
        scene = assemble_scene(GenerationConfig(), assets, 1)
        base = dict(hair_style=None, outfit=None, headwear=None, facewear=None, eyewear=None)
        base.update(slots)
        return SceneDescription(**{**vars(scene), "assets": AssetSlots(**base),
                                   "pose": np.zeros_like(scene.pose)})

    def test_all_none(self, assets):
        assert attach_proxies(self._scene(assets), assets.rig) == []

    def test_hair_above_scalp(self, assets):
        scene = self._scene(assets, hair_style=3)
        proxies = attach_proxies(scene, assets.rig)
        assert [p.semantic_class for p in proxies] == [SemanticClass.HAIR]
        rig = assets.rig
        bind = bind_pose_mesh(rig, scene.identity, scene.expression).vertices
        # upper half of the head-skinned skin surface
        skin = np.zeros(rig.num_vertices, dtype=bool)
        skin[rig.faces[rig.semantic_regions == SemanticClass.SKIN].ravel()] = True
        cand = skin & (rig.skinning_weights[rig.joint_index("head")] >= 0.5)
        y = bind[:, 1]
        scalp = cand & (y > 0.5 * (y[cand].min() + y[cand].max()))
        assert proxies[0].vertices[:, 1].min() > y[scalp].mean()
        assert proxies[0].vertices[:, 1].max() > y[scalp].max()

    def test_eyewear_straddles_eyes(self, assets):
        scene = self._scene(assets, eyewear=2)
        (frame,) = attach_proxies(scene, assets.rig)
        rig = assets.rig
        joints = joint_locations(rig, scene.identity)
        left, right = joints[rig.joint_index("left_eye")], joints[rig.joint_index("right_eye")]
        lo_x, hi_x = sorted((left[0], right[0]))
        assert frame.vertices[:, 0].min() < lo_x and frame.vertices[:, 0].max() > hi_x
        tol = 0.03  # a couple of rig edge lengths
        for eye in (left, right):
            assert frame.vertices[:, 1].min() - tol < eye[1] < frame.vertices[:, 1].max() + tol
            assert np.min(np.linalg.norm(frame.vertices - eye, axis=1)) < tol + 0.02

    def test_negative_id_rejected(self, assets):
        with pytest.raises(ConfigurationError):
            attach_proxies(self._scene(assets, outfit=-1), assets.rig)
