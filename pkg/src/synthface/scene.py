"""Procedural sampling of one synthetic individual and its surroundings.

Every field of a :class:`SceneDescription` comes from its own random
stream keyed by ``(seed, field tag)``; collections are sampled
independently of each other.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .learning import sample_identity
from .rig import bind_pose_mesh, forward_kinematics, joint_locations
from .semantic import SemanticClass
from .streams import rng_for

EYE_JOINTS = ("left_eye", "right_eye")


@dataclass(frozen=True)
class GazeParams:
    yaw: float = 0.0
    pitch: float = 0.0


@dataclass(frozen=True)
class AssetSlots:
    hair_style: int | None = None
    eyebrow: int = 0
    beard: int | None = None
    eyelashes: int = 0
    melanin: float = 0.5
    grayness: float = 0.0
    outfit: int | None = None
    headwear: int | None = None
    facewear: int | None = None
    eyewear: int | None = None


@dataclass(frozen=True)
class CameraParams:
    position: tuple
    look_at: tuple
    focal_mm: float
    aperture_f: float


@dataclass(frozen=True)
class EnvironmentParams:
    id: int
    rotation: float
    intensity: float


@dataclass(frozen=True, eq=False)
class SceneDescription:
    seed: int
    identity: np.ndarray
    expression: np.ndarray
    pose: np.ndarray
    gaze: GazeParams
    assets: AssetSlots
    camera: CameraParams
    environment: EnvironmentParams
    hair_enabled: bool = True
    clothing_enabled: bool = True

    def to_dict(self):
        return {
            "seed": self.seed,
            "identity": self.identity.tolist(),
            "expression": self.expression.tolist(),
            "pose": self.pose.tolist(),
            "gaze": vars(self.gaze).copy(),
            "assets": vars(self.assets).copy(),
            "camera": {
                "position": list(self.camera.position),
                "look_at": list(self.camera.look_at),
                "focal_mm": self.camera.focal_mm,
                "aperture_f": self.camera.aperture_f,
            },
            "environment": vars(self.environment).copy(),
            "hair_enabled": self.hair_enabled,
            "clothing_enabled": self.clothing_enabled,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc):
        cam = doc["camera"]
        return cls(
            seed=int(doc["seed"]),
            identity=np.asarray(doc["identity"], dtype=np.float64),
            expression=np.asarray(doc["expression"], dtype=np.float64),
            pose=np.asarray(doc["pose"], dtype=np.float64),
            gaze=GazeParams(**doc["gaze"]),
            assets=AssetSlots(**doc["assets"]),
            camera=CameraParams(tuple(cam["position"]), tuple(cam["look_at"]), cam["focal_mm"], cam["aperture_f"]),
            environment=EnvironmentParams(**doc["environment"]),
            hair_enabled=doc["hair_enabled"],
            clothing_enabled=doc["clothing_enabled"],
        )


# -- individual samplers ------------------------------------------------------


def sample_expression(library, rng, sequence_probability=0.25):
    """A library entry, or with ``sequence_probability`` a sequence keyframe."""
    if len(library.entries) == 0 or len(library.sequence) == 0:
        raise ConfigurationError("expression library is empty")
    if rng.random() < sequence_probability:
        return library.sequence[rng.integers(len(library.sequence))].copy()
    return library.entries[rng.integers(len(library.entries))].copy()


def apply_gaze(theta, gaze, rig):
    """Set both eye joints to (pitch, yaw, 0); leave every other joint alone."""
    names = rig.joint_names
    if not all(name in names for name in EYE_JOINTS):
        raise ConfigurationError("rig has no eye joints to apply gaze to")
    theta = np.array(theta, dtype=np.float64, copy=True)
    for name in EYE_JOINTS:
        theta[names.index(name)] = (gaze.pitch, gaze.yaw, 0.0)
    return theta


def eyelid_pose(psi, gaze, coupling, value_range=(-1.0, 1.0)):
    """Move the eyelid components linearly with gaze pitch, then clamp them."""
    psi = np.array(psi, dtype=np.float64, copy=True)
    coupling = np.asarray(coupling, dtype=np.float64)
    active = coupling != 0
    psi[active] = np.clip(psi[active] + coupling[active] * gaze.pitch, *value_range)
    return psi


def sample_gaze(config, rng):
    return GazeParams(
        yaw=math.radians(rng.uniform(*config.yaw_deg)),
        pitch=math.radians(rng.uniform(*config.pitch_deg)),
    )


def sample_pose(config, rig, rng):
    theta = np.zeros((rig.num_joints, 3))
    for name, limits in (("neck", config.neck_deg), ("head", config.head_deg)):
        if name in rig.joint_names:
            half = np.radians(limits)
            theta[rig.joint_names.index(name)] = rng.uniform(-half, half)
    return theta


def head_bounds(rig):
    """Axis-aligned bounds of template vertices driven mostly by the head."""
    if "head" in rig.joint_names:
        head = rig.skinning_weights[rig.joint_names.index("head")] >= 0.5
        head |= rig.skinning_weights[[rig.joint_names.index(n) for n in EYE_JOINTS if n in rig.joint_names]].sum(axis=0) >= 0.5
        pts = rig.template_vertices[head]
    else:
        pts = rig.template_vertices
    return pts.min(axis=0), pts.max(axis=0)


def look_at_rotation(position, target, up=(0.0, 1.0, 0.0)):
    """World-to-camera rotation; camera +z looks at ``target``, +y points down."""
    forward = np.asarray(target, dtype=np.float64) - np.asarray(position, dtype=np.float64)
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, np.array([0.0, 0.0, 1.0]))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.stack([right, down, forward])


def sample_camera(config, bounds, rng):
    """Camera on a spherical-shell sector in front of the face.

    Azimuth is uniform, elevation is area-uniform on the sphere.  With
    ``framing="shell"`` distance is volume-uniform over the configured
    range; with ``framing="fill"`` it is chosen so the head spans a sampled
    fraction of the frame height, clipped to the same range.
    """
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
    centre = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    azimuth = math.radians(rng.uniform(*config.azimuth_deg))
    s_lo, s_hi = (math.sin(math.radians(e)) for e in config.elevation_deg)
    elevation = math.asin(rng.uniform(s_lo, s_hi))
    focal = rng.uniform(*config.focal_mm)
    aperture = rng.uniform(*config.aperture_f)
    d_lo, d_hi = config.distance_m
    if config.framing == "shell":
        distance = rng.uniform(d_lo**3, d_hi**3) ** (1.0 / 3.0)
    else:
        fill = rng.uniform(*config.fill_fraction)
        distance = float(np.clip((focal / 36.0) * (2.0 * half[1]) / fill, d_lo, d_hi))
    jitter = rng.uniform(-1.0, 1.0, size=3) * config.lookat_jitter * half
    target = centre + jitter
    direction = np.array([
        math.cos(elevation) * math.sin(azimuth),
        math.sin(elevation),
        math.cos(elevation) * math.cos(azimuth),
    ])
    position = target + distance * direction
    return CameraParams(tuple(position.tolist()), tuple(target.tolist()), float(focal), float(aperture))


def _optional(rng, probability, size):
    filled = rng.random() < probability
    value = int(rng.integers(size))
    return value if filled else None


def sample_assets(config, seed):
    c = config.collections
    slots = AssetSlots(
        hair_style=_optional(rng_for(seed, "hair"), c.p_hair, c.hair_styles),
        eyebrow=int(rng_for(seed, "eyebrow").integers(c.eyebrows)),
        beard=_optional(rng_for(seed, "beard"), c.p_beard, c.beards),
        eyelashes=int(rng_for(seed, "eyelashes").integers(c.eyelashes)),
        melanin=float(rng_for(seed, "melanin").random()),
        grayness=float(rng_for(seed, "grayness").random() ** 3),
        outfit=_optional(rng_for(seed, "outfit"), c.p_outfit, c.outfits),
        headwear=_optional(rng_for(seed, "headwear"), c.p_headwear, c.headwear),
        facewear=_optional(rng_for(seed, "facewear"), c.p_facewear, c.facewear),
        eyewear=_optional(rng_for(seed, "eyewear"), c.p_eyewear, c.eyewear),
    )
    if not config.hair_enabled:
        slots = _replace(slots, hair_style=None, beard=None)
    if not config.clothing_enabled:
        slots = _replace(slots, outfit=None, headwear=None, facewear=None, eyewear=None)
    return slots


def _replace(obj, **changes):
    from dataclasses import replace

    return replace(obj, **changes)


def assemble_scene(config, assets, seed):
    """Sample a complete :class:`SceneDescription` for ``seed``.

    ``assets`` provides ``rig``, ``identity`` (an IdentityDistribution) and
    ``library`` (an ExpressionLibrary).
    """
    config.validate()
    rig = assets.rig
    beta = sample_identity(assets.identity, rng_for(seed, "identity"), config.identity_truncation)
    psi = sample_expression(assets.library, rng_for(seed, "expression"), config.expression.sequence_probability)
    if psi.shape != (rig.num_expression,):
        raise ConfigurationError("expression library does not match the rig")
    gaze = sample_gaze(config.gaze, rng_for(seed, "gaze"))
    if rig.eyelid_coupling is not None:
        psi = eyelid_pose(psi, gaze, rig.eyelid_coupling, config.expression.value_range)
    theta = sample_pose(config.pose, rig, rng_for(seed, "pose"))
    theta = apply_gaze(theta, gaze, rig)
    camera = sample_camera(config.camera, head_bounds(rig), rng_for(seed, "camera"))
    env_rng = rng_for(seed, "environment")
    environment = EnvironmentParams(
        id=int(env_rng.integers(config.environment.count)),
        rotation=float(env_rng.uniform(0.0, 2 * math.pi)),
        intensity=float(env_rng.uniform(*config.environment.intensity)),
    )
    return SceneDescription(
        seed=int(seed),
        identity=beta,
        expression=psi,
        pose=theta,
        gaze=gaze,
        assets=sample_assets(config, seed),
        camera=camera,
        environment=environment,
        hair_enabled=config.hair_enabled,
        clothing_enabled=config.clothing_enabled,
    )


# -- asset proxies -------------------------------------------------------------


@dataclass(frozen=True)
class ProxyMesh:
    name: str
    vertices: np.ndarray  # world space, posed
    faces: np.ndarray
    uvs: np.ndarray
    semantic_class: SemanticClass
    albedo: np.ndarray  # (3,)
    joint: str


PROXY_SLOTS = ("hair_style", "outfit", "headwear", "facewear", "eyewear")


def _palette(index, salt):
    rng = np.random.default_rng([index, salt])
    return rng.uniform(0.1, 0.9, size=3)


def hair_color(melanin, grayness):
    blond = np.array([0.78, 0.62, 0.38])
    black = np.array([0.07, 0.05, 0.04])
    base = (1 - melanin) * blond + melanin * black
    return (1 - grayness) * base + grayness * np.array([0.72, 0.72, 0.72])


def _grid_faces(rows, cols, wrap):
    faces = []
    ncols = cols if wrap else cols - 1
    for i in range(rows - 1):
        for j in range(ncols):
            a = i * cols + j
            b = i * cols + (j + 1) % cols
            c = (i + 1) * cols + j
            d = (i + 1) * cols + (j + 1) % cols
            faces += [(a, c, d), (a, d, b)]
    return np.array(faces, dtype=np.int64)


def _grid_uvs(rows, cols):
    v, u = np.meshgrid(np.linspace(0, 1, rows), np.linspace(0, 1, cols), indexing="ij")
    return np.stack([u.ravel(), v.ravel()], axis=1)


def _scalp(rig, bind, head_mask):
    skin_faces = rig.faces[rig.semantic_regions == SemanticClass.SKIN]
    skin = np.zeros(rig.num_vertices, dtype=bool)
    skin[skin_faces.ravel()] = True
    cand = skin & head_mask
    y = bind[:, 1]
    mid = 0.5 * (y[cand].min() + y[cand].max())
    return np.nonzero(cand & (y > mid))[0]


def _hair_cap(style, bind, scalp):
    pts = bind[scalp]
    centroid_y = pts[:, 1].mean()
    top = pts[:, 1].max()
    bulk = 1.06 + 0.08 * ((style * 37) % 11) / 10.0
    margin = 0.002 + 0.01 * ((style * 13) % 7) / 6.0
    cx = 0.5 * (pts[:, 0].min() + pts[:, 0].max())
    cz = 0.5 * (pts[:, 2].min() + pts[:, 2].max())
    rx = 0.5 * (pts[:, 0].max() - pts[:, 0].min()) * bulk
    rz = 0.5 * (pts[:, 2].max() - pts[:, 2].min()) * bulk
    ry = (top - centroid_y) * bulk + 0.004
    base = min(centroid_y + margin, top - 1e-3)
    a_max = math.acos(np.clip((base - centroid_y) / ry, -1.0, 1.0))
    rows, cols = 7, 16
    verts = [(cx, centroid_y + ry, cz)]
    for i in range(1, rows + 1):
        a = a_max * i / rows
        for j in range(cols):
            c = 2 * math.pi * j / cols
            verts.append((cx + rx * math.sin(a) * math.sin(c), centroid_y + ry * math.cos(a),
                          cz + rz * math.sin(a) * math.cos(c)))
    verts = np.array(verts)
    verts[:, 1] = np.maximum(verts[:, 1], base)
    fan = np.array([(0, 1 + j, 1 + (j + 1) % cols) for j in range(cols)])
    faces = np.concatenate([fan, _grid_faces(rows, cols, wrap=True) + 1])
    uvs = np.concatenate([[[0.5, 0.0]], _grid_uvs(rows, cols)])
    return verts, faces, uvs


def _torso(outfit, neck_joint):
    width = 0.17 + 0.03 * (outfit % 5) / 4.0
    top_y = neck_joint[1] - 0.07
    rings = [(top_y, 0.07, 0.06), (top_y - 0.05, width, 0.10), (top_y - 0.30, width + 0.03, 0.11)]
    cols = 16
    verts = []
    for y, rx, rz in rings:
        for j in range(cols):
            c = 2 * math.pi * j / cols
            verts.append((neck_joint[0] + rx * math.sin(c), y, neck_joint[2] + rz * math.cos(c)))
    verts = np.array(verts)
    return verts, _grid_faces(len(rings), cols, wrap=True), _grid_uvs(len(rings), cols)


def _headwear(item, bind, scalp):
    pts = bind[scalp]
    cx = 0.5 * (pts[:, 0].min() + pts[:, 0].max())
    cz = 0.5 * (pts[:, 2].min() + pts[:, 2].max())
    r = 0.5 * max(pts[:, 0].max() - pts[:, 0].min(), pts[:, 2].max() - pts[:, 2].min()) * 1.15
    y0 = pts[:, 1].mean()
    height = 0.05 + 0.04 * (item % 4) / 3.0
    rows = [(y0, r * 1.0), (y0 + height * 0.6, r * 0.98), (pts[:, 1].max() + height * 0.5, r * 0.6)]
    cols = 16
    verts = [(cx, rows[-1][0] + 0.005, cz)]
    for y, rad in rows:
        for j in range(cols):
            c = 2 * math.pi * j / cols
            verts.append((cx + rad * math.sin(c), y, cz + rad * math.cos(c)))
    verts = np.array(verts)
    body = _grid_faces(len(rows), cols, wrap=True) + 1
    last = 1 + (len(rows) - 1) * cols
    cap = np.array([(0, last + (j + 1) % cols, last + j) for j in range(cols)])
    uvs = np.concatenate([[[0.5, 1.0]], _grid_uvs(len(rows), cols)])
    return verts, np.concatenate([body, cap]), uvs


def _facewear(item, bind, rig, head_mask):
    lm = rig.landmarks.points(bind, rig.faces)
    top = lm[29, 1] if len(lm) >= 68 else np.percentile(bind[head_mask, 1], 50)
    bottom = (lm[8, 1] - 0.012) if len(lm) >= 68 else bind[head_mask, 1].min()
    band = head_mask & (bind[:, 1] >= bottom) & (bind[:, 1] <= top)
    pts = bind[band]
    cz = pts[:, 2].min() + 0.4 * (pts[:, 2].max() - pts[:, 2].min())
    aspect = 1.15
    radius = np.sqrt(pts[:, 0] ** 2 + ((pts[:, 2] - cz) / aspect) ** 2).max() + 0.008
    span = 1.0 + 0.1 * (item % 3)
    rows, cols = 5, 12
    verts = []
    for i in range(rows):
        y = top - (top - bottom) * i / (rows - 1)
        for j in range(cols):
            phi = -span + 2 * span * j / (cols - 1)
            verts.append((radius * math.sin(phi), y, cz + aspect * radius * math.cos(phi)))
    return np.array(verts), _grid_faces(rows, cols, wrap=False), _grid_uvs(rows, cols)


def _eyewear(item, bind, joints, rig):
    left = joints[rig.joint_index("left_eye")]
    right = joints[rig.joint_index("right_eye")]
    near = np.abs(bind[:, 1] - left[1]) < 0.02
    near &= np.abs(bind[:, 0]) < abs(left[0] - right[0]) / 2 + 0.02
    eye_front = max(left[2], right[2]) + 0.024
    nose_front = bind[near, 2].max() + 0.004 if near.any() else eye_front
    inner_r = 0.016 + 0.002 * (item % 3)
    outer_r = inner_r + 0.003
    exponent = 2.0 + 2.0 * (item % 2)  # round or squarish rims
    segs = 12
    verts, faces = [], []

    def rim(centre):
        start = len(verts)
        for k in range(segs):
            t = 2 * math.pi * k / segs
            c, s = math.cos(t), math.sin(t)
            scale = (abs(c) ** exponent + abs(s) ** exponent) ** (-1.0 / exponent)
            for rad in (inner_r, outer_r):
                verts.append((centre[0] + rad * scale * c, centre[1] + 0.8 * rad * scale * s, eye_front))
        for k in range(segs):
            a, b = start + 2 * k, start + 2 * ((k + 1) % segs)
            faces.extend([(a, a + 1, b + 1), (a, b + 1, b)])
        return start

    r_start = rim(right)
    l_start = rim(left)
    # Bridge: from the inner edge of each rim, arched over the nose.
    bridge_y = 0.5 * (left[1] + right[1]) + 0.3 * inner_r
    r_in = r_start + 2 * 0 + 1  # outer vertex facing +x on the right rim (k = 0 is +x)
    l_in = l_start + 2 * (segs // 2) + 1
    mid = len(verts)
    verts.append((0.5 * (left[0] + right[0]), bridge_y + 0.002, nose_front))
    verts.append((0.5 * (left[0] + right[0]), bridge_y - 0.002, nose_front))
    faces.extend([(r_in, mid + 1, mid), (l_in, mid, mid + 1)])
    verts = np.array(verts)
    uvs = np.zeros((len(verts), 2))
    uvs[:, 0] = np.linspace(0, 1, len(verts))
    return verts, np.array(faces, dtype=np.int64), uvs


def attach_proxies(scene, rig, bind=None, joints=None, transforms=None):
    """Proxy meshes for the scene's filled asset slots, posed rigidly.

    Each proxy is built around the bind-pose head and moved with the global
    transform of the joint it is attached to (head, or neck for clothing).
    """
    a = scene.assets
    for slot in PROXY_SLOTS:
        value = getattr(a, slot)
        if value is not None and (not isinstance(value, (int, np.integer)) or value < 0):
            raise ConfigurationError(f"unknown proxy id {value!r} for slot {slot}")
    if all(getattr(a, slot) is None for slot in PROXY_SLOTS):
        return []
    if bind is None:
        bind = bind_pose_mesh(rig, scene.identity, scene.expression).vertices
    if joints is None:
        joints = joint_locations(rig, scene.identity)
    if transforms is None:
        transforms = forward_kinematics(rig, scene.pose, joints)
    head = rig.joint_index("head")
    neck = rig.joint_index("neck")
    head_mask = rig.skinning_weights[head] >= 0.5
    scalp = _scalp(rig, bind, head_mask)

    built = []
    if a.hair_style is not None:
        built.append(("hair", *_hair_cap(a.hair_style, bind, scalp), SemanticClass.HAIR,
                      hair_color(a.melanin, a.grayness), "head"))
    if a.outfit is not None:
        built.append(("clothing", *_torso(a.outfit, joints[neck]), SemanticClass.CLOTHING,
                      _palette(a.outfit, 1), "neck"))
    if a.headwear is not None:
        built.append(("headwear", *_headwear(a.headwear, bind, scalp), SemanticClass.HEADWEAR,
                      _palette(a.headwear, 2), "head"))
    if a.facewear is not None:
        built.append(("facewear", *_facewear(a.facewear, bind, rig, head_mask), SemanticClass.FACEWEAR,
                      _palette(a.facewear, 3), "head"))
    if a.eyewear is not None:
        built.append(("eyewear", *_eyewear(a.eyewear, bind, joints, rig), SemanticClass.EYEWEAR,
                      _palette(a.eyewear, 4) * 0.4, "head"))

    proxies = []
    for name, verts, faces, uvs, cls, albedo, joint in built:
        t = transforms[head if joint == "head" else neck]
        posed = verts @ t[:3, :3].T + t[:3, 3]
        proxies.append(ProxyMesh(name, posed, faces, np.clip(uvs, 0.0, 1.0), cls, np.asarray(albedo), joint))
    return proxies
