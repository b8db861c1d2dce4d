"""Z-buffered software rasterizer producing per-pixel ground-truth layers.

Conventions:

* Camera space follows the pinhole convention: +x right, +y down, +z
  forward.  Depth is camera-space z.
* Pixel ``(row i, col j)`` has its centre at ``(j + 0.5, i + 0.5)``.  A
  pixel is covered when its centre lies inside or on a triangle.
* The nearest covering triangle wins; equal depths go to the lowest
  triangle index (meshes are indexed in the order they are passed).
* Attributes are interpolated with perspective-correct barycentrics.
* Triangles with a vertex closer than ``near`` are dropped, not clipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .rig import bind_pose_mesh, forward_kinematics, joint_locations, linear_blend_skinning, vertex_normals
from .scene import attach_proxies, hair_color, look_at_rotation
from .semantic import SemanticClass

NEAR = 1e-4
SENSOR_WIDTH_MM = 36.0


@dataclass(frozen=True)
class Camera:
    rotation: np.ndarray  # world -> camera
    translation: np.ndarray
    focal: float  # pixels
    principal: tuple
    width: int
    height: int

    def __post_init__(self):
        if not self.focal > 0:
            raise InvalidParameterError("focal length must be positive")
        if self.width < 16 or self.height < 16:
            raise InvalidParameterError("resolution must be at least 16x16")

    @classmethod
    def look_at(cls, position, target, focal_mm, width, height=None):
        height = width if height is None else height
        rotation = look_at_rotation(position, target)
        translation = -rotation @ np.asarray(position, dtype=np.float64)
        focal = focal_mm / SENSOR_WIDTH_MM * width
        return cls(rotation, translation, focal, (width / 2.0, height / 2.0), width, height)

    @classmethod
    def from_scene(cls, scene_camera, resolution):
        return cls.look_at(scene_camera.position, scene_camera.look_at, scene_camera.focal_mm, resolution)

    def to_camera(self, points):
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation


def project(camera, points):
    """Project world points to ``(x, y, depth)``; depth <= 0 means behind the camera."""
    pc = camera.to_camera(points)
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(z != 0, camera.principal[0] + camera.focal * pc[:, 0] / z, np.nan)
        y = np.where(z != 0, camera.principal[1] + camera.focal * pc[:, 1] / z, np.nan)
    return np.stack([x, y, z], axis=1)


@dataclass(frozen=True)
class RenderMesh:
    """Geometry handed to :func:`rasterize`, already in world space."""

    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3)
    classes: np.ndarray  # (F,) semantic ids
    albedo: np.ndarray  # (F, 3) face-constant albedo
    uvs: np.ndarray | None = None  # (V, 2)
    normals: np.ndarray | None = None  # (V, 3); computed when absent


@dataclass
class LabelBundle:
    color: np.ndarray  # (H, W, 3) float32 in [0, 1]
    albedo: np.ndarray  # (H, W, 3) float32
    mask: np.ndarray  # (H, W) uint8
    depth: np.ndarray  # (H, W) float64, +inf on background
    normals: np.ndarray  # (H, W, 3) float32, camera space
    uvs: np.ndarray  # (H, W, 2) float32
    vertex_map: np.ndarray  # (H, W, 3) float32, world coordinates
    landmarks: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))  # (L, 3) x, y, depth
    landmark_visible: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    dense_landmarks: np.ndarray | None = None
    dense_visible: np.ndarray | None = None
    face_id: np.ndarray | None = None  # (H, W) int32, -1 on background
    diagnostics: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.mask.shape


def _concat(meshes):
    verts, faces, classes, albedo, uvs, normals = [], [], [], [], [], []
    offset = 0
    for m in meshes:
        v = np.asarray(m.vertices, dtype=np.float64)
        f = np.asarray(m.faces, dtype=np.int64)
        verts.append(v)
        faces.append(f + offset)
        classes.append(np.broadcast_to(np.asarray(m.classes), (len(f),)))
        albedo.append(np.broadcast_to(np.asarray(m.albedo, dtype=np.float64), (len(f), 3)))
        uvs.append(np.zeros((len(v), 2)) if m.uvs is None else np.asarray(m.uvs, dtype=np.float64))
        normals.append(vertex_normals(v, f) if m.normals is None else np.asarray(m.normals, dtype=np.float64))
        offset += len(v)
    return (np.concatenate(verts), np.concatenate(faces), np.concatenate(classes),
            np.concatenate(albedo), np.concatenate(uvs), np.concatenate(normals))


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def rasterize(meshes, camera):
    """Render every label layer except color.

    Returns a :class:`LabelBundle` whose ``color`` is zero; the diagnostics
    record counts degenerate and near-plane-culled triangles.
    """
    width, height = camera.width, camera.height
    if not meshes:
        meshes = []
    if meshes:
        V, F, classes, albedo, uvs, normals = _concat(meshes)
    else:
        V, F = np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)
        classes, albedo = np.zeros(0, dtype=np.int64), np.zeros((0, 3))
        uvs, normals = np.zeros((0, 2)), np.zeros((0, 3))
    pc = camera.to_camera(V)
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = camera.principal[0] + camera.focal * pc[:, 0] / z
        sy = camera.principal[1] + camera.focal * pc[:, 1] / z

    tz = z[F]
    in_front = np.all(tz > NEAR, axis=1)
    tx, ty = sx[F], sy[F]
    area = _edge(tx[:, 0], ty[:, 0], tx[:, 1], ty[:, 1], tx[:, 2], ty[:, 2])
    degenerate = in_front & ~(np.abs(area) > 1e-12)
    valid = in_front & ~degenerate
    diagnostics = {
        "triangles": int(len(F)),
        "degenerate_skipped": int(degenerate.sum()),
        "near_culled": int((~in_front).sum()),
    }

    tri_ids = np.nonzero(valid)[0]
    x0 = np.ceil(tx[tri_ids].min(axis=1) - 0.5).astype(np.int64)
    x1 = np.floor(tx[tri_ids].max(axis=1) - 0.5).astype(np.int64)
    y0 = np.ceil(ty[tri_ids].min(axis=1) - 0.5).astype(np.int64)
    y1 = np.floor(ty[tri_ids].max(axis=1) - 0.5).astype(np.int64)
    x0 = np.maximum(x0, 0)
    y0 = np.maximum(y0, 0)
    x1 = np.minimum(x1, width - 1)
    y1 = np.minimum(y1, height - 1)
    nx = np.maximum(x1 - x0 + 1, 0)
    ny = np.maximum(y1 - y0 + 1, 0)
    counts = nx * ny
    keep = counts > 0
    tri_ids, x0, y0, nx, counts = tri_ids[keep], x0[keep], y0[keep], nx[keep], counts[keep]

    total = int(counts.sum())
    frag_tri = np.repeat(tri_ids, counts)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    local = np.arange(total) - starts
    rep_nx = np.repeat(nx, counts)
    px_i = np.repeat(x0, counts) + local % rep_nx
    py_i = np.repeat(y0, counts) + local // rep_nx
    px = px_i + 0.5
    py = py_i + 0.5

    ax, ay = tx[frag_tri, 0], ty[frag_tri, 0]
    bx, by = tx[frag_tri, 1], ty[frag_tri, 1]
    cx, cy = tx[frag_tri, 2], ty[frag_tri, 2]
    sign = np.sign(area[frag_tri])
    w0 = _edge(bx, by, cx, cy, px, py) * sign
    w1 = _edge(cx, cy, ax, ay, px, py) * sign
    w2 = _edge(ax, ay, bx, by, px, py) * sign
    inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
    frag_tri, px_i, py_i = frag_tri[inside], px_i[inside], py_i[inside]
    absarea = np.abs(area[frag_tri])
    lam = np.stack([w0[inside], w1[inside], w2[inside]], axis=1) / absarea[:, None]

    inv_z = lam / tz[frag_tri]
    depth = 1.0 / inv_z.sum(axis=1)
    pixel = py_i * width + px_i
    order = np.lexsort((frag_tri, depth, pixel))
    pixel_sorted = pixel[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = pixel_sorted[1:] != pixel_sorted[:-1]
    win = order[first]

    win_pix = pixel[win]
    win_tri = frag_tri[win]
    persp = inv_z[win] * depth[win][:, None]  # perspective-correct barycentrics
    corners = F[win_tri]

    n_pix = width * height
    depth_layer = np.full(n_pix, np.inf)
    depth_layer[win_pix] = depth[win]
    mask = np.zeros(n_pix, dtype=np.uint8)
    mask[win_pix] = classes[win_tri]
    face_id = np.full(n_pix, -1, dtype=np.int32)
    face_id[win_pix] = win_tri

    def interp(attr):
        return np.einsum("pc,pcd->pd", persp, attr[corners])

    normal_cam = normals @ camera.rotation.T
    n = interp(normal_cam)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    normal_layer = np.zeros((n_pix, 3), dtype=np.float32)
    normal_layer[win_pix] = n
    uv_layer = np.zeros((n_pix, 2), dtype=np.float32)
    uv_layer[win_pix] = np.clip(interp(uvs), 0.0, 1.0)
    vmap = np.zeros((n_pix, 3), dtype=np.float32)
    vmap[win_pix] = interp(V)
    alb = np.zeros((n_pix, 3), dtype=np.float32)
    alb[win_pix] = albedo[win_tri]

    return LabelBundle(
        color=np.zeros((height, width, 3), dtype=np.float32),
        albedo=alb.reshape(height, width, 3),
        mask=mask.reshape(height, width),
        depth=depth_layer.reshape(height, width),
        normals=normal_layer.reshape(height, width, 3),
        uvs=uv_layer.reshape(height, width, 2),
        vertex_map=vmap.reshape(height, width, 3),
        face_id=face_id.reshape(height, width),
        diagnostics=diagnostics,
    )


def shade_color(bundle, light_direction, ambient, background=(0.0, 0.0, 0.0)):
    """Lambertian plus ambient: ``albedo * (ambient + max(0, n.l) * (1 - ambient))``.

    ``light_direction`` points towards the light, in the normals' frame.
    """
    light = np.asarray(light_direction, dtype=np.float64)
    light = light / np.linalg.norm(light)
    ndotl = np.clip(bundle.normals.astype(np.float64) @ light, 0.0, None)
    shade = ambient + ndotl * (1.0 - ambient)
    color = np.clip(bundle.albedo * shade[..., None], 0.0, 1.0)
    background_pixels = bundle.mask == SemanticClass.BACKGROUND
    color[background_pixels] = background
    return color.astype(np.float32)


def extract_landmarks(points, camera, depth, mask, tolerance=0.01):
    """Project 3D landmark positions and test them against the depth layer.

    A landmark is visible when it is in front of the camera, inside the
    frame, on a non-background pixel, and no deeper than the rendered depth
    at that pixel plus ``tolerance``.
    """
    proj = project(camera, points)
    x, y, d = proj[:, 0], proj[:, 1], proj[:, 2]
    height, width = depth.shape
    finite = np.isfinite(x) & np.isfinite(y)
    inside = finite & (d > 0) & (x >= 0) & (x < width) & (y >= 0) & (y < height)
    visible = np.zeros(len(points), dtype=bool)
    col = np.floor(np.where(inside, x, 0)).astype(np.int64)
    row = np.floor(np.where(inside, y, 0)).astype(np.int64)
    rendered = depth[row, col]
    covered = mask[row, col] != SemanticClass.BACKGROUND
    visible[inside] = (covered & (d <= rendered + tolerance))[inside]
    return proj, visible


# -- scene rendering -------------------------------------------------------------

SKIN_LIGHT = np.array([0.93, 0.77, 0.66])
SKIN_DARK = np.array([0.34, 0.22, 0.15])


def face_albedo(rig, assets):
    """Face-constant albedo of the rig mesh for a set of asset slots."""
    skin = (1 - assets.melanin) * SKIN_LIGHT + assets.melanin * SKIN_DARK
    hair = hair_color(assets.melanin, assets.grayness)
    table = np.tile(skin, (len(SemanticClass), 1))
    table[SemanticClass.LEFT_BROW] = table[SemanticClass.RIGHT_BROW] = 0.35 * skin + 0.65 * hair
    table[SemanticClass.UPPER_LIP] = table[SemanticClass.LOWER_LIP] = skin * (0.85, 0.55, 0.55)
    table[SemanticClass.INNER_MOUTH] = (0.35, 0.08, 0.1)
    table[SemanticClass.NOSE] = skin * 1.02
    albedo = table[rig.semantic_regions]
    # Eyeballs: sclera, with an iris on the forward-facing cap.
    eye_faces = np.isin(rig.semantic_regions, (SemanticClass.LEFT_EYE, SemanticClass.RIGHT_EYE))
    tri = rig.template_vertices[rig.faces[eye_faces]]
    albedo[eye_faces] = skin * 0.8
    for name in ("left_eye", "right_eye"):
        if name not in rig.joint_names:
            continue
        j = rig.joint_index(name)
        on_ball = rig.skinning_weights[j][rig.faces[eye_faces]].min(axis=1) > 0.5
        centre = rig.template_joints[j]
        direction = tri.mean(axis=1) - centre
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        iris = on_ball & (direction[:, 2] > math.cos(math.radians(35)))
        rows = np.nonzero(eye_faces)[0]
        albedo[rows[on_ball]] = (0.92, 0.91, 0.88)
        t = math.sqrt(assets.melanin)
        albedo[rows[iris]] = (1 - t) * np.array([0.25, 0.4, 0.55]) + t * np.array([0.22, 0.12, 0.05])
    return albedo


def environment_light(environment):
    """Direction towards the key light (world frame) and the ambient level."""
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    elevation = math.radians(15.0 + 45.0 * ((environment.id * golden) % 1.0))
    azimuth = environment.rotation
    direction = np.array([
        math.cos(elevation) * math.sin(azimuth),
        math.sin(elevation),
        math.cos(elevation) * math.cos(azimuth),
    ])
    ambient = float(np.clip(0.25 * environment.intensity, 0.05, 0.9))
    return direction, ambient


def environment_background(environment):
    rng = np.random.default_rng([environment.id, 99])
    return np.clip(rng.uniform(0.15, 0.85, size=3) * min(environment.intensity, 1.2), 0.0, 1.0)


def scene_meshes(scene, rig):
    """Posed face mesh plus proxies, and the posed rig vertices."""
    joints = joint_locations(rig, scene.identity)
    bind = bind_pose_mesh(rig, scene.identity, scene.expression).vertices
    transforms = forward_kinematics(rig, scene.pose, joints)
    posed = linear_blend_skinning(bind, transforms, rig.skinning_weights)
    meshes = [RenderMesh(posed, rig.faces, rig.semantic_regions, face_albedo(rig, scene.assets), rig.uvs)]
    for proxy in attach_proxies(scene, rig, bind, joints, transforms):
        meshes.append(RenderMesh(proxy.vertices, proxy.faces, int(proxy.semantic_class),
                                 proxy.albedo, proxy.uvs))
    return meshes, posed


def render_scene(scene, rig, config):
    """Render the full label bundle for ``scene`` at the configured resolution."""
    res = config.render.resolution_px
    meshes, posed = scene_meshes(scene, rig)
    camera = Camera.from_scene(scene.camera, res)
    bundle = rasterize(meshes, camera)
    light_world, ambient = environment_light(scene.environment)
    light_cam = camera.rotation @ light_world
    background = environment_background(scene.environment)
    if config.render.supersample_color:
        hi = rasterize(meshes, Camera.from_scene(scene.camera, 2 * res))
        color = shade_color(hi, light_cam, ambient, background)
        bundle.color = color.reshape(res, 2, res, 2, 3).mean(axis=(1, 3)).astype(np.float32)
    else:
        bundle.color = shade_color(bundle, light_cam, ambient, background)
    tol = config.render.landmark_tolerance_m
    points = rig.landmarks.points(posed, rig.faces)
    bundle.landmarks, bundle.landmark_visible = extract_landmarks(points, camera, bundle.depth, bundle.mask, tol)
    if config.render.dense_landmarks and rig.dense_landmarks is not None:
        dense = rig.dense_landmarks.points(posed, rig.faces)
        bundle.dense_landmarks, bundle.dense_visible = extract_landmarks(dense, camera, bundle.depth, bundle.mask, tol)
    return bundle


def render_camera(scene, config):
    return Camera.from_scene(scene.camera, config.render.resolution_px)


def scene_landmarks(scene, rig, resolution):
    """Projected (x, y, depth) of the 68 landmarks without rasterizing."""
    joints = joint_locations(rig, scene.identity)
    bind = bind_pose_mesh(rig, scene.identity, scene.expression).vertices
    posed = linear_blend_skinning(bind, forward_kinematics(rig, scene.pose, joints), rig.skinning_weights)
    return project(Camera.from_scene(scene.camera, resolution), rig.landmarks.points(posed, rig.faces))
