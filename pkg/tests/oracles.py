"""Independent reference implementations used as test oracles.

These are deliberately written differently from the library: explicit
loops, scipy rotations and brute-force ray casting.
"""

import numpy as np
from scipy.spatial.transform import Rotation

from synthface.rig import FaceRig, LandmarkAnchors


def random_rig(rng, n=12, k=3, nb=4, ne=3):
    """Small random rig with a random joint tree rooted at 0."""
    verts = rng.normal(size=(n, 3))
    faces = np.array([(i, i + 1, i + 2) for i in range(n - 2)], dtype=np.int64)
    weights = rng.random((k, n)) + 1e-3
    weights /= weights.sum(axis=0)
    parents = np.array([-1] + [int(rng.integers(0, j)) for j in range(1, k)])
    return FaceRig(
        template_vertices=verts,
        faces=faces,
        identity_basis=rng.normal(size=(nb, n, 3)),
        expression_basis=rng.normal(size=(ne, n, 3)),
        skinning_weights=weights,
        template_joints=rng.normal(size=(k, 3)),
        joint_parents=parents,
        semantic_regions=np.ones(len(faces), dtype=np.int64),
        uvs=rng.random((n, 2)),
        landmarks=LandmarkAnchors(np.array([0]), np.array([[1.0, 0.0, 0.0]])),
        joint_names=tuple(f"j{i}" for i in range(k)),
    )


def rotation(angles):
    # uppercase axes = intrinsic rotations in scipy
    return Rotation.from_euler("XYZ", angles).as_matrix()


def bind_pose(rig, beta, psi):
    out = np.array(rig.template_vertices, dtype=np.float64)
    for v in range(rig.num_vertices):
        for c in range(3):
            for i in range(rig.num_identity):
                out[v, c] += beta[i] * rig.identity_basis[i, v, c]
            for i in range(rig.num_expression):
                out[v, c] += psi[i] * rig.expression_basis[i, v, c]
    return out


def joints(rig, beta, normalize_rows=True):
    out = np.array(rig.template_joints, dtype=np.float64)
    for k in range(rig.num_joints):
        row = rig.skinning_weights[k]
        total = row.sum() if normalize_rows else 1.0
        for v in range(rig.num_vertices):
            for c in range(3):
                d = sum(beta[i] * rig.identity_basis[i, v, c] for i in range(rig.num_identity))
                out[k, c] += row[v] / total * d
    return out


def global_transforms(rig, theta, joint_pos):
    def local(j):
        r = rotation(theta[j])
        t = np.eye(4)
        t[:3, :3] = r
        t[:3, 3] = joint_pos[j] - r @ joint_pos[j]
        return t

    def glob(j):
        p = rig.joint_parents[j]
        return local(j) if p < 0 else glob(p) @ local(j)

    return [glob(j) for j in range(rig.num_joints)]


def skin(vertices, transforms, weights):
    out = np.zeros_like(vertices)
    for v in range(len(vertices)):
        h = np.append(vertices[v], 1.0)
        for k, t in enumerate(transforms):
            out[v] += weights[k, v] * (t @ h)[:3]
    return out


def posed(rig, beta, psi, theta):
    return skin(bind_pose(rig, beta, psi), global_transforms(rig, theta, joints(rig, beta)), rig.skinning_weights)


def _ray_hits(d, tri, eps):
    # Moller-Trumbore with the ray origin at the camera centre, written out per
    # component: rays d = (dx, dy, 1) are (P, 1), triangles (1, T)
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    e1, e2 = b - a, c - a
    dx, dy = d[:, :1], d[:, 1:2]
    px = dy * e2[None, :, 2] - e2[None, :, 1]
    py = e2[None, :, 0] - dx * e2[None, :, 2]
    pz = dx * e2[None, :, 1] - dy * e2[None, :, 0]
    det = px * e1[None, :, 0] + py * e1[None, :, 1] + pz * e1[None, :, 2]
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = -a  # origin - a
    u = (px * tvec[None, :, 0] + py * tvec[None, :, 1] + pz * tvec[None, :, 2]) * inv
    qvec = np.cross(tvec, e1)
    v = (dx * qvec[None, :, 0] + dy * qvec[None, :, 1] + qvec[None, :, 2]) * inv
    t = np.einsum("tk,tk->t", e2, qvec)[None, :] * inv
    m = np.minimum(np.minimum(u, v), 1.0 - u - v)
    depth = np.where(ok & (m >= 0) & (t > 0), t, np.inf)
    near_edge = ok & (t > 0) & (np.abs(m) < eps)
    return depth, near_edge


def ray_cast(tri_cam, width, height, focal, principal, eps=1e-7, tile=16):
    """Nearest triangle hit by the ray through every pixel centre.

    ``tri_cam`` is (T, 3, 3) camera-space triangles in front of the camera.
    Returns the winning triangle id per pixel (-1 for none) and a boolean
    "ambiguous" map of pixels that lie on a triangle edge or where the two
    nearest hits are within ``eps`` in depth.  Pixels are processed in
    tiles; a triangle is tested against a tile unless its projected
    bounding box clearly misses it.
    """
    tri_cam = np.asarray(tri_cam, dtype=np.float64)
    winner = np.full((height, width), -1, dtype=np.int64)
    ambiguous = np.zeros((height, width), dtype=bool)
    if len(tri_cam) == 0:
        return winner, ambiguous
    sx = principal[0] + focal * tri_cam[:, :, 0] / tri_cam[:, :, 2]
    sy = principal[1] + focal * tri_cam[:, :, 1] / tri_cam[:, :, 2]
    lo_x, hi_x = sx.min(axis=1) - 1, sx.max(axis=1) + 1
    lo_y, hi_y = sy.min(axis=1) - 1, sy.max(axis=1) + 1
    for y0 in range(0, height, tile):
        for x0 in range(0, width, tile):
            y1, x1 = min(y0 + tile, height), min(x0 + tile, width)
            ids = np.nonzero((hi_x >= x0) & (lo_x <= x1) & (hi_y >= y0) & (lo_y <= y1))[0]
            if len(ids) == 0:
                continue
            ys, xs = np.mgrid[y0:y1, x0:x1]
            d = np.stack([(xs.ravel() + 0.5 - principal[0]) / focal,
                          (ys.ravel() + 0.5 - principal[1]) / focal], axis=1)
            depth, near_edge = _ray_hits(d, tri_cam[ids], eps)
            best = np.argmin(depth, axis=1)  # first minimum: ties go to the lowest id
            best_depth = depth[np.arange(len(d)), best]
            win = np.where(np.isfinite(best_depth), ids[best], -1)
            if len(ids) > 1:
                second = np.partition(depth, 1, axis=1)[:, 1]
                with np.errstate(invalid="ignore"):
                    close = np.isfinite(second) & (second - best_depth <= eps * np.maximum(1.0, best_depth))
            else:
                close = np.zeros(len(d), dtype=bool)
            winner[y0:y1, x0:x1] = win.reshape(y1 - y0, x1 - x0)
            ambiguous[y0:y1, x0:x1] = (near_edge.any(axis=1) | close).reshape(y1 - y0, x1 - x0)
    return winner, ambiguous


def random_camera_triangles(rng, count, focal, half_fov):
    """``count`` random camera-space triangles inside the view frustum."""
    z = rng.uniform(1.0, 5.0, size=count)
    cx = rng.uniform(-half_fov, half_fov, size=count) * z
    cy = rng.uniform(-half_fov, half_fov, size=count) * z
    centre = np.stack([cx, cy, z], axis=1)
    size = rng.uniform(0.05, 0.6, size=(count, 1, 1)) * z[:, None, None] * half_fov
    offsets = rng.normal(size=(count, 3, 3)) * size
    offsets[:, :, 2] *= 0.5
    return centre[:, None, :] + offsets
