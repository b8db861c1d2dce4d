"""Procedurally built low-poly head rig and its companion assets.

The head surface is a lathe-like grid: rings at fixed base heights ``y``
and columns at longitudes ``b`` (``b = 0`` looks down +z, ``b > 0`` is the
subject's left, +x).  Facial features are Gaussian displacement fields in
``(b, y)``.  Two eyeball spheres are skinned to the eye joints.

The identity basis is not authored: a synthetic scan corpus is generated
from smooth random shape fields and the basis is fitted to it exactly the
way a real registered corpus would be.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .learning import ScanCorpus, fit_identity_basis, fit_identity_distribution, topology_hash
from .rig import FaceRig, LandmarkAnchors
from .semantic import SemanticClass as C

JOINT_NAMES = ("neck", "head", "left_eye", "right_eye")
JOINT_PARENTS = np.array([-1, 0, 1, 1])

POLE_Y = 0.118
RING_Y = np.array([
    0.113, 0.104, 0.092, 0.078, 0.064, 0.052, 0.045, 0.038, 0.031, 0.026,
    0.018, 0.011, 0.004, -0.006, -0.016, -0.026, -0.034, -0.041, -0.047,
    -0.052, -0.058, -0.066, -0.076, -0.088, -0.100, -0.115, -0.135, -0.160,
])
NUM_COLUMNS = 28
EYE_B = 0.42
EYE_Y = 0.022
EYEBALL_RADIUS = 0.0115

DEFAULT_IDENTITY_DIM = 50
DEFAULT_EXPRESSION_DIM = 25
DEFAULT_CORPUS_SIZE = 200


def _smoothstep(e0, e1, x):
    t = np.clip((x - e0) / (e1 - e0), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _bump(b, y, b0, y0, sb, sy):
    return np.exp(-(((b - b0) / sb) ** 2) - ((y - y0) / sy) ** 2)


def column_longitude(s):
    """Longitude of a column parameter ``s`` in [-1, 1]; dense at the front."""
    return np.pi * (0.4 * s + 0.6 * s**3)


def _longitude_to_param(b):
    from scipy.optimize import brentq

    return brentq(lambda s: column_longitude(s) - b, -1.0, 1.0)


def base_radius(y):
    ell = 0.081 * np.sqrt(np.clip(1.0 - ((y - 0.005) / 0.113) ** 2, 0.0, None))
    w = _smoothstep(-0.03, -0.10, y)
    return (1.0 - w) * ell + w * 0.05


def _neck_shift(y):
    return -0.02 * _smoothstep(-0.03, -0.10, y)


def surface_point(b, y):
    """Head surface position at longitude ``b`` and base height ``y``."""
    b = np.asarray(b, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rho = base_radius(y)
    rho = rho + 0.005 * (_bump(b, y, EYE_B - 0.02, 0.040, 0.3, 0.008) + _bump(b, y, -EYE_B + 0.02, 0.040, 0.3, 0.008))
    rho = rho - 0.008 * (_bump(b, y, EYE_B, EYE_Y, 0.2, 0.012) + _bump(b, y, -EYE_B, EYE_Y, 0.2, 0.012))
    rho = rho + 0.006 * (_bump(b, y, 0.7, -0.03, 0.3, 0.025) + _bump(b, y, -0.7, -0.03, 0.3, 0.025))
    dz = (
        0.024 * _bump(b, y, 0.0, -0.020, 0.16, 0.013)
        + 0.012 * _bump(b, y, 0.0, 0.006, 0.11, 0.02)
        + 0.006 * _bump(b, y, 0.0, -0.050, 0.35, 0.010)
        + 0.010 * _bump(b, y, 0.0, -0.080, 0.30, 0.015)
    )
    x = rho * np.sin(b)
    z = 1.15 * rho * np.cos(b) + _neck_shift(y) + dz * np.clip(np.cos(b), 0.0, None)
    return np.stack([x, np.broadcast_to(y, x.shape), z], axis=-1)


@dataclass(frozen=True)
class _Grid:
    vertices: np.ndarray
    faces: np.ndarray
    uvs: np.ndarray
    face_b: np.ndarray
    face_y: np.ndarray
    vertex_b: np.ndarray
    vertex_y: np.ndarray
    num_skin: int
    eye_vertices: tuple
    eye_faces: tuple
    eye_centers: np.ndarray


def _sphere(center, radius, n_lat=6, n_lon=8):
    verts = [center + (0.0, radius, 0.0)]
    for i in range(1, n_lat):
        a = np.pi * i / n_lat
        for j in range(n_lon):
            c = 2 * np.pi * j / n_lon
            verts.append(center + radius * np.array([np.sin(a) * np.sin(c), np.cos(a), np.sin(a) * np.cos(c)]))
    verts.append(center - (0.0, radius, 0.0))
    verts = np.array(verts)
    faces = []
    ring = lambda i, j: 1 + (i - 1) * n_lon + (j % n_lon)  # noqa: E731
    for j in range(n_lon):
        faces.append((0, ring(1, j), ring(1, j + 1)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b_ = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append((a, c, d))
            faces.append((a, d, b_))
    last = len(verts) - 1
    for j in range(n_lon):
        faces.append((last, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)))
    uv_u = np.concatenate([[0.5], np.tile(np.arange(n_lon) / n_lon, n_lat - 1), [0.5]])
    uv_v = np.concatenate([[0.0], np.repeat(np.arange(1, n_lat) / n_lat, n_lon), [1.0]])
    return verts, np.array(faces), np.stack([uv_u, uv_v], axis=1)


@functools.lru_cache(maxsize=None)
def _build_grid():
    cols = NUM_COLUMNS + 1
    s = np.linspace(-1.0, 1.0, cols)
    b_cols = column_longitude(s)
    rings = len(RING_Y)
    bb, yy = np.meshgrid(b_cols, RING_Y)
    ring_verts = surface_point(bb, yy).reshape(-1, 3)
    vertices = np.concatenate([[[0.0, POLE_Y, 0.0]], ring_verts])
    v_param = np.concatenate([[0.0], np.arange(1, rings + 1) / rings])
    uvs = np.concatenate([[[0.5, 0.0]], np.stack([np.tile((s + 1) / 2, rings), np.repeat(v_param[1:], cols)], axis=1)])
    vertex_b = np.concatenate([[0.0], bb.ravel()])
    vertex_y = np.concatenate([[POLE_Y], yy.ravel()])

    def vid(i, j):
        return 1 + i * cols + j

    faces, fb, fy = [], [], []
    for j in range(NUM_COLUMNS):
        faces.append((0, vid(0, j), vid(0, j + 1)))
        fb.append(0.5 * (b_cols[j] + b_cols[j + 1]))
        fy.append((POLE_Y + 2 * RING_Y[0]) / 3)
    for i in range(rings - 1):
        for j in range(NUM_COLUMNS):
            v00, v01, v10, v11 = vid(i, j), vid(i, j + 1), vid(i + 1, j), vid(i + 1, j + 1)
            faces.append((v00, v10, v11))
            faces.append((v00, v11, v01))
            bc = 0.5 * (b_cols[j] + b_cols[j + 1])
            yc = 0.5 * (RING_Y[i] + RING_Y[i + 1])
            fb += [bc, bc]
            fy += [yc, yc]
    faces = np.array(faces)
    num_skin = len(vertices)

    all_v, all_f, all_uv = [vertices], [faces], [uvs]
    eye_vertices, eye_faces, centers = [], [], []
    offset_v, offset_f = num_skin, len(faces)
    for sign in (1.0, -1.0):
        surf = surface_point(sign * EYE_B, EYE_Y)
        center = surf - np.array([0.0, 0.0, EYEBALL_RADIUS - 0.003])
        ev, ef, euv = _sphere(center, EYEBALL_RADIUS)
        all_v.append(ev)
        all_f.append(ef + offset_v)
        all_uv.append(euv)
        eye_vertices.append(np.arange(offset_v, offset_v + len(ev)))
        eye_faces.append(np.arange(offset_f, offset_f + len(ef)))
        centers.append(center)
        offset_v += len(ev)
        offset_f += len(ef)
    return _Grid(
        vertices=np.concatenate(all_v),
        faces=np.concatenate(all_f),
        uvs=np.concatenate(all_uv),
        face_b=np.array(fb),
        face_y=np.array(fy),
        vertex_b=vertex_b,
        vertex_y=vertex_y,
        num_skin=num_skin,
        eye_vertices=tuple(eye_vertices),
        eye_faces=tuple(eye_faces),
        eye_centers=np.array(centers),
    )


def _regions(grid):
    b, y = grid.face_b, grid.face_y
    regions = np.full(len(grid.faces), int(C.SKIN))
    n_skin_faces = len(b)
    r = regions[:n_skin_faces]
    for sign, eye, brow in ((1, C.LEFT_EYE, C.LEFT_BROW), (-1, C.RIGHT_EYE, C.RIGHT_BROW)):
        r[(np.abs(b - sign * EYE_B) <= 0.17) & (y >= 0.011) & (y <= 0.031)] = eye
        r[(np.abs(b - sign * (EYE_B - 0.02)) <= 0.24) & (y > 0.031) & (y <= 0.045)] = brow
    r[(np.abs(b) <= 0.17) & (y >= -0.034) & (y < 0.031) & (r == C.SKIN)] = C.NOSE
    r[(np.abs(b) <= 0.36) & (y >= -0.047) & (y < -0.034)] = C.UPPER_LIP
    r[(np.abs(b) <= 0.30) & (y >= -0.052) & (y < -0.047)] = C.INNER_MOUTH
    r[(np.abs(b) <= 0.34) & (y >= -0.058) & (y < -0.052)] = C.LOWER_LIP
    regions[grid.eye_faces[0]] = C.LEFT_EYE
    regions[grid.eye_faces[1]] = C.RIGHT_EYE
    return regions


def _anchor(grid, b, y):
    """(face index, barycentric) of the skin surface point at base (b, y)."""
    rings = len(RING_Y)
    s = _longitude_to_param(b)
    fs = (s + 1.0) / 2.0 * NUM_COLUMNS
    j = min(int(np.floor(fs)), NUM_COLUMNS - 1)
    u = fs - j
    i = int(np.searchsorted(-RING_Y, -y, side="right")) - 1
    if not 0 <= i < rings - 1:
        raise ValueError(f"anchor height {y} outside the ringed surface")
    t = (RING_Y[i] - y) / (RING_Y[i] - RING_Y[i + 1])
    face = NUM_COLUMNS + 2 * (i * NUM_COLUMNS + j)
    # Triangle A = (v00, v10, v11) covers t >= u; B = (v00, v11, v01) covers u > t.
    if t >= u:
        bary = (1.0 - t, t - u, u)
    else:
        face += 1
        bary = (1.0 - u, t, u - t)
    return face, np.clip(np.array(bary), 0.0, 1.0)


def landmark_layout_68():
    """Base-surface (b, y) positions of the 68-point layout.

    Index order follows the common 300-W convention: 0-16 jaw from the
    subject's right, 17-26 brows, 27-35 nose, 36-47 eyes (36 and 45 are
    the outer corners), 48-67 mouth.
    """
    pts = []
    for k in range(17):
        phi = -np.pi / 2 + np.pi * k / 16
        pts.append((1.35 * np.sin(phi), 0.012 - 0.095 * np.cos(phi)))
    for side in (-1, 1):
        bs = np.linspace(0.70, 0.13, 5) if side == -1 else np.linspace(0.13, 0.70, 5)
        for bval in bs:
            arch = 0.006 * np.sin(np.pi * (bval - 0.13) / 0.57)
            pts.append((side * bval, 0.036 + arch))
    for yv in (0.024, 0.012, 0.0, -0.018):
        pts.append((0.0, yv))
    for bval in (-0.15, -0.075, 0.0, 0.075, 0.15):
        pts.append((bval, -0.029))

    def eye(center):
        # corner, upper lid, corner, lower lid; traversed from the image left
        dx = [-0.17, -0.06, 0.06, 0.17, 0.06, -0.06]
        dy = [0.0, 0.006, 0.006, 0.0, -0.005, -0.005]
        return [(center + ox, EYE_Y + oy) for ox, oy in zip(dx, dy)]

    pts += eye(-EYE_B)
    pts += eye(EYE_B)
    outer = [(-0.34, -0.049), (-0.22, -0.042), (-0.09, -0.040), (0.0, -0.041), (0.09, -0.040),
             (0.22, -0.042), (0.34, -0.049), (0.22, -0.056), (0.09, -0.058), (0.0, -0.0585),
             (-0.09, -0.058), (-0.22, -0.056)]
    inner = [(-0.26, -0.049), (-0.09, -0.0475), (0.0, -0.0475), (0.09, -0.0475), (0.26, -0.049),
             (0.09, -0.0515), (0.0, -0.0515), (-0.09, -0.0515)]
    pts += outer + inner
    return np.array(pts)


def dense_layout(count=679):
    """Low-discrepancy (b, y) positions covering the front of the face."""
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    i = np.arange(count)
    u = (i * golden) % 1.0
    v = (i + 0.5) / count
    return np.stack([-1.25 + 2.5 * u, 0.06 - 0.15 * v], axis=1)


def _anchors(grid, layout):
    faces, bary = zip(*(_anchor(grid, b, y) for b, y in layout))
    bary = np.array(bary)
    bary /= bary.sum(axis=1, keepdims=True)
    return LandmarkAnchors(np.array(faces, dtype=np.int64), bary)


def _skinning(grid):
    n = len(grid.vertices)
    weights = np.zeros((4, n))
    y = grid.vertices[: grid.num_skin, 1]
    head = _smoothstep(-0.125, -0.07, y)
    weights[1, : grid.num_skin] = head
    weights[0, : grid.num_skin] = 1.0 - head
    weights[2, grid.eye_vertices[0]] = 1.0
    weights[3, grid.eye_vertices[1]] = 1.0
    return weights


def _joints(grid):
    return np.array([
        [0.0, -0.105, -0.025],
        [0.0, -0.045, -0.012],
        grid.eye_centers[0],
        grid.eye_centers[1],
    ])


# name, (b0, y0, sb, sy), (dx, dy, dz) per unit activation; "mirror" flips dx for the right side
_EXPRESSIONS = [
    ("jaw_open", None, None),
    ("smile_left", (0.36, -0.05, 0.18, 0.012), (0.004, 0.006, -0.003)),
    ("smile_right", (-0.36, -0.05, 0.18, 0.012), (-0.004, 0.006, -0.003)),
    ("eyelid_close_left", (EYE_B, 0.028, 0.2, 0.008), (0.0, -0.007, 0.003)),
    ("eyelid_close_right", (-EYE_B, 0.028, 0.2, 0.008), (0.0, -0.007, 0.003)),
    ("brow_raise_left", (0.40, 0.040, 0.25, 0.01), (0.0, 0.006, 0.0)),
    ("brow_raise_right", (-0.40, 0.040, 0.25, 0.01), (0.0, 0.006, 0.0)),
    ("brow_furrow", (0.0, 0.038, 0.25, 0.008), (0.0, -0.004, 0.002)),
    ("lip_pucker", (0.0, -0.05, 0.25, 0.01), (0.0, 0.0, 0.008)),
    ("lip_funnel", (0.0, -0.05, 0.30, 0.006), (0.0, 0.0, 0.005)),
    ("cheek_puff_left", (0.7, -0.03, 0.3, 0.02), "radial"),
    ("cheek_puff_right", (-0.7, -0.03, 0.3, 0.02), "radial"),
    ("nose_wrinkle", (0.0, 0.0, 0.15, 0.015), (0.0, 0.003, 0.0)),
    ("mouth_left", (0.0, -0.05, 0.4, 0.012), (0.006, 0.0, 0.0)),
    ("mouth_right", (0.0, -0.05, 0.4, 0.012), (-0.006, 0.0, 0.0)),
    ("lower_lip_down", (0.0, -0.056, 0.3, 0.005), (0.0, -0.005, 0.0)),
    ("upper_lip_up", (0.0, -0.043, 0.3, 0.005), (0.0, 0.004, 0.0)),
    ("jaw_left", None, None),
    ("jaw_right", None, None),
    ("chin_raise", (0.0, -0.08, 0.3, 0.012), (0.0, 0.004, 0.003)),
    ("squint_left", (EYE_B, 0.016, 0.2, 0.006), (0.0, 0.003, 0.0)),
    ("squint_right", (-EYE_B, 0.016, 0.2, 0.006), (0.0, 0.003, 0.0)),
    ("mouth_stretch", (0.0, -0.05, 0.3, 0.012), "stretch"),
    ("frown_left", (0.34, -0.052, 0.15, 0.01), (0.0, -0.005, 0.0)),
    ("frown_right", (-0.34, -0.052, 0.15, 0.01), (0.0, -0.005, 0.0)),
]
EXPRESSION_NAMES = tuple(name for name, _, _ in _EXPRESSIONS)
EYELID_COMPONENTS = (3, 4)


def _expression_basis(grid, count):
    n = len(grid.vertices)
    basis = np.zeros((count, n, 3))
    b = grid.vertex_b
    y = grid.vertex_y
    skin = slice(0, grid.num_skin)
    front = np.clip(np.cos(b), 0.0, None)
    lower = _smoothstep(-0.047, -0.075, y) * front
    for idx, (name, bump, disp) in enumerate(_EXPRESSIONS[:count]):
        field = np.zeros((grid.num_skin, 3))
        if name == "jaw_open":
            field[:, 1] = -0.015 * lower
            field[:, 2] = -0.004 * lower
        elif name in ("jaw_left", "jaw_right"):
            field[:, 0] = (0.006 if name == "jaw_left" else -0.006) * lower
        else:
            w = _bump(b, y, *bump)
            if disp == "radial":
                direction = np.stack([np.sin(b), np.zeros_like(b), np.cos(b)], axis=1)
                field = 0.008 * w[:, None] * direction
            elif disp == "stretch":
                field[:, 0] = 0.02 * w * np.sin(b)
            else:
                field = w[:, None] * np.asarray(disp)[None, :]
        basis[idx, skin] = field
    rng = np.random.default_rng(1234)
    for idx in range(len(_EXPRESSIONS), count):
        b0, y0 = rng.uniform(-0.8, 0.8), rng.uniform(-0.08, 0.05)
        w = _bump(b, y, b0, y0, 0.25, 0.015)
        basis[idx, skin] = w[:, None] * rng.normal(0.0, 0.003, size=3)[None, :]
    return basis


def _identity_fields(grid, rng, count=60):
    """Smooth random shape-variation fields used to synthesize scans."""
    v = grid.vertices
    centre = np.array([0.0, 0.0, 0.0])
    rel = v - centre
    b = np.concatenate([grid.vertex_b, np.zeros(len(v) - grid.num_skin)])
    y = np.concatenate([grid.vertex_y, v[grid.num_skin:, 1]])
    for k, idx in enumerate(grid.eye_vertices):
        b[idx] = EYE_B if k == 0 else -EYE_B
        y[idx] = EYE_Y
    fields = [rel * np.array(s) for s in ((0.06, 0, 0), (0, 0.05, 0), (0, 0, 0.05))]
    for _ in range(count - 3):
        b0, y0 = rng.uniform(-1.4, 1.4), rng.uniform(-0.12, 0.1)
        sb, sy = rng.uniform(0.2, 0.7), rng.uniform(0.015, 0.05)
        w = _bump(b, y, b0, y0, sb, sy)
        fields.append(w[:, None] * rng.normal(0.0, 0.004, size=3)[None, :])
    fields = np.array(fields)
    # Eyeballs move rigidly with the field value at their centre.
    for idx in grid.eye_vertices:
        fields[:, idx] = fields[:, idx].mean(axis=1, keepdims=True)
    return fields


def synthetic_scan_corpus(count=DEFAULT_CORPUS_SIZE, seed=7, noise=2e-4):
    """Registered "scans" of random people on the desk topology."""
    grid = _build_grid()
    rng = np.random.default_rng(seed)
    fields = _identity_fields(grid, rng)
    coeffs = rng.standard_normal((count, len(fields)))
    scans = grid.vertices + np.einsum("mi,ivk->mvk", coeffs, fields)
    scans = scans + rng.normal(0.0, noise, size=scans.shape)
    return ScanCorpus(scans, topology_hash(grid.faces))


@dataclass(frozen=True)
class ExpressionLibrary:
    entries: np.ndarray  # (L, E)
    sequence: np.ndarray  # (Q, E) keyframes

    def __post_init__(self):
        from .errors import ConfigurationError

        if len(self.entries) == 0 or len(self.sequence) == 0:
            raise ConfigurationError("expression library and sequence must be non-empty")
        if self.entries.shape[1] != self.sequence.shape[1]:
            raise ConfigurationError("library and sequence vectors differ in length")


def build_expression_library(num_expression=DEFAULT_EXPRESSION_DIM, size=2000, keyframes=64, seed=11):
    """Sparse random library plus an "animated" sweep through extreme poses."""
    rng = np.random.default_rng(seed)
    entries = np.zeros((size, num_expression))
    for row in entries:
        active = rng.choice(num_expression, size=rng.integers(1, 5), replace=False)
        row[active] = rng.uniform(0.0, 0.8, size=len(active))
    t = np.linspace(0.0, 1.0, keyframes)
    sequence = np.zeros((keyframes, num_expression))
    for c in range(num_expression):
        phase = rng.uniform(0, 2 * np.pi)
        sequence[:, c] = np.clip(np.sin(2 * np.pi * (1 + c % 3) * t + phase), 0.0, None)
    return ExpressionLibrary(entries, sequence)


@dataclass(frozen=True)
class DeskAssets:
    rig: FaceRig
    identity: object  # IdentityDistribution
    library: ExpressionLibrary
    fit_report: object


def build_rig(identity_dim=DEFAULT_IDENTITY_DIM, expression_dim=DEFAULT_EXPRESSION_DIM,
              corpus_size=DEFAULT_CORPUS_SIZE, seed=7):
    """Build the desk rig; returns ``(rig, betas, fit report)``."""
    grid = _build_grid()
    corpus = synthetic_scan_corpus(corpus_size, seed=seed)
    basis, betas, report = fit_identity_basis(corpus, identity_dim, grid.vertices)
    coupling = np.zeros(expression_dim)
    for c in EYELID_COMPONENTS:
        if c < expression_dim:
            coupling[c] = 0.8
    rig = FaceRig(
        template_vertices=grid.vertices.copy(),
        faces=grid.faces.astype(np.int64),
        identity_basis=basis,
        expression_basis=_expression_basis(grid, expression_dim),
        skinning_weights=_skinning(grid),
        template_joints=_joints(grid),
        joint_parents=JOINT_PARENTS.copy(),
        semantic_regions=_regions(grid).astype(np.int64),
        uvs=grid.uvs,
        landmarks=_anchors(grid, landmark_layout_68()),
        dense_landmarks=_anchors(grid, dense_layout()),
        joint_names=JOINT_NAMES,
        eyelid_coupling=coupling,
    )
    return rig, betas, report


@functools.lru_cache(maxsize=4)
def desk_assets(identity_dim=DEFAULT_IDENTITY_DIM, expression_dim=DEFAULT_EXPRESSION_DIM):
    """The bundled rig, identity distribution and expression library (cached)."""
    rig, betas, report = build_rig(identity_dim, expression_dim)
    return DeskAssets(rig, fit_identity_distribution(betas), build_expression_library(expression_dim), report)


def skin_vertex_count():
    return _build_grid().num_skin


def scalp_vertices(rig):
    """Indices of skin vertices above the brow line."""
    n = skin_vertex_count()
    return np.nonzero(rig.template_vertices[:n, 1] > 0.05)[0]
