"""Blendshape face rig with linear blend skinning.

Vertex positions are generated as

    M(beta, psi, theta) = LBS(T(beta, psi), theta, J(beta); W)

where ``T`` adds identity and expression displacements to the template,
``J`` moves the template joints with identity and ``LBS`` rotates the bind
pose about the joints.  Everything here is a pure function of its inputs;
a :class:`FaceRig` is never mutated after construction.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError, InvalidRigError
from .semantic import NUM_CLASSES

RIG_FORMAT_VERSION = 1
ROOT_PARENT = -1


@dataclass(frozen=True)
class LandmarkAnchors:
    """Surface points given as (face index, barycentric triple) pairs."""

    face_index: np.ndarray  # (L,) int
    barycentric: np.ndarray  # (L, 3) float

    def __len__(self):
        return len(self.face_index)

    def points(self, vertices, faces):
        """Evaluate the anchors on a mesh with the rig topology."""
        tri = vertices[faces[self.face_index]]  # (L, 3, 3)
        return np.einsum("lc,lcd->ld", self.barycentric, tri)


@dataclass(frozen=True, eq=False)
class FaceRig:
    """Template mesh, bases, skinning weights and skeleton of a face model.

    Attributes:
        template_vertices: (N, 3) neutral average face.
        faces: (F, 3) vertex indices.
        identity_basis: (B, N, 3) identity blendshapes.
        expression_basis: (E, N, 3) expression blendshapes.
        skinning_weights: (K, N) per-joint weights; each column sums to one.
        template_joints: (K, 3) joint locations of the template.
        joint_parents: (K,) parent index per joint, ``-1`` for the root.
        semantic_regions: (F,) class id per face.
        uvs: (N, 2) texture coordinates in [0, 1].
        landmarks: sparse 68-point anchors.
        dense_landmarks: optional dense anchors (679 on the desk rig).
        joint_names: names matching ``template_joints``.
        eyelid_coupling: (E,) gain of each expression component on gaze pitch.
    """

    template_vertices: np.ndarray
    faces: np.ndarray
    identity_basis: np.ndarray
    expression_basis: np.ndarray
    skinning_weights: np.ndarray
    template_joints: np.ndarray
    joint_parents: np.ndarray
    semantic_regions: np.ndarray
    uvs: np.ndarray
    landmarks: LandmarkAnchors
    dense_landmarks: LandmarkAnchors | None = None
    joint_names: tuple = ("neck", "head", "left_eye", "right_eye")
    eyelid_coupling: np.ndarray | None = None
    _hash: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        validate_rig(self)
        for name in ("template_vertices", "faces", "identity_basis", "expression_basis",
                     "skinning_weights", "template_joints", "joint_parents",
                     "semantic_regions", "uvs"):
            getattr(self, name).setflags(write=False)

    @property
    def num_vertices(self):
        return self.template_vertices.shape[0]

    @property
    def num_joints(self):
        return self.template_joints.shape[0]

    @property
    def num_identity(self):
        return self.identity_basis.shape[0]

    @property
    def num_expression(self):
        return self.expression_basis.shape[0]

    def joint_index(self, name):
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise InvalidRigError(f"rig has no joint named {name!r}") from None

    def content_hash(self):
        """Stable sha256 over every array of the rig."""
        if not self._hash:
            h = hashlib.sha256()
            for key, value in sorted(_rig_arrays(self).items()):
                arr = np.ascontiguousarray(value)
                h.update(key.encode())
                h.update(str(arr.dtype).encode())
                h.update(str(arr.shape).encode())
                h.update(arr.tobytes())
            self._hash.append(h.hexdigest())
        return self._hash[0]

    def with_identity_basis(self, identity_basis):
        """Copy of the rig with a new identity basis (e.g. after fitting)."""
        kwargs = {f: getattr(self, f) for f in self.__dataclass_fields__ if f != "_hash"}
        kwargs["identity_basis"] = np.asarray(identity_basis, dtype=np.float64)
        return FaceRig(**kwargs)


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray
    faces: np.ndarray

    @property
    def normals(self):
        return vertex_normals(self.vertices, self.faces)


def validate_rig(rig):
    """Raise :class:`InvalidRigError` naming the first violated invariant."""
    T = rig.template_vertices
    if T.ndim != 2 or T.shape[1] != 3 or T.shape[0] < 3:
        raise InvalidRigError(f"template_vertices must be (N>=3, 3), got {T.shape}")
    if not np.all(np.isfinite(T)):
        raise InvalidRigError("template_vertices contain non-finite values")
    n = T.shape[0]
    faces = rig.faces
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise InvalidRigError(f"faces must be (F, 3), got {faces.shape}")
    if faces.size and (faces.min() < 0 or faces.max() >= n):
        raise InvalidRigError("face index out of range [0, N)")
    for name in ("identity_basis", "expression_basis"):
        basis = getattr(rig, name)
        if basis.ndim != 3 or basis.shape[1:] != (n, 3) or basis.shape[0] < 1:
            raise InvalidRigError(f"{name} must be (>=1, {n}, 3), got {basis.shape}")
        if not np.all(np.isfinite(basis)):
            raise InvalidRigError(f"{name} contains non-finite values")
    J = rig.template_joints
    if J.ndim != 2 or J.shape[1] != 3 or J.shape[0] < 1:
        raise InvalidRigError(f"template_joints must be (K>=1, 3), got {J.shape}")
    k = J.shape[0]
    W = rig.skinning_weights
    if W.shape != (k, n):
        raise InvalidRigError(f"skinning_weights must be ({k}, {n}), got {W.shape}")
    if np.any(W < 0):
        raise InvalidRigError("skinning weights must be non-negative")
    if np.max(np.abs(W.sum(axis=0) - 1.0)) > 1e-9:
        raise InvalidRigError("skinning weights of every vertex must sum to 1 within 1e-9")
    if len(rig.joint_parents) != k:
        raise InvalidRigError("joint_parents length must equal joint count")
    joint_order(rig.joint_parents)
    if len(rig.joint_names) != k:
        raise InvalidRigError("joint_names length must equal joint count")
    regions = rig.semantic_regions
    if regions.shape != (faces.shape[0],):
        raise InvalidRigError("semantic_regions must hold one class id per face")
    if regions.size and (regions.min() < 0 or regions.max() >= NUM_CLASSES):
        raise InvalidRigError("semantic region id outside the class vocabulary")
    if rig.uvs.shape != (n, 2):
        raise InvalidRigError(f"uvs must be ({n}, 2), got {rig.uvs.shape}")
    if rig.uvs.size and (rig.uvs.min() < 0 or rig.uvs.max() > 1):
        raise InvalidRigError("uvs must lie in [0, 1]")
    for label, anchors in (("landmarks", rig.landmarks), ("dense_landmarks", rig.dense_landmarks)):
        if anchors is None:
            continue
        bary = anchors.barycentric
        if bary.shape != (len(anchors.face_index), 3):
            raise InvalidRigError(f"{label} barycentric array must be (L, 3)")
        if np.any(anchors.face_index < 0) or np.any(anchors.face_index >= faces.shape[0]):
            raise InvalidRigError(f"{label} face index out of range")
        if np.any(bary < 0) or np.max(np.abs(bary.sum(axis=1) - 1.0), initial=0.0) > 1e-9:
            raise InvalidRigError(f"{label} barycentric triples must be non-negative and sum to 1")
    if rig.eyelid_coupling is not None and rig.eyelid_coupling.shape != (rig.expression_basis.shape[0],):
        raise InvalidRigError("eyelid_coupling must hold one gain per expression component")


def joint_order(parents):
    """Return joints ordered parents-first; reject anything but a tree rooted at 0."""
    parents = np.asarray(parents)
    k = len(parents)
    if k == 0 or parents[0] != ROOT_PARENT:
        raise InvalidRigError("joint 0 must be the root (parent -1)")
    for j in range(1, k):
        if not 0 <= parents[j] < k:
            raise InvalidRigError(f"joint {j} has invalid parent {parents[j]}")
    depth = np.full(k, -1)
    depth[0] = 0
    for j in range(k):
        chain = []
        node = j
        while depth[node] < 0:
            chain.append(node)
            node = parents[node]
            if node in chain:
                raise InvalidRigError(f"cyclic joint hierarchy through joint {node}")
        for offset, c in enumerate(reversed(chain), start=1):
            depth[c] = depth[node] + offset
    return np.argsort(depth, kind="stable")


def _check(array, shape, name):
    array = np.asarray(array, dtype=np.float64)
    if array.shape != shape:
        raise InvalidParameterError(f"{name} must have shape {shape}, got {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InvalidParameterError(f"{name} contains non-finite values")
    return array


def euler_to_rotation(angles):
    """Rotation matrix for intrinsic X-then-Y-then-Z Euler angles in radians.

    ``R = Rx(a) @ Ry(b) @ Rz(c)``.
    """
    a, b, c = _check(angles, (3,), "euler angles")
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cc, sc = np.cos(c), np.sin(c)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]])
    ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    rz = np.array([[cc, -sc, 0.0], [sc, cc, 0.0], [0.0, 0.0, 1.0]])
    return rx @ ry @ rz


def bind_pose_mesh(rig, beta, psi):
    """Template plus identity and expression displacements."""
    beta = _check(beta, (rig.num_identity,), "identity coefficients")
    psi = _check(psi, (rig.num_expression,), "expression coefficients")
    vertices = (
        rig.template_vertices
        + np.einsum("i,ijk->jk", beta, rig.identity_basis)
        + np.einsum("i,ijk->jk", psi, rig.expression_basis)
    )
    return Mesh(vertices, rig.faces)


def joint_locations(rig, beta, normalize_rows=True):
    """Template joints moved by skinning-weighted identity displacements.

    Computes ``J + W' (beta . S)`` where ``W'`` is the skinning matrix with
    each joint row rescaled to sum to one, so a joint follows the weighted
    mean displacement of the vertices it drives.  With
    ``normalize_rows=False`` the raw weights are used as-is.
    """
    beta = _check(beta, (rig.num_identity,), "identity coefficients")
    weights = rig.skinning_weights
    if normalize_rows:
        totals = weights.sum(axis=1, keepdims=True)
        weights = np.divide(weights, totals, out=np.zeros_like(weights), where=totals > 0)
    displacement = np.einsum("i,ilk->lk", beta, rig.identity_basis)
    return rig.template_joints + weights @ displacement


def rotation_about(rotation, center):
    """4x4 rigid transform rotating about ``center``."""
    transform = np.eye(4)
    transform[:3, :3] = rotation
    transform[:3, 3] = center - rotation @ center
    return transform


def forward_kinematics(rig, theta, joints):
    """Global 4x4 transform of every joint.

    Each joint rotates by its local Euler angles about its own location and
    inherits its parent's global transform.
    """
    k = rig.num_joints
    theta = _check(theta, (k, 3), "pose")
    joints = _check(joints, (k, 3), "joint locations")
    order = joint_order(rig.joint_parents)
    transforms = np.empty((k, 4, 4))
    for j in order:
        local = rotation_about(euler_to_rotation(theta[j]), joints[j])
        parent = rig.joint_parents[j]
        transforms[j] = local if parent == ROOT_PARENT else transforms[parent] @ local
    return transforms


def linear_blend_skinning(vertices, transforms, weights):
    """Blend per-joint rigid transforms of ``vertices`` with ``weights`` (K, N)."""
    vertices = np.asarray(vertices, dtype=np.float64)
    transforms = np.asarray(transforms, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise InvalidParameterError(f"vertices must be (N, 3), got {vertices.shape}")
    k = transforms.shape[0]
    if transforms.shape != (k, 4, 4) or weights.shape != (k, vertices.shape[0]):
        raise InvalidParameterError(
            f"shape mismatch: transforms {transforms.shape}, weights {weights.shape}, "
            f"vertices {vertices.shape}"
        )
    blended = np.einsum("kv,kij->vij", weights, transforms[:, :3, :])
    return np.einsum("vij,vj->vi", blended[:, :, :3], vertices) + blended[:, :, 3]


def posed_mesh(rig, beta, psi, theta):
    """The full mesh generating function."""
    joints = joint_locations(rig, beta)
    bind = bind_pose_mesh(rig, beta, psi)
    transforms = forward_kinematics(rig, theta, joints)
    return Mesh(linear_blend_skinning(bind.vertices, transforms, rig.skinning_weights), rig.faces)


def vertex_normals(vertices, faces):
    """Area-weighted unit vertex normals; isolated vertices get +z."""
    tri = vertices[faces]
    face_n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    normals = np.zeros_like(vertices)
    for c in range(3):
        np.add.at(normals, faces[:, c], face_n)
    length = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.divide(normals, length, out=np.zeros_like(normals), where=length > 1e-300)
    normals[length[:, 0] <= 1e-300] = (0.0, 0.0, 1.0)
    return normals


def zero_params(rig):
    """Zero identity, expression and pose for ``rig``."""
    return np.zeros(rig.num_identity), np.zeros(rig.num_expression), np.zeros((rig.num_joints, 3))


# -- persistence -------------------------------------------------------------


def _rig_arrays(rig):
    arrays = {
        "template_vertices": rig.template_vertices,
        "faces": rig.faces,
        "identity_basis": rig.identity_basis,
        "expression_basis": rig.expression_basis,
        "skinning_weights": rig.skinning_weights,
        "template_joints": rig.template_joints,
        "joint_parents": rig.joint_parents,
        "semantic_regions": rig.semantic_regions,
        "uvs": rig.uvs,
        "landmark_face": rig.landmarks.face_index,
        "landmark_bary": rig.landmarks.barycentric,
        "joint_names": np.array(rig.joint_names),
    }
    if rig.dense_landmarks is not None:
        arrays["dense_landmark_face"] = rig.dense_landmarks.face_index
        arrays["dense_landmark_bary"] = rig.dense_landmarks.barycentric
    if rig.eyelid_coupling is not None:
        arrays["eyelid_coupling"] = rig.eyelid_coupling
    return arrays


def save_rig(path, rig):
    """Write ``rig`` as a versioned ``.npz`` container."""
    arrays = _rig_arrays(rig)
    arrays["format_version"] = np.array(RIG_FORMAT_VERSION)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_rig(path):
    """Load and validate a rig written by :func:`save_rig`."""
    path = Path(path)
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise InvalidRigError(f"{path}: not a rig container ({exc})") from exc
    with data:
        missing = {"format_version", "template_vertices", "faces", "identity_basis",
                   "expression_basis", "skinning_weights", "template_joints",
                   "joint_parents", "semantic_regions", "uvs", "landmark_face",
                   "landmark_bary", "joint_names"} - set(data.files)
        if missing:
            raise InvalidRigError(f"{path}: missing fields {sorted(missing)}")
        version = int(data["format_version"])
        if version != RIG_FORMAT_VERSION:
            raise InvalidRigError(f"{path}: unsupported rig format version {version}")
        dense = None
        if "dense_landmark_face" in data.files:
            dense = LandmarkAnchors(data["dense_landmark_face"], data["dense_landmark_bary"])
        try:
            return FaceRig(
                template_vertices=data["template_vertices"].astype(np.float64),
                faces=data["faces"].astype(np.int64),
                identity_basis=data["identity_basis"].astype(np.float64),
                expression_basis=data["expression_basis"].astype(np.float64),
                skinning_weights=data["skinning_weights"].astype(np.float64),
                template_joints=data["template_joints"].astype(np.float64),
                joint_parents=data["joint_parents"].astype(np.int64),
                semantic_regions=data["semantic_regions"].astype(np.int64),
                uvs=data["uvs"].astype(np.float64),
                landmarks=LandmarkAnchors(data["landmark_face"], data["landmark_bary"]),
                dense_landmarks=dense,
                joint_names=tuple(str(n) for n in data["joint_names"]),
                eyelid_coupling=data["eyelid_coupling"] if "eyelid_coupling" in data.files else None,
            )
        except InvalidRigError as exc:
            raise InvalidRigError(f"{path}: {exc}") from None
