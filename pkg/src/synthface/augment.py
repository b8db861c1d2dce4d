"""Training-time augmentation applied consistently to images and labels.

Geometry is a single homography acting on normalized image coordinates
(``x / width``, ``y / height``, pixel centres at ``+0.5``).  Image
operations run in a fixed order: warp, blur, contrast/brightness, noise,
grayscale.  Only the warp touches labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, InvalidParameterError

MODES = ("none", "appearance", "full")
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class AugmentationConfig:
    mode: str = "full"
    rotation_deg: tuple = (-30.0, 30.0)
    perspective_jitter: float = 0.05  # corner displacement, fraction of the frame
    blur_radius_px: tuple = (0.0, 2.0)
    brightness: tuple = (-0.2, 0.2)
    contrast: tuple = (0.7, 1.3)
    noise_sigma: tuple = (0.0, 0.03)
    grayscale_probability: float = 0.1

    def validate(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"augmentation.mode must be one of {MODES}, got {self.mode!r}")
        for name in ("rotation_deg", "blur_radius_px", "brightness", "contrast", "noise_sigma"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ConfigurationError(f"augmentation.{name}: invalid range [{lo}, {hi}]")
        if self.blur_radius_px[0] < 0 or self.noise_sigma[0] < 0 or self.contrast[0] < 0:
            raise ConfigurationError("augmentation blur, noise and contrast must be non-negative")
        if not 0 <= self.perspective_jitter < 0.25:
            raise ConfigurationError("augmentation.perspective_jitter must lie in [0, 0.25)")
        if not 0 <= self.grayscale_probability <= 1:
            raise ConfigurationError("augmentation.grayscale_probability must lie in [0, 1]")


@dataclass(frozen=True)
class AugmentationSpec:
    homography: np.ndarray = field(default_factory=lambda: np.eye(3))
    brightness: float = 0.0
    contrast: float = 1.0
    blur_radius: float = 0.0
    noise_sigma: float = 0.0
    noise_seed: int = 0
    grayscale: bool = False
    rotation: float = 0.0  # radians, recorded for inspection

    def __post_init__(self):
        h = np.asarray(self.homography, dtype=np.float64)
        if h.shape != (3, 3) or abs(np.linalg.det(h)) <= 1e-9:
            raise InvalidParameterError("homography must be an invertible 3x3 matrix")

    @property
    def is_geometric_identity(self):
        return np.array_equal(self.homography, np.eye(3))

    def to_dict(self):
        return {
            "homography": np.asarray(self.homography).tolist(),
            "brightness": self.brightness,
            "contrast": self.contrast,
            "blur_radius": self.blur_radius,
            "noise_sigma": self.noise_sigma,
            "noise_seed": self.noise_seed,
            "grayscale": self.grayscale,
            "rotation": self.rotation,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(**{**doc, "homography": np.asarray(doc["homography"], dtype=np.float64)})


def rotation_homography(angle):
    """Rotation by ``angle`` about the frame centre, normalized coordinates."""
    c, s = math.cos(angle), math.sin(angle)
    to_origin = np.array([[1.0, 0.0, -0.5], [0.0, 1.0, -0.5], [0.0, 0.0, 1.0]])
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    back = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.5], [0.0, 0.0, 1.0]])
    return back @ rot @ to_origin


def homography_from_points(src, dst):
    """Homography mapping four ``src`` points onto ``dst`` (direct linear solve)."""
    a, rhs = [], []
    for (x, y), (u, v) in zip(src, dst):
        a.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        a.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        rhs += [u, v]
    h = np.linalg.solve(np.array(a, dtype=np.float64), np.array(rhs, dtype=np.float64))
    return np.append(h, 1.0).reshape(3, 3)


def sample_augmentation(config, rng):
    """Draw an :class:`AugmentationSpec` from ``config`` using ``rng``."""
    if config.mode == "none":
        return AugmentationSpec()
    brightness = rng.uniform(*config.brightness)
    contrast = rng.uniform(*config.contrast)
    blur = rng.uniform(*config.blur_radius_px)
    sigma = rng.uniform(*config.noise_sigma)
    noise_seed = int(rng.integers(0, 2**63))
    grayscale = bool(rng.random() < config.grayscale_probability)
    homography = np.eye(3)
    angle = 0.0
    if config.mode == "full":
        angle = math.radians(rng.uniform(*config.rotation_deg))
        corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        jitter = rng.uniform(-config.perspective_jitter, config.perspective_jitter, size=(4, 2))
        homography = homography_from_points(corners, corners + jitter) @ rotation_homography(angle)
    return AugmentationSpec(homography, brightness, contrast, blur, sigma, noise_seed, grayscale, angle)


def pixel_homography(homography, width, height):
    """Express a normalized-coordinate homography in pixel coordinates."""
    scale = np.diag([float(width), float(height), 1.0])
    return scale @ homography @ np.linalg.inv(scale)


def map_points(homography, points):
    """Apply a homography to (L, 2) points in homogeneous coordinates."""
    points = np.asarray(points, dtype=np.float64)
    homo = np.concatenate([points, np.ones((len(points), 1))], axis=1) @ np.asarray(homography).T
    return homo[:, :2] / homo[:, 2:3]


def _source_coords(homography, height, width):
    # Continuous coordinates of output pixel centres pulled back to the source.
    h_px = pixel_homography(homography, width, height)
    ys, xs = np.mgrid[0:height, 0:width]
    centres = np.stack([xs.ravel() + 0.5, ys.ravel() + 0.5], axis=1)
    src = map_points(np.linalg.inv(h_px), centres) - 0.5
    return src[:, 0].reshape(height, width), src[:, 1].reshape(height, width)


def warp_image(image, homography):
    """Bilinear warp with replicated borders."""
    height, width = image.shape[:2]
    sx, sy = _source_coords(homography, height, width)
    sx = np.clip(sx, 0.0, width - 1.0)
    sy = np.clip(sy, 0.0, height - 1.0)
    x0 = np.minimum(np.floor(sx).astype(np.int64), width - 2 if width > 1 else 0)
    y0 = np.minimum(np.floor(sy).astype(np.int64), height - 2 if height > 1 else 0)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = sx - x0
    fy = sy - y0
    if image.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = image[y0, x0] * (1 - fx) + image[y0, x1] * fx
    bottom = image[y1, x0] * (1 - fx) + image[y1, x1] * fx
    return (top * (1 - fy) + bottom * fy).astype(image.dtype)


def warp_nearest(array, homography):
    """Nearest-neighbour warp with replicated borders (for class masks)."""
    height, width = array.shape[:2]
    sx, sy = _source_coords(homography, height, width)
    xi = np.clip(np.floor(sx + 0.5).astype(np.int64), 0, width - 1)
    yi = np.clip(np.floor(sy + 0.5).astype(np.int64), 0, height - 1)
    return array[yi, xi]


def apply_to_image(spec, image):
    """Apply ``spec`` to a float image with values in [0, 1]."""
    image = np.asarray(image)
    if image.size == 0:
        raise InvalidParameterError("image is empty")
    out = image
    if not spec.is_geometric_identity:
        out = warp_image(out, spec.homography)
    if spec.blur_radius > 0:
        sigma = (spec.blur_radius, spec.blur_radius) + (0,) * (out.ndim - 2)
        out = ndimage.gaussian_filter(out, sigma=sigma, mode="nearest")
    if spec.contrast != 1.0 or spec.brightness != 0.0:
        out = np.clip(spec.contrast * out + spec.brightness, 0.0, 1.0)
    if spec.noise_sigma > 0:
        noise = np.random.default_rng(spec.noise_seed).normal(0.0, spec.noise_sigma, size=out.shape)
        out = np.clip(out + noise, 0.0, 1.0)
    if spec.grayscale and out.ndim == 3 and out.shape[2] == 3:
        luma = out @ LUMA
        out = np.repeat(luma[..., None], 3, axis=2)
    if out is image:
        return image.copy()
    return out.astype(image.dtype, copy=False)


def apply_to_labels(spec, mask, landmarks, visible=None):
    """Warp a class mask and pixel-space landmarks by the spec's homography.

    Returns ``(mask, landmarks, visible)``.  Landmarks that land outside
    the frame keep their coordinates and are flagged invisible.
    """
    mask = np.asarray(mask)
    landmarks = np.asarray(landmarks, dtype=np.float64)
    visible = np.ones(len(landmarks), dtype=bool) if visible is None else np.asarray(visible, dtype=bool)
    if spec.is_geometric_identity:
        return mask.copy(), landmarks.copy(), visible.copy()
    height, width = mask.shape[:2]
    warped_mask = warp_nearest(mask, spec.homography)
    mapped = map_points(pixel_homography(spec.homography, width, height), landmarks[:, :2])
    inside = (mapped[:, 0] >= 0) & (mapped[:, 0] < width) & (mapped[:, 1] >= 0) & (mapped[:, 1] < height)
    out = landmarks.copy()
    out[:, :2] = mapped
    return warped_mask, out, visible & inside
