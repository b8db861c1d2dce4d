"""Procedural synthetic face data: rig, scene sampling, label rendering,
augmentation, label adaptation and evaluation metrics."""

from .config import GenerationConfig
from .desk import desk_assets
from .raster import render_scene
from .rig import FaceRig, posed_mesh
from .scene import assemble_scene

__version__ = "0.1.0"

__all__ = ["FaceRig", "GenerationConfig", "assemble_scene", "desk_assets", "posed_mesh", "render_scene"]
