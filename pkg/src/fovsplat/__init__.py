"""Foveated point-based splatting with efficiency-aware pruning."""

from .camera import Camera, DisplayGeometry, eccentricity_map, eccentricity_of
from .model import FrModel, ModelValidationError
from .projection import ProjectedSplats, RenderConfig, project
from .binning import TileWorkload, bin_and_sort
from .rasterize import RenderOutput, WorkloadStats, rasterize, render, workload_stats
from .backward import Gradients, backward
from .splat_io import SplatFormatError, load_model, save_model
from .synthetic import make_synthetic_scene

__all__ = [
    "Camera",
    "DisplayGeometry",
    "FrModel",
    "Gradients",
    "ModelValidationError",
    "ProjectedSplats",
    "RenderConfig",
    "RenderOutput",
    "SplatFormatError",
    "TileWorkload",
    "WorkloadStats",
    "backward",
    "bin_and_sort",
    "eccentricity_map",
    "eccentricity_of",
    "load_model",
    "make_synthetic_scene",
    "project",
    "rasterize",
    "render",
    "save_model",
    "workload_stats",
]
