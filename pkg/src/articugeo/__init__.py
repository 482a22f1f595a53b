"""Geometry, warping and self-supervised loss toolkit for articulated multi-camera vehicles."""

__version__ = "0.1.0"

from .geometry import CameraModel, SE3Transform, compose, inverse, project, unproject  # noqa: E402
from .rig import ContextKind, ContextSpec, RigConfig, RigState, context_transform, cv_pairs  # noqa: E402

__all__ = ["CameraModel", "SE3Transform", "compose", "inverse", "project", "unproject",
           "ContextKind", "ContextSpec", "RigConfig", "RigState", "context_transform", "cv_pairs"]
