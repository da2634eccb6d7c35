"""Directed ray distance supervision from posed depth maps.

Exact ray oracles on synthetic scenes, free-space segment detection in
auxiliary views, per-ray segment merging, the segment penalty family, a
tabulated per-ray fit, decoding and scoring, plus view and mesh degradation
for sparsity studies.
"""
__version__ = "0.1.0"

from .geometry import AABB, Camera, DepthMap, Intrinsics, Mesh, Plane, Ray, Scene  # noqa: E402
from .kernels import BACKEND  # noqa: E402

__all__ = ["__version__", "BACKEND", "AABB", "Camera", "DepthMap", "Intrinsics", "Mesh", "Plane", "Ray",
           "Scene"]
