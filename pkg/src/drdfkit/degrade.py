"""View subsampling and coverage-based mesh culling for sparsity studies."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Mesh

EPS_VIS = 0.05


@dataclass(frozen=True)
class DegradeReport:
    im_pct: float
    mesh_pct: float
    retained_views: tuple
    culled_triangles: int

    def to_dict(self) -> dict:
        return {"im_pct": self.im_pct, "mesh_pct": self.mesh_pct,
                "retained_views": list(self.retained_views), "culled_triangles": self.culled_triangles}


def subsample_views(n_views: int, level: int, seed: int = 0) -> list[int]:
    """Seeded subset of ceil(n / 2**level) view ids (sorted).

    All levels draw from one seeded permutation, so for a fixed seed a
    higher level always keeps a subset of a lower level's views."""
    if level < 0:
        raise ValueError("level must be >= 0")
    if n_views <= 0:
        return []
    k = max(1, math.ceil(n_views / 2 ** level))
    perm = np.random.default_rng([seed, 31]).permutation(n_views)
    return sorted(int(i) for i in perm[:k])


def visible_vertices(vertices, cameras, depths, eps_vis: float = EPS_VIS, occlusion_test: bool = True):
    """Vertices seen by at least one view: in-image, in front of the camera
    and (with the occlusion test) within eps_vis of the recorded depth."""
    seen = np.zeros(len(vertices), dtype=bool)
    for cam, dm in zip(cameras, depths):
        pix, zc = cam.project_many(vertices)
        ok = np.isfinite(pix).all(axis=1) & (zc > 0)
        intr = cam.intrinsics
        with np.errstate(invalid="ignore"):
            ok &= (pix[:, 0] >= 0) & (pix[:, 0] <= intr.width - 1)
            ok &= (pix[:, 1] >= 0) & (pix[:, 1] <= intr.height - 1)
        if occlusion_test:
            d = dm.lookup_many(np.where(ok[:, None], pix, 0.0))
            ok &= np.isfinite(d) & (np.abs(zc - d) <= eps_vis)
        seen |= ok
    return seen


def ods_cull(mesh: Mesh, cameras, depths, eps_vis: float = EPS_VIS, occlusion_test: bool = True,
             n_views_total: int | None = None, retained_ids=()):
    """Drop triangles with no vertex visible in any retained view.

    Returns (culled mesh or None when nothing survives, DegradeReport)."""
    cameras, depths = list(cameras), list(depths)
    seen = visible_vertices(mesh.vertices, cameras, depths, eps_vis, occlusion_test)
    keep = seen[mesh.faces].any(axis=1)
    area = mesh.areas()
    mesh_pct = float(area[keep].sum() / area.sum())
    total = n_views_total if n_views_total is not None else len(cameras)
    im_pct = len(cameras) / total if total else 0.0
    report = DegradeReport(im_pct, mesh_pct, tuple(retained_ids), int((~keep).sum()))
    culled = Mesh(mesh.vertices, mesh.faces[keep], mesh.path) if keep.any() else None
    return culled, report
