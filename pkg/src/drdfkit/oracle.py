"""Exact ray casting against scenes and ground-truth ray distance tables."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import AABB, Camera, DepthMap, Plane, Ray, Scene
from .parallel import run_blocks

DEDUP_TOL = 1e-7
Z_MAX = 8.0
N_SAMPLES = 512


class EmptyHitsError(ValueError):
    pass


def z_grid(z_max: float = Z_MAX, n: int = N_SAMPLES) -> np.ndarray:
    """Sample depths z_j = j * z_max / (n - 1)."""
    return np.arange(n, dtype=np.float64) * (z_max / (n - 1))


def dedup_sorted(hits: np.ndarray, tol: float = DEDUP_TOL) -> np.ndarray:
    hits = np.sort(np.asarray(hits, dtype=np.float64))
    if hits.size < 2:
        return hits
    keep = [0]
    for i in range(1, hits.size):
        if hits[i] - hits[keep[-1]] > tol:
            keep.append(i)
    return hits[keep]


def _aabb_hits(box: AABB, o: np.ndarray, d: np.ndarray):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t0 = (box.min[None] - o) * inv
        t1 = (box.max[None] - o) * inv
    lo, hi = np.minimum(t0, t1), np.maximum(t0, t1)
    # axis-parallel rays: inside the slab means unbounded, outside means miss
    par = d == 0
    inside = (o >= box.min[None]) & (o <= box.max[None])
    lo = np.where(par, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(par, np.where(inside, np.inf, -np.inf), hi)
    tn, tf = lo.max(axis=1), hi.min(axis=1)
    ok = tn <= tf
    return np.where(ok, tn, np.nan), np.where(ok, tf, np.nan)


def _plane_hits(pl: Plane, o: np.ndarray, d: np.ndarray) -> np.ndarray:
    den = d @ pl.normal
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((pl.point[None] - o) @ pl.normal) / den
    t = np.where(den == 0, np.nan, t)
    if pl.extent is not None:
        u, v = pl.axes()
        rel = o + t[:, None] * d - pl.point
        out = (np.abs(rel @ u) > pl.extent + 1e-12) | (np.abs(rel @ v) > pl.extent + 1e-12)
        t = np.where(out, np.nan, t)
    return t


def cast_rays(scene: Scene, origins, dirs, z_max: float, threads: int | None = 1) -> list[np.ndarray]:
    """Sorted, deduplicated hit depths in (0, z_max] for each ray."""
    o = np.ascontiguousarray(np.asarray(origins, dtype=np.float64).reshape(-1, 3))
    d = np.ascontiguousarray(np.asarray(dirs, dtype=np.float64).reshape(-1, 3))
    if len(o) == 1 and len(d) > 1:
        o = np.ascontiguousarray(np.broadcast_to(o, d.shape))
    cols = []
    for p in scene.primitives:
        if isinstance(p, AABB):
            cols.extend(_aabb_hits(p, o, d))
        elif isinstance(p, Plane):
            cols.append(_plane_hits(p, o, d))
    tris = np.ascontiguousarray(scene.triangles())
    if len(tris):
        counts = np.zeros(len(o), dtype=np.int64)
        tri_hits = np.full((len(o), 64), np.nan)

        def work(r0, r1):
            c, h = kernels.cast_triangles(o[r0:r1], d[r0:r1], float(z_max), tris, 64)
            counts[r0:r1] = c
            tri_hits[r0:r1] = h

        run_blocks(work, len(o), threads)
        cols.extend(tri_hits.T)
    if not cols:
        return [np.zeros(0) for _ in range(len(o))]
    allh = np.stack(cols, axis=1)
    valid = np.isfinite(allh) & (allh > 1e-9) & (allh <= z_max)
    return [dedup_sorted(allh[i][valid[i]]) for i in range(len(o))]


def cast_ray(scene: Scene, ray: Ray) -> np.ndarray:
    return cast_rays(scene, ray.origin[None], ray.dir[None], ray.z_max)[0]


def camera_rays(camera: Camera, pixels: np.ndarray | None = None):
    """(origins, unit dirs, pixels) for the given pixels or the whole grid."""
    if pixels is None:
        pixels = camera.grid_pixels()
    dirs = camera.pixel_dirs(pixels)
    return np.broadcast_to(camera.center, dirs.shape).copy(), dirs, pixels


def render_depth(scene: Scene, camera: Camera, z_max: float = Z_MAX, threads: int | None = 1) -> DepthMap:
    """Planar (camera-frame z) depth of the first hit per pixel; 0 where none."""
    o, d, _ = camera_rays(camera)
    hits = cast_rays(scene, o, d, z_max, threads)
    first = np.array([h[0] if h.size else 0.0 for h in hits])
    planar = first * (d @ camera.forward)
    w, h = camera.intrinsics.width, camera.intrinsics.height
    return DepthMap(planar.reshape(h, w))


def _check(hits) -> np.ndarray:
    hits = np.asarray(hits, dtype=np.float64)
    if hits.size == 0:
        raise EmptyHitsError("ray has no intersections")
    return hits


def oracle_urdf(hits, z):
    hits = _check(hits)
    z = np.asarray(z, dtype=np.float64)
    out = np.min(np.abs(z[..., None] - hits), axis=-1)
    return float(out) if out.ndim == 0 else out


def oracle_drdf(hits, z):
    """Signed distance to the nearest hit: + if it lies ahead (ties go ahead)."""
    hits = np.sort(_check(hits))
    z = np.asarray(z, dtype=np.float64)
    i = np.searchsorted(hits, z, side="left")  # first hit >= z
    ahead = hits[np.minimum(i, hits.size - 1)] - z
    behind = z - hits[np.maximum(i - 1, 0)]
    has_ahead = i < hits.size
    has_behind = i > 0
    use_ahead = has_ahead & (~has_behind | (ahead <= behind))
    out = np.where(use_ahead, ahead, -behind)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class OracleDRDF:
    hits: np.ndarray
    z: np.ndarray
    d: np.ndarray


def oracle_drdf_table(hits, z_samples) -> OracleDRDF:
    z = np.asarray(z_samples, dtype=np.float64)
    return OracleDRDF(np.sort(_check(hits)), z, np.asarray(oracle_drdf(hits, z)))
