"""In-memory pipeline: render, detect segments, merge, fit, decode, score."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .events import EPS_INT, along_ray_depth, prepare_view, reference_view_segments, view_segments
from .fit import FitConfig, FitProblem, FitResult, StageData, fit, occluded_mask
from .geometry import Camera, DepthMap, Ray, Scene
from .merge import T_SEP, conflict_tol, merge_segments, select_views, supervision_arrays
from .metrics import crossings_to_points, decode_table, ray_occ_metrics, scene_metrics
from .oracle import Z_MAX, N_SAMPLES, camera_rays, cast_rays, render_depth, z_grid
from .parallel import run_blocks

REF_VIEW = -1


@dataclass(frozen=True)
class PipelineConfig:
    z_max: float = Z_MAX
    n_samples: int = N_SAMPLES
    eps_int: float = EPS_INT
    t_sep: float = T_SEP
    views: int = 20
    seed: int = 0
    threads: int | None = 1
    fit: FitConfig = field(default_factory=FitConfig)

    @property
    def z(self) -> np.ndarray:
        return z_grid(self.z_max, self.n_samples)

    @property
    def dz(self) -> float:
        return self.z_max / (self.n_samples - 1)

    @property
    def tol(self) -> float:
        return conflict_tol(self.eps_int, self.dz)


@dataclass
class RefRays:
    origins: np.ndarray
    dirs: np.ndarray
    pixels: np.ndarray
    depth_along: np.ndarray  # NaN where the reference depth is missing


def reference_rays(camera: Camera, depth: DepthMap) -> RefRays:
    o, d, px = camera_rays(camera)
    planar = depth.lookup_many(px)
    return RefRays(o, d, px, along_ray_depth(planar, d, camera.forward))


def render_views(scene: Scene, cameras, z_max: float = Z_MAX, threads: int | None = 1) -> list[DepthMap]:
    return [render_depth(scene, c, z_max, threads) for c in cameras]


def segments_for_views(rays: RefRays, z, cameras, depths, view_ids, eps_int=EPS_INT,
                       threads: int | None = 1) -> dict:
    """{view_id: per-ray segment lists} for the listed auxiliary views."""
    out = {}
    for vid in view_ids:
        view = prepare_view(cameras[vid], depths[vid])
        per_ray = [None] * len(rays.origins)

        def work(r0, r1, view=view, vid=vid):
            segs = view_segments(rays.origins[r0:r1], rays.dirs[r0:r1], z, view, eps_int, vid)
            per_ray[r0:r1] = segs

        run_blocks(work, len(rays.origins), threads)
        out[vid] = per_ray
    return out


def ref_segments(rays: RefRays, z_max: float) -> list:
    return [reference_view_segments(Ray(o, d, z_max), dd, REF_VIEW)
            for o, d, dd in zip(rays.origins, rays.dirs, rays.depth_along)]


def merge_rays(ref_segs, per_view: dict, cfg: PipelineConfig) -> list:
    sups = []
    for i, rs in enumerate(ref_segs):
        segs = list(rs)
        for vid in sorted(per_view):
            segs.extend(per_view[vid][i])
        sups.append(merge_segments(segs, i, cfg.t_sep, cfg.tol, cfg.z_max))
    return sups


def stage1_rays(ref_segs, cfg: PipelineConfig) -> list:
    return [merge_segments(rs, i, cfg.t_sep, cfg.tol, cfg.z_max) for i, rs in enumerate(ref_segs)]


def build_problem(z, sup1, sup2, depth_along) -> FitProblem:
    k1, a1, b1 = supervision_arrays(sup1, z, len(depth_along))
    k2, a2, b2 = supervision_arrays(sup2, z, len(depth_along))
    return FitProblem(np.asarray(z), StageData(k1, a1, b1), StageData(k2, a2, b2),
                      occluded_mask(z, depth_along), np.asarray(depth_along, dtype=np.float64))


@dataclass
class PipelineResult:
    rays: RefRays
    aux_ids: list
    sup1: list
    sup2: list
    problem: FitProblem
    result: FitResult
    crossings: list
    gt_hits: list
    scene_report: object
    occ_report: object


def evaluate(scene: Scene, rays: RefRays, crossings, z_max: float, t: float = 0.5,
             n_samples: int = 10_000, seed: int = 0, gt_hits=None):
    """Scene and occluded-ray scores against exact hits along the reference rays."""
    if gt_hits is None:
        gt_hits = cast_rays(scene, rays.origins, rays.dirs, z_max)
    pred_pts, _ = crossings_to_points(rays.origins, rays.dirs, crossings)
    gt_pts, _ = crossings_to_points(rays.origins, rays.dirs, gt_hits)
    return (scene_metrics(pred_pts, gt_pts, t, n_samples, seed),
            ray_occ_metrics(crossings, gt_hits, t), gt_hits)


def run_synthetic(synth, cfg: PipelineConfig = PipelineConfig(), aux_ids=None, depths=None,
                  t: float = 0.5, n_eval: int = 10_000) -> PipelineResult:
    """Full pipeline on a synthetic scene held in memory.

    ``aux_ids`` restricts the candidate auxiliary views (indices into
    ``synth.auxiliary``); view selection then keeps the top ``cfg.views``."""
    z = cfg.z
    cams = list(synth.cameras)
    if depths is None:
        depths = render_views(synth.scene, cams, cfg.z_max, cfg.threads)
    rays = reference_rays(cams[0], depths[0])
    cand = list(range(1, len(cams))) if aux_ids is None else [i + 1 for i in aux_ids]
    order = select_views(cams[0], depths[0], [(cams[i], depths[i]) for i in cand], cfg.views, cfg.eps_int)
    chosen = sorted(cand[i] for i in order)
    per_view = segments_for_views(rays, z, cams, depths, chosen, cfg.eps_int, cfg.threads)
    rsegs = ref_segments(rays, cfg.z_max)
    sup1 = stage1_rays(rsegs, cfg)
    sup2 = merge_rays(rsegs, per_view, cfg)
    problem = build_problem(z, sup1, sup2, rays.depth_along)
    res = fit(problem, cfg.fit)
    crossings = decode_table(z, res.y)
    srep, orep, gt = evaluate(synth.scene, rays, crossings, cfg.z_max, t, n_eval, cfg.seed)
    return PipelineResult(rays, [c - 1 for c in chosen], sup1, sup2, problem, res, crossings, gt, srep, orep)
