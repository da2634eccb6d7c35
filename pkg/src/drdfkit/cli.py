"""Command-line pipeline: synth, render, oracle, events, merge, fit, adapt,
decode, eval, degrade and loss-check.

Every manifest-driven stage writes its artifacts under the manifest's
output directory plus ``logs/<stage>.log`` holding the effective config and
the git-style content hashes of its inputs and outputs. Nothing in the
artifacts depends on wall-clock time or on ``--threads``, so reruns are
byte-identical.

Exit codes: 0 ok, 2 invalid input, 3 missing upstream artifact, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .degrade import EPS_VIS, ods_cull, subsample_views
from .events import RaySegment
from .fit import DivergenceError, FitConfig, FitResult, adapt, fit
from .geometry import Camera, DepthMap, GeometryError, Scene
from .losses import KIND_BY_LABELS, ClampSpec, loss_sep, segment_loss
from .manifest import (DependencyError, Manifest, ManifestError, file_hash, read_jsonl, sub_seed,
                       write_json, write_jsonl)
from .merge import RaySupervision, conflict_tol, merge_segments, occlusion_scores
from .metrics import crossings_to_points, decode_table, ray_occ_metrics, scene_metrics, write_ply
from .oracle import cast_rays, oracle_drdf_table, render_depth, z_grid
from .parallel import default_threads
from .pipeline import REF_VIEW, build_problem, ref_segments, reference_rays, segments_for_views
from .synth import GENERATORS, EmptySceneError, synth_scene

log = logging.getLogger("drdfkit")

EXIT_OK, EXIT_INVALID, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4
PIPELINE_STAGES = ("render", "oracle", "events", "merge", "fit", "decode", "eval")


# ---------------------------------------------------------------------------
# shared helpers


class Context:
    """Manifest plus the parameters resolved from flags and manifest."""

    def __init__(self, args):
        self.args = args
        self.m = Manifest.load(args.manifest)
        p = self.m.params
        self.z_max = float(p["z_max"])
        self.n_samples = int(p["n_samples"])
        self.eps_int = _pick(args, "eps_int", p["eps_int"])
        self.t_sep = _pick(args, "t_sep", p["t_sep"])
        self.seed = int(_pick(args, "seed", p["seed"]))
        self.threads = getattr(args, "threads", None) or default_threads()
        if self.n_samples < 2 or not self.z_max > 0:
            raise ManifestError("params need n_samples >= 2 and z_max > 0")
        self.inputs: list[Path] = []

    @property
    def z(self) -> np.ndarray:
        return z_grid(self.z_max, self.n_samples)

    @property
    def tol(self) -> float:
        return conflict_tol(self.eps_int, self.z_max / (self.n_samples - 1))

    def use(self, path) -> Path:
        self.inputs.append(Path(path))
        return Path(path)

    def scene(self) -> Scene:
        return Scene.load(self.use(self.m.scene))

    def camera(self, i: int) -> Camera:
        return Camera.load(self.use(self.m.cameras[i]))

    def depth(self, i: int) -> DepthMap:
        return DepthMap.load(self.use(self.m.depth_path(i)))

    def require(self, rel: str, stage: str) -> Path:
        return self.use(self.m.require(rel, stage))

    def ref_rays(self):
        ref = self.m.reference
        return reference_rays(self.camera(ref), self.depth(ref))


def _pick(args, name, fallback):
    v = getattr(args, name, None)
    return fallback if v is None else v


def _rel(ctx: Context, p: Path) -> str:
    for base in (ctx.m.output_dir, ctx.m.path.parent):
        try:
            return str(Path(p).resolve().relative_to(base.resolve()))
        except ValueError:
            continue
    return str(p)


def _write_log(ctx: Context, stage: str, config: dict, outputs: list) -> None:
    lines = [f"stage {stage}", f"version {__version__}", f"manifest {ctx.m.hash}", f"seed {ctx.seed}",
             "config " + json.dumps(config, sort_keys=True)]
    seen = set()
    for p in ctx.inputs:
        if p not in seen:
            seen.add(p)
            lines.append(f"in {file_hash(p)} {_rel(ctx, p)}")
    for p in outputs:
        lines.append(f"out {file_hash(p)} {_rel(ctx, p)}")
    path = ctx.m.out(f"logs/{stage}.log")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    log.info("%s: wrote %d artifacts", stage, len(outputs))


def _read_sups(path) -> list[RaySupervision]:
    return [RaySupervision.from_dict(d) for d in read_jsonl(path)]


def _read_tables(path) -> tuple[np.ndarray, np.ndarray]:
    recs = read_jsonl(path)
    recs.sort(key=lambda d: d["ray_id"])
    if not recs:
        raise ManifestError(f"{path}: no fitted rays")
    return np.asarray(recs[0]["z"], dtype=np.float64), np.array([d["y"] for d in recs], dtype=np.float64)


def _write_fit(ctx: Context, stage: str, z, res: FitResult) -> list[Path]:
    out_fit, out_trace = ctx.m.out(f"{stage}/fit.jsonl"), ctx.m.out(f"{stage}/trace.csv")
    zl = z.tolist()
    write_jsonl(out_fit, ({"ray_id": i, "z": zl, "y": row} for i, row in enumerate(res.y.tolist())))
    with open(out_trace, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iter", "stage", "total", "data", "ent", "prior", "best"])
        for row in res.trace:
            w.writerow([repr(v) for v in row])
    return [out_fit, out_trace]


def _fit_config(ctx: Context, args) -> FitConfig:
    base = FitConfig()
    return FitConfig(stage1_iters=_pick(args, "stage1", base.stage1_iters),
                     stage2_iters=_pick(args, "stage2", base.stage2_iters),
                     lr=_pick(args, "lr", base.lr),
                     lambda_ent=_pick(args, "lambda_ent", base.lambda_ent),
                     mu_slope=_pick(args, "mu_slope", base.mu_slope),
                     seed=sub_seed(ctx.seed, "fit"),
                     clamp=ClampSpec(args.d_clamp, True) if getattr(args, "d_clamp", None) else ClampSpec(),
                     threads=ctx.threads)


def _fit_log_config(cfg: FitConfig) -> dict:
    return {"stage1": cfg.stage1_iters, "stage2": cfg.stage2_iters, "lr": cfg.lr,
            "momentum": cfg.momentum, "lambda_ent": cfg.lambda_ent, "mu_slope": cfg.mu_slope,
            "huber_delta": cfg.huber_delta, "tau": cfg.temperature,
            "clamp": cfg.clamp.d_clamp if cfg.clamp.enabled else None}


def _merge_views(ctx: Context, k: int):
    """Events cache merged with the top-k auxiliary views (plus the reference)."""
    if k < 1:
        raise ManifestError("--views must be >= 1")
    seg_path = ctx.require("events/segments.jsonl", "events")
    ref = ctx.m.reference
    ref_cam, ref_depth = ctx.camera(ref), ctx.depth(ref)
    aux = ctx.m.aux_ids
    scores = occlusion_scores(ref_cam, ref_depth, [(ctx.camera(i), ctx.depth(i)) for i in aux], ctx.eps_int)
    order = sorted(range(len(aux)), key=lambda i: (-scores[i], i))[:k]
    chosen = sorted(aux[i] for i in order)
    n_rays = ref_cam.intrinsics.width * ref_cam.intrinsics.height
    by_ray: list[dict] = [{} for _ in range(n_rays)]
    for rec in read_jsonl(seg_path):
        vid = rec["view_id"]
        by_ray[rec["ray_id"]][vid] = [RaySegment.from_dict(s, view=vid) for s in rec["segments"]]
    sup1, sup2 = [], []
    for i, views in enumerate(by_ray):
        rs = views.get(REF_VIEW, [])
        segs = list(rs)
        for vid in chosen:
            segs.extend(views.get(vid, []))
        sup1.append(merge_segments(rs, i, ctx.t_sep, ctx.tol, ctx.z_max))
        sup2.append(merge_segments(segs, i, ctx.t_sep, ctx.tol, ctx.z_max))
    summary = {"views": chosen, "scores": {str(aux[i]): float(scores[i]) for i in range(len(aux))},
               "n_conflicts": sum(s.n_conflicts for s in sup2),
               "n_segments": sum(len(s.segments) for s in sup2),
               "n_sep": sum(len(s.sep) for s in sup2)}
    return sup1, sup2, summary


# ---------------------------------------------------------------------------
# stages


def cmd_synth(args) -> int:
    out = Path(args.out)
    kw = {"ref_size": args.ref_size, "aux_size": args.aux_size, "n_aux": args.n_aux}
    if args.scene == "random-boxes" and args.n_boxes is not None:
        kw["n_boxes"] = args.n_boxes
    s = synth_scene(args.scene, args.seed, **kw)
    (out / "cameras").mkdir(parents=True, exist_ok=True)
    s.scene.save(out / "scene.json")
    cams = []
    for i, c in enumerate(s.cameras):
        rel = f"cameras/cam_{i:02d}.json"
        c.save(out / rel)
        cams.append(rel)
    params = {"seed": args.seed}
    for name in ("eps_int", "t_sep"):
        if getattr(args, name) is not None:
            params[name] = getattr(args, name)
    Manifest.write(out / "manifest.json", "scene.json", cams, 0, None, "out", params)
    log.info("wrote %s (%d cameras)", out / "manifest.json", len(cams))
    return EXIT_OK


def cmd_render(args) -> int:
    ctx = Context(args)
    scene = ctx.scene()
    outputs = []
    for i in range(len(ctx.m.cameras)):
        cam = ctx.camera(i)
        dm = render_depth(scene, cam, ctx.z_max, ctx.threads)
        p, pc = ctx.m.out(f"render/depth_{i:02d}.dpth"), ctx.m.out(f"render/cam_{i:02d}.json")
        p.parent.mkdir(parents=True, exist_ok=True)
        dm.save(p)
        cam.save(pc)
        outputs += [p, pc]
    _write_log(ctx, "render", {"z_max": ctx.z_max}, outputs)
    return EXIT_OK


def cmd_oracle(args) -> int:
    ctx = Context(args)
    scene = ctx.scene()
    cam = ctx.camera(ctx.m.reference)
    from .oracle import camera_rays

    o, d, _ = camera_rays(cam)
    z = ctx.z
    hits = cast_rays(scene, o, d, ctx.z_max, ctx.threads)
    zl = z.tolist()

    def records():
        for i, h in enumerate(hits):
            if len(h) == 0:
                continue  # no surface within z_max: the distance is undefined
            t = oracle_drdf_table(h, z)
            yield {"ray_id": i, "hits": h.tolist(), "z": zl, "drdf": t.d.tolist()}

    out = ctx.m.out("oracle/oracle.jsonl")
    write_jsonl(out, records())
    _write_log(ctx, "oracle", {"z_max": ctx.z_max, "n_samples": ctx.n_samples}, [out])
    return EXIT_OK


def cmd_events(args) -> int:
    ctx = Context(args)
    rays = ctx.ref_rays()
    aux = ctx.m.aux_ids
    cams = {i: ctx.camera(i) for i in aux}
    depths = {i: ctx.depth(i) for i in aux}
    per_view = segments_for_views(rays, ctx.z, cams, depths, aux, ctx.eps_int, ctx.threads)
    rsegs = ref_segments(rays, ctx.z_max)

    def records():
        for r in range(len(rays.origins)):
            for vid, segs in [(REF_VIEW, rsegs[r])] + [(v, per_view[v][r]) for v in aux]:
                if segs:
                    yield {"ray_id": r, "view_id": vid, "segments": [s.to_dict() for s in segs]}

    out = ctx.m.out("events/segments.jsonl")
    write_jsonl(out, records())
    _write_log(ctx, "events", {"eps_int": ctx.eps_int, "z_max": ctx.z_max, "n_samples": ctx.n_samples}, [out])
    return EXIT_OK


def cmd_merge(args) -> int:
    ctx = Context(args)
    sup1, sup2, summary = _merge_views(ctx, args.views)
    outs = [ctx.m.out("merge/supervision.jsonl"), ctx.m.out("merge/reference.jsonl"),
            ctx.m.out("merge/summary.json")]
    write_jsonl(outs[0], (s.to_dict() for s in sup2))
    write_jsonl(outs[1], (s.to_dict() for s in sup1))
    write_json(outs[2], summary)
    _write_log(ctx, "merge", {"views": args.views, "eps_int": ctx.eps_int, "t_sep": ctx.t_sep}, outs)
    return EXIT_OK


def cmd_fit(args) -> int:
    ctx = Context(args)
    sup2 = _read_sups(ctx.require("merge/supervision.jsonl", "merge"))
    sup1 = _read_sups(ctx.require("merge/reference.jsonl", "merge"))
    rays = ctx.ref_rays()
    problem = build_problem(ctx.z, sup1, sup2, rays.depth_along)
    cfg = _fit_config(ctx, args)
    res = fit(problem, cfg)
    outs = _write_fit(ctx, "fit", ctx.z, res)
    _write_log(ctx, "fit", _fit_log_config(cfg), outs)
    return EXIT_OK


def cmd_adapt(args) -> int:
    ctx = Context(args)
    z, y_prior = _read_tables(ctx.require("fit/fit.jsonl", "fit"))
    old2 = _read_sups(ctx.require("merge/supervision.jsonl", "merge"))
    sup1 = _read_sups(ctx.require("merge/reference.jsonl", "merge"))
    if args.supervision:
        new2 = _read_sups(ctx.use(args.supervision))
    else:
        _, new2, _ = _merge_views(ctx, args.views)
    rays = ctx.ref_rays()
    old = build_problem(z, sup1, old2, rays.depth_along)
    new = build_problem(z, sup1, new2, rays.depth_along)
    cfg = _fit_config(ctx, args)
    res = adapt(y_prior, old, new, cfg, iters=args.iters)
    sup_out = ctx.m.out("adapt/supervision.jsonl")
    write_jsonl(sup_out, (s.to_dict() for s in new2))
    outs = [sup_out, *_write_fit(ctx, "adapt", z, res)]
    conf = _fit_log_config(cfg)
    conf.update({"iters": args.iters, "views": None if args.supervision else args.views})
    _write_log(ctx, "adapt", conf, outs)
    return EXIT_OK


def cmd_decode(args) -> int:
    ctx = Context(args)
    z, Y = _read_tables(ctx.require(f"{args.source}/fit.jsonl", args.source))
    rays = ctx.ref_rays()
    if len(Y) != len(rays.origins):
        raise ManifestError("fitted tables do not match the reference camera's ray count")
    crossings = decode_table(z, Y)
    pts, flags = crossings_to_points(rays.origins, rays.dirs, crossings)
    out_ply, out_cr = ctx.m.out("decode/points.ply"), ctx.m.out("decode/crossings.jsonl")
    out_ply.parent.mkdir(parents=True, exist_ok=True)
    write_ply(out_ply, pts, flags)
    write_jsonl(out_cr, ({"ray_id": i, "crossings": c.tolist()} for i, c in enumerate(crossings)))
    _write_log(ctx, "decode", {"source": args.source}, [out_ply, out_cr])
    return EXIT_OK


def cmd_eval(args) -> int:
    ctx = Context(args)
    recs = sorted(read_jsonl(ctx.require("decode/crossings.jsonl", "decode")), key=lambda d: d["ray_id"])
    crossings = [np.asarray(d["crossings"], dtype=np.float64) for d in recs]
    scene = ctx.scene()
    rays = ctx.ref_rays()
    gt = cast_rays(scene, rays.origins, rays.dirs, ctx.z_max, ctx.threads)
    pred_pts, _ = crossings_to_points(rays.origins, rays.dirs, crossings)
    gt_pts, _ = crossings_to_points(rays.origins, rays.dirs, gt)
    seed = sub_seed(ctx.seed, "eval")
    srep = scene_metrics(pred_pts, gt_pts, args.t, args.samples, seed)
    try:
        orep = ray_occ_metrics(crossings, gt, args.t).to_dict()
    except ValueError:
        orep = None  # neither side has anything past the first surface
    report = {"manifest_hash": ctx.m.hash, "t": args.t, "samples": args.samples, "seed": ctx.seed,
              "scene": srep.to_dict(), "ray_occ": orep}
    out = ctx.m.out("eval/report.json")
    write_json(out, report)
    _write_log(ctx, "eval", {"t": args.t, "samples": args.samples}, [out])
    print(json.dumps({"scene_f1": srep.f1, "ray_occ_f1": None if orep is None else orep["f1"]}))
    return EXIT_OK


def cmd_degrade(args) -> int:
    ctx = Context(args)
    mesh = ctx.scene().surface_mesh()
    aux = ctx.m.aux_ids
    keep = [aux[i] for i in subsample_views(len(aux), args.level, sub_seed(ctx.seed, "degrade"))]
    views = [ctx.m.reference, *keep]
    occlusion = args.occlusion_test == "on"
    culled, rep = ods_cull(mesh, [ctx.camera(i) for i in views], [ctx.depth(i) for i in views],
                           args.eps_vis, occlusion, n_views_total=len(ctx.m.cameras), retained_ids=views)
    stem = f"degrade/level_{args.level}"
    out_obj, out_json = ctx.m.out(stem + ".obj"), ctx.m.out(stem + ".json")
    out_obj.parent.mkdir(parents=True, exist_ok=True)
    outs = [out_json]
    if culled is not None:
        culled.save_obj(out_obj)
        outs.insert(0, out_obj)
    elif out_obj.exists():
        out_obj.unlink()
    body = rep.to_dict()
    body.update({"level": args.level, "eps_vis": args.eps_vis, "occlusion_test": occlusion,
                 "empty": culled is None})
    write_json(out_json, body)
    _write_log(ctx, f"degrade_{args.level}",
               {"level": args.level, "eps_vis": args.eps_vis, "occlusion_test": occlusion}, outs)
    return EXIT_OK


def cmd_loss_check(args) -> int:
    """Loss landscape of one segment kind (or a band) over a (y, z) grid as CSV."""
    n = args.grid
    if n < 2:
        raise ManifestError("--grid must be >= 2")
    ys = np.linspace(args.y_min, args.y_max, n)
    zs = np.linspace(args.z_min, args.z_max, n)
    Y, Z = np.meshgrid(ys, zs, indexing="ij")
    clamp = ClampSpec(args.d_clamp, True) if args.d_clamp else None
    if args.kind == "sep":
        if not args.half_width > 0:
            raise ManifestError("--half-width must be > 0")
        inside = np.abs(Z - args.s) <= args.half_width
        Y, Z = Y[inside], Z[inside]
        loss, grad = loss_sep(Y, Z, args.s, args.half_width, clamp)
    else:
        if not args.s < args.e:
            raise ManifestError("--s must be < --e")
        loss, grad = segment_loss(KIND_BY_LABELS[tuple(args.kind)], Y, Z, args.s, args.e, clamp)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["y", "z", "loss", "grad"])
        for row in zip(np.ravel(Y).tolist(), np.ravel(Z).tolist(), np.ravel(loss).tolist(),
                       np.ravel(grad).tolist()):
            w.writerow([repr(v) for v in row])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def run_pipeline(manifest, stages=PIPELINE_STAGES, **overrides) -> int:
    """Run stages in dependency order; returns the first non-zero exit code."""
    order = [s for s in PIPELINE_STAGES if s in stages]
    unknown = set(stages) - set(PIPELINE_STAGES)
    if unknown:
        raise ManifestError(f"unknown stages {sorted(unknown)}")
    parser = build_parser()
    for st in order:
        argv = [st, "--manifest", str(manifest)]
        for k, v in overrides.items():
            flag = "--" + k.replace("_", "-")
            if any(a.option_strings and flag in a.option_strings for a in _subparser(parser, st)._actions):
                argv += [flag, str(v)]
        code = _dispatch(parser.parse_args(argv))
        if code:
            return code
    return EXIT_OK


def cmd_run(args) -> int:
    stages = tuple(s.strip() for s in args.stages.split(",") if s.strip())
    over = {k: getattr(args, k) for k in ("threads", "seed", "eps_int", "t_sep", "views", "stage1", "stage2")
            if getattr(args, k, None) is not None}
    return run_pipeline(args.manifest, stages, **over)


# ---------------------------------------------------------------------------
# argument parsing


def _subparser(parser, name):
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices[name]
    raise KeyError(name)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drdfkit", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def stage(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--manifest", required=True, help="project manifest JSON")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default: logical cores)")
        sp.add_argument("--seed", type=int, default=None, help="override the manifest seed")
        sp.set_defaults(fn=fn)
        return sp

    sp = sub.add_parser("synth", help="generate a synthetic scene, cameras and manifest")
    sp.add_argument("--scene", choices=GENERATORS, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="project directory")
    sp.add_argument("--ref-size", type=int, default=64)
    sp.add_argument("--aux-size", type=int, default=64)
    sp.add_argument("--n-aux", type=int, default=12)
    sp.add_argument("--n-boxes", type=int, default=None, help="random-boxes only")
    sp.add_argument("--eps-int", type=float, default=None)
    sp.add_argument("--t-sep", type=float, default=None)
    sp.set_defaults(fn=cmd_synth)

    stage("render", cmd_render, "render a depth map for every camera")
    stage("oracle", cmd_oracle, "exact distance tables along the reference rays")
    sp = stage("events", cmd_events, "per-view free-space segments along the reference rays")
    sp.add_argument("--eps-int", type=float, default=None)
    sp = stage("merge", cmd_merge, "select views and merge their segments per ray")
    sp.add_argument("--views", type=int, default=20)
    sp.add_argument("--eps-int", type=float, default=None)
    sp.add_argument("--t-sep", type=float, default=None)

    def fit_flags(sp):
        sp.add_argument("--stage1", type=int, default=None)
        sp.add_argument("--stage2", type=int, default=None)
        sp.add_argument("--lr", type=float, default=None)
        sp.add_argument("--lambda-ent", type=float, default=None)
        sp.add_argument("--mu-slope", type=float, default=None)
        sp.add_argument("--d-clamp", type=float, default=None, help="clip outputs to [-d, d]")

    fit_flags(stage("fit", cmd_fit, "two-stage tabulated fit"))
    sp = stage("adapt", cmd_adapt, "continue a fit after the supervision changed")
    fit_flags(sp)
    sp.add_argument("--iters", type=int, default=500)
    sp.add_argument("--views", type=int, default=20, help="re-merge the events cache with k views")
    sp.add_argument("--supervision", default=None, help="merged supervision JSONL to adapt to")
    sp.add_argument("--eps-int", type=float, default=None)
    sp.add_argument("--t-sep", type=float, default=None)
    sp = stage("decode", cmd_decode, "zero crossings to a PLY point cloud")
    sp.add_argument("--source", choices=("fit", "adapt"), default="fit")
    sp = stage("eval", cmd_eval, "scene and occluded-ray scores")
    sp.add_argument("--t", type=float, default=0.5)
    sp.add_argument("--samples", type=int, default=10_000)
    sp = stage("degrade", cmd_degrade, "view subsampling and coverage-culled mesh")
    sp.add_argument("--level", type=int, required=True)
    sp.add_argument("--eps-vis", type=float, default=EPS_VIS)
    sp.add_argument("--occlusion-test", choices=("on", "off"), default="on")

    sp = sub.add_parser("loss-check", help="loss landscape over a (y, z) grid as CSV")
    sp.add_argument("--kind", choices=("II", "IO", "OI", "OO", "sep"), required=True)
    sp.add_argument("--s", type=float, default=0.0, help="segment start (band center for sep)")
    sp.add_argument("--e", type=float, default=1.0, help="segment end")
    sp.add_argument("--half-width", type=float, default=0.2, help="band half-width for sep")
    sp.add_argument("--grid", type=int, default=201)
    sp.add_argument("--y-min", type=float, default=-1.0)
    sp.add_argument("--y-max", type=float, default=1.0)
    sp.add_argument("--z-min", type=float, default=0.0)
    sp.add_argument("--z-max", type=float, default=1.0)
    sp.add_argument("--d-clamp", type=float, default=None)
    sp.add_argument("--out", default=None, help="CSV path (default stdout)")
    sp.set_defaults(fn=cmd_loss_check)

    sp = stage("run", cmd_run, "run several stages in dependency order")
    sp.add_argument("--stages", default=",".join(PIPELINE_STAGES))
    sp.add_argument("--views", type=int, default=None)
    sp.add_argument("--eps-int", type=float, default=None)
    sp.add_argument("--t-sep", type=float, default=None)
    sp.add_argument("--stage1", type=int, default=None)
    sp.add_argument("--stage2", type=int, default=None)
    return p


def _dispatch(args) -> int:
    try:
        return args.fn(args)
    except DependencyError as exc:
        log.error("%s", exc)
        return EXIT_MISSING
    except (DivergenceError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (ManifestError, GeometryError, EmptySceneError, ValueError, KeyError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s %(levelname)s %(message)s", stream=sys.stderr)
    return _dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
