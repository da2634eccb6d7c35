"""Acceptance criteria 1 to 9. Each test records one PASS/FAIL line that the
terminal summary prints at the end of the run."""
import math
import time

import numpy as np
import pytest

from analytic import CASES, segments
from conftest import DZ, record_criterion
from drdfkit.cli import PIPELINE_STAGES, main, run_pipeline
from drdfkit.degrade import ods_cull, subsample_views
from drdfkit.geometry import Scene
from drdfkit.kernels import K_NONE, K_SEP, segment_loss_grad
from drdfkit.losses import entropy_perturbation, loss_ent, segment_loss, kind_code
from drdfkit.manifest import Manifest
from drdfkit.merge import merge_segments, supervision_arrays
from drdfkit.metrics import decode_table, decode_values, ray_occ_metrics, sample_mesh, scene_metrics
from drdfkit.oracle import cast_rays, oracle_drdf, z_grid
from drdfkit.pipeline import (PipelineConfig, merge_rays, reference_rays, ref_segments, render_views,
                              run_synthetic, segments_for_views)
from drdfkit.synth import GENERATORS, synth_scene
from test_cli import tree_hashes
from test_losses import ref_loss
from test_merge import nested_pair, seg
from test_metrics import set_gap

Z = z_grid()


# -- 1. oracle zero-loss soundness


def _excluded(sup):
    m = np.zeros(len(Z), bool)
    for s in sup.segments:
        for p in (s.s, s.e, 0.5 * (s.s + s.e)):
            m |= np.abs(Z - p) <= 2 * DZ
    for b in sup.sep:
        for p in (b.lo, b.hi, b.center):
            m |= np.abs(Z - p) <= 2 * DZ
    return m


def test_c1_oracle_zero_loss():
    t0 = time.perf_counter()
    cfg = PipelineConfig()
    n_rays = n_eval = 0
    bad_all, bad_seg = [], []
    for name in GENERATORS:
        sc = synth_scene(name, 0, ref_size=23)
        cams = list(sc.cameras)
        depths = render_views(sc.scene, cams)
        rays = reference_rays(cams[0], depths[0])
        per_view = segments_for_views(rays, Z, cams, depths, range(1, len(cams)))
        sups = merge_rays(ref_segments(rays, cfg.z_max), per_view, cfg)
        kind, a, b = supervision_arrays(sups, Z)
        hits = cast_rays(sc.scene, rays.origins, rays.dirs, cfg.z_max)
        n_rays += len(hits)
        for i, h in enumerate(hits):
            if h.size == 0:
                continue  # no surface on the ray: the distance function is undefined
            n_eval += 1
            m = (kind[i] != K_NONE) & ~_excluded(sups[i])
            loss, _ = segment_loss_grad(kind[i][m], oracle_drdf(h, Z)[m], Z[m], a[i][m], b[i][m], 0.0)
            if loss.sum() >= 1e-6:
                bad_all.append((name, i))
            if loss[kind[i][m] != K_SEP].sum() >= 1e-6:
                bad_seg.append((name, i))
    dt = time.perf_counter() - t0
    ok = not bad_all and dt < 30.0
    record_criterion(1, ok, f"{len(bad_all)}/{n_eval} rays with hits exceed 1e-6 "
                     f"(segment losses alone: {len(bad_seg)}); {n_rays} rays in 5 scenes; {dt:.1f} s")
    assert not bad_seg
    assert dt < 30.0
    assert not bad_all, f"separation bands violate the oracle on {len(bad_all)} rays"


# -- 2. loss formula conformance


def test_c2_loss_formulas():
    ys = np.linspace(-1.0, 1.0, 201)
    zs = np.linspace(0.0, 1.0, 201)
    Y, Zg = np.meshgrid(ys, zs, indexing="ij")
    dev = 0.0
    fd_err = 0.0
    n_fd = 0
    peak = None
    h = 1e-6
    for kind in ("II", "IO", "OI", "OO"):
        k = kind_code(*kind)
        loss, grad = segment_loss(k, Y, Zg, 0.0, 1.0)
        ref = np.vectorize(lambda y, z: ref_loss(kind, y, z, 0.0, 1.0))(Y, Zg)
        dev = max(dev, float(np.abs(loss - ref).max()))
        if kind == "OO":
            peak = float(loss.max())
        up, _ = segment_loss(k, Y + h, Zg, 0.0, 1.0)
        dn, _ = segment_loss(k, Y - h, Zg, 0.0, 1.0)
        right, left = (up - loss) / h, (loss - dn) / h
        smooth = np.abs(right - left) <= 1e-6
        n_fd += int(smooth.sum())
        fd_err = max(fd_err, float(np.abs(0.5 * (right + left) - grad)[smooth].max()))
    ok = dev == 0.0 and peak == 0.5 and fd_err < 1e-4
    record_criterion(2, ok, f"max deviation {dev:g}; OO peak {peak}; max subgradient error {fd_err:.1e} "
                     f"over {n_fd} smooth points")
    assert dev == 0.0
    assert peak == 0.5
    assert fd_err < 1e-4


# -- 3. event-detection exactness


def test_c3_event_exactness():
    worst = 0.0
    bad = []
    for name, make in CASES.items():
        scene, cam, expected = make()
        segs = segments(scene, cam)
        if [s.labels for s in segs] != [lab for lab, _, _ in expected]:
            bad.append(name)
            continue
        for got, (_, s, e) in zip(segs, expected):
            worst = max(worst, abs(got.s - s), abs(got.e - e))
    ok = not bad and worst <= DZ
    record_criterion(3, ok, f"{len(CASES)} analytic scenes; label mismatches {bad or 'none'}; "
                     f"max endpoint error {worst:.4f} m (limit {DZ:.4f})")
    assert not bad
    assert worst <= DZ


# -- 4 and 5. end-to-end reconstruction and sparsity trend


@pytest.fixture(scope="module")
def corridor_levels():
    sc = synth_scene("corridor", 0)
    cfg = PipelineConfig(threads=1)
    t0 = time.perf_counter()
    full = run_synthetic(sc, cfg)
    elapsed = time.perf_counter() - t0
    cams = list(sc.cameras)
    depths = render_views(sc.scene, cams)
    rays = full.rays
    mesh = sc.scene.surface_mesh()
    out = {}
    for level in (0, 1, 2):
        keep = subsample_views(len(sc.auxiliary), level, 0)
        ours = full if level == 0 else run_synthetic(sc, cfg, aux_ids=keep, depths=depths)
        ids = [0] + [i + 1 for i in keep]
        culled, _ = ods_cull(mesh, [cams[i] for i in ids], [depths[i] for i in ids])
        ods_hits = cast_rays(Scene([culled]), rays.origins, rays.dirs, cfg.z_max)
        ods_cross = [decode_values(Z, oracle_drdf(hh, Z)) if hh.size else hh for hh in ods_hits]
        ods = ray_occ_metrics(ods_cross, full.gt_hits)
        out[level] = (ours.scene_report.f1, ours.occ_report.f1, ods.f1)
    return sc, full, elapsed, out


def test_c4_end_to_end(corridor_levels):
    sc, full, elapsed, _ = corridor_levels
    n_rays = len(full.rays.dirs)
    s, o = full.scene_report.f1, full.occ_report.f1
    ok = s >= 0.90 and o >= 0.75 and elapsed < 120.0 and n_rays == 64 * 64 and len(sc.auxiliary) == 12
    record_criterion(4, ok, f"Scene F1 {s:.3f} (>= 0.90), Ray-Occ F1 {o:.3f} (>= 0.75); "
                     f"{n_rays} rays, {len(sc.auxiliary)} aux views; {elapsed:.1f} s single-threaded")
    assert n_rays == 64 * 64 and len(sc.auxiliary) == 12
    assert s >= 0.90
    assert o >= 0.75
    assert elapsed < 120.0


def test_c5_sparsity_trend(corridor_levels):
    *_, lv = corridor_levels
    scene_drop = {k: lv[0][0] - lv[k][0] for k in (1, 2)}
    ours_loss = {k: lv[0][1] - lv[k][1] for k in (1, 2)}
    ods_loss = {k: lv[0][2] - lv[k][2] for k in (1, 2)}
    scene_ok = all(abs(d) <= 0.05 for d in scene_drop.values())
    ods_ok = all(ods_loss[k] > ours_loss[k] for k in (1, 2))
    parts = "; ".join(f"{100 // 2 ** k}% views: Scene F1 -{scene_drop[k]:.3f}, Ray-Occ F1 loss "
                      f"ours {ours_loss[k]:.3f} vs ODS {ods_loss[k]:.3f}" for k in (1, 2))
    record_criterion(5, scene_ok and ods_ok, parts)
    assert scene_ok
    assert ods_ok, "ODS-culled supervision does not lose strictly more Ray-Occ F1 at every level"


# -- 6. entropy surrogate


def test_c6_entropy():
    rng = np.random.default_rng(6)
    min_err = 0.0
    for _ in range(200):
        a = rng.uniform(0.0, 3.0, int(rng.integers(1, 50)))
        min_err = max(min_err, abs(loss_ent(np.concatenate([a, -a]))[0] + math.log(2)))
    pert_err = 0.0
    for _ in range(2000):
        y1 = rng.uniform(-1, 1)
        d1 = rng.uniform(-0.5, 0.5)
        d2 = entropy_perturbation(y1, -y1, d1, tau=1.0)
        base = loss_ent([y1, -y1], tau=1.0)[0]
        pert_err = max(pert_err, abs(loss_ent([y1 + d1, -y1 + d2], tau=1.0)[0] - base))
    ok = min_err <= 1e-9 and pert_err <= 1e-9
    record_criterion(6, ok, f"|loss + ln 2| at symmetric Y {min_err:.1e}; perturbation drift {pert_err:.1e}")
    assert min_err <= 1e-9
    assert pert_err <= 1e-9


# -- 7. merge dominance


def test_c7_merge_dominance():
    rng = np.random.default_rng(7)
    worst = -np.inf
    kept_b = 0
    n = 10_000
    for _ in range(n):
        (sA, eA, lA), (sB, eB, lB) = nested_pair(rng)
        z = rng.uniform(sA, eA, 8)
        y = rng.uniform(-9.0, 9.0, 8)
        la, _ = segment_loss(kind_code(*lA), y, z, sA, eA)
        lb, _ = segment_loss(kind_code(*lB), y, z, sB, eB)
        worst = max(worst, float(np.max(la - lb)))  # exact inequality up to rounding
        out = merge_segments([seg(sB, eB, lB, 0), seg(sA, eA, lA, 1)])
        kept_b += [(k.s, k.e, k.labels) for k in out.segments] == [(sB, eB, lB)]
    ok = worst <= 1e-12 and kept_b == n
    record_criterion(7, ok, f"{n} nested triples; max(loss_dropped - loss_kept) {worst:.1e}; "
                     f"merge kept the outer segment {kept_b}/{n}")
    assert worst <= 1e-12
    assert kept_b == n


# -- 8. determinism


def _cli_run(root, threads):
    assert main(["synth", "--scene", "corridor", "--seed", "0", "--out", str(root),
                 "--ref-size", "24", "--aux-size", "48", "--n-aux", "12"]) == 0
    m = str(root / "manifest.json")
    assert run_pipeline(root / "manifest.json", PIPELINE_STAGES, threads=threads, stage1=100, stage2=200) == 0
    t = str(threads)
    assert main(["adapt", "--manifest", m, "--threads", t, "--iters", "50", "--views", "6"]) == 0
    assert main(["decode", "--manifest", m, "--threads", t, "--source", "adapt"]) == 0
    for level in ("1", "2"):
        assert main(["degrade", "--manifest", m, "--level", level]) == 0
    return tree_hashes(Manifest.load(root / "manifest.json").output_dir)


def test_c8_determinism(tmp_path):
    a = _cli_run(tmp_path / "a", 1)
    b = _cli_run(tmp_path / "b", 1)
    c = _cli_run(tmp_path / "c", 8)
    diff_rerun = sorted(k for k in a if a[k] != b.get(k))
    diff_threads = sorted(k for k in a if a[k] != c.get(k))
    ok = a.keys() == b.keys() == c.keys() and not diff_rerun and not diff_threads
    record_criterion(8, ok, f"{len(a)} artifacts; rerun differences {diff_rerun or 'none'}; "
                     f"threads 1 vs 8 differences {diff_threads or 'none'}")
    assert a.keys() == b.keys() == c.keys()
    assert not diff_rerun
    assert not diff_threads


# -- 9. metric self-consistency


def _random_rays(n, seed):
    """Rays from jittered camera positions in random directions, kept if they hit."""
    rng = np.random.default_rng(seed)
    scenes = [synth_scene(g, 0) for g in GENERATORS]
    out = []
    while len(out) < n:
        sc = scenes[int(rng.integers(len(scenes)))]
        eye = sc.cameras[int(rng.integers(len(sc.cameras)))].center + rng.uniform(-0.2, 0.2, 3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        h = cast_rays(sc.scene, eye[None], d[None], 8.0)[0]
        if h.size:
            out.append(h)
    return out


def test_c9_metric_self_consistency():
    sc = synth_scene("corridor", 0)
    gt = sample_mesh(sc.scene.surface_mesh(), 10_000, 0)
    sm = scene_metrics(gt, gt)
    rays = reference_rays(sc.reference, render_views(sc.scene, [sc.reference])[0])
    hits = cast_rays(sc.scene, rays.origins, rays.dirs, 8.0)
    ro = ray_occ_metrics(hits, hits)
    rand = _random_rays(1000, 9)
    dec = decode_table(Z, np.array([oracle_drdf(h, Z) for h in rand]))
    gaps = np.array([set_gap(c, h) for c, h in zip(dec, rand)])
    same_count = sum(len(c) == len(h) for c, h in zip(dec, rand))
    ok = (sm.acc, sm.cmp, sm.f1) == (1.0, 1.0, 1.0) and ro.f1 == 1.0 and gaps.max() <= 2 * DZ
    record_criterion(9, ok, f"scene self {sm.acc}/{sm.cmp}/{sm.f1}; ray-occ self {ro.f1}; "
                     f"decode of oracle on {len(rand)} random rays: max gap {gaps.max():.4f} m "
                     f"(limit {2 * DZ:.4f}), same hit count on {same_count}")
    assert (sm.acc, sm.cmp, sm.f1) == (1.0, 1.0, 1.0)
    assert ro.f1 == 1.0
    assert gaps.max() <= 2 * DZ
