"""Combine per-view segments of one ray into non-overlapping supervision.

Order of work for one ray:

1. Conflicts. An intersection event lying inside another segment's free
   interior by more than ``tol`` is contradictory. The side backed by more
   distinct views wins; the losing segments are discarded whole. Ties drop
   both sides.
2. Union. Overlapping segments are joined, taking the outermost events; among
   events within ``tol`` of the outermost one, an intersection beats an
   occlusion. Segments that only touch are joined when both touching ends
   are occlusions. A segment contained in another is recorded as dropped.
3. Separation bands of half-width ``t_sep`` around every surviving
   intersection, cut back to the free gap around it and split halfway
   between neighbouring intersections.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .events import EPS_INT, RaySegment
from .geometry import Camera, DepthMap
from .kernels import K_NONE, K_SEP
from .losses import kind_code

T_SEP = 0.2
DZ = 8.0 / 511
VIEW_STRIDE = 8


def conflict_tol(eps_int: float = EPS_INT, dz: float = DZ) -> float:
    return eps_int + dz


@dataclass(frozen=True)
class SepSegment:
    center: float
    half_width: float
    lo: float
    hi: float

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be > 0")
        if not self.lo <= self.center <= self.hi:
            raise ValueError("band must contain its center")

    def value(self, z):
        """Linear continuation of the known distance across the surface."""
        return self.center - np.asarray(z)

    def to_dict(self) -> dict:
        return {"center": self.center, "half_width": self.half_width, "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: dict) -> "SepSegment":
        c, w = float(d["center"]), float(d["half_width"])
        return cls(c, w, float(d.get("lo", c - w)), float(d.get("hi", c + w)))


@dataclass(frozen=True)
class RaySupervision:
    ray_id: int
    segments: tuple = ()
    sep: tuple = ()
    dropped: tuple = field(default=(), compare=False)  # (dropped, kept) pairs
    n_conflicts: int = field(default=0, compare=False)

    def to_dict(self) -> dict:
        return {"ray_id": self.ray_id,
                "segments": [s.to_dict(support=True) for s in self.segments],
                "sep": [b.to_dict() for b in self.sep]}

    @classmethod
    def from_dict(cls, d: dict) -> "RaySupervision":
        return cls(int(d["ray_id"]), tuple(RaySegment.from_dict(s) for s in d["segments"]),
                   tuple(SepSegment.from_dict(b) for b in d.get("sep", [])))


# ---------------------------------------------------------------------------
# view selection


def occlusion_scores(ref_cam: Camera, ref_depth: DepthMap, candidates, eps_int: float = EPS_INT,
                     stride: int = VIEW_STRIDE) -> np.ndarray:
    """Fraction of each candidate's subsampled depth points hidden from the reference."""
    scores = []
    for cam, dm in candidates:
        intr = cam.intrinsics
        vs, us = np.mgrid[0:intr.height:stride, 0:intr.width:stride]
        D = dm.values[vs, us]
        ok = dm.valid[vs, us]
        if not ok.any():
            scores.append(0.0)
            continue
        u, v, D = us[ok].astype(float), vs[ok].astype(float), D[ok]
        pc = np.stack([(u - intr.cx) / intr.fx * D, (v - intr.cy) / intr.fy * D, D], axis=1)
        pw = cam.cam_to_world_points(pc)
        pix, zr = ref_cam.project_many(pw)
        dref = ref_depth.lookup_many(pix)
        occ = np.isfinite(dref) & (zr > dref + eps_int)
        scores.append(float(occ.sum()) / len(D))
    return np.array(scores)


def select_views(ref_cam: Camera, ref_depth: DepthMap, candidates, k: int = 20,
                 eps_int: float = EPS_INT, stride: int = VIEW_STRIDE) -> list[int]:
    """Indices of the top-k candidates by occluded-in-reference fraction."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = occlusion_scores(ref_cam, ref_depth, candidates, eps_int, stride)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[:k]


# ---------------------------------------------------------------------------
# merging


def _views(seg: RaySegment) -> frozenset:
    return seg.views if seg.views else frozenset([id(seg)])


def _i_events(seg: RaySegment):
    out = []
    if seg.start == "I":
        out.append(seg.s)
    if seg.end == "I":
        out.append(seg.e)
    return out


def _find_conflict(segs, tol):
    best = None
    for a in segs:
        for p in _i_events(a):
            for b in segs:
                if b is a:
                    continue
                if b.s + tol < p < b.e - tol and (best is None or p < best):
                    best = p
    return best


def _resolve_conflicts(segs, tol):
    segs = list(segs)
    n = 0
    while True:
        p = _find_conflict(segs, tol)
        if p is None:
            return segs, n
        n += 1
        asserting = [s for s in segs if any(abs(q - p) <= tol for q in _i_events(s))]
        freeing = [s for s in segs if s.s + tol < p < s.e - tol]
        i_views = frozenset().union(*(_views(s) for s in asserting))
        f_views = frozenset().union(*(_views(s) for s in freeing))
        if len(f_views) > len(i_views):
            lose = asserting
        elif len(i_views) > len(f_views):
            lose = freeing
        else:
            lose = asserting + freeing
        lose_ids = {id(s) for s in lose}
        segs = [s for s in segs if id(s) not in lose_ids]


def _pick_end(cands, tol, outer):
    """Outermost event; intersections within tol of it take precedence."""
    pos = [c[0] for c in cands]
    ext = min(pos) if outer == "min" else max(pos)
    near = [c for c in cands if abs(c[0] - ext) <= tol]
    inters = [c for c in near if c[1] == "I"]
    if inters:
        return (min(inters) if outer == "min" else max(inters))
    return (ext, "O")


def _join(a: RaySegment, b: RaySegment, tol: float) -> RaySegment:
    s, sl = _pick_end([(a.s, a.start), (b.s, b.start)], tol, "min")
    e, el = _pick_end([(a.e, a.end), (b.e, b.end)], tol, "max")
    views = a.views | b.views
    support = len(views) if views else a.support + b.support
    return RaySegment(s, e, sl, el, support, views)


def _union(segs, tol):
    segs = sorted(segs, key=lambda s: (s.s, s.e, s.start, s.end))
    out: list[RaySegment] = []
    dropped = []
    for seg in segs:
        if not out:
            out.append(seg)
            continue
        cur = out[-1]
        if seg.s >= cur.e:
            if seg.s == cur.e and cur.end == "O" and seg.start == "O":
                out[-1] = _join(cur, seg, 0.0)
            else:
                out.append(seg)
            continue
        if seg.e <= cur.e and seg.s >= cur.s:
            dropped.append((seg, cur))
        elif cur.s >= seg.s and cur.e <= seg.e:
            dropped.append((cur, seg))
        if seg.s > cur.e - tol and seg.e > cur.e + tol and (cur.end == "I" or seg.start == "I"):
            # small overlap at a surface: keep the surface, trim the other side
            if cur.end == "I" and seg.start == "I":
                m = 0.5 * (cur.e + seg.s)
                a = RaySegment(cur.s, m, cur.start, "I", cur.support, cur.views) if m > cur.s else None
                b = RaySegment(m, seg.e, "I", seg.end, seg.support, seg.views)
            elif cur.end == "I":
                a, b = cur, RaySegment(cur.e, seg.e, "O", seg.end, seg.support, seg.views)
            else:
                a = RaySegment(cur.s, seg.s, cur.start, "O", cur.support, cur.views) if seg.s > cur.s else None
                b = seg
            out.pop()
            if a is not None:
                out.append(a)
            out.append(b)
            continue
        out[-1] = _join(cur, seg, tol)
    return out, dropped


def _sep_bands(segs, t_sep, z_max):
    centers = sorted({p for s in segs for p in _i_events(s)})
    bands = []
    for i, c in enumerate(centers):
        if any(s.s < c < s.e for s in segs):
            continue
        lo = max([c - t_sep] + [s.e for s in segs if s.e <= c])
        hi = min([c + t_sep] + [s.s for s in segs if s.s >= c])
        if i > 0:
            lo = max(lo, 0.5 * (centers[i - 1] + c))
        if i + 1 < len(centers):
            hi = min(hi, 0.5 * (c + centers[i + 1]))
        if z_max is not None:
            lo, hi = max(lo, 0.0), min(hi, z_max)
        if hi > lo and lo <= c <= hi:
            bands.append(SepSegment(c, t_sep, lo, hi))
    return tuple(bands)


def merge_segments(segments, ray_id: int = 0, t_sep: float = T_SEP, tol: float | None = None,
                   z_max: float | None = 8.0, max_rounds: int = 8) -> RaySupervision:
    """Merge all views' segments for one ray."""
    tol = conflict_tol() if tol is None else tol
    segs = list(segments)
    n_conf = 0
    dropped = []
    for _ in range(max_rounds):
        segs, n = _resolve_conflicts(segs, tol)
        n_conf += n
        segs, d = _union(segs, tol)
        dropped += d
        if _find_conflict(segs, tol) is None:
            break
    return RaySupervision(ray_id, tuple(segs), _sep_bands(segs, t_sep, z_max), tuple(dropped), n_conf)


# ---------------------------------------------------------------------------
# per-sample assignment


def supervision_arrays(sups, z, n_rays: int | None = None):
    """Per-sample (kind, a, b) tables: kind code, segment start (or band
    center) and segment end. Each sample gets at most one segment or band."""
    z = np.asarray(z, dtype=np.float64)
    n_rays = len(sups) if n_rays is None else n_rays
    kind = np.zeros((n_rays, len(z)), dtype=np.int8)
    a = np.zeros((n_rays, len(z)))
    b = np.zeros((n_rays, len(z)))
    for sup in sups:
        r = sup.ray_id
        for seg in sup.segments:
            m = (z >= seg.s) & (z <= seg.e)
            kind[r, m] = kind_code(seg.start, seg.end)
            a[r, m] = seg.s
            b[r, m] = seg.e
        for band in sup.sep:
            m = (z >= band.lo) & (z <= band.hi) & (kind[r] == K_NONE)
            kind[r, m] = K_SEP
            a[r, m] = band.center
    return kind, a, b


@dataclass(frozen=True)
class SampleSet:
    visible: list
    occluded: list
    short_visible: bool
    short_occluded: bool


def sample_supervision(sups, z, ref_depth_along, n_vis: int, n_occ: int, seed: int) -> SampleSet:
    """Draw supervised training points (ray_id, z, applicable segment or band).

    Points before the reference first hit are visible, the rest occluded;
    each class is resampled uniformly with replacement to the requested
    count. A class without candidates comes back empty and flagged."""
    if n_vis < 0 or n_occ < 0:
        raise ValueError("counts must be >= 0")
    z = np.asarray(z, dtype=np.float64)
    vis, occ = [], []
    for sup in sorted(sups, key=lambda s: s.ray_id):
        kind, _, _ = supervision_arrays([replace(sup, ray_id=0)], z, 1)
        d = ref_depth_along[sup.ray_id]
        for j in np.flatnonzero(kind[0]):
            zj = float(z[j])
            if kind[0, j] == K_SEP:
                app = next(bd for bd in sup.sep if bd.lo <= zj <= bd.hi)
            else:
                app = next(sg for sg in sup.segments if sg.s <= zj <= sg.e)
            (vis if np.isfinite(d) and zj < d else occ).append((sup.ray_id, zj, app))
    rng = np.random.default_rng(seed)
    pv = [vis[i] for i in rng.integers(0, len(vis), n_vis)] if vis else []
    po = [occ[i] for i in rng.integers(0, len(occ), n_occ)] if occ else []
    return SampleSet(pv, po, len(pv) < n_vis, len(po) < n_occ)
