"""Free-space segments of reference rays observed by auxiliary depth views.

Each sample ``x_j = o + z_j * d`` of a reference ray is projected into an
auxiliary view and compared with that view's depth. The residual
``r_j = depth(pi(x_j)) - z_cam(x_j)`` classifies the sample; maximal runs of
visible samples become segments whose endpoints are labelled ``I`` (the ray
meets a surface the view sees) or ``O`` (visibility starts or stops for any
other reason: frustum edge, occlusion jump, missing data).

Depth at a projected point comes from the pixel quad around it. When the
quad sits in a 2x2 block of quads whose 3x3 corner points are coplanar, the
exact depth of that plane along the view ray is used, so residuals and
intersection positions are exact for polyhedral scenes. Four coplanar
corners alone are not enough: two pixel rows straddling a depth jump are
always coplanar. Quads spanning a crease or a depth jump give no residual
(missing) unless the sample is clearly in front of or behind all corners.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .geometry import Camera, DepthMap

EPS_INT = 0.02
MIN_RUN = 2
PLANAR_TOL = 1e-6


class Status(IntEnum):
    OUT_OF_FRUSTUM = 0
    MISSING = 1
    VISIBLE = 2
    BOUNDARY = 3
    OCCLUDED = 4


@dataclass(frozen=True)
class RaySegment:
    s: float
    e: float
    start: str
    end: str
    support: int = 1
    views: frozenset = field(default_factory=frozenset, compare=False)

    def __post_init__(self):
        if not self.s < self.e:
            raise ValueError(f"segment needs s < e, got [{self.s}, {self.e}]")
        if self.start not in "IO" or self.end not in "IO" or len(self.start + self.end) != 2:
            raise ValueError("event labels must be 'I' or 'O'")
        if self.support < 1:
            raise ValueError("support must be >= 1")

    @property
    def labels(self) -> str:
        return self.start + self.end

    def to_dict(self, support: bool = False) -> dict:
        d = {"s": self.s, "e": self.e, "start": self.start, "end": self.end}
        if support:
            d["support"] = self.support
        return d

    @classmethod
    def from_dict(cls, d: dict, view=None) -> "RaySegment":
        views = frozenset() if view is None else frozenset([view])
        return cls(float(d["s"]), float(d["e"]), d["start"], d["end"], int(d.get("support", 1)), views)


@dataclass(frozen=True, eq=False)
class AuxView:
    """A posed depth map with per-quad local planes (world frame)."""

    camera: Camera
    depth: DepthMap
    quad_normal: np.ndarray  # (H-1, W-1, 3)
    quad_offset: np.ndarray  # (H-1, W-1); plane is n . X = offset
    quad_planar: np.ndarray  # (H-1, W-1) bool
    quad_dmin: np.ndarray
    quad_dmax: np.ndarray


def prepare_view(camera: Camera, depth: DepthMap) -> AuxView:
    intr = camera.intrinsics
    if (depth.width, depth.height) != (intr.width, intr.height):
        raise ValueError("depth map size does not match camera intrinsics")
    D = np.asarray(depth.values, dtype=np.float64)
    valid = depth.valid
    vs, us = np.mgrid[0:intr.height, 0:intr.width].astype(np.float64)
    P = np.stack([(us - intr.cx) / intr.fx * D, (vs - intr.cy) / intr.fy * D, D], axis=-1)
    P = camera.cam_to_world_points(P.reshape(-1, 3)).reshape(intr.height, intr.width, 3)
    p00, p10, p01, p11 = P[:-1, :-1], P[:-1, 1:], P[1:, :-1], P[1:, 1:]
    n = np.cross(p11 - p00, p01 - p10)
    norm = np.linalg.norm(n, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        n = n / norm[..., None]
    offs = np.stack([np.einsum("hwc,hwc->hw", n, p) for p in (p00, p10, p01, p11)])
    off = offs.mean(axis=0)
    dev = np.abs(offs - off).max(axis=0)
    corners = np.stack([D[:-1, :-1], D[:-1, 1:], D[1:, :-1], D[1:, 1:]])
    cvalid = valid[:-1, :-1] & valid[:-1, 1:] & valid[1:, :-1] & valid[1:, 1:]
    dmax = np.where(cvalid, corners.max(axis=0), np.nan)
    dmin = np.where(cvalid, corners.min(axis=0), np.nan)
    tol = PLANAR_TOL * (1.0 + np.nan_to_num(dmax))
    planar = cvalid & (norm > 0) & (dev <= tol)
    return AuxView(camera, depth, n, off, planar & _in_planar_block(P, n, off, planar, tol), dmin, dmax)


def _in_planar_block(P, n, off, planar, tol):
    """Quads covered by a 2x2 block of quads whose 3x3 corners share one plane.

    Four corners on two parallel pixel rows are coplanar even across a depth
    jump, so a lone planar quad may be a phantom surface bridging two
    objects. A real surface continues into a neighbouring block."""
    Hq, Wq = planar.shape
    ok = np.zeros_like(planar)
    if Hq < 2 or Wq < 2:
        return ok
    base = planar[:-1, :-1] & planar[1:, :-1] & planar[:-1, 1:] & planar[1:, 1:]
    nb, ob, tb = n[:-1, :-1], off[:-1, :-1], tol[:-1, :-1]
    block = base.copy()
    for dy in range(3):
        for dx in range(3):
            pts = P[dy:dy + Hq - 1, dx:dx + Wq - 1]
            with np.errstate(invalid="ignore"):
                block &= np.abs(np.einsum("hwc,hwc->hw", nb, pts) - ob) <= tb
    ok[:-1, :-1] |= block
    ok[1:, :-1] |= block
    ok[:-1, 1:] |= block
    ok[1:, 1:] |= block
    return ok


@dataclass(frozen=True)
class Sweep:
    """Per-sample classification of a batch of rays against one view."""

    z: np.ndarray
    status: np.ndarray  # (R, N) int8 of Status
    residual: np.ndarray  # (R, N), NaN where undefined
    quad: np.ndarray  # (R, N) flat quad index when the residual is plane-exact, else -1


def sweep_rays(origins, dirs, z, view: AuxView, eps_int: float = EPS_INT) -> Sweep:
    z = np.asarray(z, dtype=np.float64)
    if np.any(np.diff(z) <= 0):
        raise ValueError("z samples must be strictly increasing")
    o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    cam, intr = view.camera, view.camera.intrinsics
    W, H = intr.width, intr.height
    X = o[:, None, :] + z[None, :, None] * d[:, None, :]
    Xc = cam.world_to_cam(X.reshape(-1, 3))
    zc = Xc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * Xc[:, 0] / zc + intr.cx
        v = intr.fy * Xc[:, 1] / zc + intr.cy
    inb = (zc > 0) & (u >= 0) & (u <= W - 1) & (v >= 0) & (v <= H - 1)
    ui = np.where(inb, u, 0.0)
    vi = np.where(inb, v, 0.0)
    # nearest pixel decides missing data; the containing quad gives the depth
    nx = np.clip(np.floor(ui + 0.5).astype(np.int64), 0, W - 1)
    ny = np.clip(np.floor(vi + 0.5).astype(np.int64), 0, H - 1)
    have = inb & view.depth.valid[ny, nx]
    qx = np.clip(np.floor(ui).astype(np.int64), 0, W - 2)
    qy = np.clip(np.floor(vi).astype(np.int64), 0, H - 2)
    q = qy * (W - 1) + qx
    planar = have & view.quad_planar.ravel()[q]
    nrm = view.quad_normal.reshape(-1, 3)[q]
    Xw = X.reshape(-1, 3)
    C = cam.center
    # depth of the quad plane along the view ray through x: x' = C + t (x - C)
    with np.errstate(divide="ignore", invalid="ignore"):
        den = np.einsum("ij,ij->i", nrm, Xw - C)
        t = (view.quad_offset.ravel()[q] - nrm @ C) / den
    r_plane = zc * (t - 1.0)
    planar &= np.isfinite(r_plane) & (t > 0)
    dmin = view.quad_dmin.ravel()[q]
    dmax = view.quad_dmax.ravel()[q]
    spread = dmax - dmin
    clear_front = have & ~planar & (zc < dmin - spread - eps_int)
    clear_back = have & ~planar & (zc > dmax + spread + eps_int)
    r = np.full(zc.shape, np.nan)
    r[planar] = r_plane[planar]
    r[clear_front] = (dmin - zc)[clear_front]
    r[clear_back] = (dmax - zc)[clear_back]

    status = np.full(zc.shape, Status.MISSING, dtype=np.int8)
    status[~inb] = Status.OUT_OF_FRUSTUM
    known = np.isfinite(r)
    status[known & (r > eps_int)] = Status.VISIBLE
    status[known & (r < -eps_int)] = Status.OCCLUDED
    status[known & (np.abs(r) <= eps_int)] = Status.BOUNDARY
    shape = (len(o), len(z))
    return Sweep(z, status.reshape(shape), r.reshape(shape), np.where(planar, q, -1).reshape(shape))


def sweep_visibility(ray, aux_cam: Camera, aux_depth: DepthMap, z_samples, eps_int: float = EPS_INT):
    """Single-ray sweep: (status, residual) arrays."""
    sw = sweep_rays(ray.origin[None], ray.dir[None], z_samples, prepare_view(aux_cam, aux_depth), eps_int)
    return sw.status[0], sw.residual[0]


def _solve_plane(view: AuxView, q: int, o: np.ndarray, d: np.ndarray) -> float:
    n = view.quad_normal.reshape(-1, 3)[q]
    den = float(n @ d)
    if den == 0.0:
        return np.nan
    return (float(view.quad_offset.ravel()[q]) - float(n @ o)) / den


def _same_plane(view: AuxView, qa: int, qb: int) -> bool:
    if qa < 0 or qb < 0:
        return False
    if qa == qb:
        return True
    na, nb = view.quad_normal.reshape(-1, 3)[qa], view.quad_normal.reshape(-1, 3)[qb]
    oa, ob = view.quad_offset.ravel()[qa], view.quad_offset.ravel()[qb]
    return bool(np.abs(na - nb).max() <= 1e-6 and abs(oa - ob) <= PLANAR_TOL * (1.0 + abs(oa)))


def _crossing(st, r, quad, z, m, rising, view, o, d):
    """Surface position between samples m and m+1 where r changes sign.

    Returns None unless the change is smooth: one of the two samples is a
    boundary sample or both lie on the same local plane."""
    a, b = m, m + 1
    smooth = st[a] == Status.BOUNDARY or st[b] == Status.BOUNDARY or _same_plane(view, quad[a], quad[b])
    if not smooth:
        return None
    lo, hi = z[a], z[b]
    best = a if abs(r[a]) <= abs(r[b]) else b
    for k in (best, b if best == a else a):
        if quad[k] >= 0 and view is not None:
            zs = _solve_plane(view, int(quad[k]), o, d)
            if lo - 1e-9 <= zs <= hi + 1e-9:
                return float(min(max(zs, lo), hi))
    ra, rb = r[a], r[b]
    if not (np.isfinite(ra) and np.isfinite(rb)) or ra == rb:
        return None
    return float(lo + (hi - lo) * ra / (ra - rb))


def _end_event(st, r, quad, z, i1, view, o, d):
    """Label and position of the end of a visible run ending at sample i1."""
    N = len(z)
    k = i1 + 1
    while k < N and st[k] == Status.BOUNDARY and r[k] > 0:
        k += 1
    # k is the first sample past the run with r <= 0 or a non-boundary status
    if k < N and np.isfinite(r[k]) and r[k] <= 0 and st[k] in (Status.BOUNDARY, Status.OCCLUDED):
        zs = _crossing(st, r, quad, z, k - 1, False, view, o, d)
        if zs is not None and zs > z[i1] - 1e-12:
            return "I", max(zs, float(z[i1]))
    return "O", float(z[i1])


def _start_event(st, r, quad, z, i0, view, o, d):
    k = i0 - 1
    while k >= 0 and st[k] == Status.BOUNDARY and r[k] > 0:
        k -= 1
    if k >= 0 and np.isfinite(r[k]) and r[k] <= 0 and st[k] in (Status.BOUNDARY, Status.OCCLUDED):
        zs = _crossing(st, r, quad, z, k, True, view, o, d)
        if zs is not None and zs < z[i0] + 1e-12:
            return "I", min(zs, float(z[i0]))
    return "O", float(z[i0])


def extract_segments(status, residual, z, quad=None, view: AuxView | None = None,
                     origin=None, direction=None, min_run: int = MIN_RUN, view_id=None) -> list[RaySegment]:
    """Segments from one ray's sweep. ``quad``/``view``/``origin``/``direction``
    enable exact plane-based positions for intersection events; without them
    intersection positions come from linear interpolation of the residual."""
    st = np.asarray(status)
    r = np.asarray(residual, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if quad is None:
        quad = np.full(len(z), -1, dtype=np.int64)
    vis = st == Status.VISIBLE
    if not vis.any():
        return []
    edges = np.diff(np.concatenate([[0], vis.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    views = frozenset() if view_id is None else frozenset([view_id])
    out = []
    for i0, i1 in zip(starts, ends):
        if i1 - i0 + 1 < min_run:
            continue
        sl, s = _start_event(st, r, quad, z, i0, view, origin, direction)
        el, e = _end_event(st, r, quad, z, i1, view, origin, direction)
        if e > s:
            out.append(RaySegment(s, e, sl, el, 1, views))
    return out


def view_segments(origins, dirs, z, view: AuxView, eps_int: float = EPS_INT, view_id=None,
                  min_run: int = MIN_RUN) -> list[list[RaySegment]]:
    """Segments for a batch of rays against one view."""
    o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    sw = sweep_rays(o, d, z, view, eps_int)
    any_vis = (sw.status == Status.VISIBLE).any(axis=1)
    out = []
    for i in range(len(o)):
        if not any_vis[i]:
            out.append([])
            continue
        out.append(extract_segments(sw.status[i], sw.residual[i], z, sw.quad[i], view, o[i], d[i],
                                    min_run, view_id))
    return out


def reference_view_segments(ray, ref_depth_along, view_id=-1) -> list[RaySegment]:
    """The reference view's own free space: [0, d] ending at its first hit.

    ``ref_depth_along`` is distance along the ray (see ``along_ray_depth``).
    A depth beyond the ray's end gives an unlabelled [0, z_max] stretch."""
    if ref_depth_along is None or not np.isfinite(ref_depth_along) or ref_depth_along <= 0:
        return []
    views = frozenset([view_id])
    if ref_depth_along > ray.z_max:
        return [RaySegment(0.0, float(ray.z_max), "O", "O", 1, views)]
    return [RaySegment(0.0, float(ref_depth_along), "O", "I", 1, views)]


def along_ray_depth(planar_depth, dirs, forward):
    """Convert camera-frame z depth into distance along unit ray directions."""
    return np.asarray(planar_depth, dtype=np.float64) / (np.asarray(dirs) @ np.asarray(forward))
