"""Decoding fitted tables into surfaces and scoring them."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Mesh


@dataclass(frozen=True)
class DecodedRay:
    ray_id: int
    crossings: np.ndarray


def decode_values(z, y) -> np.ndarray:
    """Depths of downward zero crossings (y_j > 0 >= y_{j+1}), linearly
    interpolated. Upward sign changes are jumps, not surfaces."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    j = np.flatnonzero((y[:-1] > 0) & (y[1:] <= 0))
    return z[j] + y[j] * (z[j + 1] - z[j]) / (y[j] - y[j + 1])


def decode(table) -> DecodedRay:
    return DecodedRay(table.ray_id, decode_values(table.z, table.y))


def decode_table(z, Y) -> list[np.ndarray]:
    """Vectorised decode of a (R, N) value table."""
    z = np.asarray(z, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    r, j = np.nonzero((Y[:, :-1] > 0) & (Y[:, 1:] <= 0))
    y0, y1 = Y[r, j], Y[r, j + 1]
    zs = z[j] + y0 * (z[j + 1] - z[j]) / (y0 - y1)
    out = [[] for _ in range(len(Y))]
    for ri, zi in zip(r.tolist(), zs.tolist()):
        out[ri].append(zi)
    return [np.array(v) for v in out]


def crossings_to_points(origins, dirs, crossings):
    """3-D points and visible flags (1 for each ray's first crossing)."""
    pts, flags = [], []
    for o, d, c in zip(np.asarray(origins), np.asarray(dirs), crossings):
        c = np.asarray(c)
        if c.size:
            pts.append(o + c[:, None] * d)
            f = np.zeros(c.size, dtype=np.uint8)
            f[0] = 1
            flags.append(f)
    if not pts:
        return np.zeros((0, 3)), np.zeros(0, dtype=np.uint8)
    return np.concatenate(pts), np.concatenate(flags)


@dataclass(frozen=True)
class MetricReport:
    acc: float
    cmp: float
    f1: float
    t: float
    n_pred: int
    n_gt: int
    n_skipped: int = 0

    def to_dict(self) -> dict:
        return {"acc": self.acc, "cmp": self.cmp, "f1": self.f1, "t": self.t,
                "n_pred": self.n_pred, "n_gt": self.n_gt, "n_skipped": self.n_skipped}


def f_score(acc: float, cmp: float) -> float:
    return 0.0 if acc + cmp == 0 else 2 * acc * cmp / (acc + cmp)


def sample_mesh(mesh: Mesh, n: int, seed: int) -> np.ndarray:
    """Area-uniform surface samples."""
    rng = np.random.default_rng([seed, 101])
    tris = mesh.triangles()
    area = mesh.areas()
    idx = rng.choice(len(tris), size=n, p=area / area.sum())
    u, v = rng.random(n), rng.random(n)
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    t = tris[idx]
    return t[:, 0] + u[:, None] * (t[:, 1] - t[:, 0]) + v[:, None] * (t[:, 2] - t[:, 0])


def _subsample(points: np.ndarray, n: int, seed: int) -> np.ndarray:
    # the stream depends on the set's size only, so swapping roles is exact
    if len(points) <= n:
        return points
    rng = np.random.default_rng([seed, len(points)])
    return points[np.sort(rng.choice(len(points), n, replace=False))]


def scene_metrics(pred_points, gt, t: float = 0.5, n_samples: int = 10_000, seed: int = 0) -> MetricReport:
    """Accuracy (pred near gt), completeness (gt near pred) and F1 at threshold t.

    ``gt`` is a Mesh (sampled by area) or a point array (subsampled)."""
    if not t > 0:
        raise ValueError("t must be > 0")
    gt_pts = sample_mesh(gt, n_samples, seed) if isinstance(gt, Mesh) else _subsample(
        np.asarray(gt, dtype=np.float64).reshape(-1, 3), n_samples, seed)
    pred = _subsample(np.asarray(pred_points, dtype=np.float64).reshape(-1, 3), n_samples, seed)
    if len(gt_pts) == 0:
        raise ValueError("ground truth has no points")
    if len(pred) == 0:
        return MetricReport(0.0, 0.0, 0.0, t, 0, len(gt_pts))
    d_pred, _ = cKDTree(gt_pts).query(pred)
    d_gt, _ = cKDTree(pred).query(gt_pts)
    acc = float(np.mean(d_pred <= t))
    cmp = float(np.mean(d_gt <= t))
    return MetricReport(acc, cmp, f_score(acc, cmp), t, len(pred), len(gt_pts))


def _within(a: np.ndarray, b: np.ndarray, t: float) -> float:
    if a.size == 0:
        return 0.0
    if b.size == 0:
        return 0.0
    return float(np.mean(np.min(np.abs(a[:, None] - b[None, :]), axis=1) <= t))


def ray_occ_metrics(decoded, gt, t: float = 0.5) -> MetricReport:
    """Per-ray scores on everything past the first intersection, averaged
    over rays where either side has such points. The reported f1 is the
    mean of per-ray F1 values."""
    if len(decoded) != len(gt):
        raise ValueError("decoded and ground-truth ray lists differ in length")
    accs, cmps, f1s = [], [], []
    skipped = n_pred = n_gt = 0
    for dec, g in zip(decoded, gt):
        p = np.sort(np.asarray(getattr(dec, "crossings", dec), dtype=np.float64))[1:]
        q = np.sort(np.asarray(g, dtype=np.float64))[1:]
        if p.size == 0 and q.size == 0:
            skipped += 1
            continue
        n_pred += p.size
        n_gt += q.size
        a, c = _within(p, q, t), _within(q, p, t)
        accs.append(a)
        cmps.append(c)
        f1s.append(f_score(a, c))
    if not f1s:
        raise ValueError("no ray has occluded intersections in either list")
    return MetricReport(float(np.mean(accs)), float(np.mean(cmps)), float(np.mean(f1s)), t,
                        n_pred, n_gt, skipped)


# ---------------------------------------------------------------------------
# PLY point clouds

_PLY_DTYPE = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("flag", "u1")])


def write_ply(path, points, flags) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rec = np.empty(len(pts), dtype=_PLY_DTYPE)
    rec["x"], rec["y"], rec["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
    rec["flag"] = np.asarray(flags, dtype=np.uint8)
    header = ("ply\nformat binary_little_endian 1.0\n"
              f"element vertex {len(pts)}\n"
              "property float x\nproperty float y\nproperty float z\n"
              "property uchar flag\nend_header\n")
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(rec.tobytes())


def read_ply(path):
    raw = open(path, "rb").read()
    end = raw.index(b"end_header\n") + len(b"end_header\n")
    n = None
    for line in raw[:end].decode("ascii").splitlines():
        if line.startswith("element vertex"):
            n = int(line.split()[-1])
    if n is None:
        raise ValueError(f"{path}: missing vertex count")
    rec = np.frombuffer(raw[end:], dtype=_PLY_DTYPE, count=n)
    pts = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    return pts, rec["flag"].copy()


def mean_abs_error(y, y_ref, mask) -> float:
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        return math.nan
    return float(np.mean(np.abs(np.asarray(y)[m] - np.asarray(y_ref)[m])))
