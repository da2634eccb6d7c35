"""Shared fixtures and an independent ray-casting reference."""
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from drdfkit.geometry import AABB, Camera, Intrinsics, Mesh, Plane, Scene
from drdfkit.oracle import Z_MAX, N_SAMPLES, z_grid

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DZ = Z_MAX / (N_SAMPLES - 1)


@pytest.fixture
def z():
    return z_grid()


def facing_camera(size=33, fov=60.0, eye=(0.0, 0.0, 0.0), target=(0.0, 0.0, 1.0)):
    return Camera.look_at(Intrinsics.from_fov(size, size, fov), np.asarray(eye, float), np.asarray(target, float))


def _tri_hits_dense(tri, o, d, z_max, step):
    """Sign changes of the triangle's plane distance along dense samples,
    refined by bisection and kept if the crossing lies in the triangle."""
    a, b, c = tri
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n)
    ts = np.arange(0.0, z_max + step, step)
    f = (o[None, :] + ts[:, None] * d[None, :] - a) @ n
    out = []
    for k in np.flatnonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0):
        lo, hi = ts[k], ts[k + 1]
        flo = f[k]
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            fm = (o + mid * d - a) @ n
            if np.sign(fm) == np.sign(flo):
                lo, flo = mid, fm
            else:
                hi = mid
        t = 0.5 * (lo + hi)
        p = o + t * d
        # barycentric inside test
        v0, v1, v2 = b - a, c - a, p - a
        d00, d01, d11 = v0 @ v0, v0 @ v1, v1 @ v1
        d20, d21 = v2 @ v0, v2 @ v1
        den = d00 * d11 - d01 * d01
        v = (d11 * d20 - d01 * d21) / den
        w = (d00 * d21 - d01 * d20) / den
        if v >= -1e-9 and w >= -1e-9 and v + w <= 1 + 1e-9 and 0 < t <= z_max:
            out.append(t)
    return out


def _box_hits_dense(box, o, d, z_max, step):
    """Inside/outside transitions of a box along dense samples, bisected."""
    def inside(t):
        p = o + t * d
        return bool(np.all(p >= box.min) & np.all(p <= box.max))

    ts = np.arange(0.0, z_max + step, step)
    ins = [inside(t) for t in ts]
    out = []
    for k in range(len(ts) - 1):
        if ins[k] != ins[k + 1]:
            lo, hi = ts[k], ts[k + 1]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if inside(mid) == ins[k]:
                    lo = mid
                else:
                    hi = mid
            out.append(0.5 * (lo + hi))
    return out


def dense_cast(scene: Scene, o, d, z_max=Z_MAX, step=1e-2):
    """Reference intersections by dense sampling plus bisection."""
    o, d = np.asarray(o, float), np.asarray(d, float)
    hits = []
    for p in scene.primitives:
        if isinstance(p, AABB):
            hits += _box_hits_dense(p, o, d, z_max, step)
        elif isinstance(p, Mesh):
            # prefilter triangles by a bounding-sphere test along the segment
            for tri in p.triangles():
                c = tri.mean(axis=0)
                r = np.linalg.norm(tri - c, axis=1).max()
                t = np.clip((c - o) @ d, 0, z_max)
                if np.linalg.norm(o + t * d - c) <= r + step:
                    hits += _tri_hits_dense(tri, o, d, z_max, step)
        elif isinstance(p, Plane):
            tris = Scene([p]).surface_mesh().triangles()
            for tri in tris:
                hits += _tri_hits_dense(tri, o, d, z_max, step)
    hits = np.sort(np.array(hits))
    if hits.size:
        keep = np.concatenate([[True], np.diff(hits) > 1e-6])
        hits = hits[keep]
    return hits


# -- acceptance summary: one PASS/FAIL line per criterion

ACCEPTANCE: dict = {}


def record_criterion(num: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[num] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
