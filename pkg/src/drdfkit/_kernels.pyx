# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: ray/triangle casting and the per-sample segment
objective used by the tabulated fit. Semantics mirror ``_fallback.py``."""

from libc.math cimport fabs, exp
import numpy as np

cdef enum:
    K_NONE = 0
    K_II = 1
    K_IO = 2
    K_OI = 3
    K_OO = 4
    K_SEP = 5


def cast_triangles(const double[:, ::1] origins, const double[:, ::1] dirs, double z_max,
                   const double[:, :, ::1] tris, int max_hits=64):
    """All ray parameters t in (0, z_max] where each ray meets a triangle.

    Returns (counts (R,), hits (R, max_hits)); hits are unsorted."""
    cdef Py_ssize_t R = origins.shape[0], T = tris.shape[0]
    counts_arr = np.zeros(R, dtype=np.int64)
    hits_arr = np.full((R, max_hits), np.nan)
    cdef long long[::1] counts = counts_arr
    cdef double[:, ::1] hits = hits_arr
    cdef double[:, ::1] e1 = np.empty((T, 3))
    cdef double[:, ::1] e2 = np.empty((T, 3))
    cdef Py_ssize_t r, k, c
    cdef double px, py, pz, det, inv, sx, sy, sz, u, v, t, qx, qy, qz, dx, dy, dz
    cdef double eps = 1e-10
    cdef int overflow = 0
    for k in range(T):
        for c in range(3):
            e1[k, c] = tris[k, 1, c] - tris[k, 0, c]
            e2[k, c] = tris[k, 2, c] - tris[k, 0, c]
    with nogil:
        for r in range(R):
            dx = dirs[r, 0]; dy = dirs[r, 1]; dz = dirs[r, 2]
            for k in range(T):
                px = dy * e2[k, 2] - dz * e2[k, 1]
                py = dz * e2[k, 0] - dx * e2[k, 2]
                pz = dx * e2[k, 1] - dy * e2[k, 0]
                det = e1[k, 0] * px + e1[k, 1] * py + e1[k, 2] * pz
                if fabs(det) < 1e-15:
                    continue
                inv = 1.0 / det
                sx = origins[r, 0] - tris[k, 0, 0]
                sy = origins[r, 1] - tris[k, 0, 1]
                sz = origins[r, 2] - tris[k, 0, 2]
                u = (sx * px + sy * py + sz * pz) * inv
                if u < -eps or u > 1.0 + eps:
                    continue
                qx = sy * e1[k, 2] - sz * e1[k, 1]
                qy = sz * e1[k, 0] - sx * e1[k, 2]
                qz = sx * e1[k, 1] - sy * e1[k, 0]
                v = (dx * qx + dy * qy + dz * qz) * inv
                if v < -eps or u + v > 1.0 + eps:
                    continue
                t = (e2[k, 0] * qx + e2[k, 1] * qy + e2[k, 2] * qz) * inv
                if t > 1e-9 and t <= z_max:
                    if counts[r] >= max_hits:
                        overflow = 1
                        continue
                    hits[r, counts[r]] = t
                    counts[r] += 1
    if overflow:
        raise OverflowError(f"more than {max_hits} triangle hits on one ray")
    return counts_arr, hits_arr


cdef inline double _clip(double x, double bound) noexcept nogil:
    if bound <= 0:
        return x
    if x > bound:
        return bound
    if x < -bound:
        return -bound
    return x


cdef inline double _sgn(double x) noexcept nogil:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


cdef inline double _pick(double dl, double dr) noexcept nogil:
    # zero when 0 lies in the (Clarke) subdifferential, else right derivative
    if dl * dr <= 0:
        return 0.0
    return dr


cdef inline double _min_grad(double fa, double dla, double dra,
                             double fb, double dlb, double drb) noexcept nogil:
    if fa < fb:
        return _pick(dla, dra)
    if fb < fa:
        return _pick(dlb, drb)
    return _pick(dla if dla > dlb else dlb, dra if dra < drb else drb)


cdef inline double _sample_loss(int kind, double y, double z, double a, double b,
                                double clamp, double *g) noexcept nogil:
    cdef double ls, le, h, t, fa, fb, mid
    if kind == K_NONE:
        g[0] = 0.0
        return 0.0
    if kind == K_SEP:
        t = _clip(a - z, clamp)
        g[0] = _sgn(y - t)
        return fabs(y - t)
    ls = _clip(a - z, clamp)
    le = _clip(b - z, clamp)
    mid = (a + b) / 2
    if kind == K_II:
        t = ls if z < mid else le
        g[0] = _sgn(y - t)
        return fabs(y - t)
    if kind == K_OO:
        h = (ls + le) / 2
        fa = le - h - fabs(y - h)
        if fa > 0:
            g[0] = -_sgn(y - h)
            return fa
        g[0] = 0.0
        return 0.0
    if kind == K_IO:
        if z < mid:
            g[0] = _sgn(y - ls)
            return fabs(y - ls)
        fa = le - y
        if fa < 0:
            fa = 0.0
        fb = fabs(y - ls)
        g[0] = _min_grad(fa, -1.0 if y <= le else 0.0, -1.0 if y < le else 0.0,
                         fb, -1.0 if y <= ls else 1.0, 1.0 if y >= ls else -1.0)
        return fa if fa < fb else fb
    if kind == K_OI:
        if z >= mid:
            g[0] = _sgn(y - le)
            return fabs(y - le)
        fa = y - ls
        if fa < 0:
            fa = 0.0
        fb = fabs(y - le)
        g[0] = _min_grad(fa, 0.0 if y <= ls else 1.0, 1.0 if y >= ls else 0.0,
                         fb, -1.0 if y <= le else 1.0, 1.0 if y >= le else -1.0)
        return fa if fa < fb else fb
    g[0] = 0.0
    return 0.0


def segment_loss_grad(const signed char[::1] kind, const double[::1] y, const double[::1] z,
                      const double[::1] a, const double[::1] b, double clamp):
    """Elementwise loss and subgradient for flat arrays."""
    cdef Py_ssize_t n = y.shape[0], i
    loss_arr = np.empty(n)
    grad_arr = np.empty(n)
    cdef double[::1] loss = loss_arr
    cdef double[::1] grad = grad_arr
    cdef double g
    with nogil:
        for i in range(n):
            loss[i] = _sample_loss(kind[i], y[i], z[i], a[i], b[i], clamp, &g)
            grad[i] = g
    return loss_arr, grad_arr


def objective_rows(const double[:, ::1] y, const double[::1] z, const signed char[:, ::1] kind,
                   const double[:, ::1] a, const double[:, ::1] b, const unsigned char[:, ::1] occ,
                   double clamp, double mu, double delta, double tau,
                   double[:, ::1] grad, double[:, ::1] dsig, double[::1] data_out,
                   double[::1] prior_out, double[::1] sig_out, Py_ssize_t r0, Py_ssize_t r1):
    """Rows r0..r1: data loss, slope prior and sigmoid sums, per row.

    ``grad`` receives data + prior gradient. With ``tau > 0`` the occluded
    samples also get sigma(y/tau) summed into ``sig_out`` and
    sigma * (1 - sigma) stored in ``dsig`` (zero elsewhere)."""
    cdef Py_ssize_t N = y.shape[1], r, j
    cdef double g, acc, pacc, sacc, res, hg, s
    with nogil:
        for r in range(r0, r1):
            acc = 0.0
            pacc = 0.0
            for j in range(N):
                acc += _sample_loss(kind[r, j], y[r, j], z[j], a[r, j], b[r, j], clamp, &g)
                grad[r, j] = g
                if mu > 0 and j > 0:
                    res = y[r, j] - y[r, j - 1] + (z[j] - z[j - 1])
                    if fabs(res) <= delta:
                        pacc += 0.5 * res * res
                        hg = res
                    else:
                        pacc += delta * (fabs(res) - 0.5 * delta)
                        hg = delta * _sgn(res)
                    grad[r, j] += mu * hg
                    grad[r, j - 1] -= mu * hg
            sacc = 0.0
            if tau > 0:
                for j in range(N):
                    if occ[r, j]:
                        s = 1.0 / (1.0 + exp(-y[r, j] / tau))
                        sacc += s
                        dsig[r, j] = s * (1.0 - s)
                    else:
                        dsig[r, j] = 0.0
            data_out[r] = acc
            prior_out[r] = mu * pacc
            sig_out[r] = sacc


def momentum_rows(double[:, ::1] y, double[:, ::1] vel, const double[:, ::1] grad,
                  const double[:, ::1] dsig, const unsigned char[::1] active,
                  double lr, double momentum, double ent_coef, Py_ssize_t r0, Py_ssize_t r1):
    """Heavy-ball step on rows r0..r1 along grad + ent_coef * dsig.
    Inactive rows are left untouched."""
    cdef Py_ssize_t N = y.shape[1], r, j
    cdef double g
    with nogil:
        for r in range(r0, r1):
            if not active[r]:
                continue
            for j in range(N):
                g = grad[r, j]
                if ent_coef != 0:
                    g = g + ent_coef * dsig[r, j]
                vel[r, j] = momentum * vel[r, j] - lr * g
                y[r, j] = y[r, j] + vel[r, j]
