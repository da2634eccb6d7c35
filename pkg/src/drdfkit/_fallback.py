"""Pure numpy versions of the compiled kernels (same signatures)."""
from __future__ import annotations

import numpy as np

K_NONE, K_II, K_IO, K_OI, K_OO, K_SEP = 0, 1, 2, 3, 4, 5


def cast_triangles(origins, dirs, z_max, tris, max_hits=64):
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.float64)
    R, T = len(origins), len(tris)
    counts = np.zeros(R, dtype=np.int64)
    hits = np.full((R, max_hits), np.nan)
    if T == 0 or R == 0:
        return counts, hits
    v0 = tris[:, 0]
    e1 = tris[:, 1] - v0
    e2 = tris[:, 2] - v0
    eps = 1e-10
    chunk = max(1, 2_000_000 // T)
    for r0 in range(0, R, chunk):
        o = origins[r0:r0 + chunk, None, :]
        d = dirs[r0:r0 + chunk, None, :]
        p = np.cross(d, e2[None])
        det = np.einsum("rtc,tc->rt", p, e1)
        ok = np.abs(det) >= 1e-15
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            s = o - v0[None]
            u = np.einsum("rtc,rtc->rt", s, p) * inv
            q = np.cross(s, e1[None])
            v = np.einsum("rtc,rtc->rt", np.broadcast_to(d, q.shape), q) * inv
            t = np.einsum("tc,rtc->rt", e2, q) * inv
        ok &= (u >= -eps) & (u <= 1 + eps) & (v >= -eps) & (u + v <= 1 + eps)
        ok &= (t > 1e-9) & (t <= z_max)
        n = ok.sum(axis=1)
        if n.max(initial=0) > max_hits:
            raise OverflowError(f"more than {max_hits} triangle hits on one ray")
        rows, cols = np.nonzero(ok)
        # slot of each hit within its row, in triangle order
        slot = np.arange(len(rows)) - np.repeat(np.cumsum(n) - n, n)
        hits[r0 + rows, slot] = t[rows, cols]
        counts[r0:r0 + chunk] = n
    return counts, hits


def _pick(dl, dr):
    return np.where(dl * dr <= 0, 0.0, dr)


def _min_grad(fa, dla, dra, fb, dlb, drb):
    tie = _pick(np.maximum(dla, dlb), np.minimum(dra, drb))
    return np.where(fa < fb, _pick(dla, dra), np.where(fb < fa, _pick(dlb, drb), tie))


def _clip(x, clamp):
    return np.clip(x, -clamp, clamp) if clamp > 0 else x


def segment_loss_grad(kind, y, z, a, b, clamp):
    kind = np.asarray(kind)
    y, z, a, b = (np.asarray(x, dtype=np.float64) for x in (y, z, a, b))
    loss = np.zeros(y.shape)
    grad = np.zeros(y.shape)
    ls = _clip(a - z, clamp)
    le = _clip(b - z, clamp)
    first = z < (a + b) / 2

    m = kind == K_SEP
    if m.any():
        t = _clip(a[m] - z[m], clamp)
        loss[m] = np.abs(y[m] - t)
        grad[m] = np.sign(y[m] - t)

    m = kind == K_II
    if m.any():
        t = np.where(first[m], ls[m], le[m])
        loss[m] = np.abs(y[m] - t)
        grad[m] = np.sign(y[m] - t)

    m = kind == K_OO
    if m.any():
        h = (ls[m] + le[m]) / 2
        f = le[m] - h - np.abs(y[m] - h)
        pos = f > 0
        loss[m] = np.where(pos, f, 0.0)
        grad[m] = np.where(pos, -np.sign(y[m] - h), 0.0)

    for code, exact_first in ((K_IO, True), (K_OI, False)):
        m = kind == code
        if not m.any():
            continue
        yy, lsm, lem = y[m], ls[m], le[m]
        fm = first[m]
        if exact_first:  # IO: first half exact at l_s; second half min-form
            exact = fm
            tgt = lsm
            fa = np.maximum(0.0, lem - yy)
            fb = np.abs(yy - lsm)
            g2 = _min_grad(fa, np.where(yy <= lem, -1.0, 0.0), np.where(yy < lem, -1.0, 0.0),
                           fb, np.where(yy <= lsm, -1.0, 1.0), np.where(yy >= lsm, 1.0, -1.0))
        else:  # OI: second half exact at l_e; first half min-form
            exact = ~fm
            tgt = lem
            fa = np.maximum(0.0, yy - lsm)
            fb = np.abs(yy - lem)
            g2 = _min_grad(fa, np.where(yy <= lsm, 0.0, 1.0), np.where(yy >= lsm, 1.0, 0.0),
                           fb, np.where(yy <= lem, -1.0, 1.0), np.where(yy >= lem, 1.0, -1.0))
        loss[m] = np.where(exact, np.abs(yy - tgt), np.minimum(fa, fb))
        grad[m] = np.where(exact, np.sign(yy - tgt), g2)
    return loss, grad


def objective_rows(y, z, kind, a, b, occ, clamp, mu, delta, tau,
                   grad, dsig, data_out, prior_out, sig_out, r0, r1):
    sl = slice(r0, r1)
    yy = y[sl]
    zz = np.broadcast_to(z, yy.shape)
    loss, g = segment_loss_grad(kind[sl], yy, zz, a[sl], b[sl], clamp)
    data_out[sl] = loss.sum(axis=1)
    if mu > 0:
        res = np.diff(yy, axis=1) + np.diff(z)[None, :]
        small = np.abs(res) <= delta
        hub = np.where(small, 0.5 * res * res, delta * (np.abs(res) - 0.5 * delta))
        hg = np.where(small, res, delta * np.sign(res))
        g[:, 1:] += mu * hg
        g[:, :-1] -= mu * hg
        prior_out[sl] = mu * hub.sum(axis=1)
    else:
        prior_out[sl] = 0.0
    grad[sl] = g
    if tau > 0:
        m = occ[sl].astype(bool)
        sig = 1.0 / (1.0 + np.exp(-yy / tau))
        sig_out[sl] = np.where(m, sig, 0.0).sum(axis=1)
        dsig[sl] = np.where(m, sig * (1.0 - sig), 0.0)
    else:
        sig_out[sl] = 0.0


def momentum_rows(y, vel, grad, dsig, active, lr, momentum, ent_coef, r0, r1):
    rows = np.arange(r0, r1)
    rows = rows[np.asarray(active[r0:r1], dtype=bool)]
    if len(rows) == 0:
        return
    g = grad[rows]
    if ent_coef != 0:
        g = g + ent_coef * dsig[rows]
    vel[rows] = momentum * vel[rows] - lr * g
    y[rows] = y[rows] + vel[rows]
