"""Time the compiled kernels against the numpy fallback on realistic sizes.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--rays R]
"""
import argparse
import timeit

import numpy as np

from drdfkit import _fallback
from drdfkit.oracle import camera_rays, z_grid
from drdfkit.synth import synth_scene

try:
    from drdfkit import _kernels
except ImportError:  # extension not built
    _kernels = None


def cases(n_rays: int):
    rng = np.random.default_rng(0)
    sc = synth_scene("two-rooms", 0, ref_size=int(np.sqrt(n_rays)))
    o, d, _ = camera_rays(sc.reference)
    tris = sc.scene.surface_mesh().triangles()
    z = z_grid()
    R, N = len(o), len(z)
    kind = rng.integers(0, 6, (R, N)).astype(np.int8)
    a = rng.uniform(0, 8, (R, N))
    b = a + rng.uniform(0.05, 3, (R, N))
    y = rng.normal(0, 1.5, (R, N))
    occ = (rng.random((R, N)) < 0.5).astype(np.uint8)
    zz = np.ascontiguousarray(np.broadcast_to(z, y.shape))

    def objective(mod):
        grad, dsig = np.zeros((R, N)), np.zeros((R, N))
        data, prior, sig = np.zeros(R), np.zeros(R), np.zeros(R)
        return lambda: mod.objective_rows(y, z, kind, a, b, occ, 0.0, 0.01, 0.1, 0.25,
                                          grad, dsig, data, prior, sig, 0, R)

    def step(mod):
        yy, vel = y.copy(), np.zeros((R, N))
        g, ds = rng.normal(size=(R, N)), rng.normal(size=(R, N))
        act = np.ones(R, dtype=np.uint8)
        return lambda: mod.momentum_rows(yy, vel, g, ds, act, 0.01, 0.9, 0.1, 0, R)

    return {
        f"cast_triangles ({R} rays x {len(tris)} tris)": lambda mod: (lambda: mod.cast_triangles(o, d, 8.0, tris)),
        f"segment_loss_grad ({R * N} samples)":
            lambda mod: (lambda: mod.segment_loss_grad(kind.ravel(), y.ravel(), zz.ravel(), a.ravel(), b.ravel(), 0.0)),
        f"objective_rows ({R}x{N})": objective,
        f"momentum_rows ({R}x{N})": step,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--rays", type=int, default=1024)
    args = ap.parse_args(argv)
    mods = {"numpy": _fallback}
    if _kernels is not None:
        mods["cython"] = _kernels
    print(f"{'kernel':48s} " + " ".join(f"{m:>12s}" for m in mods) + "   speedup")
    for name, make in cases(args.rays).items():
        best = {m: min(timeit.repeat(make(mod), number=1, repeat=args.repeat)) for m, mod in mods.items()}
        cols = " ".join(f"{best[m] * 1e3:10.2f}ms" for m in mods)
        speed = f"{best['numpy'] / best['cython']:8.1f}x" if "cython" in best else "       -"
        print(f"{name:48s} {cols} {speed}")


if __name__ == "__main__":
    main()
