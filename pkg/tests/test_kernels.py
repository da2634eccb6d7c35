import numpy as np
import pytest

from drdfkit import _fallback, kernels
from drdfkit.synth import synth_scene

cy = pytest.importorskip("drdfkit._kernels")


def _random_supervision(rng, R=40, N=64):
    z = np.linspace(0, 8, N)
    kind = rng.integers(0, 6, (R, N)).astype(np.int8)
    a = rng.uniform(0, 8, (R, N))
    b = a + rng.uniform(0.05, 3, (R, N))
    # SEP samples keep their band center inside reach of z
    y = rng.normal(0, 1.5, (R, N))
    occ = (rng.random((R, N)) < 0.5).astype(np.uint8)
    return z, kind, a, b, y, occ


def test_backend_selection():
    assert kernels.BACKEND in ("cython", "numpy")
    assert kernels.get_backend("numpy") is _fallback
    assert kernels.get_backend("cython") is cy
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@pytest.mark.parametrize("clamp", [0.0, 1.0])
def test_segment_loss_bitwise(clamp):
    rng = np.random.default_rng(1)
    z, kind, a, b, y, _ = _random_supervision(rng)
    zz = np.ascontiguousarray(np.broadcast_to(z, y.shape)).ravel()
    args = (kind.ravel(), y.ravel(), zz, a.ravel(), b.ravel(), clamp)
    l1, g1 = cy.segment_loss_grad(*args)
    l2, g2 = _fallback.segment_loss_grad(*args)
    assert np.array_equal(l1, l2)
    assert np.array_equal(g1, g2)


def test_objective_and_step_agree():
    rng = np.random.default_rng(2)
    z, kind, a, b, y, occ = _random_supervision(rng)
    R, N = y.shape
    outs = []
    for mod in (cy, _fallback):
        grad, dsig = np.zeros((R, N)), np.zeros((R, N))
        data, prior, sig = np.zeros(R), np.zeros(R), np.zeros(R)
        mod.objective_rows(y, z, kind, a, b, occ, 0.0, 0.01, 0.1, 0.25, grad, dsig, data, prior, sig, 0, R)
        yy, vel = y.copy(), np.zeros((R, N))
        act = np.ones(R, dtype=np.uint8)
        act[::3] = 0
        mod.momentum_rows(yy, vel, grad, dsig, act, 0.05, 0.9, 0.3, 0, R)
        outs.append((grad, dsig, data, prior, sig, yy))
    for u, v in zip(*outs):
        assert np.allclose(u, v, rtol=1e-12, atol=1e-12)
    # inactive rows untouched
    assert np.array_equal(outs[0][5][::3], y[::3])


def test_objective_skips_sigmoid_when_disabled():
    rng = np.random.default_rng(3)
    z, kind, a, b, y, occ = _random_supervision(rng, R=5)
    R, N = y.shape
    for mod in (cy, _fallback):
        sig = np.full(R, 7.0)
        mod.objective_rows(y, z, kind, a, b, occ, 0.0, 0.0, 0.1, 0.0, np.zeros((R, N)), np.zeros((R, N)),
                           np.zeros(R), np.zeros(R), sig, 0, R)
        assert np.all(sig == 0.0)


def test_cast_triangles_agree():
    s = synth_scene("corridor", 0, ref_size=16, n_aux=1)
    from drdfkit.oracle import camera_rays
    o, d, _ = camera_rays(s.reference)
    tris = np.ascontiguousarray(s.scene.triangles())
    c1, h1 = cy.cast_triangles(o, d, 8.0, tris, 64)
    c2, h2 = _fallback.cast_triangles(o, d, 8.0, tris, 64)
    assert np.array_equal(c1, c2)
    for i in range(len(o)):
        assert np.allclose(np.sort(h1[i, :c1[i]]), np.sort(h2[i, :c2[i]]), atol=1e-12)


@pytest.mark.parametrize("mod", [cy, _fallback], ids=["cython", "numpy"])
def test_cast_overflow(mod):
    # 70 stacked triangles along one ray
    tris = np.array([[[-1, -1, k * 0.1 + 0.1], [1, -1, k * 0.1 + 0.1], [0, 1, k * 0.1 + 0.1]]
                     for k in range(70)], dtype=np.float64)
    o = np.zeros((1, 3))
    d = np.array([[0.0, 0.0, 1.0]])
    with pytest.raises(OverflowError):
        mod.cast_triangles(o, d, 8.0, tris, 64)


def test_benchmark_script_runs(capsys):
    import runpy
    from pathlib import Path
    bench = runpy.run_path(str(Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"))
    bench["main"](["--rays", "16", "--repeat", "1"])
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("kernel") and len(out) == 5
