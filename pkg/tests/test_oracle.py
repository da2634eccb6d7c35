import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drdfkit.geometry import AABB, Plane, Ray, Scene, rectangle_mesh
from drdfkit.oracle import (EmptyHitsError, camera_rays, cast_ray, cast_rays, dedup_sorted, oracle_drdf,
                            oracle_drdf_table, oracle_urdf, render_depth, z_grid)
from drdfkit.synth import synth_scene

from conftest import dense_cast, facing_camera

hit_lists = st.lists(st.floats(0.05, 7.95), min_size=1, max_size=6, unique=True).map(
    lambda h: np.sort(np.array(h))).filter(lambda h: h.size < 2 or np.diff(h).min() > 1e-3)


def test_z_grid():
    z = z_grid()
    assert z.size == 512 and z[0] == 0.0 and z[-1] == 8.0
    assert z[7] == 7 * 8.0 / 511


def test_cast_examples():
    wall = Scene([Plane([0, 0, 4], [0, 0, 1])])
    assert cast_ray(wall, Ray([0, 0, 0], [0, 0, 1], 8.0)).tolist() == [4.0]
    box = Scene([AABB([-1, -1, 2], [1, 1, 5])])
    assert cast_ray(box, Ray([0, 0, 0], [0, 0, 1], 8.0)).tolist() == [2.0, 5.0]
    both = Scene([AABB([-1, -1, 2], [1, 1, 5]), Plane([0, 0, 4], [0, 0, 1])])
    assert cast_ray(both, Ray([0, 0, 0], [0, 0, 1], 8.0)).tolist() == [2.0, 4.0, 5.0]
    assert cast_ray(Scene([]), Ray([0, 0, 0], [0, 0, 1], 8.0)).size == 0
    # beyond z_max
    assert cast_ray(Scene([Plane([0, 0, 9], [0, 0, 1])]), Ray([0, 0, 0], [0, 0, 1], 8.0)).size == 0


def test_cast_dedups_coplanar_duplicates():
    scene = Scene([Plane([0, 0, 4], [0, 0, 1]), rectangle_mesh([-1, -1, 4], [2, 0, 0], [0, 2, 0])])
    assert cast_ray(scene, Ray([0.1, 0.2, 0], [0, 0, 1], 8.0)).tolist() == [4.0]
    assert dedup_sorted(np.array([1.0, 1.0 + 5e-8, 2.0])).tolist() == [1.0, 2.0]


def test_plane_extent_limits_hits():
    pl = Scene([Plane([0, 0, 4], [0, 0, 1], 0.5)])
    assert cast_ray(pl, Ray([0.2, 0.2, 0], [0, 0, 1], 8.0)).tolist() == [4.0]
    assert cast_ray(pl, Ray([0.8, 0.0, 0], [0, 0, 1], 8.0)).size == 0


@pytest.mark.parametrize("name", ["corridor", "box-room", "two-rooms", "kitchen-island", "random-boxes"])
def test_cast_matches_dense_sampling(name):
    s = synth_scene(name, 3, ref_size=8, n_aux=2)
    o, d, _ = camera_rays(s.reference)
    rng = np.random.default_rng(0)
    idx = rng.choice(len(o), 12, replace=False)
    got = cast_rays(s.scene, o[idx], d[idx], 8.0)
    for k, i in enumerate(idx):
        ref = dense_cast(s.scene, o[i], d[i])
        assert got[k].shape == ref.shape
        assert np.allclose(got[k], ref, atol=1e-6)


def test_render_examples():
    cam = facing_camera(size=33)
    dm = render_depth(Scene([Plane([0, 0, 4], [0, 0, 1])]), cam)
    assert dm.lookup((16, 16)) == pytest.approx(4.0, abs=1e-12)
    assert np.allclose(dm.values, 4.0)
    empty = render_depth(Scene([]), cam)
    assert not empty.valid.any()


def test_render_recast_consistency():
    s = synth_scene("kitchen-island", 1, ref_size=24, n_aux=1)
    cam = s.reference
    dm = render_depth(s.scene, cam)
    o, d, px = camera_rays(cam)
    for i in range(0, len(px), 7):
        hits = cast_ray(s.scene, Ray(o[i], d[i], 8.0))
        stored = dm.lookup(px[i])
        if hits.size == 0:
            assert stored is None
        else:
            assert hits[0] * (d[i] @ cam.forward) == pytest.approx(stored, abs=1e-6)


def test_render_thread_invariance():
    s = synth_scene("corridor", 0, ref_size=32, n_aux=1)
    a = render_depth(s.scene, s.reference, threads=1)
    b = render_depth(s.scene, s.reference, threads=4)
    assert np.array_equal(a.values, b.values)


def test_urdf_drdf_examples():
    assert oracle_urdf([2, 5], 3) == 1.0
    assert oracle_urdf([2, 5], 3.6) == pytest.approx(1.4)
    assert oracle_urdf([2], 2) == 0.0
    assert oracle_drdf([2, 5], 3) == -1.0
    assert oracle_drdf([2, 5], 3.6) == pytest.approx(1.4)
    assert oracle_drdf([2, 5], 3.5) == 1.5
    with pytest.raises(EmptyHitsError):
        oracle_drdf([], 1.0)
    with pytest.raises(EmptyHitsError):
        oracle_urdf([], 1.0)


def test_table_examples(z):
    t = oracle_drdf_table([2, 5], z)
    assert np.all(np.isin(np.round(z + t.d, 9), [2.0, 5.0]))
    t1 = oracle_drdf_table([4.0], z)
    assert np.all(t1.d[z < 4] > 0) and np.all(t1.d[z > 4] < 0)


@given(hit_lists)
def test_critical_property(hits):
    z = z_grid()
    d = oracle_drdf_table(hits, z).d
    target = z + d
    assert np.min(np.abs(target[:, None] - hits[None, :]), axis=1).max() < 1e-9
    assert np.allclose(np.abs(d), oracle_urdf(hits, z), atol=0)


@given(hit_lists)
def test_slope_and_jumps(hits):
    z = z_grid()
    d = oracle_drdf(hits, z)
    mids = (hits[:-1] + hits[1:]) / 2
    for j in range(len(z) - 1):
        a, b = z[j], z[j + 1]
        crosses = np.any((mids > a) & (mids <= b)) or np.any((hits > a) & (hits < b))
        if not crosses:
            assert (d[j + 1] - d[j]) / (b - a) == pytest.approx(-1.0, abs=1e-6)
    # positive jump of size (s_{i+1} - s_i) at each midpoint
    for k, m in enumerate(mids):
        eps = 1e-7
        jump = oracle_drdf(hits, m + eps) - oracle_drdf(hits, m - eps)
        assert jump == pytest.approx(hits[k + 1] - hits[k] - 2 * eps, abs=1e-6)
