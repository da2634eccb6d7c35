"""Segment merging, separation bands, view selection and sampling."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import facing_camera
from drdfkit.events import RaySegment
from drdfkit.geometry import DepthMap, Plane, Scene
from drdfkit.kernels import K_II, K_NONE, K_OI, K_SEP
from drdfkit.losses import kind_code, segment_loss
from drdfkit.merge import (RaySupervision, SepSegment, conflict_tol, merge_segments, sample_supervision,
                           select_views, supervision_arrays)
from drdfkit.oracle import render_depth, z_grid

Z = z_grid()
TOL = conflict_tol()


def seg(s, e, labels, view, support=1):
    return RaySegment(float(s), float(e), labels[0], labels[1], support, frozenset([view]))


def nested_pair(rng):
    """A kept segment B and a contained segment A whose intersection events
    coincide with intersection events of B (the only nesting merge allows)."""
    sB, eB = np.sort(rng.uniform(0.0, 8.0, 2))
    if eB - sB < 1e-3:
        eB = sB + 1e-3
    lB = "".join(rng.choice(["I", "O"], 2))
    sA, eA = np.sort(rng.uniform(sB, eB, 2))
    if rng.random() < 0.3:
        sA = sB
    if rng.random() < 0.3:
        eA = eB
    if eA - sA < 1e-4:
        sA, eA = sB, eB
    start = rng.choice(["I", "O"]) if (sA == sB and lB[0] == "I") else "O"
    end = rng.choice(["I", "O"]) if (eA == eB and lB[1] == "I") else "O"
    return (sA, eA, start + end), (sB, eB, lB)


def losses_at(pair, y, z):
    (sA, eA, lA), (sB, eB, lB) = pair
    la, _ = segment_loss(kind_code(*lA), y, z, sA, eA)
    lb, _ = segment_loss(kind_code(*lB), y, z, sB, eB)
    return la, lb


@given(st.integers(0, 2**32 - 1))
def test_dominance_of_dropped_segments(seed):
    rng = np.random.default_rng(seed)
    pair = nested_pair(rng)
    (sA, eA, _), _ = pair
    z = rng.uniform(sA, eA, 64)
    y = rng.uniform(-9.0, 9.0, 64)
    la, lb = losses_at(pair, y, z)
    assert np.all(la <= lb + 1e-12)


@given(st.integers(0, 2**32 - 1))
def test_merge_keeps_the_dominating_segment(seed):
    rng = np.random.default_rng(seed)
    (sA, eA, lA), (sB, eB, lB) = nested_pair(rng)
    if (sA, eA, lA) == (sB, eB, lB):
        return
    out = merge_segments([seg(sB, eB, lB, 0), seg(sA, eA, lA, 1)])
    assert len(out.segments) == 1
    k = out.segments[0]
    assert (k.s, k.e, k.labels) == (sB, eB, lB)
    assert k.support == 2
    assert out.dropped


# -- examples


def test_oo_inside_ii_dropped():
    out = merge_segments([seg(1, 4, "II", 0), seg(2, 3, "OO", 1)])
    assert [(s.s, s.e, s.labels) for s in out.segments] == [(1.0, 4.0, "II")]
    assert out.dropped[0][0].labels == "OO"


def test_identical_segments_add_support():
    out = merge_segments([seg(1, 3, "OI", 0), seg(1, 3, "OI", 1)])
    assert len(out.segments) == 1
    assert out.segments[0].support == 2
    assert out.segments[0].labels == "OI"


def test_same_view_does_not_add_support():
    out = merge_segments([seg(1, 2, "OO", 0), seg(1.5, 3, "OO", 0)])
    assert out.segments[0].support == 1


def test_minority_intersection_discarded():
    views = [seg(2, 3, "OO", v) for v in (1, 2, 3)]
    bad = seg(0.5, 2.5, "OI", 4)
    out = merge_segments(views + [bad])
    assert out.n_conflicts == 1
    assert [(s.s, s.e, s.labels, s.support) for s in out.segments] == [(2.0, 3.0, "OO", 3)]


def test_majority_intersection_wins():
    frees = [seg(2, 3, "OO", 1)]
    claims = [seg(0.5, 2.5, "OI", v) for v in (2, 3)]
    out = merge_segments(frees + claims)
    assert [(s.s, s.e, s.labels, s.support) for s in out.segments] == [(0.5, 2.5, "OI", 2)]


def test_conflict_tie_drops_both():
    out = merge_segments([seg(2, 3, "OO", 1), seg(0.5, 2.5, "OI", 2)])
    assert out.segments == ()


def test_event_within_tolerance_is_not_a_conflict():
    out = merge_segments([seg(0.0, 2.0, "OI", 0), seg(2.0 - 0.5 * TOL, 4.0, "IO", 1)])
    assert out.n_conflicts == 0
    assert [s.labels for s in out.segments] == ["OI", "IO"]
    assert out.segments[0].e == pytest.approx(out.segments[1].s)


def test_touching_occlusions_join():
    out = merge_segments([seg(0, 2, "OO", 0), seg(2, 3, "OI", 1)])
    assert [(s.s, s.e, s.labels) for s in out.segments] == [(0.0, 3.0, "OI")]


def test_sep_band_around_end():
    out = merge_segments([seg(0, 3, "OI", 0)], t_sep=0.2)
    assert out.sep == (SepSegment(3.0, 0.2, 3.0, 3.2),)


def test_sep_bands_split_between_surfaces():
    out = merge_segments([seg(0, 3, "OI", 0), seg(3.3, 5, "IO", 1)], t_sep=0.2)
    bands = {(b.center, round(b.lo, 9), round(b.hi, 9)) for b in out.sep}
    assert bands == {(3.0, 3.0, 3.15), (3.3, 3.15, 3.3)}


def test_sep_band_clipped_to_range():
    out = merge_segments([seg(7.9, 8.0, "IO", 0)], t_sep=0.2, z_max=8.0)
    assert out.sep[0].lo == pytest.approx(7.7)
    out = merge_segments([seg(0.1, 2.0, "IO", 0)], t_sep=0.2)
    assert out.sep[0].lo == 0.0


def test_sep_segment_validation():
    with pytest.raises(ValueError):
        SepSegment(1.0, 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        SepSegment(1.0, 0.2, 1.1, 1.2)
    np.testing.assert_allclose(SepSegment(1.0, 0.2, 0.8, 1.2).value([0.9, 1.1]), [0.1, -0.1])


def test_supervision_round_trip():
    out = merge_segments([seg(0, 3, "OI", 0), seg(3.3, 5, "IO", 1)], ray_id=7)
    back = RaySupervision.from_dict(out.to_dict())
    assert back == out


# -- invariants on random inputs


@st.composite
def view_segments(draw):
    n_views = draw(st.integers(1, 5))
    out = []
    for v in range(n_views):
        pts = sorted(draw(st.lists(st.floats(0.0, 8.0), min_size=2, max_size=6, unique=True)))
        for a, b in zip(pts[::2], pts[1::2]):
            if b - a > 1e-3:
                out.append(seg(a, b, draw(st.sampled_from(["II", "IO", "OI", "OO"])), v))
    return out


@given(view_segments())
def test_merged_output_sorted_disjoint(segs):
    out = merge_segments(segs)
    for a, b in zip(out.segments, out.segments[1:]):
        assert a.e <= b.s
    for b in out.sep:
        assert 0.0 <= b.lo <= b.center <= b.hi <= 8.0
        for s in out.segments:
            assert b.hi <= s.s or b.lo >= s.e


@given(view_segments())
def test_merge_idempotent(segs):
    once = merge_segments(segs)
    twice = merge_segments(once.segments)
    assert twice.segments == once.segments
    assert twice.sep == once.sep


# -- per-sample tables and sampling


def test_supervision_arrays():
    sup = merge_segments([seg(0, 3, "OI", 0), seg(4, 6, "II", 1)], ray_id=1)
    kind, a, b = supervision_arrays([sup], Z, 2)
    assert np.all(kind[0] == K_NONE)
    j = np.searchsorted(Z, 1.0)
    assert kind[1, j] == K_OI and a[1, j] == 0.0 and b[1, j] == 3.0
    j = np.searchsorted(Z, 5.0)
    assert kind[1, j] == K_II
    j = np.searchsorted(Z, 3.1)
    assert kind[1, j] == K_SEP and a[1, j] == 3.0
    assert kind[1, np.searchsorted(Z, 7.5)] == K_NONE


def _bundle():
    sups = [merge_segments([seg(0, 3, "OI", 0), seg(4, 6, "OO", 1)], ray_id=i) for i in range(4)]
    return sups, np.full(4, 3.0)


def test_sample_counts_and_classes():
    sups, depth = _bundle()
    s = sample_supervision(sups, Z, depth, 100, 100, seed=3)
    assert len(s.visible) == 100 and len(s.occluded) == 100
    assert not s.short_visible and not s.short_occluded
    assert all(zz < 3.0 for _, zz, _ in s.visible)
    assert all(zz >= 3.0 for _, zz, _ in s.occluded)
    for _, zz, app in s.visible + s.occluded:
        if isinstance(app, SepSegment):
            assert app.lo <= zz <= app.hi
        else:
            assert app.s <= zz <= app.e


def test_sample_deterministic():
    sups, depth = _bundle()
    assert sample_supervision(sups, Z, depth, 50, 50, 9) == sample_supervision(sups, Z, depth, 50, 50, 9)
    assert sample_supervision(sups, Z, depth, 50, 50, 9) != sample_supervision(sups, Z, depth, 50, 50, 10)


def test_sample_without_occluded_supervision():
    sups = [merge_segments([seg(0, 3, "OO", 0)], ray_id=0)]
    s = sample_supervision(sups, Z, np.array([3.5]), 10, 10, 0)
    assert len(s.visible) == 10
    assert s.occluded == [] and s.short_occluded


def test_sample_rejects_negative():
    with pytest.raises(ValueError):
        sample_supervision([], Z, np.zeros(0), -1, 0, 0)


# -- view selection


def _two_walls():
    # a near panel hides part of a far wall from the reference camera
    return Scene([Plane([0, 0, 2.0], [0, 0, -1.0], extent=0.6), Plane([0, 0, 6.0], [0, 0, -1.0])])


def test_select_views_examples():
    scene = _two_walls()
    ref = facing_camera(fov=90.0)
    dref = render_depth(scene, ref)
    same = (ref, dref)
    behind_cam = facing_camera(fov=90.0, eye=(0.0, 0.0, 3.0), target=(0.0, 0.0, 6.0))
    behind = (behind_cam, render_depth(scene, behind_cam))
    from drdfkit.merge import occlusion_scores
    sc = occlusion_scores(ref, dref, [same, behind])
    assert sc[0] == 0.0
    assert sc[1] > 0.0
    assert select_views(ref, dref, [same, behind], k=1) == [1]
    assert select_views(ref, dref, [same, behind], k=5) == [1, 0]
    with pytest.raises(ValueError):
        select_views(ref, dref, [same], k=0)


def test_select_views_empty_candidate():
    ref = facing_camera()
    dref = render_depth(_two_walls(), ref)
    empty = DepthMap(np.zeros((33, 33)))
    assert select_views(ref, dref, [(ref, empty)], k=3) == [0]
