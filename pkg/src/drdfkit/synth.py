"""Seeded synthetic scenes with a reference camera and auxiliary cameras.

World frame: +y is up, floors sit at y = 0. Walls and partitions are
zero-thickness rectangles tessellated at about 0.5 m, so every surface a
camera sees is also a surface other cameras can see from the other side.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import AABB, Camera, Intrinsics, Mesh, Scene, rectangle_mesh

GENERATORS = ("corridor", "box-room", "two-rooms", "kitchen-island", "random-boxes")


class EmptySceneError(ValueError):
    pass


@dataclass(frozen=True)
class SynthScene:
    name: str
    scene: Scene
    cameras: tuple  # cameras[0] is the reference view

    @property
    def reference(self) -> Camera:
        return self.cameras[0]

    @property
    def auxiliary(self) -> tuple:
        return self.cameras[1:]


def _rect(x0, y0, z0, eu, ev) -> Mesh:
    return rectangle_mesh([x0, y0, z0], eu, ev)


def box_shell(lo, hi, open_faces=()) -> list[Mesh]:
    """Inside faces of an axis-aligned room ``lo``..``hi`` as rectangles."""
    (x0, y0, z0), (x1, y1, z1) = lo, hi
    dx, dy, dz = x1 - x0, y1 - y0, z1 - z0
    faces = {
        "floor": _rect(x0, y0, z0, [dx, 0, 0], [0, 0, dz]),
        "ceiling": _rect(x0, y1, z0, [dx, 0, 0], [0, 0, dz]),
        "left": _rect(x0, y0, z0, [0, dy, 0], [0, 0, dz]),
        "right": _rect(x1, y0, z0, [0, dy, 0], [0, 0, dz]),
        "back": _rect(x0, y0, z0, [dx, 0, 0], [0, dy, 0]),
        "front": _rect(x0, y0, z1, [dx, 0, 0], [0, dy, 0]),
    }
    return [m for k, m in faces.items() if k not in open_faces]


def _cam(intr, eye, target) -> Camera:
    return Camera.look_at(intr, np.asarray(eye, float), np.asarray(target, float))


def _jitter(rng, scale, n=3):
    return rng.uniform(-scale, scale, n)


def corridor(seed: int = 0, ref_size: int = 64, aux_size: int = 64, n_aux: int = 12) -> SynthScene:
    """Closed corridor 3 m wide, 2.5 m high, with two partial partitions.

    The reference camera looks down the corridor; the partitions hide parts
    of the end wall, floor and side walls, which auxiliary cameras placed
    further down the corridor see from behind."""
    rng = np.random.default_rng([seed, 11])
    parts = box_shell((-1.5, 0.0, -1.0), (1.5, 2.5, 7.5))
    parts.append(_rect(-1.5, 0.0, 3.0, [1.3, 0, 0], [0, 2.0, 0]))  # left partition
    parts.append(_rect(0.3, 0.0, 5.0, [1.2, 0, 0], [0, 2.2, 0]))  # right partition
    scene = Scene(parts)
    ref_intr = Intrinsics.from_fov(ref_size, ref_size, 70.0)
    aux_intr = Intrinsics.from_fov(aux_size, aux_size, 90.0)
    ref = _cam(ref_intr, [0.0, 1.4, 0.0], [0.0, 1.1, 7.5])
    poses = [
        ([-0.9, 1.2, 4.2], [-0.6, 0.6, 1.0]),   # between partitions, looking back
        ([0.8, 1.3, 6.8], [-0.2, 0.5, 3.5]),    # behind right partition, looking back
        ([-1.0, 1.6, 6.9], [0.8, 0.6, 4.0]),
        ([0.9, 1.0, 3.6], [-0.9, 0.8, 7.4]),    # looking forward from mid corridor
        ([-0.8, 1.8, 4.0], [0.9, 0.4, 7.4]),
        ([0.0, 2.0, 3.8], [0.0, 0.0, 7.2]),
        ([1.0, 1.5, 1.0], [-1.2, 0.5, 4.5]),    # near the reference, off to the side
        ([-1.1, 1.3, 0.5], [1.2, 0.8, 6.5]),
        ([0.6, 2.1, 7.1], [-0.8, 0.2, 3.2]),
        ([-0.3, 0.6, 6.2], [0.3, 1.6, 2.0]),
        ([1.1, 0.5, 4.4], [-1.0, 1.8, 6.6]),
        ([-1.1, 2.0, 2.4], [0.6, 0.3, 5.6]),
    ]
    aux = []
    for k in range(n_aux):
        eye, tgt = poses[k % len(poses)]
        aux.append(_cam(aux_intr, np.add(eye, _jitter(rng, 0.05)), np.add(tgt, _jitter(rng, 0.1))))
    return SynthScene("corridor", scene, (ref, *aux))


def _ring(rng, intr, center, radius, heights, n, look_at, jitter=0.1):
    cams = []
    for k in range(n):
        ang = 2 * np.pi * k / n + rng.uniform(-0.2, 0.2)
        eye = np.array([center[0] + radius * np.cos(ang), rng.uniform(*heights),
                        center[2] + radius * np.sin(ang)])
        cams.append(_cam(intr, eye, np.asarray(look_at) + _jitter(rng, jitter)))
    return cams


def box_room(seed: int = 0, ref_size: int = 64, aux_size: int = 64, n_aux: int = 12) -> SynthScene:
    """Room 5 x 2.6 x 6 m with a freestanding screen and a low box."""
    rng = np.random.default_rng([seed, 12])
    parts = box_shell((-2.5, 0.0, -1.0), (2.5, 2.6, 5.0))
    w = rng.uniform(1.2, 1.8)
    x0 = rng.uniform(-1.2, 0.0)
    parts.append(_rect(x0, 0.0, 2.0, [w, 0, 0], [0, 1.6, 0]))  # screen
    box = AABB(np.array([0.6, 0.0, 3.0]), np.array([1.4, rng.uniform(0.5, 0.9), 3.8]))
    scene = Scene([*parts, box])
    ref = _cam(Intrinsics.from_fov(ref_size, ref_size, 70.0), [0.0, 1.5, -0.5], [0.0, 0.8, 4.5])
    aux = _ring(rng, Intrinsics.from_fov(aux_size, aux_size, 90.0), (0.0, 0, 2.5), 1.7, (0.8, 2.2),
                n_aux, (0.0, 0.6, 2.5), 0.4)
    return SynthScene("box-room", scene, (ref, *aux))


def two_rooms(seed: int = 0, ref_size: int = 64, aux_size: int = 64, n_aux: int = 12) -> SynthScene:
    """Two rooms joined by a doorway in the dividing wall at z = 3."""
    rng = np.random.default_rng([seed, 13])
    parts = box_shell((-2.0, 0.0, -1.0), (2.0, 2.5, 7.0))
    door_lo = rng.uniform(-0.8, 0.0)
    door_hi = door_lo + 1.0
    parts.append(_rect(-2.0, 0.0, 3.0, [door_lo + 2.0, 0, 0], [0, 2.5, 0]))
    parts.append(_rect(door_hi, 0.0, 3.0, [2.0 - door_hi, 0, 0], [0, 2.5, 0]))
    parts.append(_rect(door_lo, 2.0, 3.0, [door_hi - door_lo, 0, 0], [0, 0.5, 0]))
    scene = Scene(parts)
    aux_intr = Intrinsics.from_fov(aux_size, aux_size, 90.0)
    ref = _cam(Intrinsics.from_fov(ref_size, ref_size, 70.0), [0.3, 1.4, -0.5], [door_lo + 0.5, 1.0, 6.5])
    n_far = n_aux // 2
    aux = _ring(rng, aux_intr, (0.0, 0, 5.0), 1.2, (0.9, 2.0), n_far, (0.0, 0.8, 4.5), 0.6)
    aux += _ring(rng, aux_intr, (0.0, 0, 1.0), 1.2, (0.9, 2.0), n_aux - n_far, (0.0, 1.0, 3.5), 0.6)
    return SynthScene("two-rooms", scene, (ref, *aux))


def kitchen_island(seed: int = 0, ref_size: int = 64, aux_size: int = 64, n_aux: int = 12) -> SynthScene:
    """Room with a counter-height island; the reference camera looks over it
    so the floor just behind the island is hidden from it."""
    rng = np.random.default_rng([seed, 14])
    parts = box_shell((-3.0, 0.0, -1.0), (3.0, 2.7, 6.0))
    h = rng.uniform(0.85, 1.0)
    zf, zb = 2.0, 2.0 + rng.uniform(0.8, 1.1)
    xl, xr = -1.2, 1.2
    # island as five visible faces (the bottom face touches the floor)
    parts += [
        _rect(xl, h, zf, [xr - xl, 0, 0], [0, 0, zb - zf]),
        _rect(xl, 0.0, zf, [xr - xl, 0, 0], [0, h, 0]),
        _rect(xl, 0.0, zb, [xr - xl, 0, 0], [0, h, 0]),
        _rect(xl, 0.0, zf, [0, h, 0], [0, 0, zb - zf]),
        _rect(xr, 0.0, zf, [0, h, 0], [0, 0, zb - zf]),
    ]
    scene = Scene(parts)
    ref = _cam(Intrinsics.from_fov(ref_size, ref_size, 70.0), [0.0, 1.3, 0.0], [0.0, 0.4, 5.0])
    aux = _ring(rng, Intrinsics.from_fov(aux_size, aux_size, 90.0), (0.0, 0, 2.5), 2.2, (1.2, 2.4),
                n_aux, (0.0, 0.3, 2.6), 0.5)
    return SynthScene("kitchen-island", scene, (ref, *aux))


def random_boxes(seed: int = 0, n_boxes: int = 6, ref_size: int = 64, aux_size: int = 64,
                 n_aux: int = 12) -> SynthScene:
    """Axis-aligned boxes scattered in front of the reference camera."""
    if n_boxes < 1:
        raise EmptySceneError("random-boxes needs at least one box")
    rng = np.random.default_rng([seed, 15])
    boxes = []
    for _ in range(n_boxes):
        c = np.array([rng.uniform(-2.0, 2.0), rng.uniform(-0.5, 1.5), rng.uniform(3.0, 6.5)])
        half = rng.uniform(0.2, 0.6, 3)
        boxes.append(AABB(c - half, c + half))
    scene = Scene(boxes)
    ref = _cam(Intrinsics.from_fov(ref_size, ref_size, 70.0), [0.0, 0.5, 0.0], [0.0, 0.5, 5.0])
    aux = _ring(rng, Intrinsics.from_fov(aux_size, aux_size, 80.0), (0.0, 0, 4.8), 3.5, (-0.5, 2.0),
                n_aux, (0.0, 0.5, 4.8), 0.5)
    return SynthScene("random-boxes", scene, (ref, *aux))


def synth_scene(name: str, seed: int = 0, **kw) -> SynthScene:
    makers = {"corridor": corridor, "box-room": box_room, "two-rooms": two_rooms,
              "kitchen-island": kitchen_island, "random-boxes": random_boxes}
    if name not in makers:
        raise ValueError(f"unknown scene generator {name!r}; choose from {', '.join(GENERATORS)}")
    return makers[name](seed=seed, **kw)


__all__ = ["GENERATORS", "EmptySceneError", "SynthScene", "synth_scene", "corridor", "box_room",
           "two_rooms", "kitchen_island", "random_boxes", "box_shell"]
