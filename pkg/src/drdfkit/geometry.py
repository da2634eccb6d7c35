"""Pinhole cameras, rays, depth maps and scene geometry.

Camera frame convention is x-right, y-down, z-forward. Depth maps store the
camera-frame z of the first surface (planar depth), not the Euclidean range.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence, Union

import numpy as np

DEPTH_MAGIC = b"DPTH"
MAX_DEPTH = 100.0


class GeometryError(ValueError):
    """Invalid camera, pixel, depth map or scene input."""


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError("focal lengths must be positive")
        if int(self.width) != self.width or int(self.height) != self.height:
            raise GeometryError("image size must be integral")
        if self.width <= 0 or self.height <= 0:
            raise GeometryError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point outside the image")

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float) -> "Intrinsics":
        """Square-pixel intrinsics with the principal point at the image centre."""
        fx = 0.5 * width / math.tan(math.radians(hfov_deg) / 2)
        return cls(fx, fx, (width - 1) / 2, (height - 1) / 2, width, height)

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}


class Projection(NamedTuple):
    pixel: np.ndarray
    z_cam: float


def _check_rotation(rot: np.ndarray) -> None:
    if np.abs(rot.T @ rot - np.eye(3)).max() >= 1e-6:
        raise GeometryError("cam_to_world rotation is not orthonormal")
    if np.linalg.det(rot) <= 0:
        raise GeometryError("cam_to_world rotation must have det=+1")


@dataclass(frozen=True, eq=False)
class Camera:
    intrinsics: Intrinsics
    cam_to_world: np.ndarray

    def __post_init__(self):
        m = np.array(self.cam_to_world, dtype=np.float64).reshape(4, 4)
        if not np.allclose(m[3], [0, 0, 0, 1]):
            raise GeometryError("cam_to_world must be a rigid 4x4 transform")
        _check_rotation(m[:3, :3])
        m.setflags(write=False)
        object.__setattr__(self, "cam_to_world", m)

    @classmethod
    def look_at(cls, intrinsics: Intrinsics, eye, target, up=(0.0, 1.0, 0.0)) -> "Camera":
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(up, dtype=np.float64))
        if np.linalg.norm(right) < 1e-9:
            raise GeometryError("look_at: up vector parallel to viewing direction")
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        m = np.eye(4)
        m[:3, 0], m[:3, 1], m[:3, 2], m[:3, 3] = right, down, fwd, eye
        return cls(intrinsics, m)

    @property
    def rotation(self) -> np.ndarray:
        return self.cam_to_world[:3, :3]

    @property
    def center(self) -> np.ndarray:
        return self.cam_to_world[:3, 3]

    @property
    def forward(self) -> np.ndarray:
        return self.cam_to_world[:3, 2]

    def world_to_cam(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) @ self.rotation

    def cam_to_world_points(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.center

    def project_many(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised projection. Returns (pixels (n,2), z_cam (n,)); pixels are
        NaN where z_cam <= 0."""
        pc = self.world_to_cam(np.atleast_2d(points))
        z = pc[:, 2]
        k = self.intrinsics
        with np.errstate(divide="ignore", invalid="ignore"):
            u = k.fx * pc[:, 0] / z + k.cx
            v = k.fy * pc[:, 1] / z + k.cy
        pix = np.stack([u, v], axis=1)
        pix[z <= 0] = np.nan
        return pix, z

    def project(self, point) -> Projection | None:
        """Pinhole projection of a world point; ``None`` when behind the camera."""
        pc = self.world_to_cam(np.asarray(point, dtype=np.float64).reshape(1, 3))[0]
        if pc[2] <= 0:
            return None
        k = self.intrinsics
        pix = np.array([k.fx * pc[0] / pc[2] + k.cx, k.fy * pc[1] / pc[2] + k.cy])
        return Projection(pix, float(pc[2]))

    def pixel_in_bounds(self, pixel) -> bool:
        u, v = float(pixel[0]), float(pixel[1])
        k = self.intrinsics
        return 0.0 <= u <= k.width - 1 and 0.0 <= v <= k.height - 1

    def pixel_dirs(self, pixels: np.ndarray) -> np.ndarray:
        """Unit world-frame directions through an (n,2) array of pixels."""
        pixels = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
        k = self.intrinsics
        d = np.stack([(pixels[:, 0] - k.cx) / k.fx, (pixels[:, 1] - k.cy) / k.fy,
                      np.ones(len(pixels))], axis=1)
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return d @ self.rotation.T

    def pixel_ray(self, pixel, z_max: float) -> "Ray":
        if not self.pixel_in_bounds(pixel):
            raise GeometryError(f"pixel {tuple(pixel)} outside the image")
        return Ray(self.center.copy(), self.pixel_dirs(np.asarray(pixel))[0], z_max)

    def grid_pixels(self) -> np.ndarray:
        """Pixel centres of every image pixel in row-major order, shape (H*W, 2)."""
        k = self.intrinsics
        v, u = np.mgrid[0:k.height, 0:k.width]
        return np.stack([u.ravel(), v.ravel()], axis=1).astype(np.float64)

    def to_dict(self) -> dict:
        return {"intrinsics": self.intrinsics.to_dict(),
                "cam_to_world": [float(x) for x in self.cam_to_world.ravel()]}

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        k = d["intrinsics"]
        intr = Intrinsics(float(k["fx"]), float(k["fy"]), float(k["cx"]), float(k["cy"]),
                          int(k["width"]), int(k["height"]))
        vals = d["cam_to_world"]
        if len(vals) != 16:
            raise GeometryError("cam_to_world needs 16 numbers")
        return cls(intr, np.array(vals, dtype=np.float64).reshape(4, 4))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Camera":
        return cls.from_dict(json.loads(Path(path).read_text()))


def project(camera: Camera, point) -> Projection | None:
    return camera.project(point)


def pixel_ray(camera: Camera, pixel, z_max: float) -> "Ray":
    return camera.pixel_ray(pixel, z_max)


@dataclass(frozen=True, eq=False)
class Ray:
    origin: np.ndarray
    dir: np.ndarray
    z_max: float = 8.0

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.dir, dtype=np.float64).reshape(3)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-9:
            raise GeometryError("ray direction must be unit length")
        if not self.z_max > 0:
            raise GeometryError("z_max must be positive")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "dir", d)

    def point_at(self, z):
        z = np.asarray(z, dtype=np.float64)
        return self.origin + z[..., None] * self.dir


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Planar depth image; non-finite or non-positive entries mean missing.

    Values are held in float64 in memory and written as float32."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise GeometryError("depth values must be a 2-D array")
        ok = np.isfinite(v) & (v > 0)
        if np.any(v[ok] > MAX_DEPTH):
            raise GeometryError(f"depth values above {MAX_DEPTH} m")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.values) & (self.values > 0)

    def lookup(self, pixel) -> float | None:
        """Nearest-pixel depth, ``None`` if outside the image or missing."""
        out = self.lookup_many(np.asarray(pixel, dtype=np.float64).reshape(1, 2))[0]
        return None if np.isnan(out) else float(out)

    def pixel_index(self, pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nearest integer pixel (col, row) and an in-image mask."""
        pixels = np.atleast_2d(pixels)
        with np.errstate(invalid="ignore"):
            col = np.floor(pixels[:, 0] + 0.5)
            row = np.floor(pixels[:, 1] + 0.5)
            inside = (col >= 0) & (col < self.width) & (row >= 0) & (row < self.height)
        col = np.where(inside, col, 0).astype(np.int64)
        row = np.where(inside, row, 0).astype(np.int64)
        return col, row, inside

    def lookup_many(self, pixels: np.ndarray) -> np.ndarray:
        """Vectorised nearest-pixel lookup; NaN marks missing or out-of-image."""
        col, row, inside = self.pixel_index(pixels)
        d = self.values[row, col].astype(np.float64)
        good = inside & np.isfinite(d) & (d > 0)
        return np.where(good, d, np.nan)

    def save(self, path) -> None:
        h, w = self.values.shape
        with open(path, "wb") as f:
            f.write(DEPTH_MAGIC + struct.pack("<II", w, h))
            f.write(self.values.astype("<f4").tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "DepthMap":
        raw = Path(path).read_bytes()
        if raw[:4] != DEPTH_MAGIC:
            raise GeometryError(f"{path}: not a depth map (bad magic)")
        w, h = struct.unpack("<II", raw[4:12])
        body = np.frombuffer(raw[12:], dtype="<f4")
        if body.size != w * h:
            raise GeometryError(f"{path}: expected {w * h} floats, found {body.size}")
        return cls(body.reshape(h, w))


def depth_lookup(dm: DepthMap, pixel) -> float | None:
    return dm.lookup(pixel)


# --------------------------------------------------------------------------
# scene primitives


@dataclass(frozen=True, eq=False)
class AABB:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max, dtype=np.float64).reshape(3)
        if np.any(hi <= lo):
            raise GeometryError("aabb max must exceed min on every axis")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    def to_dict(self) -> dict:
        return {"type": "aabb", "min": self.min.tolist(), "max": self.max.tolist()}

    def triangles(self) -> np.ndarray:
        lo, hi = self.min, self.max
        c = np.array([[lo[0] if i & 1 == 0 else hi[0], lo[1] if i & 2 == 0 else hi[1],
                       lo[2] if i & 4 == 0 else hi[2]] for i in range(8)])
        quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
        tris = []
        for a, b, cc, d in quads:
            tris += [(c[a], c[b], c[cc]), (c[a], c[cc], c[d])]
        return np.array(tris)


@dataclass(frozen=True, eq=False)
class Plane:
    point: np.ndarray
    normal: np.ndarray
    extent: float | None = None

    def __post_init__(self):
        p = np.asarray(self.point, dtype=np.float64).reshape(3)
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        if np.linalg.norm(n) == 0:
            raise GeometryError("plane normal must be non-zero")
        if self.extent is not None and not self.extent > 0:
            raise GeometryError("plane extent must be positive or null")
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "normal", n / np.linalg.norm(n))

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        """Orthonormal in-plane axes bounding a square of half-size ``extent``."""
        n = self.normal
        a = np.eye(3)[int(np.argmin(np.abs(n)))]
        u = np.cross(n, a)
        u /= np.linalg.norm(u)
        return u, np.cross(n, u)

    def to_dict(self) -> dict:
        return {"type": "plane", "point": self.point.tolist(), "normal": self.normal.tolist(),
                "extent": self.extent}


def _triangle_areas(tris: np.ndarray) -> np.ndarray:
    return 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1)


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    faces: np.ndarray
    path: str | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise GeometryError("mesh face index out of range")
        area = _triangle_areas(v[f]) if len(f) else np.zeros(0)
        f = f[area > 1e-14]
        if len(f) == 0:
            raise GeometryError("mesh has no non-degenerate triangles")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    def areas(self) -> np.ndarray:
        return _triangle_areas(self.triangles())

    def to_dict(self) -> dict:
        return {"type": "mesh", "path": self.path}

    def save_obj(self, path) -> None:
        lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in self.vertices.tolist()]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in self.faces.tolist()]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load_obj(cls, path) -> "Mesh":
        verts, faces = [], []
        for line in Path(path).read_text().splitlines():
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                    faces.append([idx[0], idx[k], idx[k + 1]])
        return cls(np.array(verts), np.array(faces, dtype=np.int64), str(path))


def merge_meshes(meshes: Sequence[Mesh], path: str | None = None) -> Mesh:
    verts, faces, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + off)
        off += len(m.vertices)
    return Mesh(np.concatenate(verts), np.concatenate(faces), path)


def rectangle_mesh(corner, edge_u, edge_v, cell: float = 0.5) -> Mesh:
    """Planar rectangle ``corner + a*edge_u + b*edge_v`` (a, b in [0, 1]),
    tessellated into a grid of roughly ``cell``-sized squares."""
    corner = np.asarray(corner, dtype=np.float64)
    eu, ev = np.asarray(edge_u, dtype=np.float64), np.asarray(edge_v, dtype=np.float64)
    nu = max(1, int(math.ceil(np.linalg.norm(eu) / cell - 1e-9)))
    nv = max(1, int(math.ceil(np.linalg.norm(ev) / cell - 1e-9)))
    a = np.linspace(0.0, 1.0, nu + 1)
    b = np.linspace(0.0, 1.0, nv + 1)
    verts = corner + a[None, :, None] * eu + b[:, None, None] * ev
    verts = verts.reshape(-1, 3)
    faces = []
    for j in range(nv):
        for i in range(nu):
            p00 = j * (nu + 1) + i
            p10, p01, p11 = p00 + 1, p00 + nu + 1, p00 + nu + 2
            faces += [(p00, p10, p11), (p00, p11, p01)]
    return Mesh(verts, np.array(faces, dtype=np.int64))


Primitive = Union[AABB, Plane, Mesh]


@dataclass(frozen=True, eq=False)
class Scene:
    primitives: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))

    @property
    def is_empty(self) -> bool:
        return len(self.primitives) == 0

    def meshes(self) -> list[Mesh]:
        return [p for p in self.primitives if isinstance(p, Mesh)]

    def triangles(self) -> np.ndarray:
        """All mesh triangles (not boxes or planes), shape (T, 3, 3)."""
        tris = [m.triangles() for m in self.meshes()]
        return np.concatenate(tris) if tris else np.zeros((0, 3, 3))

    def surface_mesh(self) -> Mesh:
        """Boxes and meshes merged into one triangle mesh (planes are skipped:
        unbounded planes have no finite triangulation)."""
        parts = [p for p in self.primitives if isinstance(p, Mesh)]
        for p in self.primitives:
            if isinstance(p, AABB):
                tris = p.triangles()
                parts.append(Mesh(tris.reshape(-1, 3), np.arange(len(tris) * 3).reshape(-1, 3)))
            elif isinstance(p, Plane) and p.extent is not None:
                u, v = p.axes()
                e = p.extent
                parts.append(rectangle_mesh(p.point - e * u - e * v, 2 * e * u, 2 * e * v))
        if not parts:
            raise GeometryError("scene has no finite surfaces")
        return merge_meshes(parts)

    def save(self, path, mesh_dir=None) -> None:
        """Write scene JSON; in-memory meshes are written as OBJ files next to it."""
        path = Path(path)
        mesh_dir = Path(mesh_dir) if mesh_dir else path.parent
        prims = []
        for i, p in enumerate(self.primitives):
            d = p.to_dict()
            if isinstance(p, Mesh):
                obj = mesh_dir / f"{path.stem}_mesh{i}.obj"
                p.save_obj(obj)
                d["path"] = str(obj.relative_to(path.parent)) if obj.is_relative_to(path.parent) else str(obj)
            prims.append(d)
        path.write_text(json.dumps({"primitives": prims}, indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Scene":
        path = Path(path)
        data = json.loads(path.read_text())
        prims = []
        for d in data["primitives"]:
            kind = d.get("type")
            if kind == "aabb":
                prims.append(AABB(d["min"], d["max"]))
            elif kind == "plane":
                prims.append(Plane(d["point"], d["normal"], d.get("extent")))
            elif kind == "mesh":
                p = Path(d["path"])
                prims.append(Mesh.load_obj(p if p.is_absolute() else path.parent / p))
            else:
                raise GeometryError(f"unknown primitive type {kind!r}")
        return cls(tuple(prims))
