"""Project manifest, artifact layout, JSON Lines I/O and content hashes.

A manifest is a JSON file binding a scene, its cameras (one of them the
reference) and optional depth maps to an output directory. Relative paths
are resolved against the manifest's own directory::

    {
      "version": 1,
      "scene": "scene.json",
      "cameras": ["cameras/cam_00.json", "cameras/cam_01.json", ...],
      "reference": 0,
      "depths": null,
      "output_dir": "out",
      "params": {"z_max": 8.0, "n_samples": 512, "eps_int": 0.02, "t_sep": 0.2, "seed": 0}
    }

``depths`` is either null (the ``render`` stage produces them) or one
depth-map path per camera.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .events import EPS_INT
from .merge import T_SEP
from .oracle import N_SAMPLES, Z_MAX

MANIFEST_VERSION = 1
DEFAULT_PARAMS = {"z_max": Z_MAX, "n_samples": N_SAMPLES, "eps_int": EPS_INT, "t_sep": T_SEP, "seed": 0}

# stage -> artifacts it writes (relative to the output dir)
ARTIFACTS = {
    "render": ["render/depth_{i:02d}.dpth", "render/cam_{i:02d}.json"],
    "oracle": ["oracle/oracle.jsonl"],
    "events": ["events/segments.jsonl"],
    "merge": ["merge/supervision.jsonl", "merge/reference.jsonl", "merge/summary.json"],
    "fit": ["fit/fit.jsonl", "fit/trace.csv"],
    "adapt": ["adapt/supervision.jsonl", "adapt/fit.jsonl", "adapt/trace.csv"],
    "decode": ["decode/points.ply", "decode/crossings.jsonl"],
    "eval": ["eval/report.json"],
}


class ManifestError(ValueError):
    """Invalid manifest or arguments (exit code 2)."""


class DependencyError(RuntimeError):
    """An upstream stage's artifact is missing (exit code 3)."""


def git_hash(data: bytes) -> str:
    """Content hash in git's blob format (sha1 of 'blob <len>\\0' + data)."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def file_hash(path) -> str:
    return git_hash(Path(path).read_bytes())


def sub_seed(seed: int, name: str) -> int:
    """Named sub-seed so each stage draws from its own stream."""
    return int.from_bytes(hashlib.sha256(f"{seed}:{name}".encode()).digest()[:8], "little")


def write_jsonl(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


@dataclass
class Manifest:
    path: Path
    scene: Path
    cameras: list
    reference: int
    depths: list | None
    output_dir: Path
    params: dict = field(default_factory=lambda: dict(DEFAULT_PARAMS))

    @property
    def aux_ids(self) -> list[int]:
        return [i for i in range(len(self.cameras)) if i != self.reference]

    @property
    def hash(self) -> str:
        return file_hash(self.path)

    def out(self, rel: str) -> Path:
        return self.output_dir / rel

    def require(self, rel: str, stage: str) -> Path:
        p = self.out(rel)
        if not p.exists():
            raise DependencyError(f"missing {p}: run the `{stage}` stage first")
        return p

    def depth_path(self, i: int) -> Path:
        if self.depths is not None:
            return self.depths[i]
        return self.require(f"render/depth_{i:02d}.dpth", "render")

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        if not path.exists():
            raise ManifestError(f"manifest {path} not found")
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest {path}: {exc}") from None
        if d.get("version", MANIFEST_VERSION) != MANIFEST_VERSION:
            raise ManifestError(f"manifest {path}: unsupported version {d.get('version')}")
        base = path.parent
        for key in ("scene", "cameras", "reference"):
            if key not in d:
                raise ManifestError(f"manifest {path}: missing {key!r}")
        cams = [base / c for c in d["cameras"]]
        ref = d["reference"]
        if not isinstance(ref, int) or not 0 <= ref < len(cams):
            raise ManifestError(f"manifest {path}: reference must index exactly one of {len(cams)} cameras")
        depths = d.get("depths")
        if depths is not None:
            if len(depths) != len(cams):
                raise ManifestError(f"manifest {path}: need one depth map per camera")
            depths = [base / p for p in depths]
        scene = base / d["scene"]
        for p in [scene, *cams, *(depths or [])]:
            if not p.exists():
                raise ManifestError(f"manifest {path}: referenced file {p} does not exist")
        params = dict(DEFAULT_PARAMS)
        unknown = set(d.get("params", {})) - set(params)
        if unknown:
            raise ManifestError(f"manifest {path}: unknown params {sorted(unknown)}")
        params.update(d.get("params", {}))
        return cls(path, scene, cams, ref, depths, base / d.get("output_dir", "out"), params)

    @staticmethod
    def write(path, scene: str, cameras: list, reference: int = 0, depths=None,
              output_dir: str = "out", params: dict | None = None) -> None:
        p = dict(DEFAULT_PARAMS)
        p.update(params or {})
        write_json(path, {"version": MANIFEST_VERSION, "scene": scene, "cameras": cameras,
                          "reference": reference, "depths": depths, "output_dir": output_dir,
                          "params": p})
