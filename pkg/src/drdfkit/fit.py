"""Tabulated per-ray distance fitting by momentum subgradient descent.

Each reference ray carries N values ``y_j`` at fixed depths ``z_j``. The
objective is a plain sum over samples of the applicable segment or band
penalty, plus a Huber slope prior pulling ``y`` toward slope -1 and, in
stage 2, the sign-balance term over samples behind the reference depth.
Stage 1 uses only the reference view's own segment and band.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .losses import ClampSpec, entropy_tau, neg_entropy
from .parallel import run_blocks


class DivergenceError(RuntimeError):
    """Non-finite objective during fitting."""


@dataclass(frozen=True)
class FitConfig:
    stage1_iters: int = 500
    stage2_iters: int = 1500
    lr: float = 0.05
    momentum: float = 0.9
    lambda_ent: float = 0.1
    mu_slope: float = 0.01
    huber_delta: float = 0.1
    seed: int = 0
    clamp: ClampSpec = field(default_factory=ClampSpec)
    tau: float | None = None
    init_floor: float | None = None
    init_noise: float = 1e-3
    threads: int | None = 1

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.lambda_ent < 0 or self.mu_slope < 0:
            raise ValueError("loss weights must be >= 0")
        if self.stage1_iters < 0 or self.stage2_iters < 0:
            raise ValueError("iteration counts must be >= 0")
        if not self.huber_delta > 0:
            raise ValueError("huber_delta must be > 0")

    @property
    def temperature(self) -> float:
        return self.tau if self.tau is not None else entropy_tau(self.clamp.d_clamp)


@dataclass
class StageData:
    """Per-sample supervision tables for one stage."""

    kind: np.ndarray  # (R, N) int8
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.kind = np.ascontiguousarray(self.kind, dtype=np.int8)
        self.a = np.ascontiguousarray(self.a, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)


@dataclass
class FitProblem:
    z: np.ndarray
    stage1: StageData
    stage2: StageData
    occluded: np.ndarray  # (R, N) bool: behind the reference depth (or no depth)
    ref_depth: np.ndarray  # (R,) along-ray depth, NaN if missing

    @property
    def shape(self):
        return self.stage2.kind.shape


@dataclass(frozen=True)
class FittedRayDRDF:
    ray_id: int
    z: np.ndarray
    y: np.ndarray

    def to_dict(self) -> dict:
        return {"ray_id": self.ray_id, "z": self.z.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FittedRayDRDF":
        return cls(int(d["ray_id"]), np.asarray(d["z"], dtype=np.float64), np.asarray(d["y"], dtype=np.float64))


@dataclass
class FitResult:
    y: np.ndarray
    trace: list  # rows (iter, stage, total, data, ent, prior, best)
    best_loss: float

    def tables(self, z, ray_ids=None) -> list[FittedRayDRDF]:
        ids = range(len(self.y)) if ray_ids is None else ray_ids
        return [FittedRayDRDF(int(i), np.asarray(z), self.y[k].copy()) for k, i in enumerate(ids)]


def occluded_mask(z, ref_depth) -> np.ndarray:
    """Samples behind the reference depth; rays without depth are all occluded."""
    d = np.asarray(ref_depth, dtype=np.float64)[:, None]
    return ~(np.isfinite(d) & (z[None, :] <= d))


def initial_values(z, ref_depth, cfg: FitConfig) -> np.ndarray:
    """Reference-depth initialisation ``d - z`` (optionally floored); rays
    without depth start at small seeded noise around 0."""
    z = np.asarray(z, dtype=np.float64)
    d = np.asarray(ref_depth, dtype=np.float64)
    y = d[:, None] - z[None, :]
    if cfg.init_floor is not None:
        y = np.maximum(y, cfg.init_floor)
    missing = ~np.isfinite(d)
    if missing.any():
        rng = np.random.default_rng([cfg.seed, 7])
        noise = cfg.init_noise * rng.standard_normal((len(d), len(z)))
        y[missing] = noise[missing]
    if cfg.clamp.enabled:
        y = np.clip(y, -cfg.clamp.d_clamp, cfg.clamp.d_clamp)
    return np.ascontiguousarray(y)


@dataclass
class _Scratch:
    grad: np.ndarray
    dsig: np.ndarray
    data: np.ndarray
    prior: np.ndarray
    sig: np.ndarray


def _scratch(shape):
    R = shape[0]
    return _Scratch(np.zeros(shape), np.zeros(shape), np.zeros(R), np.zeros(R), np.zeros(R))


def _rows(fn, n: int, threads):
    # kernels are row-wise, so one call over all rows equals the blocked calls
    if (threads or 2) <= 1:
        fn(0, n)
    else:
        run_blocks(fn, n, threads)


def _evaluate(y, z, st: StageData, occ_u8, n_occ: int, cfg: FitConfig, use_ent: bool, sc: _Scratch, impl):
    tau = cfg.temperature
    use_ent = use_ent and cfg.lambda_ent > 0 and n_occ >= 2
    tau_k = tau if use_ent else 0.0

    def work(r0, r1):
        impl.objective_rows(y, z, st.kind, st.a, st.b, occ_u8, cfg.clamp.bound, cfg.mu_slope,
                            cfg.huber_delta, tau_k, sc.grad, sc.dsig, sc.data, sc.prior, sc.sig, r0, r1)

    _rows(work, y.shape[0], cfg.threads)
    data = float(np.sum(sc.data))
    prior = float(np.sum(sc.prior))
    ent, coef = 0.0, 0.0
    if use_ent:
        p = float(np.sum(sc.sig)) / n_occ
        ent = cfg.lambda_ent * neg_entropy(p)
        if 0 < p < 1:
            coef = cfg.lambda_ent * (math.log(p) - math.log1p(-p)) / (tau * n_occ)
    return data + ent + prior, data, ent, prior, coef


def total_loss(y, problem: FitProblem, cfg: FitConfig, stage: int, backend: str | None = None):
    """(total, gradient table, terms) of the stage objective at ``y``."""
    if stage not in (1, 2):
        raise ValueError("stage must be 1 or 2")
    impl = kernels.get_backend(backend)
    y = np.ascontiguousarray(y, dtype=np.float64)
    st = problem.stage1 if stage == 1 else problem.stage2
    occ = np.ascontiguousarray(problem.occluded, dtype=np.uint8)
    sc = _scratch(y.shape)
    total, data, ent, prior, coef = _evaluate(y, problem.z, st, occ, int(occ.sum()), cfg, stage == 2, sc, impl)
    grad = sc.grad + coef * sc.dsig if coef != 0 else sc.grad.copy()
    return total, grad, {"data": data, "ent": ent, "prior": prior}


def _run_stage(y, problem, cfg, stage, iters, active, trace, impl, it0=0):
    st = problem.stage1 if stage == 1 else problem.stage2
    occ = np.ascontiguousarray(problem.occluded, dtype=np.uint8)
    n_occ = int(occ.sum())
    act = np.ascontiguousarray(active, dtype=np.uint8)
    z = np.ascontiguousarray(problem.z, dtype=np.float64)
    vel = np.zeros_like(y)
    sc = _scratch(y.shape)
    best, best_y = math.inf, y.copy()
    for it in range(iters + 1):
        total, data, ent, prior, coef = _evaluate(y, z, st, occ, n_occ, cfg, stage == 2, sc, impl)
        if not math.isfinite(total):
            raise DivergenceError(f"non-finite objective at stage {stage}, iteration {it}")
        if total < best:
            best = total
            best_y[...] = y
        trace.append((it0 + it, stage, total, data, ent, prior, best))
        if it == iters:
            break
        lr = cfg.lr * 0.5 * (1.0 + math.cos(math.pi * it / iters))

        def step(r0, r1):
            impl.momentum_rows(y, vel, sc.grad, sc.dsig, act, lr, cfg.momentum, coef, r0, r1)

        _rows(step, y.shape[0], cfg.threads)
        if cfg.clamp.enabled:
            np.clip(y, -cfg.clamp.d_clamp, cfg.clamp.d_clamp, out=y)
    return best_y, best


def fit(problem: FitProblem, cfg: FitConfig = FitConfig(), init: np.ndarray | None = None,
        active: np.ndarray | None = None, stages=(1, 2), backend: str | None = None) -> FitResult:
    """Two-stage fit; returns the best iterate of the last stage run."""
    impl = kernels.get_backend(backend)
    R = problem.shape[0]
    if R == 0:
        raise ValueError("nothing to fit: no rays")
    if not (problem.stage2.kind != 0).any() and not (problem.stage1.kind != 0).any():
        raise ValueError("nothing to fit: no supervised samples")
    y = initial_values(problem.z, problem.ref_depth, cfg) if init is None else np.array(init, dtype=np.float64)
    y = np.ascontiguousarray(y)
    active = np.ones(R, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    trace: list = []
    best = math.inf
    for stage in stages:
        iters = cfg.stage1_iters if stage == 1 else cfg.stage2_iters
        y, best = _run_stage(y, problem, cfg, stage, iters, active, trace, impl, len(trace))
    return FitResult(y, trace, best)


def changed_rows(old: StageData, new: StageData) -> np.ndarray:
    return ((old.kind != new.kind) | (old.a != new.a) | (old.b != new.b)).any(axis=1)


def adapt(prior_y: np.ndarray, old_problem: FitProblem, new_problem: FitProblem,
          cfg: FitConfig | None = None, iters: int = 500, backend: str | None = None) -> FitResult:
    """Continue fitting from ``prior_y`` after supervision changed.

    Only rays whose stage-2 supervision changed are updated, so adding no
    new segments leaves every table untouched."""
    cfg = replace(cfg or FitConfig(), stage2_iters=iters)
    active = changed_rows(old_problem.stage2, new_problem.stage2)
    y0 = np.array(prior_y, dtype=np.float64)
    if not active.any():
        return FitResult(y0, [], math.nan)
    return fit(new_problem, cfg, init=y0, active=active, stages=(2,), backend=backend)
