"""Segment penalties on predicted ray distance values.

Every segment loss takes a predicted value ``y`` at ray depth ``z`` inside a
free-space segment ``[s, e]``. With ``l_s = s - z`` and ``l_e = e - z``:

* II: ``|y - l_s|`` before the segment midpoint, ``|y - l_e|`` from it on.
* OO: ``max(0, l_e - h - |y - h|)`` with ``h = (l_s + l_e) / 2``.
* IO: ``|y - l_s|`` in the first half, ``min(max(0, l_e - y), |y - l_s|)`` after.
* OI: mirror image of IO (``|y - l_e|`` in the second half).
* sep: ``|y - c|`` with ``c = center - z`` near an intersection.

The sample at the exact midpoint belongs to the second half. Subgradients
are the zero element of the subdifferential when it contains 0, otherwise
the right derivative. All arithmetic goes through ``drdfkit.kernels``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from . import kernels
from .kernels import K_II, K_IO, K_NONE, K_OI, K_OO, K_SEP

KIND_BY_LABELS = {("I", "I"): K_II, ("I", "O"): K_IO, ("O", "I"): K_OI, ("O", "O"): K_OO}
LABELS_BY_KIND = {v: k for k, v in KIND_BY_LABELS.items()}


def kind_code(start: str, end: str) -> int:
    try:
        return KIND_BY_LABELS[(start, end)]
    except KeyError:
        raise ValueError(f"bad event labels {start!r}, {end!r}") from None


@dataclass(frozen=True)
class ClampSpec:
    """Output range [-d_clamp, d_clamp] for bounded predictors."""

    d_clamp: float = 1.0
    enabled: bool = False

    def __post_init__(self):
        if not self.d_clamp > 0:
            raise ValueError("d_clamp must be > 0")

    @property
    def bound(self) -> float:
        # kernels take a non-positive bound as "no clipping"
        return self.d_clamp if self.enabled else 0.0


def apply_clamp(x, spec: ClampSpec | None):
    """Clip equality targets and inequality bounds into the output range."""
    if spec is None or not spec.enabled:
        return x
    return np.clip(x, -spec.d_clamp, spec.d_clamp)


def _evaluate(kind, y, z, a, b, clamp):
    y, z, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (y, z, a, b)))
    shape = y.shape
    k = np.full(y.size, kind, dtype=np.int8) if np.isscalar(kind) else np.ascontiguousarray(
        np.broadcast_to(kind, shape), dtype=np.int8).ravel()
    bound = clamp.bound if clamp is not None else 0.0
    loss, grad = kernels.segment_loss_grad(
        k, *(np.ascontiguousarray(v, dtype=np.float64).ravel() for v in (y, z, a, b)), bound)
    loss, grad = np.asarray(loss).reshape(shape), np.asarray(grad).reshape(shape)
    if shape == ():
        return float(loss), float(grad)
    return loss, grad


def segment_loss(kind: int, y, z, s, e, clamp: ClampSpec | None = None):
    """(loss, subgradient) for one of the segment kinds; broadcasts."""
    if kind not in (K_II, K_IO, K_OI, K_OO):
        raise ValueError(f"not a segment kind: {kind}")
    return _evaluate(kind, y, z, s, e, clamp)


def loss_II(y, z, s, e, clamp=None):
    return _evaluate(K_II, y, z, s, e, clamp)


def loss_OO(y, z, s, e, clamp=None):
    return _evaluate(K_OO, y, z, s, e, clamp)


def loss_IO(y, z, s, e, clamp=None):
    return _evaluate(K_IO, y, z, s, e, clamp)


def loss_OI(y, z, s, e, clamp=None):
    return _evaluate(K_OI, y, z, s, e, clamp)


def loss_sep(y, z, center, half_width, clamp=None):
    """Penalty continuing the known value ``center - z`` across a surface."""
    if not half_width > 0:
        raise ValueError("half_width must be > 0")
    if np.any(np.abs(np.asarray(z) - center) > half_width):
        raise ValueError("z lies outside the separation band")
    return _evaluate(K_SEP, y, z, center, 0.0, clamp)


def zero_loss():
    return _evaluate(K_NONE, 0.0, 0.0, 0.0, 0.0, None)


def entropy_tau(d_clamp: float = 1.0) -> float:
    return 0.25 * d_clamp


def neg_entropy(p: float) -> float:
    """p ln p + (1 - p) ln(1 - p), continuous at the ends."""
    out = 0.0
    if p > 0:
        out += p * math.log(p)
    if p < 1:
        out += (1 - p) * math.log1p(-p)
    return out


def loss_ent(Y, tau: float = 0.25):
    """Sign-balance surrogate over a batch of predictions.

    ``p`` is the mean soft sign ``sigmoid(y / tau)``; the loss is the negative
    binary entropy of ``p``, minimal (``-ln 2``) when ``p = 1/2``. Returns
    (loss, gradient per element). The batch sum is exactly rounded so the
    result does not depend on element order.
    """
    Y = np.asarray(Y, dtype=np.float64).ravel()
    if Y.size < 2:
        raise ValueError("entropy loss needs at least two values")
    if not tau > 0:
        raise ValueError("tau must be > 0")
    sig = expit(Y / tau)
    p = math.fsum(sig) / Y.size
    loss = neg_entropy(p)
    if 0 < p < 1:
        dp = math.log(p) - math.log1p(-p)
    else:
        dp = 0.0
    grad = dp * sig * (1 - sig) / (tau * Y.size)
    return loss, grad


def entropy_perturbation(y1: float, y2: float, delta1: float, tau: float = 1.0) -> float:
    """delta2 such that moving y1 by delta1 and y2 by delta2 keeps the mean
    sigmoid (and hence ``loss_ent``) fixed."""
    target = expit(y1 / tau) - expit((y1 + delta1) / tau) + expit(y2 / tau)
    if not 0 < target < 1:
        raise ValueError("perturbation leaves the sigmoid range")
    return float(tau * logit(target) - y2)
