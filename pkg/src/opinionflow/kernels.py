"""Interaction kernels: how strongly one opinion pulls on another.

Built-ins are radial, phi(y) = a(|y|) * y:

* ``linear``          a = 1, so phi(y) = y
* ``rational_radial`` a(r) = 1 / (1 + r^2)
* ``compact_sine``    a(r) = sin^2(pi r / R) / r on 0 < r < R, zero outside,
                      implemented directly as (y/|y|) sin^2(pi |y| / R) with
                      an explicit zero branch at y = 0 (removable 0/0)
* ``zero``            phi = 0, useful for disabling opinion dynamics

All built-ins vanish exactly at y = 0 and for compact_sine exactly outside
the open ball of radius R. Scalar-opinion evaluation is ``kernel(y)`` with
``y`` of any shape, elementwise; d-dimensional opinions use
``kernel.eval_vec(y)`` with ``y`` of shape (..., d). Kernels are immutable
and evaluation is pure, so sharing across threads is safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EvaluationError
from .sampling import as_box, box_points, halton

__all__ = ["InteractionKernel", "lipschitz_probe"]

_PARAMFREE_KINDS = ("linear", "rational_radial", "zero")


@dataclass(frozen=True, eq=False)
class InteractionKernel:
    kind: str
    radius: float | None = None
    profile: Callable | None = None

    def __post_init__(self):
        if self.kind == "compact_sine":
            if self.radius is None or not (self.radius > 0):
                raise ValueError("compact_sine kernel needs radius > 0")
        elif self.kind in _PARAMFREE_KINDS:
            if self.radius is not None:
                raise ValueError(f"kernel kind {self.kind!r} takes no radius")
        elif self.kind == "custom":
            if self.profile is None:
                raise ValueError("custom kernel needs a callable profile")
            at_zero = np.asarray(self.profile(np.asarray(0.0)), dtype=float)
            if not np.all(at_zero == 0.0):
                raise ValueError("custom kernel must satisfy phi(0) = 0")
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    # ---- constructors ----------------------------------------------------

    @classmethod
    def linear(cls) -> "InteractionKernel":
        return cls("linear")

    @classmethod
    def rational_radial(cls) -> "InteractionKernel":
        return cls("rational_radial")

    @classmethod
    def compact_sine(cls, radius: float) -> "InteractionKernel":
        return cls("compact_sine", radius=radius)

    @classmethod
    def zero(cls) -> "InteractionKernel":
        return cls("zero")

    @classmethod
    def custom(cls, profile: Callable) -> "InteractionKernel":
        return cls("custom", profile=profile)

    # ---- evaluation ------------------------------------------------------

    def __call__(self, y):
        """phi(y) elementwise for scalar opinions (d = 1); any input shape."""
        arr = np.asarray(y, dtype=float)
        if self.kind == "linear":
            return arr.copy()
        if self.kind == "zero":
            return np.zeros_like(arr)
        if self.kind == "rational_radial":
            return arr / (1.0 + arr * arr)
        if self.kind == "compact_sine":
            r = np.abs(arr)
            mag = np.sin(np.pi * np.minimum(r, self.radius) / self.radius) ** 2
            return np.where((r > 0.0) & (r < self.radius), np.sign(arr) * mag, 0.0)
        out = np.asarray(self.profile(arr), dtype=float)
        if not np.all(np.isfinite(out)):
            raise EvaluationError("custom kernel returned a non-finite value")
        return out

    def eval_vec(self, y):
        """phi(y) for opinion differences y of shape (..., d)."""
        arr = np.asarray(y, dtype=float)
        if arr.ndim < 1:
            raise ValueError("eval_vec expects a trailing opinion axis")
        if self.kind == "linear":
            return arr.copy()
        if self.kind == "zero":
            return np.zeros_like(arr)
        r2 = np.sum(arr * arr, axis=-1, keepdims=True)
        if self.kind == "rational_radial":
            return arr / (1.0 + r2)
        if self.kind == "compact_sine":
            r = np.sqrt(r2)
            inside = (r > 0.0) & (r < self.radius)
            mag = np.sin(np.pi * np.minimum(r, self.radius) / self.radius) ** 2
            unit = arr / np.where(r > 0.0, r, 1.0)
            return np.where(inside, unit * mag, 0.0)
        raise ValueError("custom kernels support scalar opinions only")

    # ---- declared analytic bounds ------------------------------------------

    def lipschitz_bound(self, box=None) -> float:
        """Upper bound on the Lipschitz constant (analytic for built-ins)."""
        if self.kind == "linear":
            return 1.0
        if self.kind == "zero":
            return 0.0
        if self.kind == "rational_radial":
            return 1.0  # sup |d/dy y/(1+y^2)| = 1, attained at y = 0
        if self.kind == "compact_sine":
            return float(np.pi / self.radius)
        if box is None:
            raise ValueError("custom kernel needs a box to estimate a Lipschitz bound")
        return lipschitz_probe(self, box, samples=1024)

    def sup_norm(self, box=None) -> float:
        """Upper bound on sup |phi| over ``box`` (global for bounded built-ins)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "rational_radial":
            return 0.5  # max r/(1+r^2) attained at r = 1
        if self.kind == "compact_sine":
            return 1.0
        if box is None:
            raise ValueError(f"kernel kind {self.kind!r} is unbounded; a box is required")
        b = as_box(box)
        diam = float(np.sqrt(np.sum((b[:, 1] - b[:, 0]) ** 2)))
        if self.kind == "linear":
            return diam
        pts = box_points(512, b, skip=7)
        vals = self(pts[:, 0]) if b.shape[0] == 1 else self.eval_vec(pts)
        return float(np.max(np.abs(vals)))


def lipschitz_probe(kernel: InteractionKernel, box, samples: int = 512) -> float:
    """Estimated Lipschitz constant from deterministic difference quotients.

    Pairs (u_k, v_k) come from a Halton sequence: base points spread over the
    box, displaced along alternating directions by separations on a geometric
    ladder down to ~1e-7 of the box diameter. The pair set is prefix-nested,
    so the estimate is monotone non-decreasing in ``samples``.
    """
    if samples < 2:
        raise ValueError("lipschitz_probe needs samples >= 2")
    b = as_box(box)
    d = b.shape[0]
    u = box_points(samples, b, skip=0)
    diam = float(np.sqrt(np.sum((b[:, 1] - b[:, 0]) ** 2)))
    ladder = diam * 2.0 ** (-1.0 - (np.arange(samples) % 24))
    if d == 1:
        directions = np.where(np.arange(samples) % 2 == 0, 1.0, -1.0)[:, None]
    else:
        raw = halton(samples, d, skip=1000) - 0.5
        norms = np.sqrt(np.sum(raw * raw, axis=1, keepdims=True))
        directions = raw / np.where(norms > 0, norms, 1.0)
    v = np.clip(u + ladder[:, None] * directions, b[:, 0], b[:, 1])
    gaps = np.sqrt(np.sum((v - u) ** 2, axis=1))
    keep = gaps > 0
    if d == 1:
        fu, fv = kernel(u[keep, 0]), kernel(v[keep, 0])
        num = np.abs(fv - fu)
    else:
        fu, fv = kernel.eval_vec(u[keep]), kernel.eval_vec(v[keep])
        num = np.sqrt(np.sum((fv - fu) ** 2, axis=-1))
    quotients = num / gaps[keep]
    return float(np.max(quotients)) if quotients.size else 0.0
