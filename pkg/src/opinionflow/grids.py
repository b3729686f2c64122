"""Uniform index grids on I = [0,1] and the piecewise-constant function algebra.

Everything downstream (agent ensembles, graph-limit fields, convergence
norms) is built from three primitives:

* cell-average projection of a function on I onto N cells,
* piecewise-constant embedding of an N-vector back into a function on I,
* exact L2/Linf distances between piecewise-constant functions, computed on
  their least-common-multiple refinement (refinement of piecewise constants
  is exact, so no quadrature error enters the norms).

Cell i (0-based) covers the half-open interval [i/N, (i+1)/N); evaluation at
s = 1 returns the last cell's value so evaluation is total on [0,1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad_vec

__all__ = [
    "GridFunction",
    "AgentEnsemble",
    "NormReport",
    "project_discrete",
    "embed_piecewise",
    "l2_distance",
    "linf_distance",
    "common_refinement",
]


def _as_finite_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError(f"{name}: empty value array")
    if not np.all(np.isfinite(arr)):
        bad = int(np.argwhere(~np.isfinite(arr.reshape(arr.shape[0], -1)).all(axis=1))[0, 0])
        raise ValueError(f"{name}: non-finite value in cell {bad}")
    return arr


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Piecewise-constant function on I over a uniform grid.

    ``values`` has shape (N,) for scalar fields or (N, d) for opinion-valued
    fields. Instances are immutable snapshots; all operations return new
    objects, so they are safe to share across threads.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = _as_finite_array(self.values, "GridFunction")
        if arr.ndim not in (1, 2):
            raise ValueError(f"GridFunction: values must be 1- or 2-dimensional, got ndim={arr.ndim}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def cells(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    def __call__(self, s):
        """Evaluate at s in [0,1]; s = 1 maps to the last cell."""
        s_arr = np.asarray(s, dtype=float)
        idx = np.minimum((s_arr * self.cells).astype(int), self.cells - 1)
        out = self.values[idx]
        return out if s_arr.ndim else out[()] if out.ndim == 0 else out

    def refined(self, factor: int) -> "GridFunction":
        """Split every cell into ``factor`` equal sub-cells (exact)."""
        if factor < 1:
            raise ValueError("refinement factor must be >= 1")
        if factor == 1:
            return self
        return GridFunction(np.repeat(self.values, factor, axis=0))

    def __eq__(self, other) -> bool:
        if not isinstance(other, GridFunction):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(
            np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class AgentEnsemble:
    """Opinions and influence weights of N agents at one time instant."""

    positions: np.ndarray
    weights: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        pos = _as_finite_array(self.positions, "AgentEnsemble.positions").copy()
        wts = _as_finite_array(self.weights, "AgentEnsemble.weights").copy()
        if wts.ndim != 1:
            raise ValueError("AgentEnsemble.weights must be one scalar per agent")
        if pos.shape[0] != wts.shape[0]:
            raise ValueError(
                f"AgentEnsemble: {pos.shape[0]} positions but {wts.shape[0]} weights"
            )
        pos.setflags(write=False)
        wts.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", wts)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def as_fields(self) -> tuple[GridFunction, GridFunction]:
        return embed_piecewise(self.positions), embed_piecewise(self.weights)


@dataclass(frozen=True)
class NormReport:
    """L2 and sup-norm summary of one comparison series."""

    l2_index: float
    sup_time_l2: float
    linf_index: float

    def __post_init__(self):
        for name in ("l2_index", "sup_time_l2", "linf_index"):
            if getattr(self, name) < 0:
                raise ValueError(f"NormReport.{name} must be nonnegative")

    @classmethod
    def from_series(cls, l2_values: Sequence[float], linf_values: Sequence[float]) -> "NormReport":
        l2 = [float(v) for v in l2_values]
        return cls(l2_index=l2[-1], sup_time_l2=max(l2), linf_index=max(float(v) for v in linf_values))


def _simpson_cell_nodes(n: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    # q+1 nodes per cell with composite Simpson weights summing to 1
    if q < 2 or q % 2:
        raise ValueError("Simpson sub-sample count q must be even and >= 2")
    offsets = np.arange(q + 1) / (q * n)
    starts = np.arange(n) / n
    nodes = (starts[:, None] + offsets[None, :]).ravel()
    w = np.ones(q + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return nodes, w / (3.0 * q)


def _eval_vectorized(f: Callable, s: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(f(s), dtype=float)
        if out.shape[: s.ndim] == s.shape:
            return out
    except Exception:
        pass
    # fall back to pointwise evaluation for non-broadcasting callables
    return np.asarray([f(float(v)) for v in s], dtype=float)


def project_discrete(
    f: Callable | GridFunction,
    n: int,
    q: int = 32,
    rule: str = "simpson",
) -> np.ndarray:
    """Cell averages of ``f`` over the uniform n-cell grid.

    ``rule='simpson'`` uses composite Simpson with ``q`` sub-samples per cell
    (the default); ``rule='adaptive'`` integrates each cell with adaptive
    Gauss-Kronrod, which is the right tool for profiles with endpoint
    derivative singularities. GridFunction inputs are averaged exactly on the
    common refinement regardless of ``rule``, so projecting an embedding back
    onto its own grid is the identity.
    """
    if n < 1:
        raise ValueError("cell count must be >= 1")
    if isinstance(f, GridFunction):
        common = math.lcm(f.cells, n)
        fine = f.refined(common // f.cells).values
        group = common // n
        shaped = fine.reshape((n, group) + fine.shape[1:])
        return shaped.mean(axis=1)
    if rule == "adaptive":
        rows = []
        for i in range(n):
            val, _ = quad_vec(f, i / n, (i + 1) / n, epsabs=1e-13, epsrel=1e-12)
            rows.append(np.asarray(val, dtype=float) * n)
        out = np.array(rows)
        if not np.all(np.isfinite(out)):
            bad = int(np.nonzero(~np.isfinite(out.reshape(n, -1)).all(axis=1))[0][0])
            raise ValueError(f"non-finite integral while projecting; cell {bad}")
        return out
    if rule != "simpson":
        raise ValueError(f"unknown quadrature rule {rule!r}")
    nodes, weights = _simpson_cell_nodes(n, q)
    samples = _eval_vectorized(f, nodes)
    if not np.all(np.isfinite(samples)):
        bad_node = int(np.nonzero(~np.isfinite(samples.reshape(samples.shape[0], -1)).all(axis=1))[0][0])
        raise ValueError(f"non-finite sample while projecting; cell {bad_node // (q + 1)}")
    per_cell = samples.reshape((n, q + 1) + samples.shape[1:])
    if per_cell.ndim == 2:
        return per_cell @ weights
    return np.einsum("cqd,q->cd", per_cell, weights)


def embed_piecewise(v) -> GridFunction:
    """Piecewise-constant embedding of an N-vector (cell i carries v[i])."""
    arr = np.asarray(v, dtype=float)
    if arr.size == 0:
        raise ValueError("cannot embed an empty array")
    return GridFunction(arr)


def common_refinement(f: GridFunction, g: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    """Both value arrays refined onto the lcm grid (exact for pcw constants)."""
    if f.dim != g.dim:
        raise ValueError(f"value dimensions differ: {f.dim} vs {g.dim}")
    common = math.lcm(f.cells, g.cells)
    return f.refined(common // f.cells).values, g.refined(common // g.cells).values


def _cellwise_norms(diff: np.ndarray) -> np.ndarray:
    if diff.ndim == 1:
        return np.abs(diff)
    return np.sqrt(np.sum(diff * diff, axis=1))


def l2_distance(f: GridFunction, g: GridFunction) -> float:
    """Exact L2(I) distance between two piecewise-constant functions."""
    fv, gv = common_refinement(f, g)
    cell = _cellwise_norms(fv - gv)
    return float(np.sqrt(np.mean(cell * cell)))


def linf_distance(f: GridFunction, g: GridFunction) -> float:
    """Max-over-cells distance (essential sup for pcw constants)."""
    fv, gv = common_refinement(f, g)
    return float(np.max(_cellwise_norms(fv - gv)))
