"""Explicit-Euler solver for the continuum-index system on a uniform grid.

The state is a pair of piecewise-constant profiles on I = [0,1]: opinions
x(t, s) driven by the weighted nonlocal pull integral, weights m(t, s)
driven by the mass law. Two space quadratures are available for the pull
integral:

* ``rectangle_grid_aligned`` - cell-measure weights 1/G. On piecewise-
  constant profiles this is the exact integral, and the per-cell rate
  coincides bit for bit with the N-agent right-hand side (the two systems
  are the same object under the embedding), which `equivalence_check`
  verifies end to end.
* ``simpson`` - composite Simpson over the cell midpoints with constant
  extension to s = 0 and s = 1, for runs where the profiles are treated as
  samples of smooth functions. Mass-law integrals always use grid sums, so
  total-weight conservation is unaffected by this choice.

Monitors mirror the agent solver: grid-mass conservation, strict weight
positivity with the exponential growth envelope for skew-coupled laws, and
an instability abort once any field magnitude passes 1e6.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson

from .csvio import write_csv
from .errors import BudgetError, ConfigError, MonitorError
from .grids import GridFunction, embed_piecewise
from .kernels import InteractionKernel
from .mass_dynamics import MassLaw
from .micro import integrate as integrate_micro
from .micro import position_rates

__all__ = [
    "FieldPair",
    "FieldTrajectory",
    "GraphMonitorConfig",
    "quadrature_weights",
    "rhs_graph",
    "rhs_graph_averaged",
    "integrate_graph",
    "equivalence_check",
    "fields_to_csv",
]

QUADRATURES = ("rectangle_grid_aligned", "simpson")


@dataclass(frozen=True, eq=False)
class FieldPair:
    """Opinion and weight profiles on one grid at one time."""

    x: GridFunction
    m: GridFunction
    time: float = 0.0

    def __post_init__(self):
        if self.x.cells != self.m.cells:
            raise ValueError(
                f"x and m live on different grids ({self.x.cells} vs {self.m.cells} cells)"
            )
        if self.m.values.ndim != 1:
            raise ValueError("the weight profile must be scalar-valued")

    @property
    def cells(self) -> int:
        return self.m.cells


@dataclass(frozen=True)
class FieldTrajectory:
    """Sampled profiles of one integration; arrays are (nt, G[, d])."""

    times: np.ndarray
    x_values: np.ndarray
    m_values: np.ndarray
    max_position_norm: float
    max_weight_abs: float

    @property
    def cells(self) -> int:
        return self.m_values.shape[1]

    def pair(self, index: int) -> FieldPair:
        return FieldPair(
            x=embed_piecewise(self.x_values[index]),
            m=embed_piecewise(self.m_values[index]),
            time=float(self.times[index]),
        )

    def final(self) -> FieldPair:
        return self.pair(len(self.times) - 1)


@lru_cache(maxsize=64)
def quadrature_weights(cells: int, scheme: str) -> np.ndarray:
    """Weights w with integral_I f ds ~= sum_i w_i f_i for cell values f_i."""
    if scheme == "rectangle_grid_aligned":
        return np.full(cells, 1.0 / cells)
    if scheme != "simpson":
        raise ConfigError(f"unknown quadrature {scheme!r}; pick one of {QUADRATURES}")
    mids = (np.arange(cells) + 0.5) / cells
    nodes = np.concatenate([[0.0], mids, [1.0]])
    weights = np.empty(cells)
    for i in range(cells):
        basis = np.zeros(cells + 2)
        basis[i + 1] = 1.0
        if i == 0:
            basis[0] = 1.0
        if i == cells - 1:
            basis[-1] = 1.0
        weights[i] = simpson(basis, x=nodes)
    return weights


def rhs_graph(
    fp: FieldPair,
    kernel: InteractionKernel,
    law: MassLaw,
    quadrature: str = "rectangle_grid_aligned",
) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell rates (dx, dm) of the continuum system."""
    x = fp.x.values
    m = fp.m.values
    if quadrature == "rectangle_grid_aligned":
        dx = position_rates(x, m, kernel)
    else:
        w = quadrature_weights(fp.cells, quadrature)
        if x.ndim == 1:
            pulls = kernel(x[None, :] - x[:, None])
            dx = pulls @ (w * m)
        else:
            pulls = kernel.eval_vec(x[None, :, :] - x[:, None, :])
            dx = np.einsum("ijd,j->id", pulls, w * m)
    dm = law.rates(x, m)
    if not np.all(np.isfinite(dx)):
        flat = np.isfinite(dx.reshape(dx.shape[0], -1)).all(axis=1)
        raise MonitorError("finite_rates", fp.time, f"cell {int(np.nonzero(~flat)[0][0])} opinion rate")
    if not np.all(np.isfinite(dm)):
        raise MonitorError("finite_rates", fp.time, f"cell {int(np.nonzero(~np.isfinite(dm))[0][0])} weight rate")
    return dx, dm


def rhs_graph_averaged(
    fp: FieldPair,
    kernel: InteractionKernel,
    law: MassLaw,
    coarse_cells: int,
    quadrature: str = "rectangle_grid_aligned",
) -> tuple[np.ndarray, np.ndarray]:
    """Rates with the weight rate averaged over each coarse cell's block.

    This is the N-averaged form whose solutions are exactly the embedded
    N-agent trajectories; on fields that are constant on the coarse cells it
    coincides with `rhs_graph`.
    """
    if fp.cells % coarse_cells:
        raise ValueError(
            f"grid size {fp.cells} is not a multiple of the coarse cell count {coarse_cells}"
        )
    dx, dm = rhs_graph(fp, kernel, law, quadrature)
    block = fp.cells // coarse_cells
    dm_avg = dm.reshape(coarse_cells, block).mean(axis=1)
    return dx, np.repeat(dm_avg, block)


@dataclass(frozen=True)
class GraphMonitorConfig:
    mass_drift: float = 1e-6
    growth_slack: float = 1e-4
    blowup_magnitude: float = 1e6
    max_steps: int = 2_000_000
    enabled: bool = True


def _stability_guard(fp: FieldPair, kernel: InteractionKernel, law: MassLaw, dt: float) -> None:
    x, m = fp.x.values, fp.m.values
    m_max = float(np.max(np.abs(m)))
    lip = kernel.lipschitz_bound() if kernel.kind != "custom" else kernel.lipschitz_bound(
        np.stack([np.atleast_1d(x.min(axis=0)) - 1.0, np.atleast_1d(x.max(axis=0)) + 1.0], axis=1)
    )
    caps = []
    if m_max * lip > 0:
        caps.append(0.5 / (m_max * lip))
    rate = law.rate_coefficient(x, m)
    if rate > 0:
        caps.append(0.5 / rate)
    if caps and dt > min(caps):
        raise ConfigError(
            f"dt = {dt} exceeds the stability guard dt_max = {min(caps):.6g} "
            "for this kernel/law; reduce the step"
        )


def integrate_graph(
    fp0: FieldPair,
    kernel: InteractionKernel,
    law: MassLaw,
    T: float,
    dt: float,
    quadrature: str = "rectangle_grid_aligned",
    store_every: int = 1,
    monitors: GraphMonitorConfig | None = None,
) -> FieldTrajectory:
    """Explicit Euler from t=0 to t=T with per-step monitors."""
    if quadrature not in QUADRATURES:
        raise ConfigError(f"unknown quadrature {quadrature!r}; pick one of {QUADRATURES}")
    config = monitors or GraphMonitorConfig()
    law.validate_grid(fp0.cells)
    _stability_guard(fp0, kernel, law, dt)

    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < 0:
        raise ValueError("T must be nonnegative")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T = {T} is not an integer multiple of dt = {dt}")
    if steps > config.max_steps:
        raise BudgetError(f"{steps} steps exceed the budget of {config.max_steps}")

    x = fp0.x.values.copy()
    m = fp0.m.values.copy()
    g = m.shape[0]
    mass0 = float(np.mean(m))
    m0 = m.copy()
    check_positive = bool(law.is_psi_sk and np.all(m > 0))
    growth_rate = None
    if check_positive:
        s_bar = law.coupling_bound(x)
        if s_bar is not None and np.isfinite(s_bar):
            growth_rate = (mass0 ** law.k) * s_bar

    max_pos = 0.0
    max_wt = 0.0

    def observe(t: float):
        nonlocal max_pos, max_wt
        norms = np.abs(x) if x.ndim == 1 else np.sqrt(np.sum(x * x, axis=1))
        max_pos = max(max_pos, float(np.max(norms)))
        max_wt = max(max_wt, float(np.max(np.abs(m))))
        if not config.enabled:
            return
        if max(max_pos, max_wt) > config.blowup_magnitude:
            raise MonitorError("stability", t, f"field magnitude passed {config.blowup_magnitude:g}")
        if law.conserves_mass:
            drift = abs(float(np.mean(m)) - mass0)
            if drift > config.mass_drift:
                raise MonitorError(
                    "mass_conservation", t,
                    f"|grid mass - {mass0:.12g}| = {drift:.3e} over {config.mass_drift:.1e}",
                )
        if check_positive:
            if np.any(m <= 0.0):
                bad = int(np.nonzero(m <= 0.0)[0][0])
                raise MonitorError("weight_positivity", t, f"cell {bad} weight {m[bad]:.3e} <= 0")
            if growth_rate is not None:
                envelope = m0 * np.exp(growth_rate * t) * (1.0 + config.growth_slack)
                if np.any(m > envelope):
                    bad = int(np.nonzero(m > envelope)[0][0])
                    raise MonitorError(
                        "weight_growth_bound", t,
                        f"cell {bad} weight {m[bad]:.6g} over envelope {envelope[bad]:.6g}",
                    )

    observe(0.0)
    times = [0.0]
    xs = [x.copy()]
    ms = [m.copy()]
    for step in range(steps):
        dx, dm = rhs_graph(FieldPair(embed_piecewise(x), embed_piecewise(m), step * dt), kernel, law, quadrature)
        x = x + dt * dx
        m = m + dt * dm
        t = (step + 1) * dt if step + 1 < steps else T
        observe(t)
        if (step + 1) % store_every == 0 or step + 1 == steps:
            times.append(t)
            xs.append(x.copy())
            ms.append(m.copy())

    return FieldTrajectory(
        times=np.array(times),
        x_values=np.array(xs),
        m_values=np.array(ms),
        max_position_norm=max_pos,
        max_weight_abs=max_wt,
    )


def equivalence_check(
    x0,
    m0,
    kernel: InteractionKernel,
    law: MassLaw,
    T: float,
    dt: float,
    store_every: int = 1,
) -> float:
    """Max over time and cells of |x_N - embedded agents| + |m_N - weights|.

    Both sides run explicit Euler with grid-aligned quadrature from matched
    initial data; the computations are algebraically identical, so the
    deviation is floating-point association noise at most.
    """
    x0 = np.asarray(x0, dtype=float)
    m0 = np.asarray(m0, dtype=float)
    micro_traj = integrate_micro(x0, m0, kernel, law, T, dt, method="euler", store_every=store_every)
    fp0 = FieldPair(embed_piecewise(x0), embed_piecewise(m0))
    graph_traj = integrate_graph(fp0, kernel, law, T, dt, store_every=store_every)
    if micro_traj.times.shape != graph_traj.times.shape:
        raise RuntimeError("solver sampling mismatch in equivalence check")
    dx = np.abs(graph_traj.x_values - micro_traj.positions)
    if dx.ndim == 3:
        dx = dx.max(axis=2)
    dm = np.abs(graph_traj.m_values - micro_traj.weights)
    return float(np.max(dx + dm))


def fields_to_csv(traj: FieldTrajectory, path) -> None:
    """Rows `t, s, x, m` with s at cell midpoints, one block per time."""
    if traj.x_values.ndim != 2:
        raise ValueError("CSV field export is defined for scalar opinions")
    g = traj.cells
    s = (np.arange(g) + 0.5) / g
    rows = []
    for i, t in enumerate(traj.times):
        for j in range(g):
            rows.append((t, s[j], traj.x_values[i, j], traj.m_values[i, j]))
    write_csv(path, ["t", "s", "x", "m"], rows)
