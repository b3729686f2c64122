"""Opinion-space measures and the nonlocal transport PDE with source.

The bridge between the index-space solvers and the measure picture:

* ``empirical_measure``   atoms (x_i, m_i/N) of an agent ensemble
* ``pushforward_measure`` atoms (x(s_i), m(s_i)/G) of a field pair - mass on
  index cells transported to where the opinion profile puts them; for
  embedded ensembles this is the empirical measure on the nose
* ``bin_density``         step-function representation of a measure on a
  truncated opinion interval
* ``velocity_field``      V[mu](x) = integral of phi(y - x) d mu(y)
* ``source_term``         h[mu](x) = (k-fold integral of S) * mu(x)
* ``solve_pde``           Lax-Wendroff for d rho/dt + (V rho)_x = h, with the
  source applied by Strang splitting and V frozen per step at cell faces
* ``wasserstein1``        exact 1-D W1 via the integrated-CDF difference,
  defined for nonnegative inputs of equal total mass
* ``weak_residual``       max defect of the weak form d/dt (mu, f) =
  (V[mu], f') integrated against mu plus (f, h[mu]) over a bank of smooth
  bumps, by central differences in t

Measures are unordered multisets of atoms: equality ignores atom order and
merges exactly co-located atoms. Negative masses can arise when binning
output of the unlimited PDE scheme near Dirac formation; they are flagged
(``signed``) and refused by the metric rather than silently mishandled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .csvio import write_csv
from .errors import BudgetError, MonitorError
from .grids import AgentEnsemble
from .graph_limit import FieldPair
from .kernels import InteractionKernel

__all__ = [
    "ParticleMeasure",
    "DensityGrid",
    "SourceCoupling",
    "GenericSource",
    "GroupInfluenceSource",
    "empirical_measure",
    "pushforward_measure",
    "bin_density",
    "velocity_field",
    "source_term",
    "solve_pde",
    "PdeTrajectory",
    "wasserstein1",
    "weak_residual",
    "CubicBump",
    "default_test_bank",
]


# --------------------------------------------------------------------------
# measures


def _canonical_atoms(locations: np.ndarray, masses: np.ndarray):
    if locations.ndim == 1:
        order = np.argsort(locations, kind="stable")
    else:
        order = np.lexsort(locations.T[::-1])
    locs = locations[order]
    mass = masses[order]
    if locs.shape[0]:
        if locs.ndim == 1:
            new_run = np.concatenate([[True], locs[1:] != locs[:-1]])
        else:
            new_run = np.concatenate([[True], np.any(locs[1:] != locs[:-1], axis=1)])
        run_id = np.cumsum(new_run) - 1
        merged_mass = np.zeros(run_id[-1] + 1)
        np.add.at(merged_mass, run_id, mass)
        merged_locs = locs[new_run]
        keep = merged_mass != 0.0
        return merged_locs[keep], merged_mass[keep]
    return locs, mass


@dataclass(frozen=True, eq=False)
class ParticleMeasure:
    """Finite atomic measure: unordered (location, mass) multiset."""

    locations: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        locs = np.asarray(self.locations, dtype=float).copy()
        mass = np.asarray(self.masses, dtype=float).copy()
        if mass.ndim != 1 or locs.shape[0] != mass.shape[0]:
            raise ValueError("locations and masses must pair up one atom each")
        if not (np.all(np.isfinite(locs)) and np.all(np.isfinite(mass))):
            raise ValueError("atoms must be finite")
        locs.setflags(write=False)
        mass.setflags(write=False)
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "masses", mass)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.masses))

    @property
    def signed(self) -> bool:
        return bool(np.any(self.masses < 0.0))

    @property
    def dim(self) -> int:
        return 1 if self.locations.ndim == 1 else self.locations.shape[1]

    def canonical(self):
        return _canonical_atoms(self.locations, self.masses)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParticleMeasure):
            return NotImplemented
        la, ma = self.canonical()
        lb, mb = other.canonical()
        return la.shape == lb.shape and bool(np.array_equal(la, lb) and np.array_equal(ma, mb))

    def to_csv(self, path) -> None:
        if self.locations.ndim != 1:
            raise ValueError("CSV measure export is defined for 1-D opinions")
        write_csv(path, ["location", "mass"], zip(self.locations, self.masses))


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Cell-averaged density on [lo, hi] over n uniform cells."""

    lo: float
    hi: float
    densities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        if not (self.hi > self.lo):
            raise ValueError("domain must have positive length")
        dens = np.asarray(self.densities, dtype=float).copy()
        if dens.ndim != 1 or dens.shape[0] < 1:
            raise ValueError("densities must be a nonempty 1-D array")
        if not np.all(np.isfinite(dens)):
            raise ValueError("densities must be finite")
        dens.setflags(write=False)
        object.__setattr__(self, "densities", dens)

    @property
    def cells(self) -> int:
        return self.densities.shape[0]

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / self.cells

    @property
    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.cells) + 0.5) * self.dx

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.densities) * self.dx)

    @property
    def signed(self) -> bool:
        return bool(np.any(self.densities < 0.0))

    def as_measure(self, clip_negative: bool = False) -> ParticleMeasure:
        """Atomize at cell midpoints; optionally drop negative cells."""
        dens = self.densities
        if clip_negative:
            dens = np.maximum(dens, 0.0)
        return ParticleMeasure(self.centers, dens * self.dx)

    def to_csv(self, path) -> None:
        write_csv(path, ["x_center", "density"], zip(self.centers, self.densities))


def empirical_measure(ensemble: AgentEnsemble) -> ParticleMeasure:
    """Atoms (x_i, m_i / N); negative weights give a flagged signed measure."""
    return ParticleMeasure(ensemble.positions, ensemble.weights / ensemble.n)


def pushforward_measure(fp: FieldPair) -> ParticleMeasure:
    """Index-cell mass m_i/G transported to the cell's opinion value."""
    g = fp.cells
    return ParticleMeasure(fp.x.values, fp.m.values / g)


def bin_density(pm: ParticleMeasure, lo: float, hi: float, n: int, time: float = 0.0) -> DensityGrid:
    """Step-function representation: cell j carries its atoms' mass / width."""
    if n < 1:
        raise ValueError("need at least one cell")
    if pm.locations.ndim != 1:
        raise ValueError("binning is defined for 1-D opinions")
    locs = pm.locations
    outside = (locs < lo) | (locs > hi)
    if np.any(outside):
        where = locs[np.nonzero(outside)[0][0]]
        raise ValueError(f"atom at {where!r} outside the domain [{lo}, {hi}]")
    dx = (hi - lo) / n
    idx = np.minimum(((locs - lo) / dx).astype(int), n - 1)
    dens = np.zeros(n)
    np.add.at(dens, idx, pm.masses)
    return DensityGrid(lo, hi, dens / dx, time=time)


# --------------------------------------------------------------------------
# nonlocal fields


def _atoms_of(mu) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(mu, ParticleMeasure):
        return mu.locations, mu.masses
    if isinstance(mu, DensityGrid):
        return mu.centers, mu.densities * mu.dx
    raise TypeError(f"expected a measure or density grid, got {type(mu).__name__}")


def velocity_field(mu, kernel: InteractionKernel, x):
    """V[mu](x) = sum_a mass_a phi(loc_a - x), vectorized over query points."""
    locs, masses = _atoms_of(mu)
    x_arr = np.asarray(x, dtype=float)
    if locs.ndim == 1:
        pulls = kernel(locs[None, :] - np.atleast_1d(x_arr)[:, None])
        out = pulls @ masses
        return out if x_arr.ndim else float(out[0])
    pts = np.atleast_2d(x_arr)
    pulls = kernel.eval_vec(locs[None, :, :] - pts[:, None, :])
    out = np.einsum("qad,a->qd", pulls, masses)
    return out if x_arr.ndim > 1 else out[0]


class SourceCoupling:
    """k-fold coupling S defining the source h[mu](x) = (S integrated) mu(x)."""

    k: int = 0
    skew_pair: tuple[int, int] = (0, 1)

    def integrated(self, mu, x: np.ndarray) -> np.ndarray:
        """I(x) = integral of S(x, y_1..y_k) over mu^k at query points x."""
        raise NotImplementedError


class GenericSource(SourceCoupling):
    def __init__(self, coupling: Callable, k: int, skew_pair: tuple[int, int] | None = (0, 1)):
        if k not in (1, 2):
            raise ValueError("source couplings ship with k in {1, 2}")
        self.coupling = coupling
        self.k = k
        self.skew_pair = skew_pair  # None marks a non-conservative coupling

    def integrated(self, mu, x):
        locs, masses = _atoms_of(mu)
        x = np.asarray(x, dtype=float)
        if self.k == 1:
            smat = np.asarray(self.coupling(np.expand_dims(x, -1 if locs.ndim == 1 else 1), locs[None]), dtype=float)
            return smat @ masses
        out = np.empty(x.shape[0])
        row = np.expand_dims(locs, 1)
        col = np.expand_dims(locs, 0)
        for q in range(x.shape[0]):
            smat = np.asarray(self.coupling(x[q], row, col), dtype=float)
            out[q] = float(masses @ smat @ masses)
        return out


class GroupInfluenceSource(SourceCoupling):
    """S(y0,y1,y2) = |phi(y1-y2)| - |phi(y0-y2)| with O(atoms^2) evaluation."""

    k = 2
    skew_pair = (0, 1)

    def __init__(self, kernel: InteractionKernel):
        self.kernel = kernel

    def _pair_norm(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.ndim == 1:
            return np.abs(self.kernel(a[:, None] - b[None, :]))
        diff = a[:, None, :] - b[None, :, :]
        return np.sqrt(np.sum(self.kernel.eval_vec(diff) ** 2, axis=-1))

    def integrated(self, mu, x):
        locs, masses = _atoms_of(mu)
        x = np.asarray(x, dtype=float)
        total = float(np.sum(masses))
        felt = self._pair_norm(locs, locs) @ masses
        pair_total = float(np.dot(masses, felt))
        e_at_x = self._pair_norm(np.atleast_1d(x) if locs.ndim == 1 else np.atleast_2d(x), locs) @ masses
        return pair_total - total * e_at_x


def source_term(mu, coupling: SourceCoupling, x=None):
    """Per-atom (or per-cell, density-valued) source rates of h[mu].

    With ``x`` given, returns the source density factor I(x) * mu-weight is
    not defined off the atoms; the default evaluates at the measure's own
    atoms/cells where h is supported.
    """
    locs, masses = _atoms_of(mu)
    queries = locs if x is None else np.asarray(x, dtype=float)
    integral = coupling.integrated(mu, queries)
    if x is not None:
        return integral
    if isinstance(mu, DensityGrid):
        return integral * mu.densities
    return integral * masses


# --------------------------------------------------------------------------
# transport PDE


@dataclass(frozen=True)
class PdeTrajectory:
    """Stored PDE states plus the diagnostics the run monitors collected."""

    times: np.ndarray
    densities: np.ndarray
    lo: float
    hi: float
    tv_initial: float
    tv_max: float
    min_density: float
    substep_max: int

    @property
    def cells(self) -> int:
        return self.densities.shape[1]

    def grid(self, index: int) -> DensityGrid:
        return DensityGrid(self.lo, self.hi, self.densities[index], time=float(self.times[index]))

    def at_time(self, t: float) -> DensityGrid:
        idx = int(np.argmin(np.abs(self.times - t)))
        return self.grid(idx)


def _total_variation(rho: np.ndarray) -> float:
    return float(np.sum(np.abs(np.diff(rho))))


def solve_pde(
    dg0: DensityGrid,
    kernel: InteractionKernel,
    coupling: SourceCoupling,
    T: float,
    dt: float,
    cfl: float = 0.9,
    store_every: int = 1,
    mass_tol: float = 1e-6,
    max_halvings: int = 12,
    max_steps: int = 2_000_000,
) -> PdeTrajectory:
    """Lax-Wendroff with Strang-split source and zero-gradient boundaries.

    The face velocity is frozen per (sub)step as the average of the two
    neighbouring cell velocities. If the CFL number at dt exceeds ``cfl``
    the step is halved, up to ``max_halvings``. Peaks are never limited;
    total-variation growth is tracked and reported in the result.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T = {T} is not an integer multiple of dt = {dt}")
    if steps > max_steps:
        raise BudgetError(f"{steps} steps exceed the budget of {max_steps}")

    rho = dg0.densities.copy()
    n = rho.shape[0]
    dx = dg0.dx
    centers = dg0.centers
    mass0 = float(np.sum(rho) * dx)
    conservative = coupling is None or coupling.skew_pair is not None

    def half_source(r: np.ndarray, half_dt: float) -> np.ndarray:
        # midpoint rule on d rho/dt = I[rho] * rho
        if coupling is None:
            return r
        rate = coupling.integrated(DensityGrid(dg0.lo, dg0.hi, r), centers)
        mid = r + 0.5 * half_dt * rate * r
        mid_rate = coupling.integrated(DensityGrid(dg0.lo, dg0.hi, mid), centers)
        return r + half_dt * mid_rate * mid

    def transport(r: np.ndarray, step_dt: float) -> np.ndarray:
        grid = DensityGrid(dg0.lo, dg0.hi, r)
        v = velocity_field(grid, kernel, centers)
        v_face = np.empty(n + 1)
        v_face[1:-1] = 0.5 * (v[:-1] + v[1:])
        v_face[0] = v[0]
        v_face[-1] = v[-1]
        ghost = np.concatenate([[r[0]], r, [r[-1]]])
        nu = step_dt / dx
        flux = 0.5 * v_face * (ghost[:-1] + ghost[1:]) - 0.5 * nu * v_face**2 * (ghost[1:] - ghost[:-1])
        return r - nu * (flux[1:] - flux[:-1]), float(np.max(np.abs(v_face)))

    tv0 = _total_variation(rho)
    tv_max = tv0
    min_density = float(np.min(rho))
    substep_max = 1

    times = [0.0]
    stored = [rho.copy()]
    for step in range(steps):
        # pick the substep count from the current CFL number
        grid_now = DensityGrid(dg0.lo, dg0.hi, rho)
        vmax = float(np.max(np.abs(velocity_field(grid_now, kernel, centers))))
        parts = 1
        halvings = 0
        while vmax * (dt / parts) / dx > cfl:
            parts *= 2
            halvings += 1
            if halvings > max_halvings:
                raise BudgetError(
                    f"CFL target {cfl} unreachable at t={step * dt:.6g} "
                    f"after {max_halvings} halvings (|V| = {vmax:.3g})"
                )
        substep_max = max(substep_max, parts)
        sub_dt = dt / parts
        for _ in range(parts):
            rho = half_source(rho, 0.5 * sub_dt)
            rho, _ = transport(rho, sub_dt)
            rho = half_source(rho, 0.5 * sub_dt)
        t = (step + 1) * dt if step + 1 < steps else T
        tv_max = max(tv_max, _total_variation(rho))
        min_density = min(min_density, float(np.min(rho)))
        if conservative:
            drift = abs(float(np.sum(rho) * dx) - mass0)
            if drift > mass_tol:
                raise MonitorError("pde_mass_conservation", t, f"mass drift {drift:.3e} over {mass_tol:.1e}")
        if (step + 1) % store_every == 0 or step + 1 == steps:
            times.append(t)
            stored.append(rho.copy())

    return PdeTrajectory(
        times=np.array(times),
        densities=np.array(stored),
        lo=dg0.lo,
        hi=dg0.hi,
        tv_initial=tv0,
        tv_max=tv_max,
        min_density=min_density,
        substep_max=substep_max,
    )


# --------------------------------------------------------------------------
# Wasserstein-1 and the weak residual


def wasserstein1(a, b, mass_tol: float = 1e-8) -> float:
    """Exact 1-D W1 via the integrated CDF difference.

    Defined for nonnegative measures of equal total mass; signed or
    mass-mismatched inputs are refused.
    """
    la, ma = _atoms_of(a)
    lb, mb = _atoms_of(b)
    if la.ndim != 1 or lb.ndim != 1:
        raise ValueError("W1 is implemented for 1-D opinions")
    if np.any(ma < 0.0) or np.any(mb < 0.0):
        raise ValueError("W1 refuses signed measures; clip or renormalize explicitly first")
    mass_a, mass_b = float(np.sum(ma)), float(np.sum(mb))
    if abs(mass_a - mass_b) > mass_tol:
        raise ValueError(f"W1 needs equal total masses, got {mass_a!r} vs {mass_b!r}")
    locs = np.concatenate([la, lb])
    signed = np.concatenate([ma, -mb])
    order = np.argsort(locs, kind="stable")
    locs = locs[order]
    cum = np.cumsum(signed[order])[:-1]
    return float(np.sum(np.abs(cum) * np.diff(locs)))


@dataclass(frozen=True)
class CubicBump:
    """C^2 compactly supported bump: cubic B-spline scaled to [c-2w, c+2w]."""

    center: float
    width: float

    def __call__(self, x):
        u = np.abs((np.asarray(x, dtype=float) - self.center) / self.width)
        return np.where(
            u < 1.0,
            2.0 / 3.0 - u * u + 0.5 * u**3,
            np.where(u < 2.0, (2.0 - u) ** 3 / 6.0, 0.0),
        )

    def grad(self, x):
        z = (np.asarray(x, dtype=float) - self.center) / self.width
        u = np.abs(z)
        s = np.sign(z)
        mag = np.where(u < 1.0, -2.0 * u + 1.5 * u * u, np.where(u < 2.0, -0.5 * (2.0 - u) ** 2, 0.0))
        return s * mag / self.width


def default_test_bank(lo: float, hi: float) -> list[CubicBump]:
    """Seven centers at three width scales spanning [lo, hi]."""
    span = hi - lo if hi > lo else 1.0
    centers = np.linspace(lo, hi, 7)
    widths = (0.08 * span, 0.15 * span, 0.3 * span)
    return [CubicBump(float(c), float(w)) for c in centers for w in widths]


def weak_residual(
    measures: Sequence[ParticleMeasure],
    dt: float,
    kernel: InteractionKernel,
    coupling: SourceCoupling | None,
    test_functions: Sequence[CubicBump] | None = None,
    eval_stride: int = 1,
) -> float:
    """Max weak-form defect over interior sample times and the test bank.

    ``measures`` must be uniformly spaced by ``dt``; the time derivative of
    (mu_t, f) is taken by central differences at every ``eval_stride``-th
    interior index against the nonlocal transport + source right-hand side.
    """
    if len(measures) < 3:
        raise ValueError("need at least three measures for a central difference")
    if test_functions is None:
        los = min(float(np.min(m.locations)) for m in measures)
        his = max(float(np.max(m.locations)) for m in measures)
        pad = 0.1 * (his - los if his > los else 1.0)
        test_functions = default_test_bank(los - pad, his + pad)

    worst = 0.0
    for i in range(eval_stride, len(measures) - 1, eval_stride):
        mu = measures[i]
        locs, masses = mu.locations, mu.masses
        v = velocity_field(mu, kernel, locs)
        h_atoms = coupling.integrated(mu, locs) * masses if coupling is not None else np.zeros_like(masses)
        before, after = measures[i - 1], measures[i + 1]
        for f in test_functions:
            lhs = (
                float(np.sum(after.masses * f(after.locations)))
                - float(np.sum(before.masses * f(before.locations)))
            ) / (2.0 * dt)
            rhs = float(np.sum(masses * v * f.grad(locs))) + float(np.sum(h_atoms * f(locs)))
            worst = max(worst, abs(lhs - rhs))
    return worst
