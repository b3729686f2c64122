"""Time integration of the N-agent opinion/weight system.

The state is 2N-dimensional: dx_i/dt = (1/N) sum_j m_j phi(x_j - x_i) and
dm_i/dt given by the scenario's mass law. Fixed-step classical RK4 is the
default; explicit Euler exists to match the graph-limit solver step for step
in the exact-equivalence check. Identical inputs produce bit-identical
trajectories: no RNG, no adaptivity, deterministic numpy reductions.

Runtime monitors encode theorem conclusions and abort the run on violation:

* total-weight drift for conservative laws,
* strict weight positivity plus the exponential growth envelope
  m_i(t) <= m_i(0) exp(M0^k Sbar t) for the skew-coupled law family,
* recorded running maxima of |x_i| and |m_i|.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BudgetError, MonitorError
from .grids import AgentEnsemble, embed_piecewise
from .kernels import InteractionKernel
from .mass_dynamics import MassLaw
from .csvio import write_csv

__all__ = [
    "Trajectory",
    "MonitorConfig",
    "position_rates",
    "rhs_micro",
    "integrate",
    "indistinguishability_check",
    "IndistinguishabilityVerdict",
    "empirical_invariance_check",
]


def position_rates(x: np.ndarray, m: np.ndarray, kernel: InteractionKernel) -> np.ndarray:
    """(1/N) sum_j m_j phi(x_j - x_i); shared verbatim with the graph solver."""
    n = m.shape[0]
    if x.ndim == 1:
        pulls = kernel(x[None, :] - x[:, None])  # (i, j) entry phi(x_j - x_i)
        return (pulls @ m) / n
    pulls = kernel.eval_vec(x[None, :, :] - x[:, None, :])
    return np.einsum("ijd,j->id", pulls, m) / n


def rhs_micro(
    x: np.ndarray, m: np.ndarray, kernel: InteractionKernel, law: MassLaw
) -> tuple[np.ndarray, np.ndarray]:
    """Position and weight rates for one state; aborts on non-finite output."""
    dx = position_rates(x, m, kernel)
    dm = law.rates(x, m)
    if not np.all(np.isfinite(dx)):
        flat = np.isfinite(dx.reshape(dx.shape[0], -1)).all(axis=1)
        raise MonitorError("finite_rates", float("nan"), f"agent {int(np.nonzero(~flat)[0][0])} position rate")
    if not np.all(np.isfinite(dm)):
        raise MonitorError("finite_rates", float("nan"), f"agent {int(np.nonzero(~np.isfinite(dm))[0][0])} weight rate")
    return dx, dm


@dataclass(frozen=True)
class MonitorConfig:
    """Tolerances for the per-step run monitors.

    ``mass_drift_coeff`` is multiplied by N; positivity/growth apply only to
    laws of the skew-coupled family started from positive weights.
    """

    mass_drift_coeff: float = 1e-8
    growth_slack: float = 1e-6
    max_steps: int = 2_000_000
    enabled: bool = True


@dataclass(frozen=True)
class Trajectory:
    """Sampled states of one integration; arrays are (nt, N[, d]) snapshots."""

    times: np.ndarray
    positions: np.ndarray
    weights: np.ndarray
    max_position_norm: float
    max_weight_abs: float

    @property
    def n_agents(self) -> int:
        return self.weights.shape[1]

    def ensemble(self, index: int) -> AgentEnsemble:
        return AgentEnsemble(
            positions=self.positions[index],
            weights=self.weights[index],
            time=float(self.times[index]),
        )

    def final(self) -> AgentEnsemble:
        return self.ensemble(len(self.times) - 1)

    def to_csv(self, path) -> None:
        """Rows `t, x_1..x_N, m_1..m_N` at full double precision."""
        if self.positions.ndim != 2:
            raise ValueError("CSV trajectory export is defined for scalar opinions")
        n = self.n_agents
        header = ["t"] + [f"x_{i + 1}" for i in range(n)] + [f"m_{i + 1}" for i in range(n)]
        rows = np.column_stack([self.times, self.positions, self.weights])
        write_csv(path, header, rows)


class _Monitors:
    def __init__(
        self,
        x0: np.ndarray,
        m0: np.ndarray,
        law: MassLaw,
        config: MonitorConfig,
    ):
        self.config = config
        self.law = law
        self.n = m0.shape[0]
        self.mass0 = float(np.sum(m0))
        self.m0 = m0.copy()
        self.mean0 = float(np.mean(m0))
        self.check_positive = bool(law.is_psi_sk and np.all(m0 > 0))
        s_bar = law.coupling_bound(x0) if self.check_positive else None
        self.growth_rate = (self.mean0 ** law.k) * s_bar if s_bar is not None else None
        self.max_position_norm = 0.0
        self.max_weight_abs = 0.0

    def observe(self, t: float, x: np.ndarray, m: np.ndarray) -> None:
        norms = np.abs(x) if x.ndim == 1 else np.sqrt(np.sum(x * x, axis=1))
        self.max_position_norm = max(self.max_position_norm, float(np.max(norms)))
        self.max_weight_abs = max(self.max_weight_abs, float(np.max(np.abs(m))))
        if not self.config.enabled:
            return
        if self.law.conserves_mass:
            drift = abs(float(np.sum(m)) - self.mass0)
            if drift > self.config.mass_drift_coeff * self.n:
                raise MonitorError(
                    "mass_conservation", t,
                    f"|sum m - {self.mass0:.12g}| = {drift:.3e} over {self.config.mass_drift_coeff * self.n:.3e}",
                )
        if self.check_positive:
            if np.any(m <= 0.0):
                bad = int(np.nonzero(m <= 0.0)[0][0])
                raise MonitorError("weight_positivity", t, f"m_{bad + 1} = {m[bad]:.3e} <= 0")
            if self.growth_rate is not None:
                envelope = self.m0 * np.exp(self.growth_rate * t) * (1.0 + self.config.growth_slack)
                if np.any(m > envelope):
                    bad = int(np.nonzero(m > envelope)[0][0])
                    raise MonitorError(
                        "weight_growth_bound", t,
                        f"m_{bad + 1} = {m[bad]:.6g} over envelope {envelope[bad]:.6g}",
                    )


def _steps_for(T: float, dt: float, max_steps: int) -> int:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < 0:
        raise ValueError("T must be nonnegative")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T = {T} is not an integer multiple of dt = {dt}")
    if steps > max_steps:
        raise BudgetError(f"{steps} steps exceed the budget of {max_steps}")
    return steps


def integrate(
    x0,
    m0,
    kernel: InteractionKernel,
    law: MassLaw,
    T: float,
    dt: float,
    method: str = "rk4",
    store_every: int = 1,
    monitors: MonitorConfig | None = None,
) -> Trajectory:
    """Fixed-step integration from t=0 to t=T with per-step monitors.

    ``store_every`` thins the stored snapshots; the initial and final states
    are always kept. The final stored time is exactly T.
    """
    if method not in ("rk4", "euler"):
        raise ValueError(f"unknown method {method!r}")
    x = np.array(x0, dtype=float)
    m = np.array(m0, dtype=float)
    law.validate_grid(m.shape[0])
    config = monitors or MonitorConfig()
    steps = _steps_for(T, dt, config.max_steps)
    watch = _Monitors(x, m, law, config)
    watch.observe(0.0, x, m)

    times = [0.0]
    xs = [x.copy()]
    ms = [m.copy()]
    for step in range(steps):
        if method == "rk4":
            k1x, k1m = rhs_micro(x, m, kernel, law)
            k2x, k2m = rhs_micro(x + 0.5 * dt * k1x, m + 0.5 * dt * k1m, kernel, law)
            k3x, k3m = rhs_micro(x + 0.5 * dt * k2x, m + 0.5 * dt * k2m, kernel, law)
            k4x, k4m = rhs_micro(x + dt * k3x, m + dt * k3m, kernel, law)
            x = x + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            m = m + (dt / 6.0) * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)
        else:
            dx, dm = rhs_micro(x, m, kernel, law)
            x = x + dt * dx
            m = m + dt * dm
        t = (step + 1) * dt if step + 1 < steps else T
        watch.observe(t, x, m)
        if (step + 1) % store_every == 0 or step + 1 == steps:
            times.append(t)
            xs.append(x.copy())
            ms.append(m.copy())

    return Trajectory(
        times=np.array(times),
        positions=np.array(xs),
        weights=np.array(ms),
        max_position_norm=watch.max_position_norm,
        max_weight_abs=watch.max_weight_abs,
    )


@dataclass(frozen=True)
class IndistinguishabilityVerdict:
    preserved: bool
    time: float | None = None
    which: str | None = None
    index: int | None = None
    deviation: float = 0.0
    equal_position_dev: float = 0.0  # worst in-group position spread seen

    def __bool__(self) -> bool:
        return self.preserved


_SPLITS = ("all_on_first", "uniform", "alternating_halves")


def split_masses(total: float, count: int, scheme: str) -> np.ndarray:
    """Deterministic redistributions of a group total over ``count`` agents."""
    if scheme == "all_on_first":
        out = np.zeros(count)
        out[0] = total
        return out
    if scheme == "uniform":
        return np.full(count, total / count)
    if scheme == "alternating_halves":
        out = np.full(count, total / count)
        half = total / (2 * count)
        out[0::2] += half
        out[1::2] -= half
        if count % 2:
            out -= (out.sum() - total) / count
        return out
    raise ValueError(f"unknown mass split scheme {scheme!r}; pick one of {_SPLITS}")


def indistinguishability_check(
    law: MassLaw,
    kernel: InteractionKernel,
    x0,
    m0,
    group: Sequence[int],
    T: float,
    dt: float,
    mass_split: str = "all_on_first",
    tol: float = 1e-7,
    store_every: int = 10,
) -> IndistinguishabilityVerdict:
    """Integrate a state and a regrouped twin and compare the outcomes.

    The twin keeps every position, every weight outside ``group``, and the
    total weight on ``group``, but redistributes that total per
    ``mass_split``. Both initial states force equal positions on ``group``.
    Preservation means: equal positions everywhere, equal weights off the
    group, equal group weight sum, and group positions staying equal, all
    within ``tol`` at every sampled time.
    """
    x0 = np.array(x0, dtype=float)
    m0 = np.array(m0, dtype=float)
    group = sorted(int(i) for i in group)
    n = m0.shape[0]
    if len(group) < 2:
        raise ValueError("group must contain at least two indices")
    if group[0] < 0 or group[-1] >= n:
        raise ValueError(f"group indices out of range for N = {n}")

    x_base = x0.copy()
    x_base[group] = x_base[group[0]]
    p0 = m0.copy()
    p0[group] = split_masses(float(m0[group].sum()), len(group), mass_split)

    run_a = integrate(x_base, m0, kernel, law, T, dt, store_every=store_every,
                      monitors=MonitorConfig(enabled=False))
    run_b = integrate(x_base, p0, kernel, law, T, dt, store_every=store_every,
                      monitors=MonitorConfig(enabled=False))

    off_group = np.setdiff1d(np.arange(n), group)
    in_group_spread = 0.0
    for i, t in enumerate(run_a.times):
        xa, ma = run_a.positions[i], run_a.weights[i]
        xb, mb = run_b.positions[i], run_b.weights[i]
        for run_x in (xa, xb):
            spread = float(np.max(np.abs(run_x[group] - run_x[group[0]])))
            in_group_spread = max(in_group_spread, spread)
        dev = float(np.max(np.abs(xa - xb)))
        if dev > tol:
            return IndistinguishabilityVerdict(
                False, float(t), "positions_equal_across_runs",
                int(np.argmax(np.abs(xa - xb).reshape(n, -1).max(axis=1))), dev,
                in_group_spread)
        dev = float(np.max(np.abs(xa[group] - xa[group[0]])))
        if dev > tol:
            return IndistinguishabilityVerdict(
                False, float(t), "group_positions_equal", group[0], dev, in_group_spread)
        if off_group.size:
            gaps = np.abs(ma[off_group] - mb[off_group])
            dev = float(np.max(gaps))
            if dev > tol:
                return IndistinguishabilityVerdict(
                    False, float(t), "off_group_weights_equal",
                    int(off_group[np.argmax(gaps)]), dev, in_group_spread)
        dev = abs(float(ma[group].sum()) - float(mb[group].sum()))
        if dev > tol:
            return IndistinguishabilityVerdict(
                False, float(t), "group_weight_sum_equal", group[0], dev, in_group_spread)
    return IndistinguishabilityVerdict(True, equal_position_dev=in_group_spread)


def empirical_invariance_check(
    ensemble: AgentEnsemble,
    permutation: Sequence[int] | None = None,
    grouping: Sequence[int] | None = None,
) -> float:
    """Distance between the agent measure and its relabeled/grouped image.

    Returns exactly 0.0 when the transformation is measure-preserving.
    Grouping merges the listed agents into one atom carrying their summed
    weight and requires them to be exactly co-located.
    """
    from .mean_field import empirical_measure, wasserstein1

    base = empirical_measure(ensemble)
    positions = ensemble.positions
    weights = ensemble.weights
    if permutation is not None:
        perm = np.asarray(permutation, dtype=int)
        if sorted(perm.tolist()) != list(range(ensemble.n)):
            raise ValueError("not a permutation of the agent indices")
        other = AgentEnsemble(positions[perm], weights[perm], ensemble.time)
        image = empirical_measure(other)
    elif grouping is not None:
        idx = sorted(int(i) for i in grouping)
        ref = positions[idx[0]]
        for i in idx[1:]:
            if not np.array_equal(positions[i], ref):
                raise ValueError(f"grouping requires co-located agents; agent {i} differs")
        keep = np.setdiff1d(np.arange(ensemble.n), idx)
        locs = [positions[i] for i in keep] + [ref]
        mass = [weights[i] for i in keep] + [float(weights[idx].sum())]
        from .mean_field import ParticleMeasure

        image = ParticleMeasure(
            locations=np.array(locs), masses=np.array(mass) / ensemble.n
        )
    else:
        raise ValueError("provide a permutation or a grouping")
    if base == image:
        return 0.0
    return wasserstein1(base, image)
