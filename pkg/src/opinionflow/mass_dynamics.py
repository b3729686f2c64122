"""Weight-evolution laws coupled to the opinion dynamics.

Four families ship:

* ``ZeroLaw``            frozen weights (reduces the model to plain
                         opinion dynamics with unit influence)
* ``PsiSKLaw``           rate of cell s = m(s) times a k-fold grid integral
                         of a skew-symmetric coupling S against the weight
                         profile; conserves total mass and preserves
                         indistinguishability
* ``GroupInfluenceLaw``  the "less influenced agents gain weight" instance:
                         psi_i = m_i (ebar - e_i) / N with e_i the total
                         influence felt by agent i and ebar its weighted
                         mean; algebraically the k = 2 PsiSK law with
                         S(y0,y1,y2) = |phi(y1-y2)| - |phi(y0-y2)| whenever
                         the mean weight is 1, but evaluated in O(N^2)
* ``LeaderFollowerLaw``  K groups, each splitting into leaders (first r
                         fraction of its index cells) and followers; leaders
                         gain at rate gain * m_i * (follower mass of the
                         group), followers lose against the leader mass.
                         Conserves mass group-wise but is label-sensitive,
                         so it does not preserve indistinguishability.

Every law evaluates on plain value arrays (x, m), and the same formula
serves both the N-agent system and graph-limit fields sampled on a grid:
for piecewise-constant profiles the k-fold integrals collapse to grid sums
with cell weight 1/N, so the cell average defining the discrete rate equals
the cell value. Laws are immutable; ``rates`` is pure and reduces with
deterministic sequential numpy sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BudgetError, EvaluationError
from .kernels import InteractionKernel
from .sampling import as_box, box_points

__all__ = [
    "MassLaw",
    "ZeroLaw",
    "PsiSKLaw",
    "GroupInfluenceLaw",
    "LeaderFollowerLaw",
    "discretize_mass_law",
    "probe_hypotheses",
    "HypothesisReport",
    "group_influence_coupling",
]

# direct k-fold summation is O(N^(k+1)); refuse runs past this many couplings
DEFAULT_COST_CAP = 100_000_000


def _pair_norm(kernel: InteractionKernel, x: np.ndarray) -> np.ndarray:
    """Matrix |phi(x_i - x_j)| for scalar or vector opinions."""
    if x.ndim == 1:
        return np.abs(kernel(x[:, None] - x[None, :]))
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt(np.sum(kernel.eval_vec(diff) ** 2, axis=-1))


class MassLaw:
    """Base interface; subclasses fill in rate computation and metadata."""

    kind = "abstract"
    conserves_mass = False
    preserves_indistinguishability = False
    is_psi_sk = False  # positivity / growth monitors apply
    k = 0

    def rates(self, x: np.ndarray, m: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def rate_coefficient(self, x: np.ndarray, m: np.ndarray) -> float:
        """C with |psi_i| <= C * m_i on states like (x, m); 0 if rate-free."""
        raise NotImplementedError

    def coupling_bound(self, x: np.ndarray) -> float | None:
        """Declared bound on the coupling S, None for laws without one."""
        return None

    def validate_grid(self, n: int) -> None:
        """Raise ValueError if the law cannot live on an n-cell grid."""


class ZeroLaw(MassLaw):
    kind = "zero"
    conserves_mass = True
    preserves_indistinguishability = True

    def rates(self, x, m):
        return np.zeros_like(np.asarray(m, dtype=float))

    def rate_coefficient(self, x, m):
        return 0.0

    def __repr__(self):
        return "ZeroLaw()"


class PsiSKLaw(MassLaw):
    """Weight rate m(s) * k-fold grid integral of m...m S(x(s), x(s1), ..., x(sk)).

    ``coupling`` must broadcast over its k+1 arguments (elementwise for
    scalar opinions; last-axis vectors reduced to a scalar for d > 1).
    ``skew_pair`` names the declared antisymmetric argument pair of S;
    ``integral_zero_declared`` opts a non-skew S into the conservation
    monitors on the caller's declared authority, without verification beyond
    the grid sums the monitors already take.
    """

    kind = "psi_sk"
    conserves_mass = True
    preserves_indistinguishability = True
    is_psi_sk = True

    def __init__(
        self,
        order: int,
        coupling: Callable,
        s_bar: float,
        l_s: float,
        skew_pair: tuple[int, int] = (0, 1),
        name: str = "custom",
        integral_zero_declared: bool = False,
        cost_cap: int = DEFAULT_COST_CAP,
    ):
        if order not in (1, 2):
            raise ValueError("PsiSKLaw ships with k in {1, 2}")
        i, j = skew_pair
        if not (0 <= i <= order and 0 <= j <= order and i != j):
            raise ValueError("skew_pair must name two distinct S arguments")
        self.order = order
        self.coupling = coupling
        self.s_bar = float(s_bar)
        self.l_s = float(l_s)
        self.skew_pair = (i, j)
        self.name = name
        self.integral_zero_declared = integral_zero_declared
        self.cost_cap = cost_cap

    @property
    def k(self) -> int:
        return self.order

    def _check_budget(self, n: int) -> None:
        if n ** (self.order + 1) > self.cost_cap:
            raise BudgetError(
                f"psi_sk k={self.order} on {n} cells needs {n ** (self.order + 1)} "
                f"couplings, over the cap of {self.cost_cap}"
            )

    def rates(self, x, m):
        x = np.asarray(x, dtype=float)
        m = np.asarray(m, dtype=float)
        n = m.shape[0]
        self._check_budget(n)
        y_row = np.expand_dims(x, 1)  # (N, 1[, d])
        y_col = np.expand_dims(x, 0)  # (1, N[, d])
        if self.order == 1:
            smat = np.asarray(self.coupling(y_row, y_col), dtype=float)
            vals = (smat @ m) / n
        else:
            vals = np.empty(n)
            for i in range(n):
                smat = np.asarray(self.coupling(x[i], y_row, y_col), dtype=float)
                vals[i] = float(m @ smat @ m) / (n * n)
        if not np.all(np.isfinite(vals)):
            bad = int(np.nonzero(~np.isfinite(vals))[0][0])
            raise EvaluationError(f"psi_sk coupling produced a non-finite rate at cell {bad}")
        return m * vals

    def rate_coefficient(self, x, m):
        m0 = float(np.mean(m))
        return (m0 ** self.order) * self.s_bar

    def coupling_bound(self, x):
        return self.s_bar

    def __repr__(self):
        return f"PsiSKLaw(k={self.order}, name={self.name!r})"


class GroupInfluenceLaw(MassLaw):
    """Influence-balancing weights: agents under less total influence gain."""

    kind = "group_influence"
    conserves_mass = True
    preserves_indistinguishability = True
    is_psi_sk = True
    k = 2

    def __init__(self, kernel: InteractionKernel):
        self.kernel = kernel

    def rates(self, x, m):
        x = np.asarray(x, dtype=float)
        m = np.asarray(m, dtype=float)
        n = m.shape[0]
        influence = _pair_norm(self.kernel, x) @ m  # e_i
        mean_influence = float(np.dot(m, influence)) / n  # ebar
        return m * (mean_influence - influence) / n

    def coupling_bound(self, x) -> float:
        """Declared bound 2 sup|phi|, over the opinion hull when needed."""
        x = np.asarray(x, dtype=float)
        if self.kernel.kind in ("zero", "rational_radial", "compact_sine"):
            return 2.0 * self.kernel.sup_norm()
        lo = np.atleast_1d(x.min(axis=0))
        hi = np.atleast_1d(x.max(axis=0))
        span = np.maximum(hi - lo, 1e-9)
        box = np.stack([lo - 0.05 * span, hi + 0.05 * span], axis=1)
        return 2.0 * self.kernel.sup_norm(box)

    def rate_coefficient(self, x, m):
        m0 = float(np.mean(m))
        return max(m0, m0 * m0) * self.coupling_bound(x)

    def as_psi_sk(self, s_bar: float | None = None) -> PsiSKLaw:
        """Equivalent generic k = 2 law (exact when the mean weight is 1)."""
        if s_bar is None:
            s_bar = (
                2.0 * self.kernel.sup_norm()
                if self.kernel.kind in ("zero", "rational_radial", "compact_sine")
                else float("inf")
            )
        return PsiSKLaw(
            order=2,
            coupling=group_influence_coupling(self.kernel),
            s_bar=s_bar,
            l_s=3.0 * self.kernel.lipschitz_bound() if self.kernel.kind != "custom" else float("nan"),
            skew_pair=(0, 1),
            name="group_influence",
        )

    def __repr__(self):
        return f"GroupInfluenceLaw(kernel={self.kernel.kind})"


def group_influence_coupling(kernel: InteractionKernel) -> Callable:
    """S(y0, y1, y2) = |phi(y1 - y2)| - |phi(y0 - y2)|, skew in (y0, y1)."""

    def coupling(y0, y1, y2):
        return np.abs(kernel(y1 - y2)) - np.abs(kernel(y0 - y2))

    return coupling


class LeaderFollowerLaw(MassLaw):
    """Within each of K index groups, leaders siphon weight from followers."""

    kind = "leader_follower"
    conserves_mass = True
    preserves_indistinguishability = False

    def __init__(self, groups: int, leader_fraction: float, gain: float):
        if groups < 1:
            raise ValueError("groups must be >= 1")
        if not (0.0 < leader_fraction < 1.0):
            raise ValueError("leader_fraction must lie in (0, 1)")
        if not (gain > 0):
            raise ValueError("gain must be positive")
        self.groups = groups
        self.leader_fraction = leader_fraction
        self.gain = gain

    def partition(self, n: int) -> tuple[int, int]:
        """(group size, leaders per group) on an n-cell grid, validated."""
        if n % self.groups:
            raise ValueError(
                f"grid size {n} is not a multiple of the group count {self.groups}"
            )
        size = n // self.groups
        leaders = self.leader_fraction * size
        if abs(leaders - round(leaders)) > 1e-9 or round(leaders) < 1:
            raise ValueError(
                "leader count per group must be a whole number >= 1; "
                f"got {self.leader_fraction} * {size} = {leaders}"
            )
        return size, int(round(leaders))

    def validate_grid(self, n: int) -> None:
        self.partition(n)

    def leader_indices(self, n: int) -> np.ndarray:
        size, leaders = self.partition(n)
        base = np.arange(self.groups) * size
        return (base[:, None] + np.arange(leaders)[None, :]).ravel()

    def rates(self, x, m):
        m = np.asarray(m, dtype=float)
        n = m.shape[0]
        size, leaders = self.partition(n)
        grouped = m.reshape(self.groups, size)
        leader_mass = grouped[:, :leaders].sum(axis=1)
        follower_mass = grouped[:, leaders:].sum(axis=1)
        out = np.empty_like(grouped)
        out[:, :leaders] = self.gain / n * grouped[:, :leaders] * follower_mass[:, None]
        out[:, leaders:] = -self.gain / n * grouped[:, leaders:] * leader_mass[:, None]
        return out.reshape(n)

    def rate_coefficient(self, x, m):
        return self.gain * float(np.mean(np.asarray(m, dtype=float)))

    def __repr__(self):
        return (
            f"LeaderFollowerLaw(groups={self.groups}, "
            f"leader_fraction={self.leader_fraction}, gain={self.gain})"
        )


def discretize_mass_law(law: MassLaw, x, m) -> np.ndarray:
    """Per-cell weight rates psi_i on an N-cell grid.

    The shipped laws are cell-constant on piecewise-constant profiles, so the
    cell average defining the discrete rate equals the cell value and this is
    ``law.rates`` after grid validation.
    """
    x = np.asarray(x, dtype=float)
    m = np.asarray(m, dtype=float)
    if x.shape[0] != m.shape[0]:
        raise ValueError("opinion and weight arrays disagree on the cell count")
    law.validate_grid(m.shape[0])
    return law.rates(x, m)


@dataclass(frozen=True)
class HypothesisReport:
    """Sampled estimates of the structural constants a law is declared with.

    Estimates, not certificates: they lower-bound the true constants on the
    probed box. ``skew_ok`` is None for laws without an S coupling.
    """

    skew_ok: bool | None
    skew_witness: tuple | None
    s_bar_est: float | None
    l_s_est: float | None
    c_psi_est: float

    @property
    def all_ok(self) -> bool:
        return self.skew_ok is not False


def _probe_states(law: MassLaw, box: np.ndarray, samples: int):
    d = box.shape[0]
    if isinstance(law, LeaderFollowerLaw):
        size = 1
        while (
            abs(law.leader_fraction * size - round(law.leader_fraction * size)) > 1e-9
            or round(law.leader_fraction * size) < 1
        ):
            size += 1
        n = law.groups * size
    else:
        n = 8
    count = max(4, samples // 16)
    for trial in range(count):
        pts = box_points(n, box, skip=101 + trial * n)
        x = pts[:, 0] if d == 1 else pts
        m = 2.0 * box_points(n, np.array([[0.0, 1.0]]), skip=577 + trial * n)[:, 0]
        yield x, m


def probe_hypotheses(law: MassLaw, box, samples: int = 256) -> HypothesisReport:
    """Probe skew-symmetry, boundedness, Lipschitz and sublinearity constants."""
    b = as_box(box)
    d = b.shape[0]

    if isinstance(law, ZeroLaw):
        return HypothesisReport(True, None, 0.0, 0.0, 0.0)

    coupling = order = pair = None
    if isinstance(law, PsiSKLaw):
        coupling, order, pair = law.coupling, law.order, law.skew_pair
    elif isinstance(law, GroupInfluenceLaw):
        coupling, order, pair = group_influence_coupling(law.kernel), 2, (0, 1)

    skew_ok: bool | None = None
    witness = None
    s_bar_est = None
    l_s_est = None

    if coupling is not None:
        wide = np.tile(b, (order + 1, 1))
        tuples = box_points(samples, wide, skip=0)

        def split(arr):
            parts = [arr[:, i * d : (i + 1) * d] for i in range(order + 1)]
            return [p[:, 0] for p in parts] if d == 1 else parts

        points = split(tuples)
        vals = np.asarray(coupling(*points), dtype=float)
        s_bar_est = float(np.max(np.abs(vals)))

        swapped = list(points)
        swapped[pair[0]], swapped[pair[1]] = swapped[pair[1]], swapped[pair[0]]
        anti = np.asarray(coupling(*swapped), dtype=float)
        gap = np.abs(vals + anti)
        worst = int(np.argmax(gap))
        skew_ok = bool(gap[worst] <= 1e-12)
        if not skew_ok:
            witness = (tuple(np.atleast_1d(p)[worst] for p in points), float(gap[worst]))

        # Lipschitz via geometric-ladder difference quotients in tuple space
        ladder = 2.0 ** (-1.0 - (np.arange(samples) % 20))
        shift = box_points(samples, wide, skip=4242) - tuples
        norms = np.sqrt(np.sum(shift * shift, axis=1, keepdims=True))
        shift = np.where(norms > 0, shift / norms, 0.0) * ladder[:, None]
        moved = np.clip(tuples + shift, wide[:, 0], wide[:, 1])
        moved_pts = split(moved)
        moved_vals = np.asarray(coupling(*moved_pts), dtype=float)
        denom = np.zeros(samples)
        for a, c in zip(points, moved_pts):
            diff = c - a
            denom += np.abs(diff) if d == 1 else np.sqrt(np.sum(diff * diff, axis=-1))
        keep = denom > 0
        l_s_est = (
            float(np.max(np.abs(moved_vals[keep] - vals[keep]) / denom[keep]))
            if np.any(keep)
            else 0.0
        )

    c_psi = 0.0
    for x, m in _probe_states(law, b, samples):
        psi = law.rates(x, m)
        c_psi = max(c_psi, float(np.max(np.abs(psi)) / (1.0 + np.max(np.abs(m)))))

    return HypothesisReport(skew_ok, witness, s_bar_est, l_s_est, c_psi)
