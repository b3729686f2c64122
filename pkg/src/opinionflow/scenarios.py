"""Scenario files: one JSON object fully describing an experiment.

Schema (unknown fields are rejected, as are unknown nested keys):

    {
      "name": str,
      "dimension": 1,
      "kernel": {"kind": "linear" | "rational_radial" | "compact_sine"
                         | "zero", "radius": float (compact_sine only)},
      "mass_law": {"kind": "zero"}
                | {"kind": "group_influence"}
                | {"kind": "leader_follower", "groups": int,
                   "leader_fraction": float, "gain": float}
                | {"kind": "psi_sk", "s_kernel": "sine_difference",
                   "order": 1},
      "initial": {"x0": name-or-{"table": [...]},
                  "m0": name-or-{"table": [...]}},
      "T": float, "dt": float,
      "N_list": [int, ...],
      "pde": {"padding": float, "cells": int, "cfl": float} (optional),
      "tolerances": {...} (optional overrides, see Tolerances)
    }

Loading resolves built-in profile names, constructs the kernel and law
objects, and pre-flights every N in N_list against the law's grid
constraints so partition errors surface before any stepping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError
from .grids import GridFunction, embed_piecewise, project_discrete
from .graph_limit import FieldPair
from .initial_data import BUILTIN_PROFILES, InitialProfile, builtin_profile
from .kernels import InteractionKernel
from .mass_dynamics import (
    GroupInfluenceLaw,
    LeaderFollowerLaw,
    MassLaw,
    PsiSKLaw,
    ZeroLaw,
)

__all__ = [
    "Tolerances",
    "PdeConfig",
    "Scenario",
    "load_scenario",
    "builtin_scenario_path",
    "builtin_scenario_names",
]


@dataclass(frozen=True)
class Tolerances:
    """Pass/fail thresholds; scenario files may override any field."""

    mass_drift_micro_coeff: float = 1e-8  # x N agents
    mass_drift_graph: float = 1e-6
    mass_drift_pde: float = 1e-6
    indistinguishability: float = 1e-7
    equal_position: float = 1e-10
    growth_slack_micro: float = 1e-6
    growth_slack_graph: float = 1e-4
    sweep_slack: float = 0.10
    sweep_projection_factor: float = 2.0
    consensus_gap: float = 0.01
    subordination_w1: float = 0.05
    source_neutrality: float = 1e-10


@dataclass(frozen=True)
class PdeConfig:
    padding: float = 0.25
    cells: int = 200
    cfl: float = 0.9


_NAMED_COUPLINGS: dict[str, tuple[Callable, int, float, float]] = {
    # name -> (coupling, order, s_bar, l_s); sine keeps all constants global
    "sine_difference": (lambda y0, y1: np.sin(y1 - y0), 1, 1.0, 1.0),
}


@dataclass(frozen=True)
class Scenario:
    name: str
    dimension: int
    kernel: InteractionKernel
    mass_law: MassLaw
    x0: InitialProfile | GridFunction
    m0: InitialProfile | GridFunction
    T: float
    dt: float
    n_list: tuple[int, ...]
    pde: PdeConfig | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)

    def initial_state(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Projected initial opinions and weights on n cells."""
        self.mass_law.validate_grid(n)
        return _averages(self.x0, n), _averages(self.m0, n)

    def initial_fields(self, n: int) -> FieldPair:
        x, m = self.initial_state(n)
        return FieldPair(embed_piecewise(x), embed_piecewise(m))

    def steps(self, dt: float | None = None) -> int:
        return int(round(self.T / (dt or self.dt)))


def _averages(profile, n: int) -> np.ndarray:
    if isinstance(profile, GridFunction):
        return project_discrete(profile, n)
    return profile.cell_averages(n)


def _require_keys(obj: dict, allowed: set[str], required: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"{where}: missing required field(s) {sorted(missing)}")


def _build_kernel(spec: dict) -> InteractionKernel:
    if not isinstance(spec, dict):
        raise ConfigError("kernel: expected an object with a 'kind'")
    _require_keys(spec, {"kind", "radius"}, {"kind"}, "kernel")
    kind = spec["kind"]
    try:
        if kind == "compact_sine":
            if "radius" not in spec:
                raise ConfigError("kernel.radius: required for compact_sine")
            return InteractionKernel.compact_sine(float(spec["radius"]))
        if "radius" in spec:
            raise ConfigError(f"kernel.radius: not accepted for kind {kind!r}")
        return InteractionKernel(kind)
    except ValueError as exc:
        raise ConfigError(f"kernel: {exc}") from exc


def _build_law(spec: dict, kernel: InteractionKernel) -> MassLaw:
    if not isinstance(spec, dict):
        raise ConfigError("mass_law: expected an object with a 'kind'")
    kind = spec.get("kind")
    try:
        if kind == "zero":
            _require_keys(spec, {"kind"}, {"kind"}, "mass_law")
            return ZeroLaw()
        if kind == "group_influence":
            _require_keys(spec, {"kind"}, {"kind"}, "mass_law")
            return GroupInfluenceLaw(kernel)
        if kind == "leader_follower":
            _require_keys(
                spec, {"kind", "groups", "leader_fraction", "gain"},
                {"kind", "groups", "leader_fraction", "gain"}, "mass_law",
            )
            return LeaderFollowerLaw(
                groups=int(spec["groups"]),
                leader_fraction=float(spec["leader_fraction"]),
                gain=float(spec["gain"]),
            )
        if kind == "psi_sk":
            _require_keys(spec, {"kind", "s_kernel", "order"}, {"kind", "s_kernel"}, "mass_law")
            name = spec["s_kernel"]
            if name not in _NAMED_COUPLINGS:
                raise ConfigError(
                    f"mass_law.s_kernel: unknown coupling {name!r}; "
                    f"named couplings are {sorted(_NAMED_COUPLINGS)}"
                )
            coupling, order, s_bar, l_s = _NAMED_COUPLINGS[name]
            if "order" in spec and int(spec["order"]) != order:
                raise ConfigError(f"mass_law.order: {name!r} has order {order}")
            return PsiSKLaw(order=order, coupling=coupling, s_bar=s_bar, l_s=l_s, name=name)
    except ValueError as exc:
        raise ConfigError(f"mass_law: {exc}") from exc
    raise ConfigError(f"mass_law.kind: unknown kind {kind!r}")


def _build_profile(spec, role: str, where: str):
    if isinstance(spec, str):
        try:
            profile = builtin_profile(spec)
        except KeyError as exc:
            raise ConfigError(f"{where}: {exc.args[0]}") from exc
        if profile.role != role:
            raise ConfigError(f"{where}: profile {spec!r} is a {profile.role} profile")
        return profile
    if isinstance(spec, dict):
        _require_keys(spec, {"table"}, {"table"}, where)
        table = np.asarray(spec["table"], dtype=float)
        if table.ndim != 1 or table.size == 0:
            raise ConfigError(f"{where}.table: expected a nonempty flat array")
        return embed_piecewise(table)
    raise ConfigError(f"{where}: expected a built-in name or an inline table")


def _positive(value, where: str) -> float:
    val = float(value)
    if not (val > 0) or not np.isfinite(val):
        raise ConfigError(f"{where}: must be a positive finite number")
    return val


_TOP_KEYS = {"name", "dimension", "kernel", "mass_law", "initial", "T", "dt",
             "N_list", "pde", "tolerances"}
_REQUIRED = {"name", "dimension", "kernel", "mass_law", "initial", "T", "dt", "N_list"}


def load_scenario(path) -> Scenario:
    """Parse, validate, and fully resolve a scenario file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"scenario file {path} does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    _require_keys(raw, _TOP_KEYS, _REQUIRED, path.name)

    dimension = int(raw["dimension"])
    if dimension != 1:
        raise ConfigError("dimension: shipped scenarios are one-dimensional")

    kernel = _build_kernel(raw["kernel"])
    law = _build_law(raw["mass_law"], kernel)

    initial = raw["initial"]
    if not isinstance(initial, dict):
        raise ConfigError("initial: expected an object with x0 and m0")
    _require_keys(initial, {"x0", "m0"}, {"x0", "m0"}, "initial")
    x0 = _build_profile(initial["x0"], "position", "initial.x0")
    m0 = _build_profile(initial["m0"], "weight", "initial.m0")

    T = _positive(raw["T"], "T")
    dt = _positive(raw["dt"], "dt")
    if int(round(T / dt)) < 1 or abs(round(T / dt) * dt - T) > 1e-9 * max(1.0, T):
        raise ConfigError("dt: T must be a positive integer multiple of dt")

    n_list_raw = raw["N_list"]
    if not isinstance(n_list_raw, list) or not n_list_raw:
        raise ConfigError("N_list: expected a nonempty array of integers")
    n_list = []
    for entry in n_list_raw:
        n = int(entry)
        if n < 1:
            raise ConfigError(f"N_list: entries must be >= 1, got {entry}")
        try:
            law.validate_grid(n)
        except ValueError as exc:
            raise ConfigError(f"N_list: N = {n} violates the mass-law constraint: {exc}") from exc
        n_list.append(n)
    if n_list != sorted(n_list):
        raise ConfigError("N_list: entries must be ascending")

    pde = None
    if raw.get("pde") is not None:
        spec = raw["pde"]
        _require_keys(spec, {"padding", "cells", "cfl"}, set(), "pde")
        pde = PdeConfig(
            padding=float(spec.get("padding", 0.25)),
            cells=int(spec.get("cells", 200)),
            cfl=float(spec.get("cfl", 0.9)),
        )
        if pde.padding <= 0 or pde.cells < 2 or not (0 < pde.cfl <= 1):
            raise ConfigError("pde: padding > 0, cells >= 2, 0 < cfl <= 1 required")

    tol = Tolerances()
    if raw.get("tolerances") is not None:
        spec = raw["tolerances"]
        known = {f.name for f in fields(Tolerances)}
        _require_keys(spec, known, set(), "tolerances")
        tol = replace(tol, **{k: float(v) for k, v in spec.items()})

    return Scenario(
        name=str(raw["name"]),
        dimension=dimension,
        kernel=kernel,
        mass_law=law,
        x0=x0,
        m0=m0,
        T=T,
        dt=dt,
        n_list=tuple(n_list),
        pde=pde,
        tolerances=tol,
    )


def builtin_scenario_names() -> list[str]:
    root = resources.files("opinionflow").joinpath("data")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def builtin_scenario_path(name: str) -> Path:
    """Filesystem path of a shipped scenario (name without .json)."""
    root = resources.files("opinionflow").joinpath("data")
    candidate = root.joinpath(f"{name}.json")
    if not candidate.is_file():
        raise ConfigError(
            f"unknown builtin scenario {name!r}; shipped: {builtin_scenario_names()}"
        )
    return Path(str(candidate))
