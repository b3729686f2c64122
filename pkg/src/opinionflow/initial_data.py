"""Named initial profiles for the shipped experiment families.

Positions:
  ``sin2_4s``   x0(s) = sin^2(4 s)
  ``arccos``    x0(s) = arccos(2 s - 1) / pi  (monotone decreasing, [0, 1])

Weights (both normalized to unit integral over I):
  ``s_cos2_5s_normalized``  m0(s) proportional to s cos^2(5 s)
  ``quarter_cos_bump``      m0(s) proportional to s^(1/4) cos^2(5 s)
                            + 0.2 s^2 + 0.5

Each profile declares the cell-average quadrature that projects it
accurately: the bump and arccos profiles carry derivative singularities at
an endpoint where fixed Simpson sub-sampling stalls around 1e-3, so they use
per-cell adaptive quadrature instead; the smooth profiles keep the Simpson
default. Normalization constants come from adaptive quadrature on [0, 1] and
are cached.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .grids import project_discrete

__all__ = ["InitialProfile", "builtin_profile", "BUILTIN_PROFILES"]


@dataclass(frozen=True)
class InitialProfile:
    name: str
    role: str  # "position" or "weight"
    fn: Callable
    quadrature: str = "simpson"

    def __call__(self, s):
        return self.fn(s)

    def cell_averages(self, n: int) -> np.ndarray:
        return project_discrete(self.fn, n, rule=self.quadrature)


@lru_cache(maxsize=None)
def _norm_constant(which: str) -> float:
    if which == "s_cos2_5s":
        val, _ = quad(lambda s: s * np.cos(5 * s) ** 2, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    elif which == "quarter_bump":
        val, _ = quad(
            lambda s: s**0.25 * np.cos(5 * s) ** 2 + 0.2 * s**2 + 0.5,
            0.0, 1.0, epsabs=1e-14, epsrel=1e-13,
        )
    else:  # pragma: no cover
        raise KeyError(which)
    return float(val)


def _sin2_4s(s):
    return np.sin(4.0 * np.asarray(s, dtype=float)) ** 2


def _arccos(s):
    clipped = np.clip(2.0 * np.asarray(s, dtype=float) - 1.0, -1.0, 1.0)
    return np.arccos(clipped) / np.pi


def _s_cos2_5s(s):
    s = np.asarray(s, dtype=float)
    return s * np.cos(5.0 * s) ** 2 / _norm_constant("s_cos2_5s")


def _quarter_bump(s):
    s = np.asarray(s, dtype=float)
    raw = s**0.25 * np.cos(5.0 * s) ** 2 + 0.2 * s**2 + 0.5
    return raw / _norm_constant("quarter_bump")


BUILTIN_PROFILES: dict[str, InitialProfile] = {
    "sin2_4s": InitialProfile("sin2_4s", "position", _sin2_4s, "simpson"),
    "arccos": InitialProfile("arccos", "position", _arccos, "adaptive"),
    "s_cos2_5s_normalized": InitialProfile(
        "s_cos2_5s_normalized", "weight", _s_cos2_5s, "simpson"
    ),
    "quarter_cos_bump": InitialProfile(
        "quarter_cos_bump", "weight", _quarter_bump, "adaptive"
    ),
}


def builtin_profile(name: str) -> InitialProfile:
    try:
        return BUILTIN_PROFILES[name]
    except KeyError:
        raise KeyError(
            f"unknown initial profile {name!r}; built-ins are {sorted(BUILTIN_PROFILES)}"
        ) from None
