"""Gaussian plume concentration field with Pasquill-Gifford stability classes.

Plume spread uses the Briggs open-country interpolation formulas, which are
smooth closed forms standard in Gaussian-plume codes. The exact coefficient
table is below so results are bit-reproducible:

    sigma_y = c1 * x * (1 + 1e-4 x)^(-1/2)          c1 per class A..F:
              0.22, 0.16, 0.11, 0.08, 0.06, 0.04
    sigma_z:
        A: 0.20 x
        B: 0.12 x
        C: 0.08 x (1 + 2e-4 x)^(-1/2)
        D: 0.06 x (1 + 1.5e-3 x)^(-1/2)
        E: 0.03 x (1 + 3e-4 x)^(-1)
        F: 0.016 x (1 + 3e-4 x)^(-1)

The concentration model is the standard steady-state Gaussian plume with a
single total ground-reflection term (no mixing-lid reflections, no depletion,
no decay in transit); receptors of interest are short range (<= 2 km).
All functions are pure, accept scalars or numpy arrays, and are safe for
unrestricted parallel evaluation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = ["StabilityClass", "ReleaseSpec", "sigma_y", "sigma_z", "concentration"]


class StabilityClass(enum.Enum):
    """Pasquill-Gifford stability class, A (most unstable) to F (most stable)."""

    A = "A"
    B = "B"
    C = "C"
    D = "D"
    E = "E"
    F = "F"

    @classmethod
    def from_str(cls, s: str) -> "StabilityClass":
        try:
            return cls[s.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown stability class {s!r} (expected A-F)") from None

    def __str__(self) -> str:  # CSV / report friendly
        return self.value


_SIGMA_Y_C1 = {
    StabilityClass.A: 0.22,
    StabilityClass.B: 0.16,
    StabilityClass.C: 0.11,
    StabilityClass.D: 0.08,
    StabilityClass.E: 0.06,
    StabilityClass.F: 0.04,
}


def _check_x(x) -> np.ndarray:
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0):
        raise ValueError("downwind distance x must be positive")
    return xa


def sigma_y(stability: StabilityClass, x):
    """Lateral plume spread (m) at downwind distance x (m). Briggs open country."""
    xa = _check_x(x)
    out = _SIGMA_Y_C1[stability] * xa / np.sqrt(1.0 + 1e-4 * xa)
    return float(out) if np.isscalar(x) else out


def sigma_z(stability: StabilityClass, x):
    """Vertical plume spread (m) at downwind distance x (m). Briggs open country."""
    xa = _check_x(x)
    s = stability
    if s is StabilityClass.A:
        out = 0.20 * xa
    elif s is StabilityClass.B:
        out = 0.12 * xa
    elif s is StabilityClass.C:
        out = 0.08 * xa / np.sqrt(1.0 + 2e-4 * xa)
    elif s is StabilityClass.D:
        out = 0.06 * xa / np.sqrt(1.0 + 1.5e-3 * xa)
    elif s is StabilityClass.E:
        out = 0.03 * xa / (1.0 + 3e-4 * xa)
    else:
        out = 0.016 * xa / (1.0 + 3e-4 * xa)
    return float(out) if np.isscalar(x) else out


@dataclass(frozen=True)
class ReleaseSpec:
    """Steady point release: source term Q (Bq/s), wind speed U (m/s),
    effective release height H (m), and stability class."""

    Q: float
    U: float
    H: float
    stability: StabilityClass

    def __post_init__(self):
        if self.Q <= 0:
            raise ValueError("Q must be positive")
        if self.U <= 0:
            raise ValueError("U must be positive")
        if not (0.0 <= self.H <= 500.0):
            raise ValueError("H must lie in [0, 500] m")


def concentration(release: ReleaseSpec, x, y, z):
    """Plume concentration chi(x, y, z) in Bq/m^3.

    chi = Q / (2 pi U sy sz) * exp(-y^2 / 2 sy^2)
          * [exp(-(z-H)^2 / 2 sz^2) + exp(-(z+H)^2 / 2 sz^2)]

    x > 0 (m downwind of the stack), z >= 0. Scalars or broadcastable arrays.
    """
    xa = _check_x(x)
    za = np.asarray(z, dtype=float)
    if np.any(za < 0):
        raise ValueError("z must be nonnegative")
    ya = np.asarray(y, dtype=float)
    sy = sigma_y(release.stability, xa)
    sz = sigma_z(release.stability, xa)
    h = release.H
    norm = release.Q / (2.0 * math.pi * release.U * sy * sz)
    lateral = np.exp(-0.5 * (ya / sy) ** 2)
    vertical = np.exp(-0.5 * ((za - h) / sz) ** 2) + np.exp(-0.5 * ((za + h) / sz) ** 2)
    out = norm * lateral * vertical
    if np.isscalar(x) and np.isscalar(y) and np.isscalar(z):
        return float(out)
    return out
