"""Monotone piecewise-cubic Hermite interpolation (Fritsch-Carlson limiting).

Interior knot derivatives are weighted harmonic means of the adjacent secant
slopes and are zeroed at local extrema; endpoint derivatives come from the
three-point non-centered difference with sign and magnitude clamping. The
result is C^1, reproduces the knots exactly, and is monotone on every
interval where the data are monotone, so densified dose curves cannot
overshoot their bracketing knots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PchipCurve", "pchip_fit", "pchip_eval"]


@dataclass(frozen=True)
class PchipCurve:
    """Fitted interpolant: knots, values, and limited knot derivatives."""

    xs: np.ndarray
    ys: np.ndarray
    derivs: np.ndarray

    @property
    def x_min(self) -> float:
        return float(self.xs[0])

    @property
    def x_max(self) -> float:
        return float(self.xs[-1])


def _edge_derivative(h0: float, h1: float, d0: float, d1: float) -> float:
    # Three-point non-centered formula, clamped to preserve shape at the end.
    d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1)
    if d * d0 <= 0.0:
        return 0.0
    if d0 * d1 < 0.0 and abs(d) > 3.0 * abs(d0):
        return 3.0 * d0
    return d


def pchip_fit(xs, ys) -> PchipCurve:
    """Fit the monotone cubic Hermite interpolant.

    xs must be strictly ascending with at least 2 knots; ys finite. Values
    may be doses or log-doses; no positivity is required of ys itself.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("need at least 2 knots")
    if y.shape != x.shape:
        raise ValueError("xs and ys must have the same length")
    if np.any(np.diff(x) <= 0):
        raise ValueError("xs must be strictly ascending")
    if not np.all(np.isfinite(y)):
        raise ValueError("ys must be finite")

    n = x.size
    h = np.diff(x)
    delta = np.diff(y) / h

    d = np.zeros(n)
    if n == 2:
        d[:] = delta[0]
        return PchipCurve(x, y, d)

    # Interior: weighted harmonic mean of neighboring secants, zero at extrema.
    for i in range(1, n - 1):
        if delta[i - 1] == 0.0 or delta[i] == 0.0 or (delta[i - 1] > 0) != (delta[i] > 0):
            d[i] = 0.0
        else:
            w1 = 2.0 * h[i] + h[i - 1]
            w2 = h[i] + 2.0 * h[i - 1]
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i])

    d[0] = _edge_derivative(h[0], h[1], delta[0], delta[1])
    d[-1] = _edge_derivative(h[-1], h[-2], delta[-1], delta[-2])
    return PchipCurve(x, y, d)


def pchip_eval(curve: PchipCurve, x):
    """Evaluate the interpolant; no extrapolation outside [x_min, x_max]."""
    xq = np.asarray(x, dtype=float)
    if np.any(xq < curve.x_min) or np.any(xq > curve.x_max):
        raise ValueError(
            f"evaluation outside knot span [{curve.x_min}, {curve.x_max}]"
        )
    xs, ys, d = curve.xs, curve.ys, curve.derivs
    idx = np.clip(np.searchsorted(xs, xq, side="right") - 1, 0, xs.size - 2)
    h = xs[idx + 1] - xs[idx]
    t = (xq - xs[idx]) / h
    # Hermite basis
    t2 = t * t
    t3 = t2 * t
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    h10 = t3 - 2.0 * t2 + t
    h01 = -2.0 * t3 + 3.0 * t2
    h11 = t3 - t2
    val = h00 * ys[idx] + h10 * h * d[idx] + h01 * ys[idx + 1] + h11 * h * d[idx + 1]
    return float(val) if np.isscalar(x) else val
