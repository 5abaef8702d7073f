"""Smooth edge cut-off applied to every face density.

The cut-off vanishes within a band of width w(k) = band_scale * k^(-1/4)
of the face edges, equals one beyond 2 w(k), and rises through a C-infinity
smoothstep in between, so all its tangential derivatives scale exactly like
k^(m/4). On the rectangular active faces it is the tensor product of two
1D edge profiles, which keeps the far-field polygon integral separable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PolygonFace

__all__ = ["CutoffProfile", "band_width", "smoothstep", "smoothstep_prime",
           "smoothstep_second", "eta_1d", "eta_1d_derivatives", "eta"]

DELTA_EXPONENT = 0.25
DEFAULT_BAND_SCALE = 0.005


@dataclass(frozen=True)
class CutoffProfile:
    """Band geometry: zero below k^-delta scaled widths, one above twice."""

    delta: float = DELTA_EXPONENT
    band_scale: float = DEFAULT_BAND_SCALE

    def width(self, k: float) -> float:
        if k < 1.0:
            raise ValueError("cut-off defined for k >= 1")
        return self.band_scale * k ** (-self.delta)


def band_width(k: float, profile: CutoffProfile | None = None) -> float:
    return (profile or CutoffProfile()).width(k)


def _phi(x):
    """exp(-1/x) continued by 0 for x <= 0; all derivatives vanish at 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def _phi_prime(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos]) / x[pos] ** 2
    return out


def _phi_second(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    out[pos] = np.exp(-1.0 / xp) * (1.0 - 2.0 * xp) / xp ** 4
    return out


def smoothstep(x):
    """Monotone C-infinity step: 0 for x<=0, 1 for x>=1."""
    x = np.asarray(x, dtype=float)
    a = _phi(x)
    b = _phi(1.0 - x)
    return a / (a + b)


def smoothstep_prime(x):
    x = np.asarray(x, dtype=float)
    a, b = _phi(x), _phi(1.0 - x)
    ap, bp = _phi_prime(x), -_phi_prime(1.0 - x)
    s = a + b
    return (ap * b - a * bp) / s ** 2


def smoothstep_second(x):
    x = np.asarray(x, dtype=float)
    a, b = _phi(x), _phi(1.0 - x)
    ap, bp = _phi_prime(x), -_phi_prime(1.0 - x)
    app, bpp = _phi_second(x), _phi_second(1.0 - x)
    s = a + b
    u = ap * b - a * bp
    up = app * b - a * bpp
    return up / s ** 2 - 2.0 * u * (ap + bp) / s ** 3


def eta_1d(s, length: float, k: float, profile: CutoffProfile | None = None):
    """1D edge profile on [0, length]: 0 within w of either end, 1 beyond 2w."""
    prof = profile or CutoffProfile()
    w = prof.width(k)
    s = np.asarray(s, dtype=float)
    up = smoothstep(s / w - 1.0)
    down = smoothstep((length - s) / w - 1.0)
    return up * down


def eta_1d_derivatives(s, length: float, k: float, profile: CutoffProfile | None = None):
    """(g, g', g'') of the 1D edge profile; needed by the trace identities."""
    prof = profile or CutoffProfile()
    w = prof.width(k)
    s = np.asarray(s, dtype=float)
    xu = s / w - 1.0
    xd = (length - s) / w - 1.0
    u, d = smoothstep(xu), smoothstep(xd)
    up, dp = smoothstep_prime(xu) / w, -smoothstep_prime(xd) / w
    upp, dpp = smoothstep_second(xu) / w ** 2, smoothstep_second(xd) / w ** 2
    g = u * d
    gp = up * d + u * dp
    gpp = upp * d + 2.0 * up * dp + u * dpp
    return g, gp, gpp


def eta(q, k: float, face: PolygonFace, profile: CutoffProfile | None = None):
    """Cut-off value at point(s) q on a rectangular face.

    Tensor product of the two 1D edge profiles in the face frame; exactly 0
    within w(k) of any edge and exactly 1 wherever both coordinates are at
    least 2 w(k) from their ends.
    """
    u, v, _ = face.local_coords(q)
    _, _, _, lu, lv = face.axes()
    out = eta_1d(u, lu, k, profile) * eta_1d(v, lv, k, profile)
    if np.asarray(q).ndim == 1:
        return float(out[0])
    return out
