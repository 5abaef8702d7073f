"""Panel quadrature rules for the face integrals.

Two families of rules share the duty:

* Cartesian tensor rules over a rectangular face, for targets well away
  from the face plane. Composite 5-point Gauss panels sized against the
  worst-case phase rate 2k, with extra geometric refinement near the edges
  so the cut-off transition band is always resolved.

* Apex-fan rules for targets on or near the face: the rectangle is split
  into (signed) triangles from the in-plane foot of the target, and each
  triangle is integrated in (edge, radial) coordinates whose Jacobian
  cancels the 1/|r-q| kernel singularity exactly. Radial panels are graded
  geometrically both at the apex (scale = target height) and at the far
  end (cut-off band).

Panel sums are accumulated in a fixed order (faces, then panels, then
nodes), so repeated runs are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import PolygonFace

__all__ = ["QuadratureSpec", "BudgetExceeded", "FaceRule", "face_rule",
           "fan_nodes", "gauss_on_breaks", "refined_breaks", "cube_surface_rule"]

GAUSS_PER_PANEL = 5
_G_NODES, _G_WEIGHTS = np.polynomial.legendre.leggauss(GAUSS_PER_PANEL)
_T_NODES, _T_WEIGHTS = np.polynomial.legendre.leggauss(24)   # cut-off transition


class BudgetExceeded(RuntimeError):
    """A quadrature rule would exceed the configured panel budget."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Accuracy/cost knobs for the layer-potential quadratures.

    points_per_wavelength counts Gauss points per effective wavelength of
    the integrand (rate 2k); singular_split_wavelengths sets the distance,
    in wavelengths, inside which a target switches to the apex-fan rule.
    """

    points_per_wavelength: float = 10.0
    singular_split_wavelengths: float = 2.0
    max_panels: int = 4_000_000
    with_error_estimate: bool = False

    def __post_init__(self):
        if self.points_per_wavelength < 4:
            raise ValueError("points_per_wavelength must be >= 4")
        if self.singular_split_wavelengths <= 0:
            raise ValueError("singular_split_wavelengths must be positive")

    def split_radius(self, k: float) -> float:
        return self.singular_split_wavelengths * 2.0 * np.pi / k

    def refined(self, factor: float = 4.0 / 3.0) -> "QuadratureSpec":
        return replace(self, points_per_wavelength=self.points_per_wavelength * factor,
                       with_error_estimate=False)


def gauss_on_breaks(breaks):
    """Composite 5-point Gauss nodes/weights on consecutive intervals."""
    breaks = np.asarray(breaks, dtype=float)
    a = breaks[:-1][:, None]
    h = np.diff(breaks)[:, None]
    nodes = a + 0.5 * h * (_G_NODES[None, :] + 1.0)
    weights = 0.5 * h * _G_WEIGHTS[None, :]
    return nodes.ravel(), weights.ravel()


def refined_breaks(length: float, rate: float, ppw: float,
                   end_scale: tuple[float, float] = (0.0, 0.0),
                   min_panels: int = 1):
    """Breakpoints on [0, length]: oscillation panels + geometric end zones.

    `rate` is the largest phase derivative of the integrand; panels hold
    GAUSS_PER_PANEL points per (ppw / wavelength) density. An end_scale
    s > 0 adds geometrically shrinking panels down to s at that end.
    """
    if length <= 0:
        return np.array([0.0])
    h_osc = GAUSS_PER_PANEL * 2.0 * np.pi / (max(rate, 1e-12) * ppw)
    h_osc = min(h_osc, length)
    pts = {0.0, length}
    lo, hi = 0.0, length
    for side, s in enumerate(end_scale):
        if s <= 0 or s >= length / 4:
            continue
        edge = 0.0 if side == 0 else length
        sign = 1.0 if side == 0 else -1.0
        x = s
        while x < min(h_osc, length / 4):
            pts.add(edge + sign * x)
            x *= 2.0
        if side == 0:
            lo = max(lo, min(x, length / 4))
        else:
            hi = min(hi, length - min(x, length / 4))
    n_mid = max(min_panels, int(np.ceil((hi - lo) / h_osc)))
    pts.update(np.linspace(lo, hi, n_mid + 1))
    return np.array(sorted(pts))


@dataclass(frozen=True)
class FaceRule:
    """Tensor rule on a rectangular face: 3D nodes, weights, face coords."""

    nodes: np.ndarray      # (N, 3)
    weights: np.ndarray    # (N,)
    u: np.ndarray          # (N,) face coordinates
    v: np.ndarray


_face_rule_cache: dict = {}


def face_rule(face: PolygonFace, k: float, spec: QuadratureSpec,
              band_w: float) -> FaceRule:
    """Cartesian tensor rule over the face, cut-off band resolved."""
    key = (id(face), round(float(k), 12), spec.points_per_wavelength, round(band_w, 14))
    hit = _face_rule_cache.get(key)
    if hit is not None:
        return hit
    origin, eu, ev, lu, lv = face.axes()
    rate = 2.0 * k
    end = (band_w / 2.0, band_w / 2.0)
    bu = refined_breaks(lu, rate, spec.points_per_wavelength, end)
    bv = refined_breaks(lv, rate, spec.points_per_wavelength, end)
    un, uw = gauss_on_breaks(bu)
    vn, vw = gauss_on_breaks(bv)
    if un.size * vn.size > spec.max_panels:
        raise BudgetExceeded(
            f"face rule needs {un.size * vn.size} points > budget {spec.max_panels}")
    uu, vv = np.meshgrid(un, vn, indexing="ij")
    ww = np.outer(uw, vw)
    nodes = origin[None, :] + uu.ravel()[:, None] * eu[None, :] + vv.ravel()[:, None] * ev[None, :]
    rule = FaceRule(nodes=nodes, weights=ww.ravel(), u=uu.ravel(), v=vv.ravel())
    if len(_face_rule_cache) > 64:
        _face_rule_cache.clear()
    _face_rule_cache[key] = rule
    return rule


def fan_nodes(face: PolygonFace, foot_uv, height: float, k: float,
              spec: QuadratureSpec, band_w: float):
    """Signed apex-fan rule from the in-plane foot of a (near-)face target.

    Returns (nodes (N,3), weights (N,), u, v) with weights carrying the
    triangle orientation sign; summing f(node)*weight integrates f dS over
    the rectangle even when the foot lies outside it.
    """
    origin, eu, ev, lu, lv = face.axes()
    n = face.normal
    u0, v0 = float(foot_uv[0]), float(foot_uv[1])
    apex = origin + u0 * eu + v0 * ev
    corners = [origin, origin + lu * eu, origin + lu * eu + lv * ev, origin + lv * ev]
    rate = 2.0 * k
    ppw = spec.points_per_wavelength
    all_nodes, all_weights = [], []
    for i in range(4):
        c0, c1 = corners[i], corners[(i + 1) % 4]
        edge = c1 - c0
        el = float(np.linalg.norm(edge))
        ehat = edge / el
        jconst = float(np.cross(c0 - apex, ehat) @ n)
        if abs(jconst) < 1e-14:
            continue   # apex on the edge line: degenerate zero-area fan
        spoke_max = max(np.linalg.norm(c0 - apex), np.linalg.norm(c1 - apex))
        # edge parameter: oscillation + band refinement at both ends
        bl = refined_breaks(el, rate, ppw, (band_w / 2.0, band_w / 2.0))
        ln, lw = gauss_on_breaks(bl)
        # radial parameter on [0, 1]: geometric at the apex (height scale,
        # never coarser than the cut-off band around the apex) and at the
        # far end (band scale)
        t_apex = min(max(abs(height), band_w / 2.0) / spoke_max, 0.25)
        t_band = min(band_w / (2.0 * spoke_max), 0.25)
        bt = refined_breaks(1.0, rate * spoke_max, ppw, (t_apex, t_band))
        tn, tw = gauss_on_breaks(bt)
        if ln.size * tn.size > spec.max_panels:
            raise BudgetExceeded("fan rule exceeds panel budget")
        qb = c0[None, :] + ln[:, None] * ehat[None, :]          # (L, 3)
        spokes = qb - apex[None, :]                             # (L, 3)
        pts = apex[None, None, :] + tn[None, :, None] * spokes[:, None, :]
        wts = (tn[None, :] * jconst) * (lw[:, None] * tw[None, :])
        all_nodes.append(pts.reshape(-1, 3))
        all_weights.append(wts.ravel())
    if not all_nodes:
        return (np.zeros((0, 3)), np.zeros(0), np.zeros(0), np.zeros(0))
    nodes = np.concatenate(all_nodes)
    weights = np.concatenate(all_weights)
    rel = nodes - origin[None, :]
    return nodes, weights, rel @ eu, rel @ ev


def graded_about(length: float, rate: float, ppw: float, point: float,
                 scale: float, end_scale: tuple[float, float] = (0.0, 0.0)):
    """Breakpoints on [0, length]: oscillation panels, optional geometric
    end zones, plus geometric refinement toward an interior point (used
    when a 1/R target sits on or near the strip being integrated)."""
    base = refined_breaks(length, rate, ppw, end_scale)
    if scale <= 0 or not (0.0 <= point <= length):
        return base
    pts = set(base.tolist())
    x = scale
    while x < length:
        for side in (point - x, point + x):
            if 0.0 < side < length:
                pts.add(side)
        x *= 2.0
    if 0.0 < point < length:
        pts.add(point)
    return np.array(sorted(pts))


def cube_surface_rule(center, half_width: float, k: float, ppw: float):
    """Tensor Gauss panels on the six faces of an axis-aligned cube.

    Returns (nodes (N,3), weights (N,), normals (N,3)). Panel density is
    set against phase rate 2k (incoming field times the far-field factor).
    """
    center = np.asarray(center, dtype=float)
    side = 2.0 * half_width
    rate = 2.0 * k
    br = refined_breaks(side, rate, ppw)
    xn, xw = gauss_on_breaks(br)
    xn = xn - half_width
    nodes, weights, normals = [], [], []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            a, b = (axis + 1) % 3, (axis + 2) % 3
            uu, vv = np.meshgrid(xn, xn, indexing="ij")
            ww = np.outer(xw, xw).ravel()
            pts = np.zeros((uu.size, 3))
            pts[:, axis] = sign * half_width
            pts[:, a] = uu.ravel()
            pts[:, b] = vv.ravel()
            nrm = np.zeros((uu.size, 3))
            nrm[:, axis] = sign
            nodes.append(pts + center[None, :])
            weights.append(ww)
            normals.append(nrm)
    return np.concatenate(nodes), np.concatenate(weights), np.concatenate(normals)
