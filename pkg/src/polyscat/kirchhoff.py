"""Composite Kirchhoff field of the deflector: u0 = L + R.

Each of the four active faces contributes one block Phi built from its
single- and double-layer potentials,

    Phi = prefactor * [ (ik/4pi)(A-1) n_alpha D  +  ((A+1)/4pi) N ],

with prefactor 1 on the first-bounce faces and A e^{ik t0} on the faces
fed by the reflected wave. The boundary-condition residual diagnostic
never touches the exact scattered field: it compares u0 against the
eikonal traces using the flat-face jump relations, so only weakly
singular integrals appear.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cutoff import CutoffProfile
from .geometry import Obstacle, PolygonFace, ZoneLabel, classify_zone, P0, reflect_direction, travel_phase_t0
from .potentials import evaluate_layers, on_face_trace_integrals, single_layer_dnD_on_face
from .quadrature import QuadratureSpec
from .rays import eikonal_branches, face_reflection_coefficient

__all__ = ["FaceBlock", "FieldSample", "make_face_blocks", "phi_face",
           "u0_field", "u0_many", "boundary_residual_norm"]


@dataclass(frozen=True)
class FaceBlock:
    """One face's contribution: its geometry, incoming wave and prefactor."""

    face: PolygonFace
    incoming: np.ndarray
    prefactor: complex
    refl: complex          # per-bounce reflection coefficient A

    @property
    def n_alpha(self) -> float:
        return float(self.incoming @ self.face.normal)


@dataclass(frozen=True)
class FieldSample:
    position: np.ndarray
    value: complex
    gradient: np.ndarray
    zone: ZoneLabel


def make_face_blocks(obstacle: Obstacle, k: float, lam: complex):
    """The four blocks of u0 = L + R in a fixed order (L pair then R pair)."""
    A = face_reflection_coefficient(lam, -0.5)
    blocks = []
    for first_label, second_label in obstacle.block_pairs():
        f1 = obstacle.face(first_label)
        f2 = obstacle.face(second_label)
        alpha_star = reflect_direction(P0, f1.normal)
        t0 = travel_phase_t0(P0, f1)
        blocks.append(FaceBlock(face=f1, incoming=P0.copy(), prefactor=1.0 + 0.0j, refl=A))
        blocks.append(FaceBlock(face=f2, incoming=alpha_star,
                                prefactor=A * np.exp(1j * k * t0), refl=A))
    return tuple(blocks)


def phi_face(r, block: FaceBlock, k: float, lam: complex,
             spec: QuadratureSpec | None = None,
             profile: CutoffProfile | None = None) -> complex:
    """Single-face Kirchhoff block at one point."""
    if k < 1:
        raise ValueError("k must be >= 1")
    res = evaluate_layers(r, block.incoming, block.face, k, spec, profile,
                          want_gradient=False)
    A = block.refl
    na = block.n_alpha
    val = (1j * k / (4 * np.pi)) * (A - 1) * na * res["D"][0] \
        + ((A + 1) / (4 * np.pi)) * res["N"][0]
    return complex(block.prefactor * val)


def _sample_zone(r, obstacle: Obstacle, tol: float = 1e-9) -> ZoneLabel:
    """Composite zone marker for CSV output: boundary wins, then shadow,
    then reflected, relative to any active face and its incoming wave."""
    labels = []
    for f in obstacle.active_faces:
        alpha = obstacle.incoming_direction(f.label)
        labels.append(classify_zone(r, alpha, f, tol))
    if any(z is ZoneLabel.BOUNDARY for z in labels):
        return ZoneLabel.BOUNDARY
    if any(z is ZoneLabel.SHADOW for z in labels):
        return ZoneLabel.SHADOW
    if any(z is ZoneLabel.REFLECTED for z in labels):
        return ZoneLabel.REFLECTED
    return ZoneLabel.OUTSIDE


def u0_many(points, obstacle: Obstacle, k: float, lam: complex,
            spec: QuadratureSpec | None = None,
            profile: CutoffProfile | None = None,
            want_gradient: bool = True):
    """u0 (and its gradient) at many points; returns (values, gradients).

    gradients is None when want_gradient is False. Points on faces are not
    allowed here; boundary traces go through boundary_residual_norm's
    jump-relation machinery instead.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    vals = np.zeros(len(points), dtype=complex)
    grads = np.zeros((len(points), 3), dtype=complex) if want_gradient else None
    for block in make_face_blocks(obstacle, k, lam):
        res = evaluate_layers(points, block.incoming, block.face, k, spec,
                              profile, want_gradient=want_gradient)
        A = block.refl
        na = block.n_alpha
        cD = block.prefactor * (1j * k / (4 * np.pi)) * (A - 1) * na
        cN = block.prefactor * ((A + 1) / (4 * np.pi))
        vals += cD * res["D"] + cN * res["N"]
        if want_gradient:
            grads += cD * res["gradD"] + cN * res["gradN"]
    return vals, grads


def u0_field(r, obstacle: Obstacle, k: float, lam: complex,
             spec: QuadratureSpec | None = None,
             profile: CutoffProfile | None = None) -> FieldSample:
    """Kirchhoff field sample (value, gradient, zone tag) at one point."""
    r = np.asarray(r, dtype=float)
    vals, grads = u0_many(r, obstacle, k, lam, spec, profile, want_gradient=True)
    return FieldSample(position=r, value=complex(vals[0]), gradient=grads[0],
                       zone=_sample_zone(r, obstacle))


def _eikonal_trace(r, k, lam, obstacle):
    """(psi_eik, grad psi_eik) one-sided on an active face (outer limit)."""
    branches, _ = eikonal_branches(r, obstacle)
    A = face_reflection_coefficient(lam, -0.5)
    val = 0.0 + 0.0j
    grad = np.zeros(3, dtype=complex)
    for b in branches:
        term = (A ** b.bounces) * np.exp(1j * k * b.phase(r))
        val += term
        grad += 1j * k * term * b.direction.astype(complex)
    inc = np.exp(1j * k * float(r @ P0))
    val -= inc
    grad -= 1j * k * inc * P0.astype(complex)
    return val, grad


def _face_strata(face: PolygonFace, band_w: float, edge_layer: float,
                 n_core: int, n_edge: int, n_band: int, rng):
    """Stratified samples (points, weights) with sum(w_j |f_j|^2) ~ int |f|^2 dA.

    Three strata: a jittered grid on the core (distance > edge_layer from
    every edge), a log-importance layer over [2w, edge_layer] where the
    residual behaves like 1/d, and a uniform stratum on the cut-off band
    [0, 2w]. Strips tile the face without overlap.
    """
    origin, eu, ev, lu, lv = face.axes()
    d0 = 2 * band_w
    de = min(edge_layer, 0.2 * min(lu, lv))

    def to3d(u, v):
        return origin[None, :] + u[:, None] * eu[None, :] + v[:, None] * ev[None, :]

    pts, wgt = [], []

    # core: jittered grid
    core_u, core_v = lu - 2 * de, lv - 2 * de
    nu = max(2, int(round(np.sqrt(n_core * core_u / core_v))))
    nv = max(2, int(np.ceil(n_core / nu)))
    iu, iv = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    uu = de + (iu.ravel() + rng.random(nu * nv)) * core_u / nu
    vv = de + (iv.ravel() + rng.random(nu * nv)) * core_v / nv
    pts.append(to3d(uu, vv))
    wgt.append(np.full(nu * nv, core_u * core_v / (nu * nv)))

    # edge layer: distance log-uniform in [2w, de], position uniform along
    # the edge; u-edge strips run the full v range, v-edge strips are
    # clipped so the strips tile
    log_ratio = np.log(de / d0)
    strips = [
        ("u", 0.0, lv, +1), ("u", lu, lv, -1),       # edges u = 0, u = lu
        ("v", 0.0, lu - 2 * de, +1), ("v", lv, lu - 2 * de, -1),
    ]
    per = max(3, n_edge // 4)
    for kind, edge_pos, length, sgn in strips:
        d = d0 * np.exp(rng.random(per) * log_ratio)
        along = rng.random(per) * length
        if kind == "u":
            u, v = edge_pos + sgn * d, along
        else:
            u, v = de + along, edge_pos + sgn * d
        pts.append(to3d(u, v))
        wgt.append(length * log_ratio * d / per)

    # cut-off band [0, 2w]: uniform per strip
    band_strips = [
        ("u", 0.0, lv, +1), ("u", lu, lv, -1),
        ("v", 0.0, lu - 2 * d0, +1), ("v", lv, lu - 2 * d0, -1),
    ]
    per_b = max(2, n_band // 4)
    for kind, edge_pos, length, sgn in band_strips:
        d = rng.random(per_b) * d0
        along = rng.random(per_b) * length
        if kind == "u":
            u, v = edge_pos + sgn * d, along
        else:
            u, v = d0 + along, edge_pos + sgn * d
        pts.append(to3d(u, v))
        wgt.append(np.full(per_b, length * d0 / per_b))

    weights = [np.broadcast_to(np.asarray(w, dtype=float), (len(p),)).copy()
               for p, w in zip(pts, wgt)]
    return np.concatenate(pts), np.concatenate(weights)


def _self_trace_bc(r, block: FaceBlock, k, lam, spec, profile):
    """(d/dn + k lam) of the self-face block at an on-face point (+ side)."""
    face = block.face
    A = block.refl
    cD = block.prefactor * (1j * k / (4 * np.pi)) * (A - 1) * block.n_alpha
    cN = block.prefactor * ((A + 1) / (4 * np.pi))
    d_val, h_u, h_v, g_lap = on_face_trace_integrals(
        r, block.incoming, face, k, spec, profile)
    dnD = single_layer_dnD_on_face(r, block.incoming, face, k, spec, profile)
    _, eu, ev, _, _ = face.axes()
    au = float(block.incoming @ eu)
    av = float(block.incoming @ ev)
    lap_tan = -(k ** 2) * (au ** 2 + av ** 2) * d_val \
        + 2j * k * (au * h_u + av * h_v) + g_lap
    dnN = k ** 2 * d_val + lap_tan
    from .cutoff import eta
    n_val = 2.0 * np.pi * eta(np.asarray(r, dtype=float), k, face, profile) \
        * np.exp(1j * k * float(np.asarray(r) @ block.incoming))
    return cD * dnD + cN * dnN + k * lam * (cD * d_val + cN * n_val)


def boundary_residual_norm(obstacle: Obstacle, k: float, lam: complex,
                           spec: QuadratureSpec | None = None,
                           profile: CutoffProfile | None = None,
                           n_core: int = 32, n_edge: int = 32,
                           n_band: int = 12, edge_layer: float = 0.05,
                           seed: int = 7) -> float:
    """|| (d/dn + k lambda)(u0 - psi_eik) ||_L2 over the active faces.

    One-sided traces from the illuminated side. The self-face block uses
    the exact flat-face jump relations plus the trace identity for dN/dn;
    cross-face blocks are evaluated by ordinary quadrature. The L2 norm is
    estimated by stratified sampling: a jittered core grid (a plain grid
    would alias the 2k-oscillatory integrand), a log-importance layer
    against the 1/d residual growth toward the edges, and the cut-off
    band as its own stratum.
    """
    spec = spec or QuadratureSpec()
    profile = profile or CutoffProfile()
    band_w = profile.width(k)
    rng = np.random.default_rng(seed)
    blocks = make_face_blocks(obstacle, k, lam)
    total = 0.0
    for block in blocks:
        face = block.face
        n = face.normal
        pts, wgt = _face_strata(face, band_w, edge_layer, n_core, n_edge,
                                n_band, rng)
        res = np.zeros(len(pts), dtype=complex)
        for other in blocks:
            if other.face is face:
                continue
            lay = evaluate_layers(pts, other.incoming, other.face, k,
                                  spec, profile, want_gradient=True)
            A = other.refl
            cD = other.prefactor * (1j * k / (4 * np.pi)) * (A - 1) * other.n_alpha
            cN = other.prefactor * ((A + 1) / (4 * np.pi))
            res += cD * (lay["gradD"] @ n) + cN * (lay["gradN"] @ n) \
                + k * lam * (cD * lay["D"] + cN * lay["N"])
        for j, r in enumerate(pts):
            res[j] += _self_trace_bc(r, block, k, lam, spec, profile)
            pe, ge = _eikonal_trace(r, k, lam, obstacle)
            res[j] -= (ge @ n) + k * lam * pe
        total += float(wgt @ (np.abs(res) ** 2))
    return float(np.sqrt(total))
