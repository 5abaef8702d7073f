"""Single- and double-layer potentials over one face, with cut-off density.

For a face M with unit normal n, incoming direction alpha and density
eta(q) e^{ik alpha.q}:

    D(r) = int_M eta e^{ik alpha.q} e^{ikR}/R dS,        R = |r - q|
    N(r) = int_M eta e^{ik alpha.q} d/dn_q [e^{ikR}/R] dS

Targets farther than a couple of wavelengths from the face use a shared
Cartesian tensor rule; nearer targets switch to per-target apex-fan rules
whose Jacobian cancels the 1/R singularity (the polar change of variables
of the classical flat-face analysis). On the face itself the jump
relations are exact because the face is flat:

    dD/dn|_+ = -2 pi eta(r) e^{ik alpha.r}
    N|_+     = +2 pi eta(r) e^{ik alpha.r}

and the normal derivative of N is recovered without hypersingular
quadrature through dN/dn = (k^2 + Delta_tan) D, with the tangential
derivatives of D reduced to extra weakly singular integrals carrying
derivatives of the cut-off.

High-frequency leading-order values of all of these in the shadow zone,
the reflected zone and outside (the closed forms the quadratures are
tested against) live in `layer_asymptotic_oracle`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cutoff import CutoffProfile, eta_1d, eta_1d_derivatives
from .geometry import PolygonFace, ZoneLabel, classify_zone, reflect_direction, travel_phase_t0
from .quadrature import QuadratureSpec, face_rule, fan_nodes, gauss_on_breaks, graded_about

__all__ = [
    "LayerEvaluation",
    "ZoneAmbiguous",
    "single_layer_D",
    "double_layer_N",
    "single_layer_dnD_on_face",
    "dn_double_layer_on_face",
    "layer_asymptotic_oracle",
    "evaluate_layers",
]

_ON_FACE_TOL = 1e-9


class ZoneAmbiguous(ValueError):
    """Target sits on a zone boundary where the asymptotics are not uniform."""


@dataclass(frozen=True)
class LayerEvaluation:
    value: complex
    gradient: np.ndarray       # complex (3,)
    est_err: float


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _density(face: PolygonFace, k, alpha, u, v, nodes, profile: CutoffProfile):
    _, _, _, lu, lv = face.axes()
    g = eta_1d(u, lu, k, profile) * eta_1d(v, lv, k, profile)
    return g * np.exp(1j * k * (nodes @ alpha))


def _kernel_sums(targets, nodes, weights, density, normal, k, want_gradient):
    """Accumulate D, N and their gradients for a block of targets.

    targets (M,3) against one shared rule; returns dict of (M,) / (M,3)
    complex arrays. Chunked so the pairwise arrays stay within memory.
    """
    m = len(targets)
    out = {
        "D": np.zeros(m, dtype=complex),
        "N": np.zeros(m, dtype=complex),
    }
    if want_gradient:
        out["gradD"] = np.zeros((m, 3), dtype=complex)
        out["gradN"] = np.zeros((m, 3), dtype=complex)
    if nodes.size == 0:
        return out
    wdens = weights * density                                    # (N,)
    chunk = max(1, int(4_000_000 // max(len(nodes), 1)))
    for lo in range(0, m, chunk):
        hi = min(lo + chunk, m)
        diff = targets[lo:hi, None, :] - nodes[None, :, :]       # (C, N, 3)
        r2 = np.einsum("cnj,cnj->cn", diff, diff)
        r1 = np.sqrt(r2)
        np.maximum(r1, 1e-300, out=r1)
        t = diff @ normal                                        # (C, N)
        inv_r = 1.0 / r1
        e = np.exp(1j * k * r1)
        kd = e * inv_r                                           # e^{ikR}/R
        g3 = (1j * k * r1 - 1.0) * e * inv_r ** 3                # (ikR-1)e/R^3
        out["D"][lo:hi] = kd @ wdens
        out["N"][lo:hi] = (-t * g3) @ wdens
        if want_gradient:
            out["gradD"][lo:hi] = np.einsum("cn,cnj->cj", g3 * wdens[None, :], diff)
            # grad N = -n g(R) - t (r-q)/R g'(R);  g'(R) = -e (k^2R^2+3ikR-3)/R^4
            gp_over_r = -e * (k * k * r2 + 3j * k * r1 - 3.0) * inv_r ** 5
            coef = (-t) * gp_over_r * wdens[None, :]
            out["gradN"][lo:hi] = np.einsum("cn,cnj->cj", coef, diff)
            out["gradN"][lo:hi] += np.einsum("cn,j->cj", -(g3 * wdens[None, :]), normal)
    return out


def evaluate_layers(targets, alpha, face: PolygonFace, k: float,
                    spec: QuadratureSpec | None = None,
                    profile: CutoffProfile | None = None,
                    want_gradient: bool = True):
    """D, N (and gradients) of one face block at many targets.

    Routes each target to the shared Cartesian rule or, within the
    singular-split distance of the face, to its own apex-fan rule.
    """
    spec = spec or QuadratureSpec()
    profile = profile or CutoffProfile()
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    alpha = _unit(alpha)
    band_w = profile.width(k)
    split = spec.split_radius(k)

    u, v, h = face.local_coords(targets)
    _, _, _, lu, lv = face.axes()
    margin = split
    near = (np.abs(h) < split) & (u > -margin) & (u < lu + margin) \
        & (v > -margin) & (v < lv + margin)

    out = {
        "D": np.zeros(len(targets), dtype=complex),
        "N": np.zeros(len(targets), dtype=complex),
    }
    if want_gradient:
        out["gradD"] = np.zeros((len(targets), 3), dtype=complex)
        out["gradN"] = np.zeros((len(targets), 3), dtype=complex)

    far_idx = np.where(~near)[0]
    if far_idx.size:
        rule = face_rule(face, k, spec, band_w)
        dens = _density(face, k, alpha, rule.u, rule.v, rule.nodes, profile)
        far = _kernel_sums(targets[far_idx], rule.nodes, rule.weights, dens,
                           face.normal, k, want_gradient)
        for key, val in far.items():
            out[key][far_idx] = val
    for i in np.where(near)[0]:
        nodes, weights, fu, fv = fan_nodes(face, (u[i], v[i]), float(h[i]), k, spec, band_w)
        dens = _density(face, k, alpha, fu, fv, nodes, profile)
        one = _kernel_sums(targets[i:i + 1], nodes, weights, dens,
                           face.normal, k, want_gradient)
        for key, val in one.items():
            out[key][i] = val[0]
    return out


def _is_on_face(r, face):
    u, v, h = face.local_coords(np.asarray(r, dtype=float))
    _, _, _, lu, lv = face.axes()
    return abs(float(h[0])) < _ON_FACE_TOL and \
        -_ON_FACE_TOL < float(u[0]) < lu + _ON_FACE_TOL and \
        -_ON_FACE_TOL < float(v[0]) < lv + _ON_FACE_TOL


def _single_eval(r, alpha, face, k, spec, profile, which):
    spec = spec or QuadratureSpec()
    if which == "D" and _is_on_face(r, face):
        # quadrature gradients are singular on the face; use the trace
        # identities (tangential from the H-integrals, normal from the jump)
        _, eu, ev, _, _ = face.axes()
        alpha_u = _unit(alpha)
        d_val, h_u, h_v, _ = on_face_trace_integrals(r, alpha_u, face, k, spec, profile)
        est = 0.0
        if spec.with_error_estimate:
            d_fine, *_ = on_face_trace_integrals(r, alpha_u, face, k, spec.refined(), profile)
            est = abs(d_fine - d_val)
        au, av = float(alpha_u @ eu), float(alpha_u @ ev)
        dn = single_layer_dnD_on_face(r, alpha_u, face, k, spec, profile)
        grad = eu.astype(complex) * (1j * k * au * d_val + h_u) \
            + ev.astype(complex) * (1j * k * av * d_val + h_v) \
            + face.normal.astype(complex) * dn
        return LayerEvaluation(value=complex(d_val), gradient=grad, est_err=est)
    res = evaluate_layers(r, alpha, face, k, spec, profile, want_gradient=True)
    value = complex(res[which][0])
    grad = res["grad" + which][0]
    est = 0.0
    if spec.with_error_estimate:
        fine = evaluate_layers(r, alpha, face, k, spec.refined(), profile,
                               want_gradient=False)
        est = abs(complex(fine[which][0]) - value)
    return LayerEvaluation(value=value, gradient=grad, est_err=est)


def single_layer_D(r, alpha, face: PolygonFace, k: float,
                   spec: QuadratureSpec | None = None,
                   profile: CutoffProfile | None = None) -> LayerEvaluation:
    """Single-layer potential of the face at one target point."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return _single_eval(r, alpha, face, k, spec, profile, "D")


def double_layer_N(r, alpha, face: PolygonFace, k: float,
                   spec: QuadratureSpec | None = None,
                   profile: CutoffProfile | None = None,
                   side: float = +1.0) -> LayerEvaluation:
    """Double-layer potential at one target; on-face targets get the
    one-sided limit (exact jump, no principal-value part on a flat face)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    r = np.asarray(r, dtype=float)
    u, v, h = face.local_coords(r)
    _, _, _, lu, lv = face.axes()
    on_face = abs(float(h[0])) < _ON_FACE_TOL and \
        -_ON_FACE_TOL < float(u[0]) < lu + _ON_FACE_TOL and \
        -_ON_FACE_TOL < float(v[0]) < lv + _ON_FACE_TOL
    if on_face:
        profile = profile or CutoffProfile()
        alpha = _unit(alpha)
        g = eta_1d(float(u[0]), lu, k, profile) * eta_1d(float(v[0]), lv, k, profile)
        value = 2.0 * np.pi * np.sign(side) * g * np.exp(1j * k * float(r @ alpha))
        grad = np.full(3, np.nan, dtype=complex)   # normal derivative via dn_double_layer_on_face
        return LayerEvaluation(value=complex(value), gradient=grad, est_err=0.0)
    return _single_eval(r, alpha, face, k, spec, profile, "N")


def single_layer_dnD_on_face(r, alpha, face: PolygonFace, k: float,
                             spec: QuadratureSpec | None = None,
                             profile: CutoffProfile | None = None) -> complex:
    """One-sided normal derivative of D on the face: -2 pi eta e^{ik alpha.r}.

    Exact for a flat face (the principal-value term vanishes identically).
    """
    profile = profile or CutoffProfile()
    r = np.asarray(r, dtype=float)
    u, v, h = face.local_coords(r)
    _, _, _, lu, lv = face.axes()
    if abs(float(h[0])) > _ON_FACE_TOL:
        raise ValueError("target is not on the face")
    alpha = _unit(alpha)
    g = eta_1d(float(u[0]), lu, k, profile) * eta_1d(float(v[0]), lv, k, profile)
    return complex(-2.0 * np.pi * g * np.exp(1j * k * float(r @ alpha)))


def _band_strip_rule(face: PolygonFace, k: float, spec: QuadratureSpec,
                     band_w: float, target_uv):
    """Quadrature over the four cut-off transition strips of the face.

    The across-strip direction gets a fixed subdivision of [w, 2w] (the
    support of the cut-off derivatives); the along-strip direction gets
    oscillation panels refined toward the target's in-plane projection,
    which keeps the 1/R kernel resolved even for targets inside a strip.
    Returns (nodes, weights, u, v).
    """
    origin, eu, ev, lu, lv = face.axes()
    rate = 2.0 * k
    ppw = spec.points_per_wavelength
    u0, v0 = float(target_uv[0]), float(target_uv[1])
    across = band_w * np.linspace(1.0, 2.0, 7)
    nodes, weights, uu_all, vv_all = [], [], [], []

    def tensor(bu, bv):
        un, uw = gauss_on_breaks(bu)
        vn, vw = gauss_on_breaks(bv)
        uu, vv = np.meshgrid(un, vn, indexing="ij")
        ww = np.outer(uw, vw).ravel()
        pts = origin[None, :] + uu.ravel()[:, None] * eu[None, :] \
            + vv.ravel()[:, None] * ev[None, :]
        nodes.append(pts)
        weights.append(ww)
        uu_all.append(uu.ravel())
        vv_all.append(vv.ravel())

    # u-band strips span the full v range (their v ends carry the corner
    # terms, hence the w/2 end refinement); v-band strips are clipped to
    # u in [2w, lu-2w] so the strips tile the band without overlap
    for low in (True, False):
        bu = across if low else lu - across[::-1]
        bv = graded_about(lv, rate, ppw, v0, band_w / 2.0,
                          end_scale=(band_w / 2.0, band_w / 2.0))
        tensor(bu, bv)
    inner = lu - 4.0 * band_w
    if inner > 0:
        for low in (True, False):
            bv = across if low else lv - across[::-1]
            bu = 2.0 * band_w + graded_about(inner, rate, ppw, u0 - 2.0 * band_w,
                                             band_w / 2.0)
            tensor(bu, bv)
    return (np.concatenate(nodes), np.concatenate(weights),
            np.concatenate(uu_all), np.concatenate(vv_all))


def on_face_trace_integrals(r, alpha, face: PolygonFace, k: float,
                            spec: QuadratureSpec | None = None,
                            profile: CutoffProfile | None = None):
    """Weakly singular on-face integrals (D, H_u, H_v, G) at one face point.

    H carry the first tangential derivatives of the cut-off and G its
    tangential Laplacian, all against the kernel e^{ik(alpha.q + R)}/R.
    D comes from the apex-fan rule; the cut-off-derivative densities live
    only on the transition strips and use the band rule, which resolves
    the smoothstep shape exactly.
    """
    spec = spec or QuadratureSpec()
    profile = profile or CutoffProfile()
    r = np.asarray(r, dtype=float)
    alpha = _unit(alpha)
    band_w = profile.width(k)
    origin, eu, ev, lu, lv = face.axes()
    u, v, h = face.local_coords(r)
    u0, v0 = float(u[0]), float(v[0])

    def kern_of(nodes, weights):
        diff = r[None, :] - nodes
        rr = np.sqrt(np.einsum("nj,nj->n", diff, diff))
        return weights * np.exp(1j * k * ((nodes @ alpha) + rr)) / np.maximum(rr, 1e-300)

    nodes, weights, fu, fv = fan_nodes(face, (u0, v0), 0.0, k, spec, band_w)
    gu = eta_1d(fu, lu, k, profile)
    gv = eta_1d(fv, lv, k, profile)
    d_val = complex(kern_of(nodes, weights) @ (gu * gv))

    bn, bw_, bu, bv = _band_strip_rule(face, k, spec, band_w, (u0, v0))
    gub, gpub, gppub = eta_1d_derivatives(bu, lu, k, profile)
    gvb, gpvb, gppvb = eta_1d_derivatives(bv, lv, k, profile)
    kb = kern_of(bn, bw_)
    h_u = complex(kb @ (gpub * gvb))
    h_v = complex(kb @ (gub * gpvb))
    g_lap = complex(kb @ (gppub * gvb + gub * gppvb))
    return d_val, h_u, h_v, g_lap


def dn_double_layer_on_face(r, alpha, face: PolygonFace, k: float,
                            spec: QuadratureSpec | None = None,
                            profile: CutoffProfile | None = None) -> complex:
    """One-sided dN/dn on the face via dN/dn = (k^2 + Delta_tan) D.

    Delta_tan D is assembled from the on-face trace integrals; no
    hypersingular kernel is ever formed.
    """
    origin, eu, ev, lu, lv = face.axes()
    alpha = _unit(alpha)
    au, av = float(alpha @ eu), float(alpha @ ev)
    d_val, h_u, h_v, g_lap = on_face_trace_integrals(r, alpha, face, k, spec, profile)
    lap_tan = -(k ** 2) * (au ** 2 + av ** 2) * d_val \
        + 2j * k * (au * h_u + av * h_v) + g_lap
    return complex(k ** 2 * d_val + lap_tan)


def layer_asymptotic_oracle(r, alpha, face: PolygonFace, k: float,
                            which: str = "D",
                            profile: CutoffProfile | None = None,
                            zone_tol: float = 1e-9) -> complex:
    """Leading-order closed form of D, N or dN/dn by zone.

    Raises ZoneAmbiguous on zone boundaries, where the expansions are not
    uniform. On-face targets are detected first and use the flat-face
    trace values.
    """
    if which not in ("D", "N", "dnN"):
        raise ValueError("which must be one of D, N, dnN")
    r = np.asarray(r, dtype=float)
    alpha = _unit(alpha)
    n_alpha = float(alpha @ face.normal)
    u, v, h = face.local_coords(r)
    _, _, _, lu, lv = face.axes()
    phase_in = np.exp(1j * k * float(r @ alpha))

    on_face = abs(float(h[0])) < zone_tol \
        and zone_tol < float(u[0]) < lu - zone_tol \
        and zone_tol < float(v[0]) < lv - zone_tol
    if on_face:
        if which == "D":
            return complex(2.0 * np.pi / (1j * k * n_alpha) * phase_in)
        if which == "N":
            return complex(2.0 * np.pi * phase_in)
        return complex(-2.0 * np.pi * 1j * k * n_alpha * phase_in)

    zone = classify_zone(r, alpha, face, tol=zone_tol)
    if zone is ZoneLabel.BOUNDARY:
        raise ZoneAmbiguous("asymptotics are not uniform near zone boundaries")
    if zone is ZoneLabel.OUTSIDE:
        return 0.0 + 0.0j
    if zone is ZoneLabel.SHADOW:
        if which == "D":
            return complex(2.0 * np.pi / (1j * k * n_alpha) * phase_in)
        if which == "N":
            return complex(-2.0 * np.pi * phase_in)
        return complex(-2.0 * np.pi * 1j * k * n_alpha * phase_in)
    # reflected zone
    astar = reflect_direction(alpha, face.normal)
    t0 = travel_phase_t0(alpha, face)
    phase_out = np.exp(1j * k * (t0 + float(r @ astar)))
    if which == "D":
        return complex(2.0 * np.pi / (1j * k * n_alpha) * phase_out)
    if which == "N":
        return complex(2.0 * np.pi * phase_out)
    return complex(2.0 * np.pi * 1j * k * (-n_alpha) * phase_out)
