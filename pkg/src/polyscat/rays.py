"""Geometrical-optics rays and the eikonal field.

Two routes to the same field: `trace_ray` follows an individual ray from
the source plane z = -a through its reflections, while the eikonal
evaluators use the closed-form region structure of the deflector (direct
branch, two single-bounce tubes, two double-bounce strips). The closed
form is validated against tracing in the tests.

Every branch through a point contributes A^bounces * e^{ik phase} with a
phase that is affine in position, so branches carry (bounces, direction,
phase constant) and callers can form exact gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import P0, Obstacle, PolygonFace, reflect_direction, travel_phase_t0

__all__ = [
    "EdgeHit",
    "PoleAtLambda",
    "check_impedance",
    "face_reflection_coefficient",
    "RayPath",
    "trace_ray",
    "EikonalBranch",
    "EikonalValue",
    "eikonal_branches",
    "eikonal_total_field",
    "eikonal_scattered_field",
]


class EdgeHit(RuntimeError):
    """A traced ray met a face edge within tolerance."""


class PoleAtLambda(ValueError):
    """Reflection-coefficient denominator i*n_alpha - lambda vanished."""


def check_impedance(lam: complex) -> complex:
    lam = complex(lam)
    if lam.imag < -1e-15:
        raise ValueError("impedance must have Im(lambda) >= 0")
    return lam


def face_reflection_coefficient(lam: complex, n_alpha: float) -> complex:
    """Per-bounce amplitude factor A = (i n_alpha + lambda)/(i n_alpha - lambda).

    n_alpha = n . alpha is the (negative) incidence cosine; every bounce on
    the standard deflector has n_alpha = -1/2, giving A = (i-2l)/(i+2l).
    """
    lam = check_impedance(lam)
    if not (-1.0 <= n_alpha < 0.0):
        raise ValueError("n_alpha must lie in [-1, 0)")
    denom = 1j * n_alpha - lam
    if abs(denom) < 1e-15:
        raise PoleAtLambda(f"lambda = {lam} is a pole of the reflection factor")
    return (1j * n_alpha + lam) / denom


@dataclass(frozen=True)
class RayPath:
    """Traced trajectory: straight segments (origin, direction, length)."""

    start: np.ndarray
    segments: tuple
    collisions: int

    @property
    def action(self) -> float:
        return float(sum(s[2] for s in self.segments))

    @property
    def exit_direction(self) -> np.ndarray:
        return self.segments[-1][1]

    def path_length_excess(self, obstacle: Obstacle) -> float:
        """Action minus the free flight over the same z interval."""
        z0 = self.start[2]
        z1 = self.segments[-1][0][2] + self.segments[-1][1][2] * self.segments[-1][2]
        return self.action - (z1 - z0)


def _intersect_face(origin, direction, face: PolygonFace, edge_tol):
    """First positive-t intersection with one face; returns (t, edge_flag)."""
    n = face.normal
    denom = float(direction @ n)
    if abs(denom) < 1e-14:
        return None
    t = (face.plane_offset() - float(origin @ n)) / denom
    if t <= 1e-12:
        return None
    hit = origin + t * direction
    e1, e2 = face.plane_basis()
    rel = hit - face.vertices[0]
    pt2 = np.array([[rel @ e1, rel @ e2]])
    inside = bool(face.contains_polygon(pt2)[0])
    # distance to the polygon boundary in-plane, for the edge guard
    verts2 = np.column_stack(((face.vertices - face.vertices[0]) @ e1,
                              (face.vertices - face.vertices[0]) @ e2))
    dmin = np.inf
    p = pt2[0]
    for i in range(len(verts2)):
        a, b = verts2[i], verts2[(i + 1) % len(verts2)]
        ab = b - a
        s = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
        dmin = min(dmin, float(np.linalg.norm(p - (a + s * ab))))
    if dmin <= edge_tol:
        return (t, True)
    if not inside:
        return None
    return (t, False)


def trace_ray(x0: float, y0: float, obstacle: Obstacle, edge_tol: float = 1e-12) -> RayPath:
    """Trace the ray starting at (x0, y0, -a) with momentum p0.

    Follows reflections off active faces until the ray leaves the slab
    z <= bottom plane, then appends the final straight segment down to the
    bottom plane. Raises EdgeHit within `edge_tol` of any face edge.
    """
    a = obstacle.source_offset
    start = np.array([float(x0), float(y0), -a])
    origin = start.copy()
    direction = P0.copy()
    segments = []
    collisions = 0
    z_exit = obstacle.bottom_z
    for _ in range(8):   # the standard deflector never needs more than 2
        best = None
        best_face = None
        for f in obstacle.faces:
            res = _intersect_face(origin, direction, f, edge_tol)
            if res is None:
                continue
            t, on_edge = res
            if best is None or t < best[0]:
                best = (t, on_edge)
                best_face = f
        if best is None:
            break
        t, on_edge = best
        if on_edge:
            raise EdgeHit(f"ray ({x0}, {y0}) meets an edge of {best_face.label}")
        if best_face.label == "passive":
            raise EdgeHit(f"ray ({x0}, {y0}) strikes passive face (tangent geometry)")
        segments.append((origin.copy(), direction.copy(), t))
        origin = origin + t * direction
        direction = reflect_direction(direction, best_face.normal)
        collisions += 1
    # final segment down to the exit plane
    if abs(direction[2]) < 1e-14:
        raise EdgeHit("ray left travelling parallel to the exit plane")
    t_exit = (z_exit - origin[2]) / direction[2]
    if t_exit < 0:
        raise EdgeHit("ray exited upward; geometry violated")
    segments.append((origin.copy(), direction.copy(), t_exit))
    return RayPath(start=start, segments=tuple(segments), collisions=collisions)


@dataclass(frozen=True)
class EikonalBranch:
    """One ray family through a point: value = A^bounces e^{ik(dir.r + c)}."""

    bounces: int
    direction: np.ndarray
    phase_const: float

    def phase(self, r) -> float:
        return float(self.direction @ np.asarray(r, dtype=float)) + self.phase_const


@dataclass(frozen=True)
class EikonalValue:
    value: complex
    branch_count: int
    on_cut: bool


def _strip_membership(x, lo, hi, tol):
    """-1 outside, 0 within tol of an endpoint, 1 strictly inside."""
    if lo + tol < x < hi - tol:
        return 1
    if lo - tol <= x <= hi + tol:
        return 0
    return -1


def eikonal_branches(r, obstacle: Obstacle, tol: float | None = None):
    """All ray branches through r, with an on-cut flag.

    Branch inclusion at a zone boundary follows the illuminated/reflected
    side (one-sided limits), mirroring the tracer's behaviour just inside.
    """
    r = np.asarray(r, dtype=float)
    if tol is None:
        tol = 1e-9 * obstacle.width
    w, dep = obstacle.width, obstacle.depth
    x, y, z = r
    s3 = np.sqrt(3.0)
    on_cut = False
    branches = []

    y_mem = _strip_membership(y, 0.0, dep, tol)
    if y_mem == 0:
        on_cut = True

    # --- direct branch: blocked in the geometric shadow of either wing
    blocked = False
    if y_mem >= 0:
        for sgn in (-1.0, 1.0):
            xl, xh = (w / 4, w / 2)
            xs = sgn * x
            mem = _strip_membership(xs, xl, xh, tol)
            z_face = s3 * (w / 2 - xs)        # upper face of that wing
            if mem >= 0 and z > z_face + tol:
                if mem == 0:
                    on_cut = True
                if mem == 1 and y_mem == 1:
                    blocked = True
                elif mem >= 0 and y_mem >= 0:
                    on_cut = True
            elif mem >= 0 and abs(z - z_face) <= tol:
                on_cut = True
    if not blocked:
        branches.append(EikonalBranch(0, P0.copy(), 0.0))

    # --- single-bounce tubes and double-bounce strips, one per wing pair
    for first_label, second_label in obstacle.block_pairs():
        f1 = obstacle.face(first_label)
        f2 = obstacle.face(second_label)
        alpha_star = reflect_direction(P0, f1.normal)
        t0 = travel_phase_t0(P0, f1)

        # tube: back-project along alpha_star onto f1, must land on the face
        # with t > 0 and r must sit before the plane of f2
        n1 = f1.normal
        denom = float(alpha_star @ n1)      # = -n_alpha = 1/2
        h = float(r @ n1) - f1.plane_offset()
        t = h / denom
        q = r - t * alpha_star
        u, v, _ = f1.local_coords(q)
        u, v = float(u[0]), float(v[0])
        _, _, _, lu, lv = f1.axes()
        h2 = float(r @ f2.normal) - f2.plane_offset()
        u_mem = _strip_membership(u, 0.0, lu, tol)
        v_mem = _strip_membership(v, 0.0, lv, tol)
        if u_mem >= 0 and v_mem >= 0 and t > -tol and h2 > -tol:
            boundary = (u_mem == 0 or v_mem == 0 or t <= tol or h2 <= tol)
            if boundary:
                on_cut = True
            branches.append(EikonalBranch(1, alpha_star.copy(), t0))

        # strip: back-project along p0 onto f2
        n2 = f2.normal
        h = float(r @ n2) - f2.plane_offset()
        t2 = h / float(P0 @ n2)
        q2 = r - t2 * P0
        u, v, _ = f2.local_coords(q2)
        u, v = float(u[0]), float(v[0])
        _, _, _, lu2, lv2 = f2.axes()
        u_mem = _strip_membership(u, 0.0, lu2, tol)
        v_mem = _strip_membership(v, 0.0, lv2, tol)
        t0_second = travel_phase_t0(alpha_star, f2)
        if u_mem >= 0 and v_mem >= 0 and t2 > -tol:
            boundary = (u_mem == 0 or v_mem == 0 or t2 <= tol)
            if boundary:
                on_cut = True
            branches.append(EikonalBranch(2, P0.copy(), t0 + t0_second))

    return branches, on_cut


def eikonal_total_field(r, k: float, lam: complex, obstacle: Obstacle,
                        tol: float | None = None) -> EikonalValue:
    """Piecewise plane-wave field Psi_eik(r) = sum_branches A^n e^{ik phase}."""
    if k <= 0:
        raise ValueError("k must be positive")
    A = face_reflection_coefficient(lam, -0.5)
    branches, on_cut = eikonal_branches(r, obstacle, tol)
    val = sum((A ** b.bounces) * np.exp(1j * k * b.phase(r)) for b in branches)
    return EikonalValue(value=complex(val), branch_count=len(branches), on_cut=on_cut)


def eikonal_scattered_field(r, k: float, lam: complex, obstacle: Obstacle,
                            tol: float | None = None) -> EikonalValue:
    """psi_eik = Psi_eik - e^{ik z} (incident plane wave removed)."""
    total = eikonal_total_field(r, k, lam, obstacle, tol)
    z = float(np.asarray(r, dtype=float)[2])
    return EikonalValue(value=total.value - complex(np.exp(1j * k * z)),
                        branch_count=total.branch_count, on_cut=total.on_cut)
