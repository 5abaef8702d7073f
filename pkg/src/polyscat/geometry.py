"""Geometry of the double-reflection deflector.

The obstacle is an extruded pair of triangular "wings". In the frame used
throughout this package the incident direction is p0 = (0, 0, 1); the top
plane (containing the outer corners A', B' and the aperture gap G..H) is
z = 0 and the bottom plane (A, B) is z = sqrt(3)/2 * width. Extrusion runs
along y in [0, depth]. For width 1:

    A' = (-1/2, ., 0)      B' = (1/2, ., 0)
    A  = (-1/2, ., s3/2)   B  = (1/2, ., s3/2)      s3 = sqrt(3)
    A'' = (-1/4, ., s3/4)  B'' = (1/4, ., s3/4)
    G  = (-1/4, ., 0)      H  = (1/4, ., 0)

Rays entering the strips |x| in (1/4, 1/2) bounce off an upper face onto
the opposite lower face and leave travelling along p0 again, all with the
same extra path length (the phase shift `delta` = s3/4 * width). Rays with
|x| < 1/4 pass through the gap untouched.

Active faces carry the labels O1_l, O2_l, O1_r, O2_r (upper/lower,
left/right); the slightly notched lateral sides and the extrusion end
caps are passive (never met by incident or reflected rays).

All constructed objects are immutable; everything here is safe to share
across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "P0",
    "ZoneLabel",
    "PolygonFace",
    "Obstacle",
    "build_obstacle",
    "reflect_direction",
    "travel_phase_t0",
    "phase_shift_delta",
    "classify_zone",
    "zone_boundary_distance",
    "obstacle_to_json",
]

P0 = np.array([0.0, 0.0, 1.0])

_UNIT_TOL = 1e-12
_PLANE_TOL = 1e-12

ACTIVE_LABELS = ("O1_l", "O2_l", "O1_r", "O2_r")


class ZoneLabel(Enum):
    SHADOW = "shadow"
    REFLECTED = "reflected"
    OUTSIDE = "outside"
    BOUNDARY = "boundary"


def _unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("zero vector has no direction")
    return v / n


def reflect_direction(alpha, n):
    """Specular reflection alpha* = alpha - 2 (alpha.n) n of a unit vector."""
    alpha = np.asarray(alpha, dtype=float)
    n = np.asarray(n, dtype=float)
    if abs(np.linalg.norm(alpha) - 1.0) > 1e-9 or abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ValueError("reflect_direction expects unit vectors")
    return alpha - 2.0 * float(alpha @ n) * n


@dataclass(frozen=True)
class PolygonFace:
    """Planar polygon with an outward unit normal.

    vertices : (V, 3) array, counterclockwise as seen from the normal side.
    Active faces are rectangles; `axes()` exposes their local frame
    (origin = vertices[0], two in-plane unit axes and side lengths).
    """

    vertices: np.ndarray
    normal: np.ndarray
    label: str = "passive"

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        n = _unit(self.normal)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "normal", n)
        verts.setflags(write=False)
        n.setflags(write=False)
        # coplanarity and orthogonality checks
        rel = verts - verts[0]
        if np.max(np.abs(rel @ n)) > 1e-10:
            raise ValueError(f"face {self.label}: vertices not coplanar")
        edges = np.roll(verts, -1, axis=0) - verts
        if np.max(np.abs(edges @ n)) > 1e-10:
            raise ValueError(f"face {self.label}: normal not orthogonal to edges")
        # CCW from the normal side: signed area along n must be positive
        cross = np.cross(verts - verts[0], np.roll(verts, -1, axis=0) - verts[0])
        if float(np.sum(cross @ n)) <= 0.0:
            raise ValueError(f"face {self.label}: vertex order not CCW from normal side")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def area(self) -> float:
        v = self.vertices
        cross = np.cross(v - v[0], np.roll(v, -1, axis=0) - v[0])
        return 0.5 * float(np.sum(cross @ self.normal))

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def plane_offset(self) -> float:
        """n . r for every r on the face plane."""
        return float(self.normal @ self.vertices[0])

    def axes(self):
        """Rectangle frame (origin, e_u, e_v, L_u, L_v); active faces only."""
        v = self.vertices
        if len(v) != 4:
            raise ValueError(f"face {self.label} is not a rectangle")
        eu = v[1] - v[0]
        ev = v[3] - v[0]
        lu = float(np.linalg.norm(eu))
        lv = float(np.linalg.norm(ev))
        if abs(eu @ ev) > 1e-10 * lu * lv:
            raise ValueError(f"face {self.label} is not a rectangle")
        return v[0], eu / lu, ev / lv, lu, lv

    def local_coords(self, points):
        """In-plane coordinates (u, v) and height t = n.(r - origin)."""
        origin, eu, ev, _, _ = self.axes()
        rel = np.atleast_2d(points) - origin
        return rel @ eu, rel @ ev, rel @ self.normal

    def contains_inplane(self, points, tol=0.0):
        """True where the in-plane projection falls inside the rectangle."""
        u, v, _ = self.local_coords(points)
        _, _, _, lu, lv = self.axes()
        return (u >= -tol) & (u <= lu + tol) & (v >= -tol) & (v <= lv + tol)

    def contains_polygon(self, points_2d, tol=1e-12):
        """Even-odd test in face-plane coordinates for generic polygons."""
        verts = self.vertices
        origin = verts[0]
        n = self.normal
        # build an in-plane basis
        e1 = _unit(verts[1] - verts[0])
        e2 = np.cross(n, e1)
        poly = np.column_stack(((verts - origin) @ e1, (verts - origin) @ e2))
        pts = np.atleast_2d(points_2d)
        inside = np.zeros(len(pts), dtype=bool)
        x, y = pts[:, 0], pts[:, 1]
        for i in range(len(poly)):
            x1, y1 = poly[i]
            x2, y2 = poly[(i + 1) % len(poly)]
            crosses = ((y1 > y) != (y2 > y))
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (x < xint)
        return inside

    def plane_basis(self):
        n = self.normal
        e1 = _unit(self.vertices[1] - self.vertices[0])
        e2 = np.cross(n, e1)
        return e1, e2


@dataclass(frozen=True)
class Obstacle:
    """The deflector: faces plus the derived scattering constants.

    delta       constant extra path length of doubly reflected rays
    d           face-to-face translation |A'B''| (M2 = M1 + d p0*)
    geom_cross  area of the projection on the (x, y) plane
    """

    faces: tuple
    width: float
    depth: float
    notch: float
    delta: float
    d: float
    geom_cross: float
    source_offset: float = 1.0

    def face(self, label: str) -> PolygonFace:
        for f in self.faces:
            if f.label == label:
                return f
        raise KeyError(label)

    @property
    def active_faces(self):
        return tuple(f for f in self.faces if f.label != "passive")

    @property
    def bottom_z(self) -> float:
        return float(np.sqrt(3.0) / 2.0 * self.width)

    def incoming_direction(self, label: str) -> np.ndarray:
        """Direction of the eikonal wave arriving at an active face."""
        if label in ("O1_l", "O1_r"):
            return P0.copy()
        if label == "O2_r":  # fed by O1_l
            return reflect_direction(P0, self.face("O1_l").normal)
        if label == "O2_l":  # fed by O1_r
            return reflect_direction(P0, self.face("O1_r").normal)
        raise KeyError(label)

    def block_pairs(self):
        """The two ray-connected face pairs ((first, second), ...)."""
        return (("O1_l", "O2_r"), ("O1_r", "O2_l"))


def _rect_prism_face(p_a, p_b, depth, normal, label):
    """Rectangle over segment p_a -> p_b extruded along y, CCW from `normal`."""
    a0 = np.array([p_a[0], 0.0, p_a[1]])
    a1 = np.array([p_a[0], depth, p_a[1]])
    b0 = np.array([p_b[0], 0.0, p_b[1]])
    b1 = np.array([p_b[0], depth, p_b[1]])
    verts = np.array([a0, b0, b1, a1])
    cross = np.cross(verts[1] - verts[0], verts[2] - verts[0])
    if cross @ normal < 0:
        verts = verts[::-1]
        verts = np.roll(verts, 1, axis=0)
    return PolygonFace(vertices=verts, normal=_unit(normal), label=label)


def _end_cap(loop_2d, y, outward_y, label="passive"):
    verts = np.array([[p[0], y, p[1]] for p in loop_2d])
    normal = np.array([0.0, outward_y, 0.0])
    # orient CCW from the cap normal
    e1 = np.array([1.0, 0.0, 0.0])
    e2 = np.cross(normal, e1)
    poly = np.column_stack((verts @ e1, verts @ e2))
    signed = 0.5 * np.sum(poly[:, 0] * np.roll(poly[:, 1], -1) - np.roll(poly[:, 0], -1) * poly[:, 1])
    if signed < 0:
        verts = verts[::-1]
    return PolygonFace(vertices=verts, normal=normal, label=label)


def build_obstacle(width: float = 1.0, depth: float = 1.0, notch: float = 0.0375,
                   source_offset: float = 1.0) -> Obstacle:
    """Construct the deflector in the standard frame.

    width   outer span |A'B'| (sets every length scale)
    depth   extrusion length along y
    notch   inward displacement of the lateral-side ridge, as a fraction
            of width; must stay in [0, 1/8) so the laterals remain clear
            of both the tangent rays and the reflected tube
    """
    if width <= 0 or depth <= 0:
        raise ValueError("width and depth must be positive")
    if not (0.0 <= notch < 0.125):
        raise ValueError("notch must lie in [0, 1/8)")

    w = float(width)
    s3 = np.sqrt(3.0)
    # 2D cross-section corners (x, z), z increasing along propagation
    A1 = (-w / 2, 0.0)            # A'
    B1 = (w / 2, 0.0)             # B'
    A = (-w / 2, s3 / 2 * w)
    B = (w / 2, s3 / 2 * w)
    A2 = (-w / 4, s3 / 4 * w)     # A''
    B2 = (w / 4, s3 / 4 * w)      # B''
    Ll = (-w / 2 + notch * w, s3 / 4 * w)   # lateral ridge, left
    Lr = (w / 2 - notch * w, s3 / 4 * w)

    n_O1_l = np.array([s3 / 2, 0.0, -0.5])
    n_O2_l = np.array([s3 / 2, 0.0, 0.5])
    n_O1_r = np.array([-s3 / 2, 0.0, -0.5])
    n_O2_r = np.array([-s3 / 2, 0.0, 0.5])

    faces = [
        _rect_prism_face(A1, A2, depth, n_O1_l, "O1_l"),
        _rect_prism_face(A2, A, depth, n_O2_l, "O2_l"),
        _rect_prism_face(B1, B2, depth, n_O1_r, "O1_r"),
        _rect_prism_face(B2, B, depth, n_O2_r, "O2_r"),
    ]

    # passive lateral sides, split at the notch ridge
    def lateral_normal(p, q, inward_x):
        d2 = np.array([q[0] - p[0], q[1] - p[1]])
        n2 = np.array([d2[1], -d2[0]])
        n2 = n2 / np.linalg.norm(n2)
        if n2[0] * inward_x > 0:    # must point away from the body
            n2 = -n2
        return np.array([n2[0], 0.0, n2[1]])

    for p, q, inward in ((A1, Ll, +1), (Ll, A, +1), (B1, Lr, -1), (Lr, B, -1)):
        faces.append(_rect_prism_face(p, q, depth, lateral_normal(p, q, inward), "passive"))

    # extrusion end caps (non-convex darts)
    left_loop = [A1, A2, A, Ll]
    right_loop = [B1, B2, B, Lr]
    for loop in (left_loop, right_loop):
        faces.append(_end_cap(loop, 0.0, -1.0))
        faces.append(_end_cap(loop, depth, +1.0))

    delta = s3 / 4 * w
    d = s3 / 2 * w                 # |A'B''|
    geom_cross = w * depth / 2.0

    obstacle = Obstacle(faces=tuple(faces), width=w, depth=float(depth),
                        notch=float(notch), delta=delta, d=d,
                        geom_cross=geom_cross, source_offset=float(source_offset))

    # M2 must be M1 translated by d p0* (used all over the far-field algebra);
    # windings are opposite (opposite normals), so match vertices as a set
    p0_star = reflect_direction(P0, obstacle.face("O1_l").normal)
    m1, m2 = obstacle.face("O1_l").vertices, obstacle.face("O2_r").vertices
    shifted = m1 + d * p0_star
    mismatch = max(np.min(np.linalg.norm(m2 - v, axis=1)) for v in shifted)
    if mismatch > 1e-12 * max(w, depth):
        raise AssertionError("construction broke the M2 = M1 + d p0* shift")
    return obstacle


def travel_phase_t0(alpha, face: PolygonFace) -> float:
    """Phase offset t0 = 2 (alpha.n)(n.r), constant over a planar face.

    Defined by e^{ik(alpha*.r + t0)} = e^{ik alpha.r} on the face; raises
    if per-vertex values disagree (non-planar input).
    """
    alpha = _unit(alpha)
    n = face.normal
    na = float(alpha @ n)
    vals = 2.0 * na * (face.vertices @ n)
    if np.max(vals) - np.min(vals) > 1e-10:
        raise ValueError("t0 not constant: face is not planar to tolerance")
    return float(vals.mean())


def phase_shift_delta(obstacle: Obstacle) -> float:
    """Extra path length of a doubly reflected ray, from vertex coordinates.

    Computed as t0(p0, O1_l) + t0(p0*, O2_r); equals |GA''|+|A''B|-|A'A|.
    """
    f1 = obstacle.face("O1_l")
    f2 = obstacle.face("O2_r")
    p0_star = reflect_direction(P0, f1.normal)
    return travel_phase_t0(P0, f1) + travel_phase_t0(p0_star, f2)


def _backproject(r, direction, face: PolygonFace):
    """Solve r = q + t*direction with q on the face plane; return (q, t)."""
    n = face.normal
    denom = float(direction @ n)
    h = float(r @ n) - face.plane_offset()
    t = h / denom
    q = r - t * direction
    return q, t


def classify_zone(r, alpha, face: PolygonFace, tol: float = 1e-9) -> ZoneLabel:
    """Zone of `r` relative to one face hit by a wave from direction `alpha`.

    Shadow: r = q + t alpha (q on face, t > 0); Reflected: same along the
    reflected direction; Boundary within `tol` of either prism's boundary.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    r = np.asarray(r, dtype=float)
    alpha = _unit(alpha)
    astar = reflect_direction(alpha, face.normal)
    _, _, _, lu, lv = face.axes()

    label = ZoneLabel.OUTSIDE
    near_boundary = False
    for d in (alpha, astar):
        q, t = _backproject(r, d, face)
        u, v, _ = face.local_coords(q)
        u, v = float(u[0]), float(v[0])
        inside = (tol < u < lu - tol) and (tol < v < lv - tol)
        margin = min(u, lu - u, v, lv - v)
        if t > tol and inside:
            label = ZoneLabel.SHADOW if d is alpha else ZoneLabel.REFLECTED
        elif t > -tol and abs(margin) <= tol:
            near_boundary = True
        elif abs(t) <= tol and -tol <= u <= lu + tol and -tol <= v <= lv + tol:
            near_boundary = True   # on the face itself
        elif t > tol and abs(margin) <= tol:
            near_boundary = True
    if label is ZoneLabel.OUTSIDE and near_boundary:
        return ZoneLabel.BOUNDARY
    if label is not ZoneLabel.OUTSIDE:
        # demote to boundary when within tol of the prism's lateral wall
        q, t = _backproject(r, alpha if label is ZoneLabel.SHADOW else astar, face)
        u, v, _ = face.local_coords(q)
        margin = min(float(u[0]), lu - float(u[0]), float(v[0]), lv - float(v[0]))
        if margin <= tol or t <= tol:
            return ZoneLabel.BOUNDARY
    return label


def zone_boundary_distance(r, obstacle: Obstacle) -> float:
    """Distance to the extended zone-boundary set (the paper-style B-hat).

    For every edge of every active face, the edge segment swept along the
    full incident and reflected lines (both senses) forms a planar strip;
    the result is the minimum distance to all such strips.
    """
    r = np.asarray(r, dtype=float)
    best = np.inf
    for f in obstacle.active_faces:
        alpha = obstacle.incoming_direction(f.label)
        astar = reflect_direction(alpha, f.normal)
        verts = f.vertices
        edges = [(verts[i], verts[(i + 1) % 4]) for i in range(4)]
        for (a, b) in edges:
            e = b - a
            le = np.linalg.norm(e)
            ehat = e / le
            for d in (alpha, astar):
                # distance to {a + s*ehat + t*d : s in [0, le], t in R}
                nrm = np.cross(ehat, d)
                nn = np.linalg.norm(nrm)
                if nn < 1e-14:
                    continue
                nrm = nrm / nn
                rel = r - a
                h = float(rel @ nrm)
                in_plane = rel - h * nrm
                # coordinates along ehat/d (non-orthogonal in general)
                m = np.column_stack((ehat, d))
                st, *_ = np.linalg.lstsq(m, in_plane, rcond=None)
                s = float(np.clip(st[0], 0.0, le))
                # refit t with s clamped
                t = float((in_plane - s * ehat) @ d) / float(d @ d)
                p = a + s * ehat + t * d
                best = min(best, float(np.linalg.norm(r - p)))
    return best


def obstacle_to_json(obstacle: Obstacle) -> str:
    """JSON export: vertex list, per-face index lists, labels, constants."""
    verts: list[list[float]] = []
    index: dict[tuple, int] = {}

    def vid(v):
        key = tuple(np.round(v, 12))
        if key not in index:
            index[key] = len(verts)
            verts.append([float(x) for x in v])
        return index[key]

    faces = []
    for f in obstacle.faces:
        faces.append({
            "label": f.label,
            "vertices": [vid(v) for v in f.vertices],
            "normal": [float(x) for x in f.normal],
        })
    payload = {
        "width": obstacle.width,
        "depth": obstacle.depth,
        "notch": obstacle.notch,
        "delta": obstacle.delta,
        "d": obstacle.d,
        "geom_cross": obstacle.geom_cross,
        "vertices": verts,
        "faces": faces,
    }
    return json.dumps(payload, indent=2)
