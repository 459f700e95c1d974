"""Convex collision geometry: polytopes, GJK distance, EPA penetration depth.

Queries operate on pose-resolved (world frame) polytopes. Separated pairs
report the nearest points from GJK; intersecting pairs report the minimal
translation depth and direction from EPA. The ``touching`` band is
``|distance| <= TOUCH_EPS`` so contact-anchor creation does not flicker at
tangency.

Tolerances: GJK terminates when the simplex improvement drops below 1e-10 m,
EPA when the best face expands by less than 1e-9 m; both cap at 128
iterations.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .transforms import Transform, frame_with_z, minimal_rotation, normalized

GJK_IMPROVEMENT = 1e-10
EPA_EXPANSION = 1e-9
MAX_ITERATIONS = 128
TOUCH_EPS = 1e-9

SEPARATED = "separated"
TOUCHING = "touching"
PENETRATING = "penetrating"
NUMERIC_FAILURE = "numeric-failure"


class GeometryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ConvexPolytope:
    """Convex vertex hull with outward-wound triangle faces.

    ``attachment`` is a robot body name, or None for world-fixed geometry;
    ``offset`` maps local vertices into the attachment (or world) frame.
    Degenerate planar patches are flagged and keep both windings of their
    triangulation so every face normal still points outward.
    """

    name: str
    vertices: np.ndarray  # (k, 3) local frame
    faces: np.ndarray  # (f, 3) int indices, outward winding
    normals: np.ndarray  # (f, 3) outward unit normals
    attachment: str | None = None
    offset: Transform = None  # type: ignore[assignment]
    degenerate: bool = False

    def __post_init__(self):
        if self.offset is None:
            object.__setattr__(self, "offset", Transform.identity())


def _orient_faces_outward(vertices: np.ndarray, simplices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    centroid = vertices.mean(axis=0)
    faces = []
    normals = []
    for tri in simplices:
        a, b, c = vertices[tri]
        n = np.cross(b - a, c - a)
        nn = np.linalg.norm(n)
        if nn < 1e-14:
            continue
        n = n / nn
        if n @ (a - centroid) < 0.0:
            tri = tri[[0, 2, 1]]
            n = -n
        faces.append(tri)
        normals.append(n)
    return np.asarray(faces, dtype=int), np.asarray(normals)


def build_polytope(
    vertices,
    name: str = "poly",
    attachment: str | None = None,
    offset: Transform | None = None,
) -> ConvexPolytope:
    """Construct a polytope from a vertex cloud (hull computed internally)."""
    pts = np.asarray(vertices, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 3:
        raise GeometryError(f"polytope {name!r}: need at least 3 points of dimension 3")
    if not np.all(np.isfinite(pts)):
        raise GeometryError(f"polytope {name!r}: non-finite vertices")
    try:
        hull = ConvexHull(pts)
        verts = pts[hull.vertices]
        remap = {old: new for new, old in enumerate(hull.vertices)}
        simplices = np.array([[remap[i] for i in tri] for tri in hull.simplices], dtype=int)
        faces, normals = _orient_faces_outward(verts, simplices)
        poly = ConvexPolytope(name, verts, faces, normals, attachment, offset, degenerate=False)
        _check_convexity(poly)
        return poly
    except QhullError:
        return _build_planar_patch(pts, name, attachment, offset)


def _build_planar_patch(pts, name, attachment, offset) -> ConvexPolytope:
    """Coplanar (or collinear) clouds become degenerate-flagged 2-D patches."""
    centered = pts - pts.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s.size < 2 or s[1] < 1e-12:
        raise GeometryError(f"polytope {name!r}: vertices are collinear")
    basis = vt[:2]
    uv = centered @ basis.T
    hull2 = ConvexHull(uv)
    verts = pts[hull2.vertices]
    k = len(verts)
    # Triangle fan with both windings so outward normals cover +/- the plane.
    tris = [[0, i, i + 1] for i in range(1, k - 1)]
    tris += [[0, i + 1, i] for i in range(1, k - 1)]
    plane_n = normalized(np.cross(basis[0], basis[1]))
    faces = []
    normals = []
    for tri in tris:
        a, b, c = verts[tri]
        n = np.cross(b - a, c - a)
        nn = np.linalg.norm(n)
        if nn < 1e-14:
            continue
        faces.append(tri)
        normals.append(n / nn)
    if not faces:
        raise GeometryError(f"polytope {name!r}: degenerate patch has no area")
    return ConvexPolytope(
        name,
        verts,
        np.asarray(faces, dtype=int),
        np.asarray(normals),
        attachment,
        offset,
        degenerate=True,
    )


def _check_convexity(poly: ConvexPolytope, tol: float = 1e-9) -> None:
    for tri, n in zip(poly.faces, poly.normals):
        d = n @ poly.vertices[tri[0]]
        if np.any(poly.vertices @ n - d > tol):
            raise GeometryError(f"polytope {poly.name!r}: vertex outside face plane (non-convex)")


@dataclass(frozen=True, eq=False)
class PlacedPolytope:
    """A polytope resolved into world frame."""

    source: ConvexPolytope
    world_vertices: np.ndarray
    world_normals: np.ndarray

    @property
    def faces(self) -> np.ndarray:
        return self.source.faces

    @property
    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        return self.world_vertices.min(axis=0), self.world_vertices.max(axis=0)


def place(poly: ConvexPolytope, world_from_attachment: Transform | None = None) -> PlacedPolytope:
    t = poly.offset if world_from_attachment is None else world_from_attachment.compose(poly.offset)
    return PlacedPolytope(poly, t.apply(poly.vertices), poly.normals @ t.rotation.T)


def aabb_distance(a: PlacedPolytope, b: PlacedPolytope) -> float:
    """Lower bound on the true distance; 0 when the boxes overlap."""
    amin, amax = a.aabb
    bmin, bmax = b.aabb
    gap = np.maximum(np.maximum(bmin - amax, amin - bmax), 0.0)
    return float(np.linalg.norm(gap))


@dataclass(frozen=True, eq=False)
class ProximityResult:
    """Distance/penetration query result.

    ``normal`` points from A toward B: it is the direction B would translate
    to increase separation. Witness points realize the reported distance or
    depth.
    """

    status: str
    distance: float  # >= 0 when separated/touching, 0 when penetrating
    depth: float  # > 0 when penetrating, else 0
    point_a: np.ndarray
    point_b: np.ndarray
    normal: np.ndarray

    @property
    def penetrating(self) -> bool:
        return self.status == PENETRATING


def _support(verts: np.ndarray, d: np.ndarray) -> int:
    return int(np.argmax(verts @ d))


def _minkowski_support(va, vb, d):
    ia = _support(va, d)
    ib = _support(vb, -d)
    return va[ia] - vb[ib], ia, ib


_SUBSETS = {
    1: [(0,)],
    2: [(0,), (1,), (0, 1)],
    3: [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)],
    4: [
        (0,), (1,), (2,), (3,),
        (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3),
        (0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3),
        (0, 1, 2, 3),
    ],
}


def _closest_on_simplex(points: np.ndarray):
    """Closest point to the origin on the convex hull of up to 4 points.

    Returns (closest, lambdas, subset). Enumerates every sub-simplex and keeps
    the best feasible barycentric projection; brute force but branch-free and
    deterministic.
    """
    k = len(points)
    best = None
    for subset in _SUBSETS[k]:
        P = points[list(subset)]
        m = len(subset)
        if m == 1:
            lam = np.array([1.0])
            v = P[0]
        else:
            G = P @ P.T
            A = np.empty((m + 1, m + 1))
            A[:m, :m] = G
            A[:m, m] = 1.0
            A[m, :m] = 1.0
            A[m, m] = 0.0
            rhs = np.zeros(m + 1)
            rhs[m] = 1.0
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            lam = sol[:m]
            # Near-degenerate sub-simplices produce exploding barycentrics;
            # skip them rather than report a spurious closest point.
            if np.any(lam < -1e-12) or np.abs(lam).max() > 1e8:
                continue
            v = lam @ P
        d2 = float(v @ v)
        if best is None or d2 < best[0] - 1e-18:
            best = (d2, v, lam, subset)
    assert best is not None
    return best[1], best[2], best[3]


def _gjk(va: np.ndarray, vb: np.ndarray, max_distance: float | None = None):
    """GJK distance query on the Minkowski difference A - B.

    Returns (state, data):
      * ("separated", (dist, pa, pb))
      * ("overlap", simplex entries)  -- needs EPA
      * ("failure", None)
    """
    d0 = vb.mean(axis=0) - va.mean(axis=0)
    if np.linalg.norm(d0) < 1e-12:
        d0 = np.array([1.0, 0.0, 0.0])
    w, ia, ib = _minkowski_support(va, vb, d0)
    simplex = [(w, ia, ib)]
    v = w.copy()
    lam = np.array([1.0])
    for _ in range(MAX_ITERATIONS):
        vn = float(np.linalg.norm(v))
        if vn < TOUCH_EPS:
            return "overlap", simplex
        w, ia, ib = _minkowski_support(va, vb, -v)
        # Support bound: vn - (v @ w) / vn is the guaranteed improvement left.
        gap = vn - float(v @ w) / vn
        if max_distance is not None and float(v @ w) / vn > max_distance:
            pa, pb = _witnesses(simplex, lam, va, vb)
            return "separated", (float(v @ w) / vn, pa, pb, True)
        if gap < GJK_IMPROVEMENT:
            pa, pb = _witnesses(simplex, lam, va, vb)
            return "separated", (vn, pa, pb, False)
        if any(ia == ea and ib == eb for _, ea, eb in simplex):
            pa, pb = _witnesses(simplex, lam, va, vb)
            return "separated", (vn, pa, pb, False)
        simplex.append((w, ia, ib))
        points = np.array([e[0] for e in simplex])
        v, lam, keep = _closest_on_simplex(points)
        simplex = [simplex[i] for i in keep]
        if len(simplex) == 4:
            return "overlap", simplex
    return "failure", None


def _witnesses(simplex, lam, va, vb):
    pa = np.zeros(3)
    pb = np.zeros(3)
    for weight, (_, ia, ib) in zip(lam, simplex):
        pa += weight * va[ia]
        pb += weight * vb[ib]
    return pa, pb


def _tetrahedron_volume(points) -> float:
    return float(np.linalg.det(np.asarray(points[1:]) - np.asarray(points[0]))) / 6.0


def _expand_to_tetrahedron(simplex, va, vb):
    """Grow a degenerate GJK simplex to a proper tetrahedron if possible."""
    dirs = [
        np.array([1.0, 0.0, 0.0]), np.array([-1.0, 0.0, 0.0]),
        np.array([0.0, 1.0, 0.0]), np.array([0.0, -1.0, 0.0]),
        np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0]),
    ]
    if len(simplex) >= 3:
        pts = np.array([e[0] for e in simplex[:3]])
        n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
        if np.linalg.norm(n) > 1e-14:
            n = n / np.linalg.norm(n)
            dirs = [n, -n] + dirs
    entries = list(simplex)
    for d in dirs:
        if len(entries) >= 4:
            break
        w, ia, ib = _minkowski_support(va, vb, d)
        if any(np.linalg.norm(w - e[0]) < 1e-12 for e in entries):
            continue
        entries.append((w, ia, ib))
        # Keep only affinely independent growth.
        if len(entries) == 4 and abs(_tetrahedron_volume([e[0] for e in entries])) < 1e-18:
            entries.pop()
    if len(entries) < 4:
        return None
    return entries


def _epa(simplex, va, vb):
    """Expanding polytope algorithm; returns (depth, normal, pa, pb) or None."""
    entries = _expand_to_tetrahedron(simplex, va, vb)
    if entries is None:
        return None
    pts = [e[0] for e in entries]
    interior = np.mean(pts, axis=0)

    faces: list[tuple[int, int, int]] = []
    face_n: list[np.ndarray] = []
    face_d: list[float] = []

    def add_face(i, j, k) -> bool:
        a, b, c = entries[i][0], entries[j][0], entries[k][0]
        n = np.cross(b - a, c - a)
        nn = np.linalg.norm(n)
        if nn < 1e-14:
            return False
        n = n / nn
        if n @ (a - interior) < 0.0:
            i, j, k = i, k, j
            n = -n
        faces.append((i, j, k))
        face_n.append(n)
        face_d.append(float(n @ entries[i][0]))
        return True

    for tri in itertools.combinations(range(4), 3):
        if not add_face(*tri):
            return None

    for _ in range(MAX_ITERATIONS):
        best = min(range(len(faces)), key=lambda i: (face_d[i], i))
        n = face_n[best]
        d = face_d[best]
        w, ia, ib = _minkowski_support(va, vb, n)
        gap = float(n @ w) - d
        if gap < EPA_EXPANSION or any(
            np.linalg.norm(w - e[0]) < 1e-12 for e in entries
        ):
            return _epa_finish(best, faces, face_n, face_d, entries, va, vb)
        entries.append((w, ia, ib))
        new_idx = len(entries) - 1
        visible = [i for i in range(len(faces)) if face_n[i] @ w - face_d[i] > 1e-12]
        if not visible:
            return _epa_finish(best, faces, face_n, face_d, entries, va, vb)
        edge_count: dict[tuple[int, int], tuple[int, int]] = {}
        for i in visible:
            tri = faces[i]
            for u, v in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(u, v), max(u, v))
                if key in edge_count:
                    edge_count.pop(key)
                else:
                    edge_count[key] = (u, v)
        for i in sorted(visible, reverse=True):
            faces.pop(i)
            face_n.pop(i)
            face_d.pop(i)
        for u, v in edge_count.values():
            add_face(u, v, new_idx)
        if not faces:
            return None
    return None


def _epa_finish(best, faces, face_n, face_d, entries, va, vb):
    n = face_n[best]
    d = max(face_d[best], 0.0)
    tri = faces[best]
    # Barycentric coordinates of the origin projection d*n on the face.
    P = np.array([entries[i][0] for i in tri])
    A = np.empty((4, 3))
    A[:3, :] = P.T
    A[3, :] = 1.0
    rhs = np.concatenate([d * n, [1.0]])
    lam, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    lam = np.clip(lam, 0.0, None)
    s = lam.sum()
    lam = lam / s if s > 0 else np.array([1.0, 0.0, 0.0])
    pa = np.zeros(3)
    pb = np.zeros(3)
    for weight, idx in zip(lam, tri):
        pa += weight * va[entries[idx][1]]
        pb += weight * vb[entries[idx][2]]
    return d, n, pa, pb


def proximity(a: PlacedPolytope, b: PlacedPolytope, max_distance: float | None = None) -> ProximityResult:
    """Pairwise proximity query.

    Separated pairs get GJK nearest points; penetrating pairs get the EPA
    minimal-translation depth and direction. ``max_distance`` allows an early
    out: beyond it the result reports a lower-bound distance with no
    witnesses refined.
    """
    va, vb = a.world_vertices, b.world_vertices
    state, data = _gjk(va, vb, max_distance=max_distance)
    if state == "separated":
        dist, pa, pb, truncated = data
        if dist <= TOUCH_EPS:
            n = _touch_normal(pa, pb, va, vb)
            return ProximityResult(TOUCHING, 0.0, 0.0, pa, pb, n)
        return ProximityResult(SEPARATED, dist, 0.0, pa, pb, normalized(pb - pa))
    if state == "overlap":
        out = _epa(data, va, vb)
        if out is None:
            pa, pb = _witnesses(data, np.ones(len(data)) / len(data), va, vb)
            mid = 0.5 * (pa + pb)
            return ProximityResult(NUMERIC_FAILURE, 0.0, 0.0, mid, mid, np.array([0.0, 0.0, 1.0]))
        depth, n, pa, pb = out
        if depth <= TOUCH_EPS:
            return ProximityResult(TOUCHING, 0.0, 0.0, pa, pb, n)
        return ProximityResult(PENETRATING, 0.0, depth, pa, pb, n)
    return ProximityResult(
        NUMERIC_FAILURE, 0.0, 0.0, np.zeros(3), np.zeros(3), np.array([0.0, 0.0, 1.0])
    )


def _touch_normal(pa, pb, va, vb):
    d = pb - pa
    n = np.linalg.norm(d)
    if n > 1e-12:
        return d / n
    return np.array([0.0, 0.0, 1.0])


# ---------------------------------------------------------------------------
# surface projection


def _closest_point_on_triangle(p, a, b, c):
    """Ericson's closest point on triangle; returns the point."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab @ ap
    d2 = ac @ ap
    if d1 <= 0.0 and d2 <= 0.0:
        return a
    bp = p - b
    d3 = ab @ bp
    d4 = ac @ bp
    if d3 >= 0.0 and d4 <= d3:
        return b
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        t = d1 / (d1 - d3)
        return a + t * ab
    cp = p - c
    d5 = ab @ cp
    d6 = ac @ cp
    if d6 >= 0.0 and d5 <= d6:
        return c
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        t = d2 / (d2 - d6)
        return a + t * ac
    va_ = d3 * d6 - d5 * d4
    if va_ <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + t * (c - b)
    denom = 1.0 / (va_ + vb + vc)
    v = vb * denom
    w = vc * denom
    return a + ab * v + ac * w


def project_to_surface(placed: PlacedPolytope, x) -> tuple[np.ndarray, np.ndarray]:
    """Closest surface point to x and the outward normal there.

    Face interiors use the face normal; edge/vertex witnesses for exterior
    points use the normalized offset direction; interior points use the
    nearest face's normal. Ties resolve to the first face deterministically.
    """
    x = np.asarray(x, dtype=float)
    verts = placed.world_vertices
    best_pt = None
    best_d2 = np.inf
    best_face = 0
    for fi, tri in enumerate(placed.faces):
        a, b, c = verts[tri]
        pt = _closest_point_on_triangle(x, a, b, c)
        d2 = float((x - pt) @ (x - pt))
        if d2 < best_d2 - 1e-18:
            best_d2 = d2
            best_pt = pt
            best_face = fi
    assert best_pt is not None
    n_face = placed.world_normals[best_face]
    inside = not placed.source.degenerate and _contains(placed, x)
    offset = x - best_pt
    if not inside and np.linalg.norm(offset) > 1e-9:
        # Exterior: face-interior witnesses keep the supporting-face normal;
        # edge/vertex witnesses take the offset direction.
        plane_gap = abs(float(n_face @ offset) - np.linalg.norm(offset))
        normal = n_face if plane_gap < 1e-9 else normalized(offset)
    else:
        normal = n_face
    return best_pt, normal


def _contains(placed: PlacedPolytope, x, tol: float = 1e-9) -> bool:
    verts = placed.world_vertices
    for tri, n in zip(placed.faces, placed.world_normals):
        if float(n @ (x - verts[tri[0]])) > tol:
            return False
    return True


# ---------------------------------------------------------------------------
# tangent contact targets


@dataclass(frozen=True, eq=False)
class ContactTarget:
    """Partial pose target produced by two-phase contact creation.

    ``rotation`` is the relative rotation mapping the robot surface normal
    onto the negated environment normal; the axis mask leaves yaw about the
    contact normal free (angular z inactive).
    """

    position: np.ndarray
    rotation: np.ndarray
    axis_mask: tuple[bool, ...]  # (ang_x, ang_y, ang_z, lin_x, lin_y, lin_z)


def tangent_contact_target(robot_normal, env_point, env_normal) -> ContactTarget:
    n_r = normalized(robot_normal)
    n_e = normalized(env_normal)
    R = minimal_rotation(n_r, -n_e)
    return ContactTarget(
        position=np.asarray(env_point, dtype=float).copy(),
        rotation=R,
        axis_mask=(True, True, False, True, True, True),
    )


def contact_frame(normal) -> np.ndarray:
    """Deterministic frame whose z axis is the given surface normal."""
    return frame_with_z(normal)


# ---------------------------------------------------------------------------
# environment files: a JSON array of {"name", "vertices": [[x,y,z], ...]}


@dataclass(eq=False)
class Environment:
    name: str
    polytopes: list[ConvexPolytope]

    def placed(self) -> list[PlacedPolytope]:
        return [place(p) for p in self.polytopes]


def environment_from_list(items, name: str = "environment") -> Environment:
    polys = [build_polytope(item["vertices"], name=item["name"]) for item in items]
    return Environment(name, polys)


def load_environment(path) -> Environment:
    with open(path, "r", encoding="utf-8") as fh:
        items = json.load(fh)
    if not isinstance(items, list):
        raise GeometryError("environment file must be a JSON array of polytopes")
    return environment_from_list(items, name=str(path))


def save_environment(env: Environment, path) -> None:
    items = [
        {"name": p.name, "vertices": [[float(x) for x in row] for row in p.vertices]}
        for p in env.polytopes
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(items, fh, indent=2, sort_keys=True)
        fh.write("\n")


def robot_polytopes(model) -> list[ConvexPolytope]:
    """Collision polytopes attached to the model, built once and cached."""
    cache = getattr(model, "_polytope_cache", None)
    if cache is None:
        cache = [
            build_polytope(spec["vertices"], name=spec["id"], attachment=spec["body"])
            for spec in model.polytopes
        ]
        model._polytope_cache = cache
    return cache


def robot_placed_polytopes(model, poses) -> list[PlacedPolytope]:
    """Pose-resolve every collision polytope attached to the robot."""
    return [place(p, poses[p.attachment]) for p in robot_polytopes(model)]
