"""Contact feasibility: force polytopes, CoM support regions, static torques.

The flat-ground region is the convex hull of contact points projected to the
ground plane. The multi-contact region projects the statics feasible set
onto CoM x/y by a cutting-plane loop: each linear program maximizes the CoM
position along a probe direction subject to force/moment balance under
gravity, linearized friction cones, and per-contact torque bounds mapped
through the contact Jacobian; the inner (conservative) polygon is returned
once the outer/inner area gap falls below the construction tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lp, qp
from .kinematics import GRAVITY, RobotModel, _fk, _jacobian_at_point, gravity_torques
from .transforms import frame_with_z


class FeasibilityError(ValueError):
    pass


@dataclass(eq=False)
class ContactPoint:
    """A point contact: body-frame location, world normal, friction, limb chain."""

    body: str
    point: np.ndarray  # body frame (m)
    normal: np.ndarray  # world frame, unit, pointing from environment into the robot
    mu: float = 0.7
    cone_sides: int = 4
    chain: tuple[str, ...] | None = None  # actuated joints base -> body; auto when None
    name: str = ""

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float)
        self.normal = np.asarray(self.normal, dtype=float)
        n = np.linalg.norm(self.normal)
        if n < 1e-12:
            raise FeasibilityError("contact normal must be nonzero")
        self.normal = self.normal / n
        if self.mu <= 0:
            raise FeasibilityError("friction coefficient must be positive")
        if self.cone_sides < 3:
            raise FeasibilityError("friction cones need at least 3 sides")


def resolve_chain(model: RobotModel, contact: ContactPoint) -> tuple[str, ...]:
    if contact.chain is not None:
        return contact.chain
    return model.chain_joints(contact.body, actuated_only=True)


def contact_point_world(model: RobotModel, q, contact: ContactPoint) -> np.ndarray:
    snap = _fk(model, model.check_config(q))
    return snap.body_pose[contact.body].apply(contact.point)


def _contact_jacobian(model: RobotModel, snap, contact: ContactPoint, chain) -> np.ndarray:
    """3 x k linear Jacobian of the contact point over the chain joints."""
    p_world = snap.body_pose[contact.body].apply(contact.point)
    J_full = _jacobian_at_point(model, snap, contact.body, p_world)[3:6]
    cols = []
    for name in chain:
        sl = model.q_slice(name)
        cols.append(J_full[:, sl.start])
    return np.column_stack(cols) if cols else np.zeros((3, 0))


# ---------------------------------------------------------------------------
# force polytopes


@dataclass(eq=False)
class ForcePolytope:
    """Actuation-consistent contact forces: torque-box corners mapped through
    the pseudoinverse of the contact Jacobian transpose."""

    contact: str
    vertices_raw: np.ndarray  # all 2^k corner projections (N)
    vertices: np.ndarray  # torque-consistent projections, hull-reduced
    degenerate: bool = False
    warnings: list[str] = field(default_factory=list)


def force_polytope(model: RobotModel, q, contact: ContactPoint) -> ForcePolytope:
    q = model.check_config(q)
    snap = _fk(model, q)
    chain = resolve_chain(model, contact)
    if len(chain) == 0:
        raise FeasibilityError(f"contact on {contact.body!r} has no actuated chain joints")
    J = _contact_jacobian(model, snap, contact, chain)
    k = J.shape[1]
    tau_lo = np.array([model.joint(n).tau_lower[0] for n in chain])
    tau_hi = np.array([model.joint(n).tau_upper[0] for n in chain])

    u, s, vt = np.linalg.svd(J.T, full_matrices=False)
    warnings = []
    cutoff = 1e-8 * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > cutoff)) if s.size else 0
    if rank == 0:
        warnings.append("rank-0 contact Jacobian; degenerate polytope {0}")
        zero = np.zeros((1, 3))
        return ForcePolytope(contact.name or contact.body, zero, zero, True, warnings)
    if rank < min(3, k):
        warnings.append("near-singular contact chain; polytope truncated at SVD cutoff")
    s_inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    pinv = (vt.T * s_inv) @ u.T  # (J^T)^dagger, 3 x k

    corners = np.zeros((2**k, k))
    for i in range(2**k):
        for j in range(k):
            corners[i, j] = tau_hi[j] if (i >> j) & 1 else tau_lo[j]
    raw = corners @ pinv.T

    # Keep only projections whose mapped torques actually satisfy the bounds
    # (least-squares consistency filtering; exact for square full-rank chains).
    torques = raw @ J
    ok = np.all(
        (torques >= tau_lo - 1e-6) & (torques <= tau_hi + 1e-6), axis=1
    )
    consistent = raw[ok] if ok.any() else raw
    reduced = _hull_reduce_3d(consistent)
    return ForcePolytope(contact.name or contact.body, raw, reduced, False, warnings)


def _hull_reduce_3d(points: np.ndarray) -> np.ndarray:
    pts = np.unique(np.round(points, 12), axis=0)
    if pts.shape[0] <= 3:
        return pts
    from scipy.spatial import ConvexHull, QhullError

    try:
        hull = ConvexHull(pts)
        return pts[np.sort(hull.vertices)]
    except QhullError:
        try:
            hull = ConvexHull(pts, qhull_options="QJ")
            return pts[np.sort(np.unique(hull.vertices))]
        except QhullError:
            return pts


# ---------------------------------------------------------------------------
# support regions


@dataclass(eq=False)
class SupportRegion:
    """Convex polygon of feasible CoM x/y positions, CCW vertices."""

    vertices: np.ndarray  # (m, 2)
    mode: str  # "flat-ground-hull" | "multi-contact"
    tolerance: float = 0.0
    # Supporting halfplanes collected during construction (outer bound):
    # directions (m, 2) with offsets (m,); empty for flat hulls.
    outer_directions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    outer_offsets: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def empty(self) -> bool:
        return self.vertices.shape[0] == 0

    def area(self) -> float:
        return polygon_area(self.vertices)

    def contains(self, xy, tol: float = 1e-9) -> bool:
        if self.empty:
            return False
        if self.vertices.shape[0] < 3:
            return stability_margin(self, xy) >= -tol
        from .ik import polygon_halfplanes

        n, d = polygon_halfplanes(self.vertices)
        return bool(np.all(n @ np.asarray(xy, dtype=float) <= d + tol))


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull, CCW; collinear inputs collapse to their extremes.

    Chain pops compare the cross product against exact zero: an absolute
    epsilon there can discard a true extreme when inputs carry last-ulp
    noise. Near-collinear interior vertices are cleaned up afterwards with a
    scale-relative tolerance instead.
    """
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if pts.shape[0] <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0.0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0.0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        return np.array([pts[0], pts[-1]])
    # Drop near-collinear interior vertices (relative tolerance).
    scale = float(np.abs(pts).max()) or 1.0
    tol = 1e-12 * scale * scale
    cleaned = list(hull)
    changed = True
    while changed and len(cleaned) > 3:
        changed = False
        for i in range(len(cleaned)):
            a = cleaned[i - 1]
            b = cleaned[i]
            c = cleaned[(i + 1) % len(cleaned)]
            if abs(cross(a, b, c)) <= tol:
                cleaned.pop(i)
                changed = True
                break
    if len(cleaned) < 3:
        return np.array([pts[0], pts[-1]])
    return np.array(cleaned)


def polygon_area(vertices: np.ndarray) -> float:
    v = np.asarray(vertices, dtype=float).reshape(-1, 2)
    if v.shape[0] < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def support_region_flat(model: RobotModel, q, contacts) -> SupportRegion:
    """Convex hull of the contact points' ground-plane projections."""
    if not contacts:
        raise FeasibilityError("flat support region needs at least one contact")
    pts = np.array([contact_point_world(model, q, c)[:2] for c in contacts])
    return SupportRegion(convex_hull_2d(pts), "flat-ground-hull")


@dataclass
class RegionOptions:
    tolerance: float = 1e-4  # outer/inner area gap (m^2)
    max_lps: int = 60
    include_torque_limits: bool = True
    com_box: float = 10.0  # LP safety box on |com_xy| (m)


def _statics_lp_matrices(model: RobotModel, q, contacts, options: RegionOptions):
    """Equality/inequality matrices over z = [f_1..f_k (3 each), com_x, com_y]."""
    snap = _fk(model, model.check_config(q))
    k = len(contacts)
    nz = 3 * k + 2
    mg = model.total_mass * GRAVITY

    a_eq = np.zeros((6, nz))
    b_eq = np.zeros(6)
    # Force balance: sum f = m g zhat.
    for i in range(k):
        a_eq[0:3, 3 * i : 3 * i + 3] = np.eye(3)
    b_eq[2] = mg
    # Moment balance about the origin: sum p x f = (mg c_y, -mg c_x, 0).
    for i, c in enumerate(contacts):
        p = snap.body_pose[c.body].apply(c.point)
        px, py, pz = p
        skew = np.array([[0.0, -pz, py], [pz, 0.0, -px], [-py, px, 0.0]])
        a_eq[3:6, 3 * i : 3 * i + 3] = skew
    a_eq[3, nz - 1] = -mg  # moment_x row: ... - mg c_y = 0
    a_eq[4, nz - 2] = +mg  # moment_y row: ... + mg c_x = 0

    rows = []
    rhs = []
    for i, c in enumerate(contacts):
        frame = frame_with_z(c.normal)
        t1, t2, n = frame[:, 0], frame[:, 1], frame[:, 2]
        # Unilateral: f . n >= 0
        r = np.zeros(nz)
        r[3 * i : 3 * i + 3] = -n
        rows.append(r)
        rhs.append(0.0)
        # Inscribed linearized cone.
        mu_lin = c.mu * np.cos(np.pi / c.cone_sides)
        for j in range(c.cone_sides):
            th = 2 * np.pi * j / c.cone_sides
            d = np.cos(th) * t1 + np.sin(th) * t2
            r = np.zeros(nz)
            r[3 * i : 3 * i + 3] = d - mu_lin * n
            rows.append(r)
            rhs.append(0.0)
    if options.include_torque_limits:
        for i, c in enumerate(contacts):
            chain = resolve_chain(model, c)
            if not chain:
                continue
            J = _contact_jacobian(model, snap, c, chain)
            tau_lo = np.array([model.joint(nm).tau_lower[0] for nm in chain])
            tau_hi = np.array([model.joint(nm).tau_upper[0] for nm in chain])
            for jrow in range(len(chain)):
                r = np.zeros(nz)
                r[3 * i : 3 * i + 3] = J[:, jrow]
                rows.append(r.copy())
                rhs.append(tau_hi[jrow])
                rows.append(-r)
                rhs.append(-tau_lo[jrow])
    # CoM safety box keeps every probe LP bounded.
    for sign in (1.0, -1.0):
        for col in (nz - 2, nz - 1):
            r = np.zeros(nz)
            r[col] = sign
            rows.append(r)
            rhs.append(options.com_box)
    return np.asarray(rows), np.asarray(rhs), a_eq, b_eq, nz


def _probe(direction, a_ub, b_ub, a_eq, b_eq, nz):
    c = np.zeros(nz)
    c[nz - 2] = -direction[0]
    c[nz - 1] = -direction[1]
    res = lp.solve_lp(c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=b_eq)
    if res.status != lp.OPTIMAL:
        return None
    return np.array([res.x[nz - 2], res.x[nz - 1]])


def support_region_multicontact(
    model: RobotModel, q, contacts, options: RegionOptions | None = None
) -> SupportRegion:
    """Cutting-plane projection of the statics feasible set onto CoM x/y.

    Returns the inner (conservative) polygon; the collected probe
    halfplanes form the outer bound and are kept on the region for
    containment checks.
    """
    if len(contacts) < 2:
        raise FeasibilityError("multi-contact region needs at least two contacts")
    options = options or RegionOptions()
    a_ub, b_ub, a_eq, b_eq, nz = _statics_lp_matrices(model, q, contacts, options)

    directions: list[np.ndarray] = []
    vertices: list[np.ndarray] = []
    lps = 0
    for d in (np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([-1.0, 0.0]), np.array([0.0, -1.0])):
        v = _probe(d, a_ub, b_ub, a_eq, b_eq, nz)
        lps += 1
        if v is None:
            continue
        directions.append(d)
        vertices.append(v)
    if not vertices:
        return SupportRegion(np.zeros((0, 2)), "multi-contact", options.tolerance)

    def order_ccw(dirs, verts):
        ang = [np.arctan2(d[1], d[0]) for d in dirs]
        idx = np.argsort(ang)
        return [dirs[i] for i in idx], [verts[i] for i in idx]

    directions, vertices = order_ccw(directions, vertices)

    def entries():
        m = len(vertices)
        out = []
        for i in range(m):
            d1, v1 = directions[i], vertices[i]
            d2, v2 = directions[(i + 1) % m], vertices[(i + 1) % m]
            # Outer vertex: intersection of the two supporting lines.
            D = np.vstack([d1, d2])
            e = np.array([d1 @ v1, d2 @ v2])
            det = np.linalg.det(D)
            if abs(det) < 1e-12:
                out.append((0.0, None, i))
                continue
            outer = np.linalg.solve(D, e)
            gap = _triangle_area(v1, v2, outer)
            out.append((gap, outer, i))
        return out

    while lps < options.max_lps:
        gaps = entries()
        total_gap = sum(g for g, _, _ in gaps)
        if total_gap < options.tolerance:
            break
        gap, outer, i = max(gaps, key=lambda t: (t[0], -t[2]))
        if outer is None or gap <= 0.0:
            break
        v1 = vertices[i]
        v2 = vertices[(i + 1) % len(vertices)]
        edge = v2 - v1
        ne = np.linalg.norm(edge)
        if ne < 1e-12:
            break
        d_new = np.array([edge[1], -edge[0]]) / ne  # outward for CCW ordering
        v_new = _probe(d_new, a_ub, b_ub, a_eq, b_eq, nz)
        lps += 1
        if v_new is None:
            break
        # No measurable progress beyond the edge: mark this edge final by
        # registering the direction anyway (its gap collapses to ~0).
        directions.insert(i + 1, d_new)
        vertices.insert(i + 1, v_new)
        directions, vertices = order_ccw(directions, vertices)

    inner = convex_hull_2d(np.array(vertices))
    dirs = np.array(directions)
    offs = np.array([d @ v for d, v in zip(directions, vertices)])
    return SupportRegion(inner, "multi-contact", options.tolerance, dirs, offs)


def _triangle_area(a, b, c) -> float:
    return 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def region_outer_contains(region: SupportRegion, points, tol: float = 1e-6) -> bool:
    """Whether points satisfy every supporting halfplane collected for region."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if region.outer_directions.shape[0] == 0:
        raise FeasibilityError("region carries no outer halfplanes")
    vals = pts @ region.outer_directions.T - region.outer_offsets
    return bool(np.all(vals <= tol))


# ---------------------------------------------------------------------------
# static torques


@dataclass(eq=False)
class TorqueReport:
    torques: np.ndarray  # (n,)
    saturation: np.ndarray  # (n,) |tau| / bound magnitude, 0 for base rows
    force_residual: float  # N, net force imbalance
    moment_residual: float  # N m, net moment imbalance about the CoM
    contact_forces: list[np.ndarray]
    balanced: bool


def static_torques(model: RobotModel, q, contacts) -> TorqueReport:
    """Joint torques for static equilibrium with friction-cone contact forces.

    Solves min sum ||tau||^2 over contact forces subject to the floating-base
    wrench balance and linearized cones; when no force set balances the base
    wrench, the minimal-residual forces are reported with ``balanced=False``.
    """
    q = model.check_config(q)
    snap = _fk(model, q)
    g_vec = gravity_torques(model, q)
    base_mask = model.base_dof_mask()
    n = model.n
    k = len(contacts)

    if k == 0:
        if base_mask.any():
            raise FeasibilityError("floating-base statics needs at least one contact")
        return _report(model, g_vec, np.zeros((0,)), [], snap, q, contacts, balanced=True)

    # tau(f) = g - sum J_i^T f_i, stacked over all dofs.
    B = np.zeros((n, 3 * k))
    for i, c in enumerate(contacts):
        p_world = snap.body_pose[c.body].apply(c.point)
        J = _jacobian_at_point(model, snap, c.body, p_world)[3:6]
        B[:, 3 * i : 3 * i + 3] = J.T

    cone_rows = []
    cone_rhs = []
    for i, c in enumerate(contacts):
        frame = frame_with_z(c.normal)
        t1, t2, nrm = frame[:, 0], frame[:, 1], frame[:, 2]
        r = np.zeros(3 * k)
        r[3 * i : 3 * i + 3] = -nrm
        cone_rows.append(r)
        cone_rhs.append(0.0)
        mu_lin = c.mu * np.cos(np.pi / c.cone_sides)
        for j in range(c.cone_sides):
            th = 2 * np.pi * j / c.cone_sides
            d = np.cos(th) * t1 + np.sin(th) * t2
            r = np.zeros(3 * k)
            r[3 * i : 3 * i + 3] = d - mu_lin * nrm
            cone_rows.append(r)
            cone_rhs.append(0.0)
    cone_rows = np.asarray(cone_rows)
    cone_rhs = np.asarray(cone_rhs)

    B_base = B[base_mask]
    g_base = g_vec[base_mask]
    B_act = B[~base_mask]
    g_act = g_vec[~base_mask]

    # Strictly interior start (equal spread along the contact normals), so the
    # active-set solver does not begin on a degenerate corner of the cones.
    mg = model.total_mass * GRAVITY
    f_start = np.concatenate([(mg / k) * c.normal for c in contacts])
    # Small force regularizer keeps the torque QP strictly convex (internal
    # force distributions otherwise leave flat directions).
    rho = 1e-3

    balanced = True
    if base_mask.any():
        # Stage 1 (exact): minimize the L1 base-wrench residual by LP.
        f_lp, l1_resid = _min_residual_lp(B_base, g_base, cone_rows, cone_rhs)
        if f_lp is None or l1_resid > 1e-7:
            balanced = False
            f = f_lp if f_lp is not None else np.zeros(3 * k)
        else:
            # Stage 2: minimize actuated torques on the balance manifold.
            P2 = 2.0 * (B_act.T @ B_act + rho * np.eye(3 * k))
            q2 = -2.0 * B_act.T @ g_act
            sol2 = qp.solve_qp(
                P2, q2, a_in=cone_rows, b_in=cone_rhs, a_eq=B_base, b_eq=g_base, x0=f_lp
            )
            f = sol2.x
    else:
        P2 = 2.0 * (B_act.T @ B_act + rho * np.eye(3 * k))
        q2 = -2.0 * B_act.T @ g_act
        sol2 = qp.solve_qp(P2, q2, a_in=cone_rows, b_in=cone_rhs, x0=f_start)
        f = sol2.x

    tau = g_vec - B @ f
    forces = [f[3 * i : 3 * i + 3].copy() for i in range(k)]
    return _report(model, tau, f, forces, snap, q, contacts, balanced)


def _report(model, tau, f, forces, snap, q, contacts, balanced) -> TorqueReport:
    base_mask = model.base_dof_mask()
    tau_lo, tau_hi = model.torque_limits()
    sat = np.zeros(model.n)
    for i in range(model.n):
        if base_mask[i]:
            continue
        bound = tau_hi[i] if tau[i] >= 0 else abs(tau_lo[i])
        sat[i] = abs(tau[i]) / bound if bound > 0 else np.inf
    # Newton-Euler residuals from the reported forces.
    mg = model.total_mass * GRAVITY
    f_net = np.sum(forces, axis=0) if forces else np.zeros(3)
    force_res = float(np.linalg.norm(f_net - np.array([0.0, 0.0, mg])))
    from .kinematics import com_and_momentum_matrix

    com, _ = com_and_momentum_matrix(model, q)
    m_net = np.zeros(3)
    for c, fi in zip(contacts, forces):
        p = snap.body_pose[c.body].apply(c.point)
        m_net += np.cross(p - com, fi)
    moment_res = float(np.linalg.norm(m_net))
    if not base_mask.any():
        force_res = 0.0
        moment_res = 0.0
    return TorqueReport(
        torques=tau,
        saturation=sat,
        force_residual=force_res,
        moment_residual=moment_res,
        contact_forces=forces,
        balanced=balanced,
    )


def _min_residual_lp(B_base, g_base, cone_rows, cone_rhs):
    """Minimize the L1 norm of g - B f over cone-feasible forces.

    Variables are [f, s] with -s <= g - B f <= s elementwise; returns
    (f, l1_residual) or (None, inf) when even the cones are infeasible.
    """
    nf = B_base.shape[1]
    mb = B_base.shape[0]
    nz = nf + mb
    c = np.concatenate([np.zeros(nf), np.ones(mb)])
    rows = []
    rhs = []
    for r in range(mb):
        row = np.zeros(nz)
        row[:nf] = B_base[r]
        row[nf + r] = -1.0
        rows.append(row)
        rhs.append(g_base[r])
        row = np.zeros(nz)
        row[:nf] = -B_base[r]
        row[nf + r] = -1.0
        rows.append(row)
        rhs.append(-g_base[r])
    for r in range(cone_rows.shape[0]):
        row = np.zeros(nz)
        row[:nf] = cone_rows[r]
        rows.append(row)
        rhs.append(cone_rhs[r])
    res = lp.solve_lp(c, a_ub=np.asarray(rows), b_ub=np.asarray(rhs))
    if res.status != lp.OPTIMAL:
        return None, np.inf
    return res.x[:nf], float(res.objective)


# ---------------------------------------------------------------------------
# stability margin


def stability_margin(region: SupportRegion, com_xy) -> float:
    """Signed distance from the CoM ground projection to the region edge.

    Positive inside, negative outside, ``-inf`` for an empty region.
    """
    x = np.asarray(com_xy, dtype=float).reshape(2)
    v = region.vertices if isinstance(region, SupportRegion) else np.asarray(region)
    v = v.reshape(-1, 2)
    if v.shape[0] == 0:
        return float("-inf")
    if v.shape[0] == 1:
        return -float(np.linalg.norm(x - v[0]))
    if v.shape[0] == 2:
        return -_point_segment_distance(x, v[0], v[1])
    inside = True
    margins = []
    dists = []
    m = v.shape[0]
    for i in range(m):
        a, b = v[i], v[(i + 1) % m]
        e = b - a
        ne = np.linalg.norm(e)
        if ne < 1e-15:
            continue
        n = np.array([e[1], -e[0]]) / ne  # outward for CCW
        margins.append(float(n @ (x - a)))
        dists.append(_point_segment_distance(x, a, b))
    if not margins:
        return -float(np.linalg.norm(x - v[0]))
    if max(margins) <= 0.0:
        # Inside: perpendicular distance to the nearest edge.
        return min(-mm for mm in margins)
    return -min(dists)


def _point_segment_distance(x, a, b) -> float:
    e = b - a
    t = float(np.clip((x - a) @ e / max(e @ e, 1e-300), 0.0, 1.0))
    return float(np.linalg.norm(x - (a + t * e)))
