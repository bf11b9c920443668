"""Discrete convex plane curves and their elementary geometry.

A curve is a closed polygon with counterclockwise orientation, at least 16
vertices, validated strictly convex up to a tolerance.  All downstream
quadrature treats the vertex list as samples of a smooth convex curve with
per-vertex arc weights, so every derived quantity (tangents, normals,
curvature, weights) is built once at construction and kept immutable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import linprog

from .errors import (
    DegenerateEdge,
    NonUnitDirection,
    NotConvex,
    NotSimple,
    SolverFailure,
)

DEFAULT_TOL_CONVEX = 1e-10
MIN_POINTS = 16

# fixed shuffle seed for the enclosing-circle algorithm: determinism across
# runs matters more than adversarial-input guarantees here
_MEC_SEED = 0x5EED


class ConvexCurve:
    """Validated convex closed polygon with precomputed discrete geometry.

    Attributes
    ----------
    points : (N, 2) float array, counterclockwise, read-only.
    edge_lengths : (N,) array, ``edge_lengths[i] = |points[i+1] - points[i]|``.
    weights : (N,) arc weights, half the two adjacent edges; sums to perimeter.
    tangents : (N, 2) unit tangents from centered differences.
    normals : (N, 2) unit outward normals (tangent rotated by -90 degrees).
    kappa : (N,) Menger curvature of consecutive vertex triples, positive.
    perimeter, area : floats; area is the shoelace value (positive).
    """

    __slots__ = (
        "points", "edge_lengths", "weights", "tangents", "normals",
        "kappa", "perimeter", "area",
    )

    def __init__(self, points, edge_lengths, weights, tangents, normals,
                 kappa, perimeter, area):
        self.points = points
        self.edge_lengths = edge_lengths
        self.weights = weights
        self.tangents = tangents
        self.normals = normals
        self.kappa = kappa
        self.perimeter = perimeter
        self.area = area

    @property
    def n(self):
        return self.points.shape[0]

    def barycenter(self):
        return barycenter(self)

    def __repr__(self):
        return (f"ConvexCurve(n={self.n}, perimeter={self.perimeter:.6g}, "
                f"area={self.area:.6g})")


def _shoelace(points):
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def build_curve(points, tol_convex=DEFAULT_TOL_CONVEX):
    """Validate a vertex list and construct a ConvexCurve.

    Parameters
    ----------
    points : array-like (N, 2)
        Ordered planar positions, counterclockwise, N >= 16.
    tol_convex : float
        Cross products of consecutive edges may dip to
        ``-tol_convex * (mean edge length)**2`` before the curve is rejected.

    Raises
    ------
    NotConvex, DegenerateEdge, NotSimple
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected (N, 2) points, got {pts.shape}")
    n = pts.shape[0]
    if n < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} points, got {n}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain non-finite values")

    edges = np.roll(pts, -1, axis=0) - pts
    elen = np.hypot(edges[:, 0], edges[:, 1])
    bbox_diag = float(np.hypot(*(pts.max(axis=0) - pts.min(axis=0))))
    if bbox_diag == 0.0:
        raise DegenerateEdge("all points coincide")
    if np.min(elen) < 1e-12 * bbox_diag:
        i = int(np.argmin(elen))
        raise DegenerateEdge(
            f"edge {i} has length {elen[i]:.3e} < 1e-12 x diameter")

    prev = np.roll(edges, 1, axis=0)
    cross = prev[:, 0] * edges[:, 1] - prev[:, 1] * edges[:, 0]
    mean_edge = float(np.mean(elen))
    if np.min(cross) < -tol_convex * mean_edge**2:
        i = int(np.argmin(cross))
        area = _shoelace(pts)
        hint = " (clockwise input?)" if area < 0 else ""
        raise NotConvex(
            f"concave vertex {i}: cross product {cross[i]:.3e}{hint}")

    area = _shoelace(pts)
    if area <= 0:
        raise NotConvex("signed area is not positive")

    # a locally convex closed polygon is simple iff it turns by exactly 2 pi
    dots = np.sum(prev * edges, axis=1)
    turning = float(np.sum(np.arctan2(cross, dots)))
    if abs(turning - 2.0 * np.pi) > 1e-6:
        raise NotSimple(
            f"total turning {turning:.6f} != 2 pi; curve winds more than once")

    weights = 0.5 * (elen + np.roll(elen, 1))
    chords = np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0)
    clen = np.hypot(chords[:, 0], chords[:, 1])
    tangents = chords / clen[:, None]
    normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])

    # Menger curvature of (p[i-1], p[i], p[i+1]); positive for ccw convex
    a = np.roll(elen, 1)          # |p[i] - p[i-1]|
    b = elen                      # |p[i+1] - p[i]|
    kappa = 2.0 * cross / (a * b * clen)

    curve = ConvexCurve(pts.copy(), elen, weights, tangents, normals,
                        kappa, float(np.sum(elen)), area)
    for arr in (curve.points, curve.edge_lengths, curve.weights,
                curve.tangents, curve.normals, curve.kappa):
        arr.setflags(write=False)
    return curve


def enclosed_area(curve):
    """Shoelace area of the polygon."""
    return curve.area


def barycenter(curve):
    """Area centroid of the polygon."""
    p = curve.points
    q = np.roll(p, -1, axis=0)
    cr = p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]
    c = ((p + q) * cr[:, None]).sum(axis=0) / (6.0 * curve.area)
    return c


def width(curve, direction):
    """Support width of the polygon in a unit direction."""
    d = np.asarray(direction, dtype=float)
    if abs(np.hypot(d[0], d[1]) - 1.0) > 1e-9:
        raise NonUnitDirection(f"|direction| = {np.hypot(d[0], d[1]):.12f}")
    proj = curve.points @ d
    return float(proj.max() - proj.min())


# -- enclosing / inscribed circles -------------------------------------------


def _circle_two(a, b):
    c = 0.5 * (a + b)
    return c, float(np.hypot(*(a - c)))


def _circumcircle(a, b, c):
    # circumcenter via perpendicular bisectors; None if collinear
    d = 2.0 * ((a[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (a[1] - c[1]))
    if d == 0.0:
        return None
    ua = a[0]**2 - c[0]**2 + a[1]**2 - c[1]**2
    ub = b[0]**2 - c[0]**2 + b[1]**2 - c[1]**2
    cx = (ua * (b[1] - c[1]) - ub * (a[1] - c[1])) / d
    cy = (ub * (a[0] - c[0]) - ua * (b[0] - c[0])) / d
    ctr = np.array([cx, cy])
    return ctr, float(np.hypot(*(a - ctr)))


def _in_circle(circle, p, slack=1e-12):
    c, r = circle
    return np.hypot(*(p - c)) <= r * (1.0 + slack) + 1e-300


def minimum_enclosing_circle(points):
    """Exact smallest enclosing circle, expected O(N).

    Progressive one/two-point variant of the randomized incremental
    algorithm; input order is shuffled with a fixed seed so reruns are
    deterministic.
    """
    rng = np.random.default_rng(_MEC_SEED)
    pts = np.asarray(points, dtype=float)
    order = rng.permutation(pts.shape[0])
    pts = pts[order]

    circle = None
    for i, p in enumerate(pts):
        if circle is not None and _in_circle(circle, p):
            continue
        # p on the boundary; grow over prefix
        circle = (p.copy(), 0.0)
        for j in range(i):
            q = pts[j]
            if _in_circle(circle, q):
                continue
            # p, q on the boundary
            circle = _circle_two(p, q)
            for k in range(j):
                t = pts[k]
                if _in_circle(circle, t):
                    continue
                cc = _circumcircle(p, q, t)
                if cc is not None:
                    circle = cc
    return circle


def _inscribed_circle(curve):
    # Chebyshev center: maximize r with nu_e . c + r <= nu_e . p_e
    # for every edge support line of the polygon
    p = curve.points
    e = np.roll(p, -1, axis=0) - p
    u = e / np.hypot(e[:, 0], e[:, 1])[:, None]
    nu = np.column_stack([u[:, 1], -u[:, 0]])       # outward edge normals
    b = np.sum(nu * p, axis=1)
    a_ub = np.column_stack([nu, np.ones(len(b))])
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=a_ub, b_ub=b,
                  bounds=[(None, None), (None, None), (0.0, None)],
                  method="highs")
    if not res.success:
        raise SolverFailure(f"inner radius LP failed: {res.message}")
    return np.array(res.x[:2]), float(res.x[2])


def _diameter_pair(points):
    # rotating calipers on a convex ccw polygon: exact max pairwise distance
    p = points
    n = p.shape[0]
    best = -1.0
    pair = (0, 0)
    j = 1
    for i in range(n):
        ei = p[(i + 1) % n] - p[i]
        while True:
            nj = (j + 1) % n
            cur = ei[0] * (p[j][1] - p[i][1]) - ei[1] * (p[j][0] - p[i][0])
            nxt = ei[0] * (p[nj][1] - p[i][1]) - ei[1] * (p[nj][0] - p[i][0])
            if nxt > cur:
                j = nj
            else:
                break
        for k in (i, (i + 1) % n):
            d = float(np.hypot(*(p[j] - p[k])))
            if d > best:
                best = d
                pair = (k, j)
    return best, pair


@dataclass(frozen=True)
class RadiiReport:
    """Inner/outer radii, widths and diameter of a convex curve.

    ``inner`` is the largest inscribed circle of the polygon (Chebyshev
    center of the edge support half-planes, solved as a linear program);
    ``outer`` is the exact minimum enclosing circle.  ``max_width`` and
    ``diameter`` coincide: the sup of widths over directions is attained in
    the diametral direction, which rotating calipers finds exactly.
    ``min_width`` is attained in a direction normal to an edge, so the exact
    value is the min over edge-normal directions; the uniform direction
    samples only cross-check both extremes.
    """

    inner_center: np.ndarray
    inner_radius: float
    outer_center: np.ndarray
    outer_radius: float
    min_width: float
    max_width: float
    diameter: float


def radii_report(curve, n_directions=64):
    """Compute a RadiiReport for the curve.

    ``n_directions`` uniform directions on the half circle are sampled in
    addition to the exact extreme directions (diametral pair, edge normals).
    """
    if n_directions < 4:
        raise ValueError("need at least 4 sampled directions")
    pts = curve.points
    inner_c, inner_r = _inscribed_circle(curve)
    outer_c, outer_r = minimum_enclosing_circle(pts)

    diam, (i0, i1) = _diameter_pair(pts)

    # min width: exact over edge normals, chunked to bound memory
    e = np.roll(pts, -1, axis=0) - pts
    u = e / np.hypot(e[:, 0], e[:, 1])[:, None]
    edge_normals = np.column_stack([u[:, 1], -u[:, 0]])
    wmin = np.inf
    for lo in range(0, edge_normals.shape[0], 256):
        proj = pts @ edge_normals[lo:lo + 256].T
        wmin = min(wmin, float((proj.max(axis=0) - proj.min(axis=0)).min()))

    ang = np.pi * np.arange(n_directions) / n_directions
    dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    proj = pts @ dirs.T
    sampled = proj.max(axis=0) - proj.min(axis=0)
    wmin = min(wmin, float(sampled.min()))

    return RadiiReport(
        inner_center=inner_c,
        inner_radius=inner_r,
        outer_center=np.asarray(outer_c, dtype=float),
        outer_radius=outer_r,
        min_width=wmin,
        max_width=diam,
        diameter=diam,
    )


# -- resampling ---------------------------------------------------------------


def resample(curve, n_new, tol_convex=DEFAULT_TOL_CONVEX):
    """Redistribute n_new points equidistantly in arc length.

    Positions are interpolated with a periodic cubic spline through the
    current vertices (chord-length parametrized).  The spline polygon does
    not enclose exactly the original area, so the result is dilated about
    its barycenter to restore the area exactly; this keeps the invariant far
    below the 1e-8 relative budget.

    Raises NotConvex if the interpolant overshoots; the caller must reduce
    n_new or tighten the sampling.
    """
    if n_new < MIN_POINTS:
        raise ValueError(f"n_new must be >= {MIN_POINTS}")
    pts = curve.points
    t = np.concatenate([[0.0], np.cumsum(curve.edge_lengths)])
    closed = np.vstack([pts, pts[:1]])
    spline = CubicSpline(t, closed, bc_type="periodic")
    targets = t[-1] * np.arange(n_new) / n_new
    new_pts = spline(targets)

    new_area = _shoelace(new_pts)
    if new_area <= 0:
        raise NotConvex("resampled polygon lost orientation")
    scale = np.sqrt(curve.area / new_area)
    q = np.roll(new_pts, -1, axis=0)
    cr = new_pts[:, 0] * q[:, 1] - q[:, 0] * new_pts[:, 1]
    center = ((new_pts + q) * cr[:, None]).sum(axis=0) / (6.0 * new_area)
    new_pts = center + scale * (new_pts - center)
    return build_curve(new_pts, tol_convex=tol_convex)


# -- seed shapes ----------------------------------------------------------------


def circle_points(n, radius=1.0, center=(0.0, 0.0)):
    """n equally spaced points on a circle."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    th = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(th),
                            center[1] + radius * np.sin(th)])


def ellipse_points(n, a=2.0, b=1.0, center=(0.0, 0.0)):
    """n points on an axis-aligned ellipse, uniform in parameter angle."""
    if a <= 0 or b <= 0:
        raise ValueError("semi-axes must be positive")
    th = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + a * np.cos(th),
                            center[1] + b * np.sin(th)])


def rounded_polygon_points(n, k=6, circumradius=1.0, corner_radius=0.3,
                           center=(0.0, 0.0)):
    """n arc-length-equidistant points on a regular k-gon with rounded corners.

    The shape is the Minkowski sum of the regular k-gon (given circumradius)
    with a disk of corner_radius: straight edges offset outward joined by
    circular corner arcs, so the boundary is C^1 and convex by construction.
    """
    if k < 3:
        raise ValueError("need k >= 3 sides")
    if circumradius <= 0 or corner_radius <= 0:
        raise ValueError("radii must be positive")
    verts_ang = 2.0 * np.pi * np.arange(k) / k
    verts = circumradius * np.column_stack([np.cos(verts_ang),
                                            np.sin(verts_ang)])
    side = 2.0 * circumradius * np.sin(np.pi / k)
    ext = 2.0 * np.pi / k                      # exterior angle at each corner
    arc_len = corner_radius * ext
    total = k * (side + arc_len)

    # edge j runs from vertex j to vertex j+1, offset by its outward normal
    starts, units, normals_ang = [], [], []
    for j in range(k):
        a, b = verts[j], verts[(j + 1) % k]
        u = (b - a) / side
        nrm = np.array([u[1], -u[0]])
        starts.append(a + corner_radius * nrm)
        units.append(u)
        normals_ang.append(np.arctan2(nrm[1], nrm[0]))

    pts = np.empty((n, 2))
    s_vals = total * np.arange(n) / n
    for idx, s in enumerate(s_vals):
        j, rem = divmod(s, side + arc_len)
        j = int(j)
        if rem <= side:
            pts[idx] = starts[j] + rem * units[j]
        else:
            # corner arc at vertex j+1, from this edge normal to the next
            phi = normals_ang[j] + (rem - side) / corner_radius
            v = verts[(j + 1) % k]
            pts[idx] = v + corner_radius * np.array([np.cos(phi), np.sin(phi)])
    return pts + np.asarray(center, dtype=float)
