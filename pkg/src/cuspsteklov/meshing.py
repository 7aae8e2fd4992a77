"""Triangular meshing of cusp and disk domains.

The generator runs batched Delaunay refinement over the bulk of the domain
and stitches an explicit ladder of needle elements into the deep channel,
where the opposing walls are too close for a point-location kernel to keep
apart.  Channel needles are aligned with the channel (largest angle near 90
degrees), so the minimum-angle target is waived inside a band where the
local width is below a fixed fraction of the height; enforcing the target
there would need an element count growing like the integral of 1/width,
which blows up as the walls flatten.
"""

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import BudgetError, MeshError
from .geometry import ARC, WALL_LEFT, WALL_RIGHT, CuspDomain, DiskDomain

# smallest vertex separation handed to the Delaunay kernel; the explicit
# ladder takes over wherever the channel is narrower than this
_WIDTH_SAFE = 1e-7
# widens the band excused from the angle target (see module docstring)
_EXEMPT_FACTOR = 2.0
# walls are shielded from encroachment splits where width < this fraction of
# the graded size target; above it wall splitting self-limits at a length of
# twice the channel width, which costs only log-many extra vertices
_SHIELD_FACTOR = 0.2
# interior seam between the ladder and the Delaunay region; never a boundary
_INTERFACE = "interface"


@dataclass(frozen=True)
class SizeField:
    """Element size and quality targets.

    ``h_max`` bounds edge lengths everywhere.  Inside the narrowing region
    the target shrinks like ``(1 - tip_grading) * height`` (never below the
    tip cutoff), so smaller ``tip_grading`` grades harder toward the tip.
    """

    h_max: float = 0.25
    tip_grading: float = 0.5
    min_angle_deg: float = 25.0
    max_vertices: int = 200_000
    max_rounds: int = 200

    def __post_init__(self):
        if not self.h_max > 0.0:
            raise MeshError(f"h_max must be positive, got {self.h_max}")
        if not 0.0 < self.tip_grading < 1.0:
            raise MeshError(f"tip_grading must lie in (0, 1), got {self.tip_grading}")
        if not 20.0 <= self.min_angle_deg <= 30.0:
            raise MeshError(
                f"min_angle_deg must lie in [20, 30], got {self.min_angle_deg}")


class TriMesh:
    """Triangle mesh with tagged, parametrized boundary edges.

    ``vertices`` is (n, 2) float, ``triangles`` (m, 3) int and
    counterclockwise, ``boundary_edges`` (b, 2) int.  Edge k carries
    ``boundary_tags[k]`` and the curve parameters ``boundary_params[k]``
    of its two endpoints, which is what boundary snapping consumes.
    """

    def __init__(self, vertices, triangles, boundary_edges, boundary_tags,
                 boundary_params):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.boundary_edges = np.ascontiguousarray(boundary_edges, dtype=np.int64)
        self.boundary_tags = list(boundary_tags)
        self.boundary_params = np.ascontiguousarray(boundary_params, dtype=float)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def triangle_areas(self):
        p = self.vertices[self.triangles]
        u = p[:, 1] - p[:, 0]
        v = p[:, 2] - p[:, 0]
        return 0.5 * (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])

    def validate(self):
        """Raise MeshError unless the mesh is a consistently oriented
        triangulated disk whose declared boundary matches the triangulation."""
        v, t = self.vertices, self.triangles
        if v.ndim != 2 or v.shape[1] != 2 or not np.all(np.isfinite(v)):
            raise MeshError("vertices must be a finite (n, 2) array")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("triangles must be an (m, 3) array")
        if len(t) == 0:
            raise MeshError("mesh has no triangles")
        if t.min() < 0 or t.max() >= len(v):
            raise MeshError("triangle vertex index out of range")
        areas = self.triangle_areas()
        if np.any(areas <= 0.0):
            n_bad = int(np.sum(areas <= 0.0))
            raise MeshError(f"{n_bad} triangles are degenerate or clockwise")
        used = np.zeros(len(v), dtype=bool)
        used[t] = True
        if not used.all():
            raise MeshError(f"{int((~used).sum())} vertices belong to no triangle")
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        if counts.max() > 2:
            raise MeshError("non-manifold edge shared by more than two triangles")
        if (len(self.boundary_tags) != len(self.boundary_edges)
                or self.boundary_params.shape != (len(self.boundary_edges), 2)):
            raise MeshError("boundary tag/param arrays out of step with edges")
        if len(self.boundary_edges):
            if self.boundary_edges.min() < 0 or self.boundary_edges.max() >= len(v):
                raise MeshError("boundary edge index out of range")
        hull = {tuple(r) for r in uniq[counts == 1].tolist()}
        declared = [tuple(sorted(r)) for r in self.boundary_edges.tolist()]
        if len(set(declared)) != len(declared):
            raise MeshError("duplicate boundary edge declaration")
        if set(declared) != hull:
            n_off = len(set(declared) ^ hull)
            raise MeshError(
                f"declared boundary does not match triangulation boundary "
                f"({n_off} edges differ)")
        euler = len(v) - len(uniq) + len(t)
        if euler != 1:
            raise MeshError(f"mesh is not a topological disk (V - E + F = {euler})")
        return self


# -- per-triangle geometry ------------------------------------------------------


def _edge_lengths(P):
    # P: (m, 3, 2); lengths opposite vertex 0, 1, 2
    a = np.linalg.norm(P[:, 2] - P[:, 1], axis=1)
    b = np.linalg.norm(P[:, 0] - P[:, 2], axis=1)
    c = np.linalg.norm(P[:, 1] - P[:, 0], axis=1)
    return a, b, c


def _angle_range(P):
    """(min, max) interior angle per triangle, radians."""
    a, b, c = _edge_lengths(P)
    with np.errstate(divide="ignore", invalid="ignore"):
        A = np.arccos(np.clip((b * b + c * c - a * a) / (2.0 * b * c), -1.0, 1.0))
        B = np.arccos(np.clip((c * c + a * a - b * b) / (2.0 * c * a), -1.0, 1.0))
    C = np.pi - A - B
    lo = np.minimum(np.minimum(A, B), C)
    hi = np.maximum(np.maximum(A, B), C)
    return lo, hi


def _circumcenters(P):
    A = P[:, 0]
    b = P[:, 1] - A
    c = P[:, 2] - A
    with np.errstate(divide="ignore", invalid="ignore"):
        d = 2.0 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
        bb = b[:, 0] ** 2 + b[:, 1] ** 2
        cc = c[:, 0] ** 2 + c[:, 1] ** 2
        ux = (c[:, 1] * bb - b[:, 1] * cc) / d
        uy = (b[:, 0] * cc - c[:, 0] * bb) / d
    return A + np.column_stack([ux, uy])


def mesh_quality(mesh):
    """Quality summary.  Aspect is longest edge over twice the inradius
    (sqrt(3) for an equilateral triangle)."""
    P = mesh.vertices[mesh.triangles]
    a, b, c = _edge_lengths(P)
    lo, hi = _angle_range(P)
    areas = mesh.triangle_areas()
    longest = np.maximum(np.maximum(a, b), c)
    inradius = areas / (0.5 * (a + b + c))
    return {
        "n_vertices": mesh.n_vertices,
        "n_triangles": mesh.n_triangles,
        "total_area": float(areas.sum()),
        "min_angle_deg": float(np.degrees(lo.min())),
        "max_angle_deg": float(np.degrees(hi.max())),
        "max_aspect": float((longest / (2.0 * inradius)).max()),
        "min_edge": float(np.minimum(np.minimum(a, b), c).min()),
        "max_edge": float(longest.max()),
    }


# -- constrained segments -------------------------------------------------------


class _Seg(NamedTuple):
    a: int
    b: int
    tag: str
    pa: float
    pb: float
    splittable: bool   # conformity splits allowed
    shielded: bool     # never split for encroachment (channel walls, seam)


def _seg_key(a, b):
    return (a, b) if a < b else (b, a)


def _add_seg(segs, seg):
    key = _seg_key(seg.a, seg.b)
    if key in segs:
        raise MeshError("duplicate constrained segment")
    segs[key] = seg


def _split_seg(domain, segs, pts, key):
    seg = segs.pop(key)
    pm = 0.5 * (seg.pa + seg.pb)
    if domain is not None and seg.tag in (WALL_LEFT, WALL_RIGHT, ARC):
        xy = domain.snap(seg.tag, pm)[0]
    else:
        pa = np.asarray(pts[seg.a])
        pb = np.asarray(pts[seg.b])
        xy = 0.5 * (pa + pb)
    v = len(pts)
    pts.append((float(xy[0]), float(xy[1])))
    _add_seg(segs, _Seg(seg.a, v, seg.tag, seg.pa, pm, seg.splittable, seg.shielded))
    _add_seg(segs, _Seg(v, seg.b, seg.tag, pm, seg.pb, seg.splittable, seg.shielded))


# -- Delaunay refinement core ----------------------------------------------------


def _delaunay_edge_set(simplices):
    e = np.concatenate([simplices[:, [0, 1]], simplices[:, [1, 2]],
                        simplices[:, [2, 0]]])
    e.sort(axis=1)
    return set(map(tuple, e.tolist()))


def _flood_interior(tri, blocked, seed):
    start = int(tri.find_simplex(np.asarray([seed], dtype=float))[0])
    if start < 0:
        raise MeshError("interior seed fell outside the triangulation")
    simp = tri.simplices
    neigh = tri.neighbors
    visited = np.zeros(len(simp), dtype=bool)
    visited[start] = True
    stack = [start]
    while stack:
        t = stack.pop()
        vs = simp[t]
        for k in range(3):
            n = int(neigh[t, k])
            if n < 0 or visited[n]:
                continue
            i, j = int(vs[(k + 1) % 3]), int(vs[(k + 2) % 3])
            if _seg_key(i, j) in blocked:
                continue
            visited[n] = True
            stack.append(n)
    return visited


def _in_domain_mask(domain, pts):
    res = domain.point_in_domain(np.asarray(pts, dtype=float))
    return np.atleast_1d(np.asarray(res, dtype=bool))


def _refine(domain, size, pts, segs, seed, h_at, exempt_at):
    """Batch Delaunay refinement loop.

    ``pts`` is a list of (x, y) tuples extended in place; ``segs`` maps the
    sorted vertex pair to its _Seg and is kept conforming.  Returns the
    interior simplices of the final triangulation (counterclockwise).
    """
    theta = math.radians(size.min_angle_deg)
    worst = None
    for n_round in range(1, size.max_rounds + 1):
        if len(pts) > size.max_vertices:
            raise BudgetError(
                f"vertex budget {size.max_vertices} exceeded",
                n_vertices=len(pts), n_rounds=n_round, worst=worst)
        P = np.asarray(pts, dtype=float)
        tri = Delaunay(P)
        edge_set = _delaunay_edge_set(tri.simplices)
        missing = [k for k in segs if k not in edge_set]
        if missing:
            for key in missing:
                if not segs[key].splittable:
                    raise MeshError(
                        "triangulation cannot represent a protected seam edge")
                _split_seg(domain, segs, pts, key)
            continue

        inside = _flood_interior(tri, set(segs), seed)
        simp = tri.simplices[inside].astype(np.int64)
        Pt = P[simp]
        u = Pt[:, 1] - Pt[:, 0]
        v = Pt[:, 2] - Pt[:, 0]
        flip = (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]) < 0
        simp[flip] = simp[flip][:, [0, 2, 1]]
        Pt = P[simp]

        a, b, c = _edge_lengths(Pt)
        longest = np.maximum(np.maximum(a, b), c)
        min_ang, _ = _angle_range(Pt)
        cen = Pt.mean(axis=1)
        h_c = h_at(cen)
        size_bad = longest > 1.5 * h_c
        angle_bad = (min_ang < theta) & ~exempt_at(cen)
        bad = size_bad | angle_bad
        worst = {"min_angle_deg": float(np.degrees(min_ang.min())),
                 "oversize": float((longest / h_c).max())}
        if not bad.any():
            return P, simp, segs

        cand = _circumcenters(Pt[bad])
        R = np.linalg.norm(cand - Pt[bad][:, 0], axis=1)

        # encroached, splittable segments yield a split; their candidates wait
        keys = list(segs)
        sa = np.array([segs[k].a for k in keys])
        sb = np.array([segs[k].b for k in keys])
        mids = 0.5 * (P[sa] + P[sb])
        r2 = 0.25 * np.sum((P[sa] - P[sb]) ** 2, axis=1)
        d2 = np.sum((cand[:, None, :] - mids[None, :, :]) ** 2, axis=2)
        with np.errstate(invalid="ignore"):
            enc = d2 < r2[None, :] * (1.0 - 1e-12)
        shielded = np.array([segs[k].shielded for k in keys])
        open_cols = np.nonzero(~shielded)[0]
        hit_cols = open_cols[np.any(enc[:, open_cols], axis=0)] if len(open_cols) else []
        to_split = sorted(keys[j] for j in hit_cols)
        blocked_cand = enc.any(axis=1)

        free = ~blocked_cand
        if free.any():
            ok = np.zeros(len(cand), dtype=bool)
            ok[free] = _in_domain_mask(domain, cand[free])
            free = ok
        inserts = []
        if free.any():
            # independent-set batch: candidates keep their full circumradius
            # as exclusion zone, otherwise interacting inserts can spiral
            # down to ever smaller features
            qs = cand[free]
            rs = R[free]
            dmin = cKDTree(P).query(qs)[0]
            keep = dmin >= _WIDTH_SAFE
            acc = []
            acc_r = []
            for q, r, k in zip(qs, rs, keep):
                if not k:
                    continue
                if acc:
                    dd = np.linalg.norm(np.asarray(acc) - q, axis=1)
                    if np.any(dd < np.maximum(r, np.asarray(acc_r))):
                        continue
                acc.append((float(q[0]), float(q[1])))
                acc_r.append(r)
            inserts = acc

        if not to_split and not inserts:
            # remaining bad triangles sit against shielded channel walls or
            # have out-of-domain circumcenters; accept them
            return P, simp, segs
        for key in to_split:
            _split_seg(domain, segs, pts, key)
        pts.extend(inserts)

    raise BudgetError(
        f"refinement did not settle in {size.max_rounds} rounds",
        n_vertices=len(pts), n_rounds=size.max_rounds, worst=worst)


# -- mesh generation --------------------------------------------------------------


def _compact(P, simp, segs):
    """Drop unused vertices, remap triangles and segments."""
    used = np.unique(simp)
    remap = np.full(len(P), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    for seg in segs.values():
        if remap[seg.a] < 0 or remap[seg.b] < 0:
            raise MeshError("constrained segment lost during refinement")
    return P[used], remap[simp], remap


def _boundary_from_segs(segs, remap):
    edges, tags, params = [], [], []
    for seg in segs.values():
        if seg.tag == _INTERFACE:
            continue
        edges.append((int(remap[seg.a]), int(remap[seg.b])))
        tags.append(seg.tag)
        params.append((seg.pa, seg.pb))
    return edges, tags, params


def _generate_plain(domain, size, poly):
    m = len(poly)
    pts = [(float(x), float(y)) for x, y in poly.points]
    segs = {}
    for k in range(m):
        pa, pb = poly.edge_params[k]
        _add_seg(segs, _Seg(k, (k + 1) % m, poly.edge_tags[k],
                            float(pa), float(pb), True, False))
    h_at = lambda xy: np.full(len(xy), size.h_max)
    exempt_at = lambda xy: np.zeros(len(xy), dtype=bool)
    P, simp, segs = _refine(domain, size, pts, segs, domain.center, h_at, exempt_at)
    V, T, remap = _compact(P, simp, segs)
    edges, tags, params = _boundary_from_segs(segs, remap)
    return TriMesh(V, T, np.asarray(edges), tags, np.asarray(params)).validate()


def _cusp_size_fn(domain, size):
    tc = domain.tip_cutoff
    g = size.tip_grading

    def h_at(xy):
        y = xy[:, 1]
        h = np.full(len(xy), size.h_max)
        low = y <= 1.0
        if np.any(low):
            yl = np.clip(y[low], 0.0, 1.0)
            local = np.maximum(domain.gamma.value(yl), (1.0 - g) * yl)
            h[low] = np.minimum(size.h_max, np.maximum(local, tc))
        return h

    return h_at


def _cusp_exempt_fn(domain, size):
    c_ex = _EXEMPT_FACTOR * math.sin(math.radians(size.min_angle_deg)) \
        * (1.0 - size.tip_grading)

    def exempt_at(xy):
        y = xy[:, 1]
        out = np.zeros(len(xy), dtype=bool)
        band = (y > 0.0) & (y <= 1.0)
        if np.any(band):
            out[band] = domain.gamma.value(y[band]) < c_ex * y[band]
        return out

    return exempt_at, c_ex


def _generate_cusp(domain, size, poly):
    pts_all = poly.points
    tags = poly.vertex_tags
    params = poly.vertex_params
    m = len(poly)

    # deepest wall level the Delaunay kernel may see
    j = 1
    while j < m and tags[j] == WALL_RIGHT \
            and float(domain.gamma.value(params[j])) < _WIDTH_SAFE:
        j += 1
    if j >= m or tags[j] != WALL_RIGHT:
        raise MeshError("entire wall is narrower than the meshing kernel allows")
    j_rchan = j
    s_chan = float(params[j_rchan])

    mirror = (-pts_all[j_rchan, 0], pts_all[j_rchan, 1])
    hits = np.nonzero((pts_all[:, 0] == mirror[0]) & (pts_all[:, 1] == mirror[1]))[0]
    if len(hits) != 1 or hits[0] <= j_rchan:
        raise MeshError("boundary polyline is not mirror symmetric")
    j_lchan = int(hits[0])
    if (m - 1 - j_lchan) != (j_rchan - 1):
        raise MeshError("wall ladders differ between the two sides")

    exempt_at, c_ex = _cusp_exempt_fn(domain, size)
    h_at = _cusp_size_fn(domain, size)

    # walls are shielded from encroachment splits below the height where the
    # width drops under the shield line; difference quotients of the profile
    # are non-decreasing, so gamma(y) - c*y has one sign change at most
    c_sh = _SHIELD_FACTOR * (1.0 - size.tip_grading)
    top = 1.0
    if float(domain.gamma.value(1.0)) - c_sh > 0:
        lo, hi = domain.tip_cutoff, 1.0
        if float(domain.gamma.value(lo)) - c_sh * lo >= 0.0:
            top = lo
        else:
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                if float(domain.gamma.value(mid)) - c_sh * mid < 0.0:
                    lo = mid
                else:
                    hi = mid
            top = hi

    pts = [(float(x), float(y)) for x, y in pts_all[j_rchan:j_lchan + 1]]
    segs = {}
    for k in range(j_rchan, j_lchan):
        pa, pb = poly.edge_params[k]
        tag = poly.edge_tags[k]
        shielded = tag in (WALL_LEFT, WALL_RIGHT) and max(pa, pb) <= top
        _add_seg(segs, _Seg(k - j_rchan, k + 1 - j_rchan, tag,
                            float(pa), float(pb), True, shielded))
    n_up = len(pts)
    _add_seg(segs, _Seg(n_up - 1, 0, _INTERFACE, 0.0, 1.0, False, True))

    P, simp, segs = _refine(domain, size, pts, segs, domain.disk_center,
                            h_at, exempt_at)
    V, T, remap = _compact(P, simp, segs)
    edges, tags_out, params_out = _boundary_from_segs(segs, remap)

    verts = [(float(x), float(y)) for x, y in V]
    tris = [tuple(int(i) for i in row) for row in T]
    idx_r = {j_rchan: int(remap[0])}
    idx_l = {j_rchan: int(remap[n_up - 1])}
    for i in range(j_rchan - 1, 0, -1):
        idx_r[i] = len(verts)
        verts.append((float(pts_all[i, 0]), float(pts_all[i, 1])))
        idx_l[i] = len(verts)
        verts.append((float(-pts_all[i, 0]), float(pts_all[i, 1])))
    i_tip = len(verts)
    verts.append((0.0, 0.0))

    for i in range(1, j_rchan):
        a, b = idx_l[i], idx_r[i]
        c, d = idx_r[i + 1], idx_l[i + 1]
        tris.append((a, b, c))
        tris.append((a, c, d))
    tris.append((i_tip, idx_r[1], idx_l[1]))

    right_chain = [(i_tip, 0.0)] + [(idx_r[i], float(params[i]))
                                    for i in range(1, j_rchan)] \
        + [(idx_r[j_rchan], s_chan)]
    for (va, pa), (vb, pb) in zip(right_chain[:-1], right_chain[1:]):
        edges.append((va, vb))
        tags_out.append(WALL_RIGHT)
        params_out.append((pa, pb))
    left_chain = [(idx_l[j_rchan], s_chan)] + [(idx_l[i], float(params[i]))
                                               for i in range(j_rchan - 1, 0, -1)] \
        + [(i_tip, 0.0)]
    for (va, pa), (vb, pb) in zip(left_chain[:-1], left_chain[1:]):
        edges.append((va, vb))
        tags_out.append(WALL_LEFT)
        params_out.append((pa, pb))

    return TriMesh(np.asarray(verts), np.asarray(tris, dtype=np.int64),
                   np.asarray(edges), tags_out,
                   np.asarray(params_out)).validate()


def generate(domain, size=None):
    """Mesh a domain to the given size field; returns a validated TriMesh.

    Raises BudgetError when refinement would exceed its vertex or round
    budget, with partial-progress diagnostics attached.
    """
    if size is None:
        size = SizeField()
    poly = domain.boundary_polyline(size.h_max, tip_ratio=size.tip_grading)
    if isinstance(domain, CuspDomain):
        return _generate_cusp(domain, size, poly)
    return _generate_plain(domain, size, poly)


def disk_mesh(radius=1.0, h=0.2):
    """Mesh a disk of the given radius centered at the origin."""
    return generate(DiskDomain(radius), SizeField(h_max=h))


# -- uniform refinement ------------------------------------------------------------


def refine_uniform(mesh, domain=None):
    """Split every triangle in four.  With a domain, boundary edge midpoints
    snap onto the true boundary curves; the tip ladder therefore deepens by
    one geometric level per call.

    Interior edges with both endpoints inside the narrowing region use the
    midpoint in wall-relative coordinates x / gamma(y).  A plain chord
    midpoint there can overshoot the curved wall (the chord of a convex
    profile bulges outward), which would invert needle elements.
    """
    verts = [(float(x), float(y)) for x, y in mesh.vertices]

    in_slab = None
    if isinstance(domain, CuspDomain):
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        g = np.zeros(len(y))
        band = (y > 0.0) & (y <= 1.0)
        g[band] = domain.gamma.value(y[band])
        in_slab = band & (np.abs(x) <= g * (1.0 + 1e-9)) & (g > 0.0)
        xi = np.zeros(len(y))
        xi[in_slab] = np.clip(x[in_slab] / g[in_slab], -1.0, 1.0)

    def interior_mid(a, b):
        if in_slab is not None and in_slab[a] and in_slab[b]:
            ym = 0.5 * (mesh.vertices[a, 1] + mesh.vertices[b, 1])
            xm = 0.5 * (xi[a] + xi[b]) * float(domain.gamma.value(ym))
            return (float(xm), float(ym))
        p = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
        return (float(p[0]), float(p[1]))
    mid = {}
    b_edges, b_tags, b_params = [], [], []
    for (a, b), tag, (pa, pb) in zip(mesh.boundary_edges.tolist(),
                                     mesh.boundary_tags,
                                     mesh.boundary_params):
        pm = 0.5 * (pa + pb)
        if domain is not None and tag in (WALL_LEFT, WALL_RIGHT, ARC):
            xy = domain.snap(tag, pm)[0]
        else:
            xy = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
        k = _seg_key(a, b)
        mid[k] = len(verts)
        verts.append((float(xy[0]), float(xy[1])))
        b_edges.append((a, mid[k]))
        b_tags.append(tag)
        b_params.append((pa, pm))
        b_edges.append((mid[k], b))
        b_tags.append(tag)
        b_params.append((pm, pb))

    tris = []
    for i, j, k in mesh.triangles.tolist():
        for a, b in ((i, j), (j, k), (k, i)):
            key = _seg_key(a, b)
            if key not in mid:
                mid[key] = len(verts)
                verts.append(interior_mid(a, b))
        mij = mid[_seg_key(i, j)]
        mjk = mid[_seg_key(j, k)]
        mki = mid[_seg_key(k, i)]
        tris.extend([(i, mij, mki), (mij, j, mjk), (mki, mjk, k),
                     (mij, mjk, mki)])

    return TriMesh(np.asarray(verts), np.asarray(tris, dtype=np.int64),
                   np.asarray(b_edges), b_tags,
                   np.asarray(b_params)).validate()


# -- mesh files ---------------------------------------------------------------------


def write_mesh(path, mesh):
    """Write a mesh in the plain-text trimesh format (version 1)."""
    lines = ["trimesh 1", f"vertices {mesh.n_vertices}"]
    lines.extend(f"{x:.17g} {y:.17g}" for x, y in mesh.vertices)
    lines.append(f"triangles {mesh.n_triangles}")
    lines.extend(f"{i} {j} {k}" for i, j, k in mesh.triangles)
    lines.append(f"boundary_edges {len(mesh.boundary_edges)}")
    lines.extend(
        f"{a} {b} {tag} {pa:.17g} {pb:.17g}"
        for (a, b), tag, (pa, pb) in zip(mesh.boundary_edges.tolist(),
                                         mesh.boundary_tags,
                                         mesh.boundary_params))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_count(line, keyword):
    parts = line.split()
    if len(parts) != 2 or parts[0] != keyword:
        raise MeshError(f"expected '{keyword} <count>', got {line!r}")
    try:
        n = int(parts[1])
    except ValueError as exc:
        raise MeshError(f"bad count in {line!r}") from exc
    if n < 0:
        raise MeshError(f"negative count in {line!r}")
    return n


def read_mesh(path):
    """Read a trimesh format file; validates, reorienting clockwise
    triangles with a warning."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0].split() != ["trimesh", "1"]:
        raise MeshError("not a trimesh version 1 file")
    pos = 1

    def take(n):
        nonlocal pos
        if pos + n > len(lines):
            raise MeshError("file truncated")
        out = lines[pos:pos + n]
        pos += n
        return out

    nv = _parse_count(take(1)[0], "vertices")
    try:
        verts = np.array([[float(t) for t in ln.split()] for ln in take(nv)])
    except ValueError as exc:
        raise MeshError(f"bad vertex line: {exc}") from exc
    if nv and verts.shape != (nv, 2):
        raise MeshError("vertex lines must hold two coordinates")

    nt = _parse_count(take(1)[0], "triangles")
    try:
        tris = np.array([[int(t) for t in ln.split()] for ln in take(nt)],
                        dtype=np.int64)
    except ValueError as exc:
        raise MeshError(f"bad triangle line: {exc}") from exc
    if nt and tris.shape != (nt, 3):
        raise MeshError("triangle lines must hold three indices")
    if nt and (tris.min() < 0 or tris.max() >= nv):
        raise MeshError("triangle vertex index out of range")

    nb = _parse_count(take(1)[0], "boundary_edges")
    edges, tags, params = [], [], []
    for ln in take(nb):
        parts = ln.split()
        if len(parts) != 5:
            raise MeshError(f"bad boundary edge line: {ln!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
            pa, pb = float(parts[3]), float(parts[4])
        except ValueError as exc:
            raise MeshError(f"bad boundary edge line: {ln!r}") from exc
        if not (0 <= a < nv and 0 <= b < nv):
            raise MeshError("boundary edge index out of range")
        edges.append((a, b))
        tags.append(parts[2])
        params.append((pa, pb))
    if pos != len(lines):
        raise MeshError("trailing data after boundary edges")

    if nt:
        p = verts[tris]
        u = p[:, 1] - p[:, 0]
        v = p[:, 2] - p[:, 0]
        cw = (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]) < 0
        if cw.any():
            warnings.warn(f"reoriented {int(cw.sum())} clockwise triangles")
            tris[cw] = tris[cw][:, [0, 2, 1]]

    edges = np.asarray(edges, dtype=np.int64).reshape(nb, 2)
    params = np.asarray(params, dtype=float).reshape(nb, 2)
    return TriMesh(verts.reshape(nv, 2), tris.reshape(nt, 3),
                   edges, tags, params).validate()
