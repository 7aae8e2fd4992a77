"""Domain geometry: cusp profiles, the cusp-plus-disk domain, boundary sampling.

The domain is the union of a narrowing region
``{(x1, x2): |x1| < gamma(x2), 0 < x2 <= 1}`` and the open disk of radius
sqrt(2) centered at (0, 2).  The disk circle passes through the corner points
(+-1, 1), and for every admissible profile the walls dip inside the disk just
below the corners, so the actual boundary transition from wall to circle
happens at a crossing height strictly below 1.  All boundary classification
here is done with generic inside/outside tests so that one code path covers
every profile.

The boundary weight is gamma(x2) on the part of the boundary below the corner
height and 1 at or above it.  This makes the weight continuous along the whole
boundary (it equals gamma at the wall-disk crossing from both sides and 1 at
the corners) and it vanishes exactly at the tip.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError

# Segment tags used on boundary vertices and edges.
WALL_LEFT = "wall_left"
WALL_RIGHT = "wall_right"
ARC = "arc"
TIP = "tip"
LINE = "line"  # generic straight segment (synthetic test polygons)

DISK_CENTER = (0.0, 2.0)
DISK_RADIUS = math.sqrt(2.0)


class CuspProfile:
    """Profile function of the narrowing region.

    Either a power law t**alpha with alpha > 1, or a tabulated profile
    interpolated piecewise-linearly through monotone samples.  A profile maps
    [0, 1] onto [0, 1] with value 0 at 0 and 1 at 1.
    """

    def __init__(self, kind, alpha=None, samples=None):
        if kind == "power":
            if alpha is None or not np.isfinite(alpha) or alpha <= 1.0:
                raise GeometryError(
                    f"power profile requires a finite exponent alpha > 1, got {alpha!r}")
            self.kind = "power"
            self.alpha = float(alpha)
            self.samples = None
        elif kind == "tabulated":
            pts = np.asarray(samples, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
                raise GeometryError("tabulated profile needs an (n, 2) sample array, n >= 2")
            if not np.all(np.diff(pts[:, 0]) > 0):
                raise GeometryError("tabulated profile abscissae must be strictly increasing")
            if abs(pts[0, 0]) > 1e-14 or abs(pts[-1, 0] - 1.0) > 1e-14:
                raise GeometryError("tabulated profile must span t in [0, 1]")
            self.kind = "tabulated"
            self.alpha = None
            self.samples = pts
        else:
            raise GeometryError(f"unknown profile kind {kind!r}")

    @classmethod
    def power(cls, alpha):
        return cls("power", alpha=alpha)

    @classmethod
    def tabulated(cls, samples):
        return cls("tabulated", samples=samples)

    def value(self, t):
        """Evaluate the profile at t (scalar or array), t in [0, 1]."""
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            return t**self.alpha
        return np.interp(t, self.samples[:, 0], self.samples[:, 1])

    __call__ = value

    def derivative(self, t):
        """Slope at t: analytic for power laws, segment slope for tabulated."""
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            return self.alpha * np.maximum(t, 0.0) ** (self.alpha - 1.0)
        x, g = self.samples[:, 0], self.samples[:, 1]
        slopes = np.diff(g) / np.diff(x)
        idx = np.clip(np.searchsorted(x, t, side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx]

    def validate(self, n_samples=200):
        """Check the profile hypotheses on a sample grid.

        Returns a list of human-readable violation strings; an empty list
        means the profile passes.  Checked: endpoint values, strict
        monotonicity, and non-decreasing difference quotients (the slope must
        increase toward the corner).
        """
        violations = []
        if self.kind == "tabulated":
            grid = self.samples[:, 0]
        else:
            grid = np.linspace(0.0, 1.0, n_samples + 1)
        vals = self.value(grid)
        if abs(vals[0]) > 1e-12:
            violations.append(f"value at 0 is {vals[0]!r}, expected 0")
        if abs(vals[-1] - 1.0) > 1e-12:
            violations.append(f"value at 1 is {vals[-1]!r}, expected 1")
        dv = np.diff(vals)
        if np.any(dv <= 0):
            k = int(np.argmax(dv <= 0))
            violations.append(
                f"profile not strictly increasing on [{grid[k]:.6g}, {grid[k + 1]:.6g}]")
        quot = dv / np.diff(grid)
        drop = quot[1:] < quot[:-1] * (1.0 - 1e-12) - 1e-15
        if np.any(drop):
            k = int(np.argmax(drop))
            violations.append(
                "difference quotients must be non-decreasing, got "
                f"{quot[k]:.6g} then {quot[k + 1]:.6g} near t = {grid[k + 1]:.6g}")
        return violations


@dataclass(frozen=True)
class BoundarySample:
    """One boundary polyline vertex: position, segment tag, curve parameter, weight."""
    point: tuple
    segment: str
    param: float
    weight: float


@dataclass(frozen=True)
class Polyline:
    """Closed boundary polyline, counterclockwise, one loop.

    ``points[k]`` connects to ``points[(k+1) % m]``.  Edge k carries a segment
    tag and the curve parameters of its two endpoints (height on walls, polar
    angle on the circle), which is what boundary snapping consumes.
    """
    points: np.ndarray          # (m, 2)
    vertex_tags: tuple          # (m,) segment tag per vertex
    vertex_params: np.ndarray   # (m,)
    weights: np.ndarray         # (m,)
    edge_tags: tuple            # (m,)
    edge_params: np.ndarray     # (m, 2)

    def __len__(self):
        return len(self.points)

    def samples(self):
        return [BoundarySample(tuple(p), t, float(s), float(w))
                for p, t, s, w in zip(self.points, self.vertex_tags,
                                      self.vertex_params, self.weights)]

    def signed_area(self):
        x, y = self.points[:, 0], self.points[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_intersect(p, q):
    """Pairwise proper-intersection test between two segment arrays (vectorized)."""
    # p: (n, 2, 2), q: (m, 2, 2); returns (n, m) bool of proper crossings
    def orient(a, b, c):
        return ((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1])
                - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0]))

    a = p[:, None, 0, :]
    b = p[:, None, 1, :]
    c = q[None, :, 0, :]
    d = q[None, :, 1, :]
    d1 = orient(a, b, c)
    d2 = orient(a, b, d)
    d3 = orient(c, d, a)
    d4 = orient(c, d, b)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def check_simple_closed(points):
    """Raise GeometryError if the closed polygon self-intersects."""
    m = len(points)
    segs = np.stack([points, np.roll(points, -1, axis=0)], axis=1)
    hits = _segments_intersect(segs, segs)
    # adjacent segments share endpoints; the proper test already excludes them
    if np.any(hits):
        i, j = np.argwhere(hits)[0]
        raise GeometryError(
            f"boundary polyline self-intersects (segments {i} and {j}); "
            "resolution is too coarse for this profile")


class CuspDomain:
    """The cusp-plus-disk domain for a given profile.

    Parameters
    ----------
    gamma : CuspProfile
    tip_cutoff : float
        Height at which geometric wall sampling stops; the exact tip vertex is
        appended below it.  The sliver below the cutoff is represented by two
        chords meeting at the tip.
    """

    def __init__(self, gamma, tip_cutoff=1e-4):
        if not isinstance(gamma, CuspProfile):
            raise GeometryError("gamma must be a CuspProfile")
        if not 0.0 < tip_cutoff < 0.1:
            raise GeometryError(f"tip_cutoff must be in (0, 0.1), got {tip_cutoff!r}")
        self.gamma = gamma
        self.tip_cutoff = float(tip_cutoff)
        self.disk_center = np.array(DISK_CENTER)
        self.disk_radius = DISK_RADIUS
        self._crossing = None

    @classmethod
    def with_tip_width(cls, gamma, min_width=1e-4):
        """Domain whose tip chords start where the channel is min_width wide.

        The default cutoff height 1e-4 leaves channel widths of gamma(1e-4)
        at the last resolved level; for sharp profiles that is far below
        rounding resolution and the nonlinear energy gradient of such
        elements is noise-dominated.  Placing the cutoff at a fixed minimum
        width instead bounds the element aspect independently of the profile.
        """
        if not isinstance(gamma, CuspProfile):
            raise GeometryError("gamma must be a CuspProfile")
        if not 0.0 < min_width < 1.0:
            raise GeometryError(f"min_width must be in (0, 1), got {min_width!r}")
        if gamma.value(0.09) <= min_width:
            raise GeometryError(
                f"min_width {min_width!r} is not reached below height 0.09")
        lo, hi = 0.0, 0.09
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if gamma.value(mid) < min_width:
                lo = mid
            else:
                hi = mid
        return cls(gamma, tip_cutoff=max(hi, 1e-4))

    @property
    def diameter(self):
        return 2.0 + self.disk_radius  # tip (0,0) to circle top (0, 2 + sqrt 2)

    @property
    def geom_tol(self):
        return 1e-10 * self.diameter

    # -- inside/outside tests ------------------------------------------------

    def _dist2_center(self, pts):
        d = pts - self.disk_center
        return d[:, 0] ** 2 + d[:, 1] ** 2

    def point_in_domain(self, pts):
        """Strict interior test for an (n, 2) array (or a single point)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        in_disk = self._dist2_center(pts) < self.disk_radius**2
        slab = (y > 0.0) & (y <= 1.0)
        width = np.zeros_like(y)
        if np.any(slab):
            width[slab] = self.gamma.value(y[slab])
        in_cusp = slab & (np.abs(x) < width)
        out = in_disk | in_cusp
        return out if out.shape[0] > 1 else bool(out[0])

    def boundary_weight(self, pts):
        """Weight at boundary points: gamma(x2) below the corner height, else 1."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        y = pts[:, 1]
        w = np.ones(len(pts))
        low = y < 1.0
        if np.any(low):
            w[low] = self.gamma.value(np.clip(y[low], 0.0, 1.0))
        return w

    # -- boundary parametrization ---------------------------------------------

    def snap(self, tag, params):
        """Map curve parameters back to boundary points (used by refinement)."""
        params = np.atleast_1d(np.asarray(params, dtype=float))
        if tag == WALL_RIGHT or tag == WALL_LEFT:
            s = np.clip(params, 0.0, 1.0)
            x = self.gamma.value(s)
            if tag == WALL_LEFT:
                x = -x
            return np.column_stack([x, s])
        if tag == ARC:
            return self.disk_center + self.disk_radius * np.column_stack(
                [np.cos(params), np.sin(params)])
        raise GeometryError(f"cannot snap to segment tag {tag!r}")

    def wall_disk_crossing(self):
        """Height s* below the corner where the wall exits the closed disk.

        Returns None when the wall never dips inside (degenerate profiles).
        Cached after the first call.
        """
        if self._crossing is not None:
            return self._crossing[0]

        def depth(s):
            g = float(self.gamma.value(s))
            return g * g + (s - 2.0) ** 2 - self.disk_radius**2

        hi = 1.0 - 1e-9
        if depth(hi) >= 0.0:
            self._crossing = (None,)
            return None
        # walk down until the wall is outside the closed disk again
        lo = hi
        step = 1.0 / 64.0
        while depth(lo) < 0.0:
            lo -= step
            if lo <= 0.0:
                raise GeometryError("wall never exits the disk; profile is not admissible")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if depth(mid) >= 0.0:
                lo = mid
            else:
                hi = mid
        self._crossing = (0.5 * (lo + hi),)
        return self._crossing[0]

    def _wall_levels(self, resolution, tip_ratio):
        """Descending heights from 1 to tip_cutoff: resolution-driven above,
        geometric with the given ratio near the tip, floor level included."""
        levels = [1.0]
        s = 1.0
        while s > self.tip_cutoff:
            der = float(self.gamma.derivative(max(s, self.tip_cutoff)))
            ds = resolution / math.hypot(1.0, der)
            step = min(ds, s * (1.0 - tip_ratio))
            s_new = s - step
            if s_new <= self.tip_cutoff * (1.0 + 1e-12):
                s_new = self.tip_cutoff
            levels.append(s_new)
            s = s_new
        return np.array(levels)

    def boundary_polyline(self, resolution, tip_ratio=0.5):
        """Sample the domain boundary into one closed CCW loop.

        Wall samples that fall strictly inside the closed disk are discarded;
        circle samples that fall inside the open narrowing region would be
        discarded by the same generic test but none arise between the two
        crossing points.  The tip, the corner points (+-1, 1) and the
        wall-disk crossings appear exactly once each.  The left half is the
        exact mirror image of the right half.
        """
        if resolution <= 0:
            raise GeometryError("resolution must be positive")
        r2 = self.disk_radius**2

        levels = self._wall_levels(resolution, tip_ratio)
        interior_levels = levels[levels < 1.0]
        g = self.gamma.value(interior_levels)
        depth = g * g + (interior_levels - 2.0) ** 2 - r2
        keep = depth >= -(2.0 * self.disk_radius) * self.geom_tol
        kept = interior_levels[keep]  # descending, all below the crossing

        s_star = self.wall_disk_crossing()
        if s_star is not None and kept.size:
            # avoid a degenerate sliver edge right under the crossing vertex
            der = float(self.gamma.derivative(s_star))
            gap = 0.2 * resolution / math.hypot(1.0, der)
            kept = kept[kept <= s_star - min(gap, 0.4 * s_star)]

        # right wall chain, ascending from the tip
        wall_s = kept[::-1]
        wall_pts = np.column_stack([self.gamma.value(wall_s), wall_s])

        if s_star is not None:
            cross_pt = np.array([float(self.gamma.value(s_star)), s_star])
            theta_r = math.atan2(cross_pt[1] - 2.0, cross_pt[0])
        else:
            cross_pt = None
            theta_r = -math.pi / 4.0

        # circle samples on the right half, theta from the crossing up to pi/2;
        # the left half is mirrored so the polyline is exactly symmetric
        dtheta = resolution / self.disk_radius
        corner = -math.pi / 4.0

        def arc_grid(t0, t1):
            n = max(1, int(math.ceil((t1 - t0) / dtheta)))
            return np.linspace(t0, t1, n + 1)

        def arc_points(th):
            return self.disk_center + self.disk_radius * np.column_stack(
                [np.cos(th), np.sin(th)])

        if s_star is not None:
            th_low = arc_grid(theta_r, corner)[1:-1]  # crossing -> right corner
        else:
            th_low = np.zeros(0)
        th_up = arc_grid(corner, math.pi / 2.0)[1:-1]  # right corner -> top
        pts_low = arc_points(th_low)
        pts_up = arc_points(th_up)

        # generic outside-open-cusp test on arc samples (no special casing)
        for arr in (pts_low, pts_up):
            if len(arr):
                y = arr[:, 1]
                inside = (y > 0) & (y <= 1) & (np.abs(arr[:, 0])
                                               < self.gamma.value(np.clip(y, 0, 1)))
                if np.any(inside):
                    raise GeometryError("circle sample fell inside the narrowing region")

        corner_pt = np.array([1.0, 1.0])
        top_pt = np.array([0.0, 2.0 + self.disk_radius])

        # assemble the right half: tip .. wall .. crossing .. arc .. corner .. arc
        pts = [np.array([0.0, 0.0])]
        tags = [TIP]
        params = [0.0]    # vertex parameter: height on walls, polar angle on arc
        arc_th = [None]   # polar angle for every vertex on the arc span
        pts.extend(wall_pts)
        tags.extend([WALL_RIGHT] * len(wall_pts))
        params.extend(wall_s.tolist())
        arc_th.extend([None] * len(wall_pts))
        if cross_pt is not None:
            pts.append(cross_pt)
            tags.append(WALL_RIGHT)
            params.append(s_star)
            arc_th.append(theta_r)
        i_arc_start = len(pts) - 1  # the arc span begins at crossing (or corner)
        pts.extend(pts_low)
        tags.extend([ARC] * len(pts_low))
        params.extend(th_low.tolist())
        arc_th.extend(th_low.tolist())
        pts.append(corner_pt)
        tags.append(WALL_RIGHT)  # corner lies on both curves; wall tag wins
        params.append(1.0)
        arc_th.append(corner)
        if cross_pt is None:
            i_arc_start = len(pts) - 1
        pts.extend(pts_up)
        tags.extend([ARC] * len(pts_up))
        params.extend(th_up.tolist())
        arc_th.extend(th_up.tolist())

        n_right = len(pts)
        pts.append(top_pt)
        tags.append(ARC)
        params.append(math.pi / 2.0)
        arc_th.append(math.pi / 2.0)

        # mirror the right half (minus the tip) to build the left half exactly
        for k in range(n_right - 1, 0, -1):
            p = pts[k]
            pts.append(np.array([-p[0], p[1]]))
            t = tags[k]
            tags.append(WALL_LEFT if t == WALL_RIGHT else t)
            params.append(math.pi - params[k] if t == ARC else params[k])
            arc_th.append(math.pi - arc_th[k] if arc_th[k] is not None else None)

        points = np.array(pts)
        m = len(points)
        i_arc_end = m - i_arc_start  # mirrored crossing (or corner)
        weights = self.boundary_weight(points)
        weights[0] = 0.0  # tip: gamma(0) = 0 exactly

        # per-edge tags and parameters; edge k joins vertex k and k+1 (mod m)
        edge_tags = []
        edge_params = np.zeros((m, 2))
        for k in range(m):
            k2 = (k + 1) % m
            if k < i_arc_start:
                edge_tags.append(WALL_RIGHT)
                edge_params[k] = (params[k], params[k2])
            elif k < i_arc_end:
                edge_tags.append(ARC)
                edge_params[k] = (arc_th[k], arc_th[k2])
            else:
                edge_tags.append(WALL_LEFT)
                edge_params[k] = (params[k], params[k2] if k2 != 0 else 0.0)

        poly = Polyline(points=points, vertex_tags=tuple(tags),
                        vertex_params=np.array(params), weights=weights,
                        edge_tags=tuple(edge_tags), edge_params=edge_params)
        if poly.signed_area() <= 0:
            raise GeometryError("boundary polyline is not counterclockwise")
        check_simple_closed(points)
        return poly


class DiskDomain:
    """Disk of given radius centered at the origin (oracle geometry, weight 1)."""

    def __init__(self, radius, center=(0.0, 0.0)):
        if radius <= 0:
            raise GeometryError("radius must be positive")
        self.radius = float(radius)
        self.center = np.array(center, dtype=float)

    @property
    def diameter(self):
        return 2.0 * self.radius

    @property
    def geom_tol(self):
        return 1e-10 * self.diameter

    def point_in_domain(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = pts - self.center
        out = d[:, 0] ** 2 + d[:, 1] ** 2 < self.radius**2
        return out if out.shape[0] > 1 else bool(out[0])

    def boundary_weight(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.ones(len(pts))

    def snap(self, tag, params):
        params = np.atleast_1d(np.asarray(params, dtype=float))
        if tag != ARC:
            raise GeometryError(f"disk boundary only has arc segments, got {tag!r}")
        return self.center + self.radius * np.column_stack(
            [np.cos(params), np.sin(params)])

    def boundary_polyline(self, resolution, tip_ratio=0.5):
        n = max(8, int(math.ceil(2.0 * math.pi * self.radius / resolution)))
        th = np.linspace(0.0, 2.0 * math.pi, n + 1)[:-1]
        points = self.snap(ARC, th)
        edge_params = np.column_stack([th, np.append(th[1:], 2.0 * math.pi)])
        return Polyline(points=points, vertex_tags=tuple([ARC] * n),
                        vertex_params=th, weights=np.ones(n),
                        edge_tags=tuple([ARC] * n), edge_params=edge_params)


# -- domain description files -------------------------------------------------

def domain_from_dict(data):
    """Build a CuspDomain from its JSON description (dict form)."""
    try:
        gspec = data["gamma"]
        kind = gspec["kind"]
    except (KeyError, TypeError) as exc:
        raise GeometryError(f"malformed domain description: {exc}") from exc
    if kind == "power":
        profile = CuspProfile.power(gspec.get("alpha"))
    elif kind == "tabulated":
        profile = CuspProfile.tabulated(gspec.get("samples"))
    else:
        raise GeometryError(f"unknown profile kind {kind!r}")
    return CuspDomain(profile, tip_cutoff=float(data.get("tip_cutoff", 1e-4)))


def load_domain(path):
    """Read a domain description JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        return domain_from_dict(json.load(fh))


def domain_to_dict(domain):
    g = domain.gamma
    if g.kind == "power":
        gspec = {"kind": "power", "alpha": g.alpha}
    else:
        gspec = {"kind": "tabulated", "samples": g.samples.tolist()}
    return {"gamma": gspec, "tip_cutoff": domain.tip_cutoff}
