"""Computational domains, region sets, conforming triangulations, and the
pixel scanning family for inclusion detection.

The mesher is deliberately self-contained: it builds a planar straight-line
graph from the domain boundary, region polygons, and any extra constraint
segments (pixel-grid lines, declared singular segments), splits mutual
intersections, and computes a Delaunay triangulation that is refined until
every constraint segment is a union of mesh edges.  Interior resolution comes
from a background point lattice with an exclusion zone around constraints,
plus Laplacian smoothing of the free points.
"""

import hashlib
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from . import polygons as pg

REGION_LABELS = ("D0", "Dinf", "Ddeg", "Dsing", "DFminus", "DFplus")
BACKGROUND = "bg"

# Labels where the coefficient falls below / rises above the background.
NEGATIVE_LABELS = ("D0", "Ddeg", "DFminus")
POSITIVE_LABELS = ("Dinf", "Dsing", "DFplus")


class GeometryError(ValueError):
    pass


class MeshConformityError(GeometryError):
    pass


@dataclass(frozen=True)
class Domain:
    """Computational domain: unit disk or unit square, with the measurement
    arc given as an interval of the normalized boundary parameter t in [0,1).

    For the disk, t = angle/(2*pi) starting at (1,0); for the square
    [0,1]^2, t runs counter-clockwise from (0,0) along the bottom edge.
    The disk boundary is polygonalized as a regular n-gon.
    """

    shape: str
    gamma_span: tuple
    disk_segments: int = 256

    def __post_init__(self):
        if self.shape not in ("disk", "square"):
            raise GeometryError(f"unknown domain shape {self.shape!r}")
        t0, t1 = self.gamma_span
        if not (t0 < t1 <= t0 + 1.0):
            raise GeometryError("gamma_span must satisfy t0 < t1 <= t0 + 1")
        if t1 - t0 <= 0.0:
            raise GeometryError("measurement arc has zero length")

    @property
    def boundary_polygon(self):
        if self.shape == "disk":
            return pg.regular_polygon((0.0, 0.0), 1.0, self.disk_segments)
        return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])

    @property
    def area(self):
        return pg.polygon_area(self.boundary_polygon)

    @property
    def gamma_fraction(self):
        t0, t1 = self.gamma_span
        return t1 - t0

    def boundary_point(self, t):
        """Point on the boundary at normalized parameter t (vectorized)."""
        t = np.mod(np.asarray(t, dtype=float), 1.0)
        if self.shape == "disk":
            # Points of the polygonalized circle: interpolate along chords.
            n = self.disk_segments
            k = np.floor(t * n).astype(int) % n
            frac = t * n - np.floor(t * n)
            th0 = 2 * np.pi * k / n
            th1 = 2 * np.pi * (k + 1) / n
            p0 = np.stack([np.cos(th0), np.sin(th0)], axis=-1)
            p1 = np.stack([np.cos(th1), np.sin(th1)], axis=-1)
            return p0 + frac[..., None] * (p1 - p0)
        side = np.floor(t * 4).astype(int) % 4
        frac = t * 4 - np.floor(t * 4)
        corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        p0 = corners[side]
        p1 = corners[(side + 1) % 4]
        return p0 + frac[..., None] * (p1 - p0)

    def boundary_param(self, points):
        """Normalized boundary parameter of points on (or near) the boundary."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.shape == "disk":
            ang = np.arctan2(pts[:, 1], pts[:, 0])
            return np.mod(ang / (2 * np.pi), 1.0)
        x, y = pts[:, 0], pts[:, 1]
        d = np.stack([y, 1 - x, 1 - y, x], axis=1)  # distance to each side
        side = np.argmin(d, axis=1)
        frac = np.choose(side, [x, y, 1 - x, 1 - y])
        return np.mod((side + np.clip(frac, 0.0, 1.0)) / 4.0, 1.0)

    def param_in_gamma(self, t):
        t0, t1 = self.gamma_span
        return np.mod(np.asarray(t, dtype=float) - t0, 1.0) < (t1 - t0) + 1e-12

    def signed_distance_to_boundary(self, points):
        """Distance to the boundary polygon, positive inside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        poly = self.boundary_polygon
        d = pg.points_segments_distance(pts, poly, np.roll(poly, -1, axis=0))
        inside = pg.points_in_polygon(pts, poly, boundary=True)
        return np.where(inside, d, -d)


def build_domain(shape, gamma_arc=(0.0, 1.0), disk_segments=256):
    """Construct a Domain; gamma_arc is (t0, t1) in the normalized boundary
    parameter, full boundary by default."""
    return Domain(shape=shape, gamma_span=(float(gamma_arc[0]), float(gamma_arc[1])),
                  disk_segments=disk_segments)


@dataclass
class RegionSet:
    """Labeled inclusion geometry.

    ``polys`` maps a label to a list of oriented simple polygons; CCW
    polygons are solid, CW polygons cut holes (membership by parity).
    ``singular_points``/``singular_segments`` declare weight singularities so
    the mesher can pin them to vertices/edges.
    """

    polys: dict = field(default_factory=dict)
    singular_points: list = field(default_factory=list)
    singular_segments: list = field(default_factory=list)

    def __post_init__(self):
        clean = {}
        for label, plist in self.polys.items():
            if label not in REGION_LABELS:
                raise GeometryError(f"unknown region label {label!r}")
            clean[label] = [np.asarray(p, dtype=float) for p in plist]
        self.polys = clean

    def label_polys(self, label):
        return self.polys.get(label, [])

    def all_polys(self):
        out = []
        for label in REGION_LABELS:
            for p in self.label_polys(label):
                out.append((label, p))
        return out

    def is_empty(self):
        return all(len(v) == 0 for v in self.polys.values())

    def membership(self, points, label):
        plist = self.label_polys(label)
        pts = np.atleast_2d(points)
        if not plist:
            return np.zeros(len(pts), dtype=bool)
        return pg.points_in_region(pts, plist, tol=0.0)

    def with_relabeled(self, mapping):
        """New RegionSet with labels moved per ``mapping`` (label -> label)."""
        out = {}
        for label in REGION_LABELS:
            tgt = mapping.get(label, label)
            out.setdefault(tgt, [])
            out[tgt] = out.get(tgt, []) + [p.copy() for p in self.label_polys(label)]
        return RegionSet(polys={k: v for k, v in out.items() if v},
                         singular_points=list(self.singular_points),
                         singular_segments=list(self.singular_segments))


@dataclass
class TestInclusion:
    """A test set from the scanning family.

    ``parts`` lists one or more disjoint simple polygons whose union is the
    test set (a directional notch can split the remainder of the scan window
    into two rectangles).  ``polygon`` is the first part, kept for the common
    single-polygon case.
    """

    __test__ = False          # bare data, despite the pytest-like name

    id: str
    parts: tuple
    excluded_cell: tuple = None
    direction: str = None
    admissible: bool = True
    reason: str = ""

    @property
    def polygon(self):
        return self.parts[0]

    def contains(self, points):
        pts = np.atleast_2d(points)
        inside = np.zeros(len(pts), dtype=bool)
        for p in self.parts:
            inside |= pg.points_in_polygon(pts, p, boundary=True)
        return inside


def validate_inclusion(domain, inclusion, min_boundary_distance=1e-9):
    """Check the admissibility clauses of a test inclusion that are decidable
    on polygons: simple parts, inside the domain, positive distance from the
    outer boundary."""
    reasons = []
    bp = domain.boundary_polygon
    for part in inclusion.parts:
        if not pg.polygon_is_simple(part):
            reasons.append(f"part of {inclusion.id} is not a simple polygon")
            continue
        verts = np.asarray(part, dtype=float)
        if not pg.points_in_polygon(verts, bp, boundary=True).all():
            reasons.append(f"{inclusion.id} extends outside the domain")
        d = pg.points_segments_distance(verts, bp, np.roll(bp, -1, axis=0))
        if d.min() < min_boundary_distance:
            reasons.append(f"{inclusion.id} touches the domain boundary")
    return reasons


# ---------------------------------------------------------------------------
# PSLG arrangement
# ---------------------------------------------------------------------------

def _snap_key(p, tol=pg.SNAP_TOL):
    return (round(p[0] / tol) * tol, round(p[1] / tol) * tol)


class _PointRegistry:
    def __init__(self):
        self.points = []
        self.index = {}

    def add(self, p):
        key = _snap_key(p)
        idx = self.index.get(key)
        if idx is None:
            idx = len(self.points)
            self.points.append(np.array([key[0], key[1]], dtype=float))
            self.index[key] = idx
        return idx

    def array(self):
        return np.array(self.points, dtype=float)


def _arrange_segments(segments, extra_points):
    """Split segments at mutual intersections and at points lying on them.

    Returns (points array, list of index-pair subsegments).
    """
    reg = _PointRegistry()
    segs = [(np.asarray(a, float), np.asarray(b, float)) for a, b in segments]
    pts_on = [list() for _ in segs]

    boxes = np.array([[min(a[0], b[0]), min(a[1], b[1]), max(a[0], b[0]), max(a[1], b[1])]
                      for a, b in segs]) if segs else np.zeros((0, 4))
    tol = pg.SNAP_TOL

    for i in range(len(segs)):
        a, b = segs[i]
        if len(segs) > i + 1:
            others = np.arange(i + 1, len(segs))
            ob = boxes[others]
            mask = ~((ob[:, 0] > boxes[i, 2] + tol) | (ob[:, 2] < boxes[i, 0] - tol)
                     | (ob[:, 1] > boxes[i, 3] + tol) | (ob[:, 3] < boxes[i, 1] - tol))
            for j in others[mask]:
                c, d = segs[j]
                if pg.segments_properly_intersect(a, b, c, d):
                    x = pg.segment_intersection_point(a, b, c, d)
                    pts_on[i].append(x)
                    pts_on[j].append(x)
                else:
                    # T-junctions: an endpoint interior to the other segment.
                    for q in (c, d):
                        if pg.segment_point_distance(q, a, b) <= tol \
                                and np.hypot(*(q - a)) > tol and np.hypot(*(q - b)) > tol:
                            pts_on[i].append(q)
                    for q in (a, b):
                        if pg.segment_point_distance(q, c, d) <= tol \
                                and np.hypot(*(q - c)) > tol and np.hypot(*(q - d)) > tol:
                            pts_on[j].append(q)

    for q in extra_points:
        q = np.asarray(q, dtype=float)
        reg.add(q)
        for i, (a, b) in enumerate(segs):
            if pg.segment_point_distance(q, a, b) <= tol \
                    and np.hypot(*(q - a)) > tol and np.hypot(*(q - b)) > tol:
                pts_on[i].append(q)

    subsegments = set()
    for i, (a, b) in enumerate(segs):
        ia, ib = reg.add(a), reg.add(b)
        cuts = [(0.0, ia), (1.0, ib)]
        ab = b - a
        denom = float(ab @ ab)
        for x in pts_on[i]:
            t = float((np.asarray(x) - a) @ ab / denom)
            cuts.append((t, reg.add(x)))
        cuts.sort()
        prev = None
        for _, idx in cuts:
            if prev is not None and idx != prev:
                subsegments.add((min(prev, idx), max(prev, idx)))
            prev = idx
    return reg, sorted(subsegments)


def _chop_to_length(reg, subsegments, max_len):
    """Split subsegments into pieces no longer than max_len."""
    out = []
    pts = reg.array()
    for i, j in subsegments:
        a, b = pts[i], pts[j]
        length = float(np.hypot(*(b - a)))
        parts = max(1, int(math.ceil(length / max_len)))
        prev = i
        for k in range(1, parts):
            idx = reg.add(a + (b - a) * (k / parts))
            out.append((min(prev, idx), max(prev, idx)))
            prev = idx
        out.append((min(prev, j), max(prev, j)))
    return out


# ---------------------------------------------------------------------------
# Mesh
# ---------------------------------------------------------------------------

@dataclass
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    triangle_region: np.ndarray
    boundary_edges: np.ndarray
    boundary_on_gamma: np.ndarray
    h: float
    domain: Domain

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    def triangle_coords(self, idx=None):
        t = self.triangles if idx is None else self.triangles[idx]
        return self.vertices[t]

    def triangle_areas(self):
        c = self.triangle_coords()
        a, b, d = c[:, 0], c[:, 1], c[:, 2]
        return 0.5 * ((b[:, 0] - a[:, 0]) * (d[:, 1] - a[:, 1])
                      - (d[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))

    def region_area(self, label):
        mask = self.triangle_region == label
        return float(np.sum(self.triangle_areas()[mask]))

    def centroids(self):
        return self.triangle_coords().mean(axis=1)

    def min_angle_deg(self):
        c = self.triangle_coords()
        angles = []
        for k in range(3):
            u = c[:, (k + 1) % 3] - c[:, k]
            v = c[:, (k + 2) % 3] - c[:, k]
            cosang = np.sum(u * v, axis=1) / (np.hypot(*u.T) * np.hypot(*v.T))
            angles.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
        return float(np.min(angles))

    def edge_triangle_map(self):
        """Map sorted vertex pair -> list of triangle indices."""
        emap = {}
        for ti, (i, j, k) in enumerate(self.triangles):
            for e in ((i, j), (j, k), (k, i)):
                key = (min(e), max(e))
                emap.setdefault(key, []).append(ti)
        return emap

    def triangle_adjacency(self):
        """List of neighbor triangle indices per triangle (shared edges)."""
        emap = self.edge_triangle_map()
        adj = [[] for _ in range(self.num_triangles)]
        for tris in emap.values():
            if len(tris) == 2:
                a, b = tris
                adj[a].append(b)
                adj[b].append(a)
        return adj

    def gamma_edges(self):
        return self.boundary_edges[self.boundary_on_gamma]

    def gamma_length(self):
        e = self.gamma_edges()
        d = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))

    def provenance(self):
        """Hash of the geometric mesh identity (labels excluded, so coefficient
        relabelings on a shared mesh keep comparable provenance)."""
        hasher = hashlib.sha256()
        hasher.update(np.round(self.vertices, 12).tobytes())
        hasher.update(self.triangles.astype(np.int64).tobytes())
        hasher.update(self.boundary_on_gamma.tobytes())
        return hasher.hexdigest()[:16]

    def relabeled(self, mapping):
        """Copy of the mesh with triangle labels moved per mapping."""
        region = self.triangle_region.copy()
        for src, tgt in mapping.items():
            region[self.triangle_region == src] = tgt
        return Mesh(self.vertices, self.triangles, region,
                    self.boundary_edges, self.boundary_on_gamma, self.h, self.domain)

    def validate(self, min_angle_floor=1.0):
        problems = []
        areas = self.triangle_areas()
        if np.any(areas <= 0):
            problems.append("non-positively-oriented or degenerate triangles present")
        if self.min_angle_deg() < min_angle_floor:
            problems.append(f"min angle {self.min_angle_deg():.3f} deg below floor {min_angle_floor}")
        emap = self.edge_triangle_map()
        bad = [e for e, tris in emap.items() if len(tris) > 2]
        if bad:
            problems.append(f"{len(bad)} edges shared by more than two triangles")
        nbound = sum(1 for tris in emap.values() if len(tris) == 1)
        if nbound != len(self.boundary_edges):
            problems.append("boundary edge bookkeeping inconsistent")
        return problems

    # -- plain-text export: header `nv nt ne`, vertices, triangles, edges --

    def to_text(self):
        buf = io.StringIO()
        buf.write(f"{self.num_vertices} {self.num_triangles} {len(self.boundary_edges)}\n")
        for x, y in self.vertices:
            buf.write(f"{x:.17g} {y:.17g}\n")
        for (i, j, k), lab in zip(self.triangles, self.triangle_region):
            buf.write(f"{i} {j} {k} {lab}\n")
        for (i, j), g in zip(self.boundary_edges, self.boundary_on_gamma):
            buf.write(f"{i} {j} {int(g)}\n")
        return buf.getvalue()

    @staticmethod
    def from_text(text, domain):
        lines = text.strip().split("\n")
        nv, nt, ne = (int(v) for v in lines[0].split())
        verts = np.array([[float(v) for v in lines[1 + i].split()] for i in range(nv)])
        tris, labels = [], []
        for i in range(nt):
            parts = lines[1 + nv + i].split()
            tris.append([int(parts[0]), int(parts[1]), int(parts[2])])
            labels.append(parts[3])
        edges, gamma = [], []
        for i in range(ne):
            parts = lines[1 + nv + nt + i].split()
            edges.append([int(parts[0]), int(parts[1])])
            gamma.append(bool(int(parts[2])))
        tri = np.array(tris, dtype=int)
        mesh = Mesh(verts, tri, np.array(labels, dtype="<U8"),
                    np.array(edges, dtype=int), np.array(gamma, dtype=bool),
                    0.0, domain)
        c = mesh.triangle_coords()
        hmax = max(np.hypot(*(c[:, 1] - c[:, 0]).T).max(),
                   np.hypot(*(c[:, 2] - c[:, 1]).T).max(),
                   np.hypot(*(c[:, 0] - c[:, 2]).T).max())
        mesh.h = float(hmax)
        return mesh


# ---------------------------------------------------------------------------
# Triangulation
# ---------------------------------------------------------------------------

def triangulate(domain, regions=None, target_h=0.1, extra_segments=(),
                extra_points=(), min_angle_deg=0.05, smooth_rounds=2):
    """Conforming triangulation of the domain resolving all region polygons.

    Region boundaries, declared singular features, and any extra constraint
    segments become unions of mesh edges; singular points become vertices.
    Raises MeshConformityError when constraint recovery fails or a labeled
    region ends up without triangles (target_h cannot resolve it).
    """
    regions = regions or RegionSet()
    bp = domain.boundary_polygon
    spacing = target_h / 1.6

    segments = [(bp[i], bp[(i + 1) % len(bp)]) for i in range(len(bp))]
    for _, poly in regions.all_polys():
        for i in range(len(poly)):
            segments.append((poly[i], poly[(i + 1) % len(poly)]))
    for seg in regions.singular_segments:
        seg = np.asarray(seg, dtype=float)
        for i in range(len(seg) - 1):
            segments.append((seg[i], seg[i + 1]))
    for seg in extra_segments:
        segments.append((np.asarray(seg[0], float), np.asarray(seg[1], float)))

    pins = [np.asarray(p, dtype=float) for p in regions.singular_points]
    pins += [np.asarray(p, dtype=float) for p in extra_points]
    # Measurement-arc endpoints must be mesh vertices so gamma is resolved.
    t0, t1 = domain.gamma_span
    if domain.gamma_fraction < 1.0:
        pins.append(domain.boundary_point(t0))
        pins.append(domain.boundary_point(t1))

    reg, subsegs = _arrange_segments(segments, pins)
    subsegs = _chop_to_length(reg, subsegs, spacing)

    pts = reg.array()
    seg_a = np.array([pts[i] for i, _ in subsegs])
    seg_b = np.array([pts[j] for _, j in subsegs])

    # Background lattice clipped to the domain with an exclusion zone
    # around constraints (prevents slivers along segments).
    xmin, ymin = bp.min(axis=0) - spacing
    xmax, ymax = bp.max(axis=0) + spacing
    gx = np.arange(xmin, xmax + spacing, spacing)
    gy = np.arange(ymin, ymax + spacing, spacing)
    gpts = np.array(np.meshgrid(gx, gy)).reshape(2, -1).T
    inside = pg.points_in_polygon(gpts, bp, boundary=False, tol=0.0)
    gpts = gpts[inside]
    if len(gpts):
        d = pg.points_segments_distance(gpts, seg_a, seg_b, cutoff=0.5 * spacing)
        gpts = gpts[d > 0.45 * spacing]

    points = np.vstack([pts, gpts]) if len(gpts) else pts.copy()
    n_fixed = len(pts)
    constraints = set(subsegs)

    def tri_edges(simplices):
        e = np.concatenate([simplices[:, [0, 1]], simplices[:, [1, 2]],
                            simplices[:, [2, 0]]])
        return np.sort(e, axis=1)

    def recover(points, constraints):
        """Delaunay + midpoint insertion until all constraints are edges."""
        points = [p for p in points]
        for _ in range(60):
            arr = np.asarray(points)
            dt = Delaunay(arr)
            edges = tri_edges(dt.simplices)
            edge_set = set(map(tuple, np.unique(edges, axis=0).tolist()))
            missing = [e for e in constraints if e not in edge_set]
            if not missing:
                return arr, dt, constraints
            for (i, j) in missing:
                mid = (arr[i] + arr[j]) / 2.0
                idx = len(points)
                points.append(mid)
                constraints.discard((i, j))
                constraints.add((min(i, idx), max(i, idx)))
                constraints.add((min(idx, j), max(idx, j)))
        raise MeshConformityError("failed to recover constraint segments")

    arr, dt, constraints = recover(points, set(constraints))

    # Laplacian smoothing of the lattice points only; constraint vertices
    # (original and midpoint-inserted) stay fixed.
    free_mask = np.zeros(len(arr), dtype=bool)
    free_mask[n_fixed:n_fixed + len(gpts)] = True

    for _ in range(smooth_rounds):
        free_mask = np.concatenate([free_mask,
                                    np.zeros(len(arr) - len(free_mask), dtype=bool)])
        edges = np.unique(tri_edges(dt.simplices), axis=0)
        neighbor_sum = np.zeros_like(arr)
        neighbor_cnt = np.zeros(len(arr))
        np.add.at(neighbor_sum, edges[:, 0], arr[edges[:, 1]])
        np.add.at(neighbor_sum, edges[:, 1], arr[edges[:, 0]])
        np.add.at(neighbor_cnt, edges[:, 0], 1)
        np.add.at(neighbor_cnt, edges[:, 1], 1)
        valid = free_mask & (neighbor_cnt > 0)
        proposed = arr.copy()
        proposed[valid] = neighbor_sum[valid] / neighbor_cnt[valid][:, None]
        keep = pg.points_in_polygon(proposed[valid], bp, boundary=False, tol=0.0)
        dseg = pg.points_segments_distance(proposed[valid], seg_a, seg_b, cutoff=0.35 * spacing)
        keep &= dseg > 0.3 * spacing
        idxs = np.where(valid)[0]
        arr[idxs[keep]] = proposed[valid][keep]
        arr, dt, constraints = recover(arr, constraints)

    # Enforce the maximum-diameter contract: split interior edges that are
    # still longer than target_h (constraint subsegments are already short).
    for _ in range(4):
        edges = np.unique(tri_edges(dt.simplices), axis=0)
        lengths = np.hypot(*(arr[edges[:, 1]] - arr[edges[:, 0]]).T)
        mids = (arr[edges[:, 0]] + arr[edges[:, 1]]) / 2.0
        long = (lengths > target_h) & pg.points_in_polygon(mids, bp, boundary=False, tol=0.0)
        if np.any(long):
            dmid = pg.points_segments_distance(mids[long], seg_a, seg_b, cutoff=0.25 * spacing)
            long[np.where(long)[0][dmid <= 0.2 * spacing]] = False
        if not np.any(long):
            break
        arr = np.vstack([arr, mids[long]])
        arr, dt, constraints = recover(arr, constraints)

    # Keep triangles whose centroid is inside the domain polygon.
    simplices = dt.simplices
    cent = arr[simplices].mean(axis=1)
    keep = pg.points_in_polygon(cent, bp, boundary=False, tol=0.0)
    tris = simplices[keep]

    # Snapped collinear chains can leave hairline slivers hugging constraint
    # lines; dropping them keeps conformity (their leg edges stay on the
    # neighbors) and perturbs areas at roundoff level only.
    tc = arr[tris]
    areas2 = np.abs((tc[:, 1, 0] - tc[:, 0, 0]) * (tc[:, 2, 1] - tc[:, 0, 1])
                    - (tc[:, 2, 0] - tc[:, 0, 0]) * (tc[:, 1, 1] - tc[:, 0, 1]))
    elen = np.stack([np.hypot(*(tc[:, 1] - tc[:, 0]).T),
                     np.hypot(*(tc[:, 2] - tc[:, 1]).T),
                     np.hypot(*(tc[:, 0] - tc[:, 2]).T)])
    sliver = areas2 < 1e-7 * np.max(elen, axis=0) ** 2
    tris = tris[~sliver]

    # Drop unreferenced vertices and reindex.
    used = np.unique(tris)
    remap = -np.ones(len(arr), dtype=int)
    remap[used] = np.arange(len(used))
    verts = arr[used]
    tris = remap[tris]

    # Positive orientation.
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    flip = det < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    # Region labels from centroid parity.
    cent = verts[tris].mean(axis=1)
    labels = np.full(len(tris), BACKGROUND, dtype="<U8")
    for label in REGION_LABELS:
        plist = regions.label_polys(label)
        if not plist:
            continue
        member = pg.points_in_region(cent, plist, tol=0.0)
        clash = member & (labels != BACKGROUND)
        if np.any(clash):
            raise GeometryError(f"regions overlap near {cent[np.argmax(clash)]}")
        labels[member] = label

    for label in REGION_LABELS:
        if regions.label_polys(label) and not np.any(labels == label):
            raise MeshConformityError(
                f"target_h={target_h} too coarse to resolve region {label}")

    # Boundary edges (incident to exactly one triangle) and gamma flags.
    emap = {}
    for ti in range(len(tris)):
        i, j, k = tris[ti]
        for e in ((i, j), (j, k), (k, i)):
            key = (min(e), max(e))
            emap[key] = emap.get(key, 0) + 1
    bedges = np.array(sorted(e for e, cnt in emap.items() if cnt == 1), dtype=int)
    mid = (verts[bedges[:, 0]] + verts[bedges[:, 1]]) / 2.0
    on_gamma = domain.param_in_gamma(domain.boundary_param(mid))

    cc = verts[tris]
    hmax = max(np.hypot(*(cc[:, 1] - cc[:, 0]).T).max(),
               np.hypot(*(cc[:, 2] - cc[:, 1]).T).max(),
               np.hypot(*(cc[:, 0] - cc[:, 2]).T).max())

    mesh = Mesh(verts, tris, labels, bedges, on_gamma, float(hmax), domain)
    if mesh.min_angle_deg() < min_angle_deg:
        raise MeshConformityError(
            f"mesh quality below floor: min angle {mesh.min_angle_deg():.3f} deg")
    return mesh


# ---------------------------------------------------------------------------
# Region validation
# ---------------------------------------------------------------------------

def validate_regions(domain, regions, coarse_h=None):
    """Check the decidable region-set invariants; returns violation strings.

    Raises GeometryError on self-intersecting input polygons.  Connectivity
    clauses are decided on a coarse conforming triangulation (exact on the
    polygon arrangement); compact containment is checked by sampled distance
    from the weighted-region boundaries to the boundary of the labeled union.
    """
    violations = []
    all_polys = regions.all_polys()
    for label, poly in all_polys:
        if not pg.polygon_is_simple(poly):
            raise GeometryError(f"self-intersecting polygon in {label}")

    bp = domain.boundary_polygon
    for label, poly in all_polys:
        if not pg.points_in_polygon(poly, bp, boundary=True).all():
            violations.append(f"{label} polygon extends outside the domain")

    # Pairwise interior disjointness between different labels (parity-aware).
    for i in range(len(all_polys)):
        for j in range(i + 1, len(all_polys)):
            la, pa = all_polys[i]
            lb, pb = all_polys[j]
            if la == lb:
                continue  # same-label nesting encodes holes
            for k in range(len(pa)):
                a, b = pa[k], pa[(k + 1) % len(pa)]
                for m in range(len(pb)):
                    c, d = pb[m], pb[(m + 1) % len(pb)]
                    if pg.segments_properly_intersect(a, b, c, d):
                        violations.append(f"regions {la} and {lb} overlap (edges cross)")
                        break
                else:
                    continue
                break
    if not violations:
        for i in range(len(all_polys)):
            for j in range(len(all_polys)):
                if i == j:
                    continue
                la, pa = all_polys[i]
                lb, pb = all_polys[j]
                if la == lb:
                    continue
                probe = pg._interior_probe(pa)
                if regions.membership(probe[None, :], la)[0] and \
                        regions.membership(probe[None, :], lb)[0]:
                    violations.append(f"regions {la} and {lb} overlap")

    if regions.is_empty():
        return violations
    if violations:
        return violations

    # Connectivity and containment clauses on a coarse conforming mesh.
    if coarse_h is None:
        coarse_h = 0.25 if domain.shape == "disk" else 0.125
    try:
        mesh = triangulate(domain, regions, target_h=coarse_h, min_angle_deg=0.2)
    except MeshConformityError as exc:
        violations.append(f"could not build validation mesh: {exc}")
        return violations

    adj = mesh.triangle_adjacency()

    def complement_connected(labels_in_set):
        mask = ~np.isin(mesh.triangle_region, labels_in_set)
        idx = np.where(mask)[0]
        if len(idx) == 0:
            return False
        seen = {idx[0]}
        stack = [idx[0]]
        while stack:
            t = stack.pop()
            for nb in adj[t]:
                if mask[nb] and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == len(idx)

    if regions.label_polys("D0") and not complement_connected(["D0"]):
        violations.append("complement of D0 not connected")
    merged = [lab for lab in ("D0", "Ddeg", "Dsing") if regions.label_polys(lab)]
    if merged and not complement_connected(["D0", "Ddeg", "Dsing"]):
        violations.append("complement of D0+Ddeg+Dsing not connected")

    # Compact containment of the weighted regions in the interior of the
    # labeled union: sampled boundary points must stay clear of non-D area.
    d_boundary = _union_boundary_segments(mesh)
    if d_boundary is not None:
        for label in ("Ddeg", "Dsing"):
            for poly in regions.label_polys(label):
                samples = _densify_polygon(poly, 16)
                dist = pg.points_segments_distance(samples, d_boundary[0], d_boundary[1])
                if dist.min() < 1e-9:
                    violations.append(
                        f"{label} not compactly contained in the labeled union interior")
                    break

    return violations


def _union_boundary_segments(mesh):
    """Edges separating labeled triangles from background/outside."""
    emap = mesh.edge_triangle_map()
    is_d = mesh.triangle_region != BACKGROUND
    a_list, b_list = [], []
    for (i, j), tris in emap.items():
        flags = [is_d[t] for t in tris]
        if (len(tris) == 1 and flags[0]) or (len(tris) == 2 and flags[0] != flags[1]):
            a_list.append(mesh.vertices[i])
            b_list.append(mesh.vertices[j])
    if not a_list:
        return None
    return np.array(a_list), np.array(b_list)


def _densify_polygon(poly, per_edge):
    p = np.asarray(poly, dtype=float)
    out = []
    for i in range(len(p)):
        a, b = p[i], p[(i + 1) % len(p)]
        for t in np.linspace(0.0, 1.0, per_edge, endpoint=False):
            out.append(a + t * (b - a))
    return np.array(out)


# ---------------------------------------------------------------------------
# Pixel scanning family
# ---------------------------------------------------------------------------

_DIRECTIONS = ("up", "down", "left", "right")


@dataclass
class PixelFamily:
    """Scanning family on a grid over a window compactly inside the domain.

    Members are the whole window and, per cell and scan direction, the window
    minus the straight strip of cells from that cell to the window edge.  A
    strip keeps the notched remainder's complement connected (the notch
    reaches out of the window), which is what makes the excluded cell
    electrically accessible in the extreme-coefficient test maps.
    """

    domain: Domain
    grid_n: int
    roi: tuple
    members: list
    directions: tuple

    @property
    def cell_size(self):
        x0, y0, x1, y1 = self.roi
        return ((x1 - x0) / self.grid_n, (y1 - y0) / self.grid_n)

    def cell_polygon(self, i, j):
        x0, y0, _, _ = self.roi
        w, h = self.cell_size
        return pg.rectangle(x0 + i * w, y0 + j * h, x0 + (i + 1) * w, y0 + (j + 1) * h)

    def cell_centers(self):
        x0, y0, _, _ = self.roi
        w, h = self.cell_size
        i = np.arange(self.grid_n)
        cx = x0 + (i + 0.5) * w
        cy = y0 + (i + 0.5) * h
        return cx, cy

    def whole_window(self):
        return next(m for m in self.members if m.id == "all")

    def cell_members(self, i, j):
        return [m for m in self.members if m.excluded_cell == (i, j)]

    def grid_segments(self):
        """Constraint segments for mesh conformity: all grid lines."""
        x0, y0, x1, y1 = self.roi
        w, h = self.cell_size
        segs = []
        for i in range(self.grid_n + 1):
            x = x0 + i * w
            segs.append((np.array([x, y0]), np.array([x, y1])))
        for j in range(self.grid_n + 1):
            y = y0 + j * h
            segs.append((np.array([x0, y]), np.array([x1, y])))
        return segs


def default_roi(domain):
    if domain.shape == "disk":
        return (-0.65, -0.65, 0.65, 0.65)
    return (0.1, 0.1, 0.9, 0.9)


def _canonical_notch(u0, v0, u1, v1, s0, s1, t0):
    """Window [u0,u1]x[v0,v1] minus the strip [s0,s1]x[t0,v1] (notch opens
    toward +v).  Returns a list of rings in (u, v) coordinates."""
    eps = 1e-12
    if t0 <= v0 + eps:
        # Full-height strip: zero, one, or two rectangles remain.
        parts = []
        if s0 > u0 + eps:
            parts.append([(u0, v0), (s0, v0), (s0, v1), (u0, v1)])
        if s1 < u1 - eps:
            parts.append([(s1, v0), (u1, v0), (u1, v1), (s1, v1)])
        return parts
    at_left = s0 <= u0 + eps
    at_right = s1 >= u1 - eps
    if at_left and at_right:
        return [[(u0, v0), (u1, v0), (u1, t0), (u0, t0)]]
    if at_left:
        return [[(u0, v0), (u1, v0), (u1, v1), (s1, v1), (s1, t0), (u0, t0)]]
    if at_right:
        return [[(u0, v0), (u1, v0), (u1, t0), (s0, t0), (s0, v1), (u0, v1)]]
    return [[(u0, v0), (u1, v0), (u1, v1), (s1, v1), (s1, t0),
             (s0, t0), (s0, v1), (u0, v1)]]


def _notched_window(roi, grid_n, i, j, direction):
    """Window minus the strip of cells from (i, j) to the window edge.

    Returns a tuple of disjoint rectilinear polygons (two parts when an
    interior full-height/width strip splits the window).
    """
    x0, y0, x1, y1 = roi
    w = (x1 - x0) / grid_n
    h = (y1 - y0) / grid_n
    cx0, cx1 = x0 + i * w, x0 + (i + 1) * w
    cy0, cy1 = y0 + j * h, y0 + (j + 1) * h

    # Map each direction onto the canonical +v notch and back.
    if direction == "up":
        rings = _canonical_notch(x0, y0, x1, y1, cx0, cx1, cy0)
        back = lambda u, v: (u, v)
    elif direction == "down":
        rings = _canonical_notch(x0, y0, x1, y1, cx0, cx1, y0 + y1 - cy1)
        back = lambda u, v: (u, y0 + y1 - v)
    elif direction == "right":
        rings = _canonical_notch(y0, x0, y1, x1, cy0, cy1, cx0)
        back = lambda u, v: (v, u)
    elif direction == "left":
        rings = _canonical_notch(y0, x0, y1, x1, cy0, cy1, x0 + x1 - cx1)
        back = lambda u, v: (x0 + x1 - v, u)
    else:
        raise GeometryError(f"unknown scan direction {direction!r}")

    parts = []
    for ring in rings:
        poly = np.array([back(u, v) for u, v in ring], dtype=float)
        parts.append(pg.ensure_ccw(_dedup_ring(poly)))
    return tuple(parts)


def _dedup_ring(ring):
    out = []
    for p in ring:
        if not out or np.hypot(out[-1][0] - p[0], out[-1][1] - p[1]) > 1e-12:
            out.append(p)
    if len(out) > 1 and np.hypot(out[0][0] - out[-1][0], out[0][1] - out[-1][1]) <= 1e-12:
        out.pop()
    return np.array(out, dtype=float)


def pixel_family(domain, grid_n, roi=None, directions=_DIRECTIONS):
    """Build the scanning family for a grid_n x grid_n window.

    Each member is validated against the decidable admissibility clauses;
    inadmissible members are kept with ``admissible=False`` so the
    reconstruction driver can report indeterminate cells.
    """
    if grid_n < 2:
        raise GeometryError("grid_n must be at least 2")
    roi = tuple(roi) if roi is not None else default_roi(domain)
    x0, y0, x1, y1 = roi
    if not (x1 > x0 and y1 > y0):
        raise GeometryError("roi must have positive extent")

    members = []
    whole = TestInclusion(id="all", parts=(pg.rectangle(x0, y0, x1, y1),))
    reasons = validate_inclusion(domain, whole)
    whole.admissible = not reasons
    whole.reason = "; ".join(reasons)
    members.append(whole)

    for i in range(grid_n):
        for j in range(grid_n):
            for direction in directions:
                parts = _notched_window(roi, grid_n, i, j, direction)
                if not parts:
                    continue  # degenerate: strip covers the whole window
                inc = TestInclusion(
                    id=f"c{i}_{j}_{direction}", parts=parts,
                    excluded_cell=(i, j), direction=direction)
                bad = validate_inclusion(domain, inc)
                inc.admissible = not bad
                inc.reason = "; ".join(bad)
                members.append(inc)

    return PixelFamily(domain=domain, grid_n=grid_n, roi=roi,
                       members=members, directions=tuple(directions))
