"""Outer-shape recovery from the measured ND matrix.

The driver realizes the inclusion-detection scan in three exact-monotone
stages, each built from operator-inequality tests the solver evaluates to
solver precision on a shared mesh:

1. Sign-localized bounding boxes.  Painting a candidate cell set E
   insulating gives a coefficient below the measured one exactly when E
   covers every below-background part of the perturbation, regardless of
   any above-background parts (and symmetrically with conducting paint).
   Shrinking a box while that cover test passes is monotone in the Loewner
   order, so the minimal passing boxes localize each sign of the
   perturbation without interference from the other.

2. Neutralized pixel tests inside each box.  A cell B is probed with the
   field that paints B insulating and the opposite box conducting; the
   opposite-sign support is then dominated exactly and the comparison with
   the data isolates B's own contribution.

3. Visibility-normalized verdicts.  A cell's score is compared against the
   score a fully-foreign cell would produce at the same location (its
   visibility, measured against the background map), so one relative
   threshold approximates the same covered-area rule at every depth.

Cells outside every admissible scan position stay inside (indeterminate,
reported); enclosed pockets of outside cells are filled afterwards so the
result keeps outer-shape semantics.
"""

import concurrent.futures as cf
import time
from dataclasses import dataclass

import numpy as np

from . import polygons as pg
from .fem import ConfigurationError
from .geometry import TestInclusion, pixel_family, validate_inclusion
from .monotonicity import MonotonicityVerdict, psd_test
from .ndmap import nd_matrix, painted_field

DEFAULT_TAU_ABS = 1e-5
DEFAULT_TAU_REL = 0.5
VISIBILITY_FLOOR = 1e-9


@dataclass
class ReconstructionResult:
    grid_n: int
    roi: tuple
    inside: np.ndarray            # (grid_n, grid_n) bool, indexed [ix, iy]
    indeterminate: list
    verdicts: list
    box_lower: tuple = None
    box_upper: tuple = None
    jaccard: float = None
    filled_cells: int = 0
    wall_time: float = 0.0
    tau: float = 0.0
    tau_rel: float = 0.0
    side: str = "both"

    def inside_count(self):
        return int(np.sum(self.inside))

    def csv_text(self):
        lines = []
        for iy in range(self.grid_n):
            lines.append(",".join(str(int(self.inside[ix, iy]))
                                  for ix in range(self.grid_n)))
        return "\n".join(lines) + "\n"

    def verdict_log(self):
        return "\n".join(v.log_line() for v in self.verdicts) + "\n"


def fill_enclosed(outside):
    """Flood-fill outside cells from the window border; enclosed pockets
    flip to inside.  Returns (inside_after_fill, n_filled)."""
    n = outside.shape[0]
    reach = np.zeros_like(outside)
    stack = []
    for i in range(n):
        for j in (0, n - 1):
            for a, b in ((i, j), (j, i)):
                if outside[a, b] and not reach[a, b]:
                    reach[a, b] = True
                    stack.append((a, b))
    while stack:
        i, j = stack.pop()
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a, b = i + di, j + dj
            if 0 <= a < n and 0 <= b < n and outside[a, b] and not reach[a, b]:
                reach[a, b] = True
                stack.append((a, b))
    pockets = outside & ~reach
    return ~(outside & reach), int(np.sum(pockets))


def rasterize_truth(regions, fam):
    """Outer-shape raster of the true regions: cell centers inside any
    labeled polygon, holes filled."""
    n = fam.grid_n
    cx, cy = fam.cell_centers()
    centers = np.array([[cx[i], cy[j]] for i in range(n) for j in range(n)])
    inside = np.zeros(len(centers), dtype=bool)
    for _, poly in regions.all_polys():
        inside |= pg.points_in_polygon(centers, poly, boundary=True)
    grid = inside.reshape(n, n)
    filled, _ = fill_enclosed(~grid)
    return filled


def jaccard_index(a, b):
    inter = np.sum(a & b)
    union = np.sum(a | b)
    return float(inter) / float(union) if union else 1.0


def _cells_inclusion(fam, cells, name):
    return TestInclusion(id=name, parts=tuple(
        fam.cell_polygon(i, j) for (i, j) in sorted(cells)))


def _box_cells(box):
    if box is None:
        return set()
    x0, x1, y0, y1 = box
    return {(i, j) for i in range(x0, x1 + 1) for j in range(y0, y1 + 1)}


class _Scanner:
    """Shared state for one reconstruction run."""

    def __init__(self, nd_gamma, mesh, fam, gamma0, basis, rtol):
        self.nd = nd_gamma
        self.mesh = mesh
        self.fam = fam
        self.gamma0 = gamma0
        self.basis = basis
        self.rtol = rtol
        self.scale = nd_gamma.gnorm()
        self._nd_cache = {}

    def nd_painted(self, zero_cells, inf_cells):
        key = (frozenset(zero_cells), frozenset(inf_cells))
        if key not in self._nd_cache:
            paint = []
            if zero_cells:
                paint.append((_cells_inclusion(self.fam, zero_cells, "z"), "D0"))
            if inf_cells:
                paint.append((_cells_inclusion(self.fam, inf_cells, "e"), "Dinf"))
            fld = painted_field(self.mesh, paint, self.gamma0)
            self._nd_cache[key] = nd_matrix(self.mesh, fld, self.basis,
                                            rtol=self.rtol)
        return self._nd_cache[key]

    def cover_margin(self, cells, sign):
        """Normalized lambda_min of the sign-targeted cover test."""
        if sign == "lower":
            ndp = self.nd_painted(cells, set())
            lam, _ = psd_test(ndp, self.nd, tau=1.0)
        else:
            ndp = self.nd_painted(set(), cells)
            lam, _ = psd_test(self.nd, ndp, tau=1.0)
        return lam / self.scale

    def min_box(self, sign, tau_abs):
        """Minimal passing bounding box for one sign (None when the empty
        cover already passes, meaning no visible support of that sign)."""
        if self.cover_margin(set(), sign) >= -tau_abs:
            return None
        n = self.fam.grid_n
        box = [0, n - 1, 0, n - 1]
        if self.cover_margin(_box_cells(tuple(box)), sign) < -tau_abs:
            # Perturbation not coverable inside the window: keep the full
            # window; the pixel phase will still grade the cells.
            return tuple(box)
        moved = True
        while moved:
            moved = False
            for side in range(4):
                trial = box.copy()
                if side == 0:
                    trial[0] += 1
                elif side == 1:
                    trial[1] -= 1
                elif side == 2:
                    trial[2] += 1
                else:
                    trial[3] -= 1
                if trial[0] > trial[1] or trial[2] > trial[3]:
                    continue
                if self.cover_margin(_box_cells(tuple(trial)), sign) >= -tau_abs:
                    box = trial
                    moved = True
        return tuple(box)

    def pixel_score(self, cell, sign, neutralizer):
        """Exact-order pixel score with the opposite-sign support dominated
        by the neutralizer cells."""
        other = neutralizer - {cell}
        if sign == "lower":
            ndp = self.nd_painted({cell}, other)
            lam, _ = psd_test(self.nd, ndp, tau=1.0)
        else:
            ndp = self.nd_painted(other, {cell})
            lam, _ = psd_test(ndp, self.nd, tau=1.0)
        return lam / self.scale

    def visibility(self, cell, sign, nd_bg):
        """Magnitude of a full foreign cell's effect at this location,
        measured against the background map."""
        if sign == "lower":
            ndp = self.nd_painted({cell}, set())
            lam, _ = psd_test(nd_bg, ndp, tau=1.0)
        else:
            ndp = self.nd_painted(set(), {cell})
            lam, _ = psd_test(ndp, nd_bg, tau=1.0)
        return abs(lam) / self.scale


def reconstruct(nd_gamma, domain, mesh, gamma0, basis, grid_n,
                tau=DEFAULT_TAU_ABS, side="both", roi=None, family=None,
                truth_regions=None, max_workers=1, rtol=1e-10,
                tau_rel=DEFAULT_TAU_REL):
    """Mark each scan cell inside or outside the recovered outer shape.

    ``tau`` gates the absolute cover tests (relative to the data map's Gram
    norm); ``tau_rel`` is the per-cell fraction of that cell's own
    visibility below which its score still counts as inside.  ``side``
    restricts the scan to one sign of perturbation.
    """
    if side not in ("both", "lower_only", "upper_only"):
        raise ValueError(f"unknown side {side!r}")
    t_start = time.perf_counter()
    fam = family if family is not None else pixel_family(domain, grid_n, roi=roi)
    if fam.grid_n != grid_n:
        raise ValueError("family grid does not match grid_n")

    scanner = _Scanner(nd_gamma, mesh, fam, gamma0, basis, rtol)
    nd_bg = scanner.nd_painted(set(), set())

    # Indeterminate cells: no admissible pixel position (e.g. the cell is
    # not compactly inside the domain).  Conservatively inside.
    indeterminate = []
    scannable = {}
    for i in range(grid_n):
        for j in range(grid_n):
            cell = _cells_inclusion(fam, {(i, j)}, f"cell{i}_{j}")
            bad = validate_inclusion(domain, cell)
            if bad:
                indeterminate.append((i, j))
            else:
                scannable[(i, j)] = cell

    box_lower = box_upper = None
    if side in ("both", "lower_only"):
        box_lower = scanner.min_box("lower", tau)
    if side in ("both", "upper_only"):
        box_upper = scanner.min_box("upper", tau)
    lower_cells = _box_cells(box_lower) & set(scannable)
    upper_cells = _box_cells(box_upper) & set(scannable)

    verdicts = []
    inside = np.zeros((grid_n, grid_n), dtype=bool)
    for (i, j) in indeterminate:
        inside[i, j] = True

    def judge(cell, sign, neutralizer):
        score = scanner.pixel_score(cell, sign, neutralizer)
        vis = scanner.visibility(cell, sign, nd_bg)
        if vis < VISIBILITY_FLOOR:
            return score, vis, True       # unresolvable depth: keep inside
        return score, vis, score >= -tau_rel * vis

    def run_cell(args):
        (i, j), sign = args
        neutralizer = upper_cells if sign == "lower" else lower_cells
        try:
            score, vis, verdict = judge((i, j), sign, neutralizer)
        except ConfigurationError:
            return (i, j), sign, np.nan, np.nan, True
        return (i, j), sign, score, vis, verdict

    jobs = [((i, j), "lower") for (i, j) in sorted(lower_cells)]
    jobs += [((i, j), "upper") for (i, j) in sorted(upper_cells)]
    if max_workers > 1:
        with cf.ThreadPoolExecutor(max_workers=max_workers) as ex:
            outcomes = list(ex.map(run_cell, jobs))
    else:
        outcomes = [run_cell(job) for job in jobs]

    per_cell = {}
    for (i, j), sign, score, vis, verdict in outcomes:
        rec = per_cell.setdefault((i, j), {})
        rec[sign] = (score, vis, verdict)
        if verdict:
            inside[i, j] = True

    for (i, j), rec in sorted(per_cell.items()):
        lo = rec.get("lower", (np.nan, np.nan, False))
        hi = rec.get("upper", (np.nan, np.nan, False))
        verdicts.append(MonotonicityVerdict(
            test_id=f"cell{i}_{j}",
            lambda_min_insulating=float(lo[0]),
            lambda_min_conducting=float(hi[0]),
            pass_insulating=bool(lo[2]),
            pass_conducting=bool(hi[2]),
            side=side))

    inside, n_filled = fill_enclosed(~inside)

    jac = None
    if truth_regions is not None:
        truth = rasterize_truth(truth_regions, fam)
        jac = jaccard_index(inside, truth)

    return ReconstructionResult(
        grid_n=grid_n, roi=fam.roi, inside=inside,
        indeterminate=indeterminate, verdicts=verdicts,
        box_lower=box_lower, box_upper=box_upper, jaccard=jac,
        filled_cells=n_filled, wall_time=time.perf_counter() - t_start,
        tau=tau, tau_rel=tau_rel, side=side)


def rasterize(result, out_prefix):
    """Write the cell grid as CSV (1 = inside) and as a binary graymap.

    Returns the two paths; the raster is grid_n x grid_n with inside cells
    white, row iy = 0 first.
    """
    csv_path = f"{out_prefix}.csv"
    pgm_path = f"{out_prefix}.pgm"
    with open(csv_path, "w") as fh:
        fh.write(result.csv_text())
    n = result.grid_n
    with open(pgm_path, "wb") as fh:
        fh.write(f"P5\n{n} {n}\n255\n".encode())
        img = np.where(result.inside.T, 255, 0).astype(np.uint8)
        fh.write(img.tobytes())
    return csv_path, pgm_path
