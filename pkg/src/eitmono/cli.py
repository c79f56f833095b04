"""Configuration-driven entry point.

Commands: ``forward`` (write the measured ND matrix), ``reconstruct`` (scan
the pixel family and rasterize the recovered shape), ``chain`` (evaluate the
four-link bracketing report on a test window containing the phantom), and
``calibrate`` (sweep mesh size, basis size, and threshold, writing the table
used to pin defaults).

Configs are JSON with nested sections (domain / regions / coefficient /
mesh / solver / basis / scan); phantoms from the built-in catalog can be
named instead of spelling out regions.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import fem, phantoms
from .coefficient import (CoefficientField, CoefficientError, WeightSpec,
                          bracket_coefficients)
from .geometry import (GeometryError, MeshConformityError, RegionSet,
                       build_domain, pixel_family, triangulate,
                       validate_regions)
from .monotonicity import bracketing_chain
from .ndmap import NDError, NDMatrix, build_basis, nd_extreme, nd_matrix, \
    perturb_symmetric
from .oracle import disk_nd_eigenvalue
from .reconstruction import rasterize, reconstruct

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


class ConfigError(ValueError):
    pass


def _get(cfg, path, default=None, required=False):
    node = cfg
    for key in path.split("."):
        if not isinstance(node, dict) or key not in node:
            if required:
                raise ConfigError(f"missing config entry '{path}'")
            return default
        node = node[key]
    return node


def _weight_from_spec(spec):
    if isinstance(spec, dict) and spec.get("kind") == "product":
        parts = [_weight_from_spec(s) for s in spec["factors"]]
        return WeightSpec.product(*parts, clip=_clip_of(spec))
    kind = spec.get("kind")
    if kind == "constant":
        return WeightSpec.constant(spec["value"])
    if kind == "radial_power":
        return WeightSpec.radial_power(spec["center"], spec["exponent"],
                                       amplitude=spec.get("amplitude", 1.0),
                                       clip=_clip_of(spec))
    if kind == "surface_power":
        return WeightSpec.surface_power(spec["segment"], spec["exponent"],
                                        amplitude=spec.get("amplitude", 1.0),
                                        clip=_clip_of(spec))
    raise ConfigError(f"unknown weight kind {kind!r}")


def _clip_of(spec):
    clip = spec.get("clip")
    return tuple(clip) if clip is not None else None


class Problem:
    """Everything a command needs, built and validated from one config."""

    def __init__(self, cfg):
        self.cfg = cfg
        shape = _get(cfg, "domain.shape", required=True)
        arc = _get(cfg, "domain.gamma_arc", default=[0.0, 1.0])
        segments = int(_get(cfg, "domain.disk_segments", default=256))
        try:
            self.domain = build_domain(shape, arc, disk_segments=segments)
        except GeometryError as exc:
            raise ConfigError(f"domain: {exc}") from exc

        phantom = _get(cfg, "phantom")
        if phantom is not None:
            try:
                self.regions, self.coeff_spec = phantoms.build_phantom(phantom)
            except KeyError as exc:
                raise ConfigError(str(exc)) from exc
        else:
            self.regions = self._regions_from_cfg(cfg)
            self.coeff_spec = self._coeff_from_cfg(cfg)

        violations = validate_regions(self.domain, self.regions)
        if violations:
            raise ConfigError("regions invalid: " + "; ".join(violations))

        self.target_h = float(_get(cfg, "mesh.target_h", default=0.06))
        self.min_angle = float(_get(cfg, "mesh.min_angle_deg", default=0.05))
        self.quad_depth = int(_get(cfg, "solver.quad_depth", default=12))
        self.rtol = float(_get(cfg, "solver.rtol", default=1e-10))
        self.m = int(_get(cfg, "basis.m", default=8))
        if self.m < 1:
            raise ConfigError("basis.m must be >= 1")
        self.grid_n = int(_get(cfg, "scan.grid_n", default=8))
        if self.grid_n < 2:
            raise ConfigError("scan.grid_n must be >= 2")
        self.roi = _get(cfg, "scan.roi")
        self.tau = float(_get(cfg, "scan.tau", default=1e-5))
        self.tau_rel = float(_get(cfg, "scan.tau_rel", default=0.5))
        self.side = _get(cfg, "scan.side", default="both")
        if self.side not in ("both", "lower_only", "upper_only"):
            raise ConfigError("scan.side must be both|lower_only|upper_only")
        self.directions = tuple(_get(cfg, "scan.directions",
                                     default=["up", "down", "left", "right"]))
        self.gamma0 = float(self.coeff_spec.get("background", 1.0))
        if self.gamma0 <= 0:
            raise ConfigError("coefficient.background must be positive")

    def _regions_from_cfg(self, cfg):
        raw = _get(cfg, "regions", default={})
        polys = {lab: [np.asarray(p, dtype=float) for p in plist]
                 for lab, plist in raw.items()}
        spts = [tuple(p) for p in _get(cfg, "coefficient.singular_points", default=[])]
        ssegs = [np.asarray(s, float) for s in
                 _get(cfg, "coefficient.singular_segments", default=[])]
        try:
            regions = RegionSet(polys=polys, singular_points=spts,
                                singular_segments=ssegs)
        except GeometryError as exc:
            raise ConfigError(f"regions: {exc}") from exc
        return regions

    def _coeff_from_cfg(self, cfg):
        spec = {"background": float(_get(cfg, "coefficient.background", default=1.0))}
        for lab in ("DFminus", "DFplus"):
            v = _get(cfg, f"coefficient.{lab}")
            if v is not None:
                spec[lab] = float(v)
        for lab in ("Ddeg", "Dsing"):
            w = _get(cfg, f"coefficient.{lab}")
            if w is not None:
                spec[lab] = _weight_from_spec(w)
        return spec

    def declare_weight_features(self):
        for lab in ("Ddeg", "Dsing"):
            w = self.coeff_spec.get(lab)
            if w is None:
                continue
            for p in w.singular_points():
                if not any(np.allclose(p, q) for q in self.regions.singular_points):
                    self.regions.singular_points.append(tuple(p))
            for s in w.singular_segments():
                self.regions.singular_segments.append(np.asarray(s))

    def build_mesh(self, with_grid=True):
        self.declare_weight_features()
        extra = []
        self.family = None
        if with_grid:
            self.family = pixel_family(self.domain, self.grid_n, roi=self.roi,
                                       directions=self.directions)
            extra = self.family.grid_segments()
        self.mesh = triangulate(self.domain, self.regions,
                                target_h=self.target_h,
                                extra_segments=extra,
                                min_angle_deg=self.min_angle)
        return self.mesh

    def build_field(self):
        finite = {k: v for k, v in self.coeff_spec.items()
                  if k in ("DFminus", "DFplus")}
        weights = {k: v for k, v in self.coeff_spec.items()
                   if k in ("Ddeg", "Dsing")}
        self.field = CoefficientField(mesh=self.mesh, gamma0=self.gamma0,
                                      finite_values=finite, weights=weights,
                                      quad_depth=self.quad_depth)
        self.field.validate()
        return self.field

    def build_basis(self):
        self.basis = build_basis(self.domain, self.m, mesh=self.mesh)
        return self.basis


def _write_metrics(out_dir, metrics):
    with open(out_dir / "metrics.txt", "w") as fh:
        for key, val in metrics.items():
            fh.write(f"{key} {val}\n")


def _snapshot(cfg, out_dir):
    with open(out_dir / "config_snapshot.json", "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _measured_nd(problem, args):
    """L(gamma) on the problem mesh, optionally noise-perturbed."""
    nd = nd_matrix(problem.mesh, problem.field, problem.basis,
                   rtol=problem.rtol, label="gamma")
    if args.noise_rel > 0:
        nd = perturb_symmetric(nd, args.noise_rel, args.seed)
    return nd


def cmd_forward(problem, out_dir, args):
    t0 = time.perf_counter()
    # Mesh with the scan grid when one is configured, so measurement files
    # keep provenance compatible with a later reconstruction run.
    problem.build_mesh(with_grid=_get(problem.cfg, "scan") is not None)
    problem.build_field()
    problem.build_basis()
    nd = _measured_nd(problem, args)
    (out_dir / "nd_gamma.txt").write_text(nd.to_text())
    if _get(problem.cfg, "artifacts.mesh", default=False):
        (out_dir / "mesh.txt").write_text(problem.mesh.to_text())
    eigs = np.sort(nd.generalized_eigenvalues())[::-1]
    metrics = {
        "h": problem.mesh.h,
        "m": problem.m,
        "n_vertices": problem.mesh.num_vertices,
        "asymmetry": nd.asymmetry,
        "eig_max": eigs[0],
        "eig_min": eigs[-1],
        "wall_time": time.perf_counter() - t0,
    }
    if problem.domain.shape == "disk" and problem.regions.is_empty() \
            and problem.domain.gamma_fraction == 1.0:
        errs = []
        for n in range(1, problem.m // 2 + 1):
            lam = disk_nd_eigenvalue(n, 0.0, problem.gamma0, problem.gamma0)
            pair = eigs[2 * n - 2:2 * n]
            errs.append(float(np.max(np.abs(pair - lam) / lam)))
        metrics["oracle_max_rel_err"] = max(errs)
    _write_metrics(out_dir, metrics)
    return EXIT_OK


def cmd_reconstruct(problem, out_dir, args):
    t0 = time.perf_counter()
    problem.build_mesh(with_grid=True)
    problem.build_field()
    problem.build_basis()

    nd_file = _get(problem.cfg, "measurements_file")
    if nd_file:
        nd = NDMatrix.from_text(Path(nd_file).read_text())
        if nd.mesh_hash != problem.mesh.provenance():
            raise ConfigError("measurements_file provenance does not match "
                              "the mesh built from this config")
    else:
        nd = _measured_nd(problem, args)

    result = reconstruct(nd, problem.domain, problem.mesh, problem.gamma0,
                         problem.basis, problem.grid_n, tau=problem.tau,
                         side=problem.side, family=problem.family,
                         truth_regions=problem.regions,
                         max_workers=args.threads, rtol=problem.rtol,
                         tau_rel=problem.tau_rel)
    (out_dir / "nd_gamma.txt").write_text(nd.to_text())
    (out_dir / "verdicts.log").write_text(result.verdict_log())
    rasterize(result, str(out_dir / "result"))
    metrics = {
        "jaccard": result.jaccard if result.jaccard is not None else "nan",
        "tau": problem.tau,
        "tau_rel": problem.tau_rel,
        "box_lower": result.box_lower,
        "box_upper": result.box_upper,
        "grid_n": problem.grid_n,
        "m": problem.m,
        "h": problem.mesh.h,
        "side": problem.side,
        "inside_cells": result.inside_count(),
        "indeterminate_cells": len(result.indeterminate),
        "filled_cells": result.filled_cells,
        "wall_time": time.perf_counter() - t0,
    }
    _write_metrics(out_dir, metrics)
    return EXIT_OK


def cmd_chain(problem, out_dir, args):
    t0 = time.perf_counter()
    problem.build_mesh(with_grid=True)
    problem.build_field()
    problem.build_basis()
    nd = _measured_nd(problem, args)

    low, up = bracket_coefficients(problem.field)
    if low is problem.field:
        nd_low = nd_up = nd
    else:
        nd_low = nd_matrix(problem.mesh, low, problem.basis,
                           rtol=problem.rtol, label="gamma_low")
        nd_up = nd_matrix(problem.mesh, up, problem.basis,
                          rtol=problem.rtol, label="gamma_up")

    window = problem.family.whole_window()
    nd0 = nd_extreme(problem.mesh, window, "insulating", problem.gamma0,
                     problem.basis, rtol=problem.rtol)
    ndinf = nd_extreme(problem.mesh, window, "conducting", problem.gamma0,
                       problem.basis, rtol=problem.rtol)
    report = bracketing_chain(nd, nd_low, nd_up, nd0, ndinf, tau=problem.tau)

    (out_dir / "chain.txt").write_text("\n".join(report.log_lines()) + "\n")
    metrics = {
        "all_pass": int(report.all_pass),
        "tau": problem.tau,
        "scale": report.scale,
        "wall_time": time.perf_counter() - t0,
    }
    for name, lam in zip(("link1", "link2", "link3", "link4"),
                         report.lambda_mins):
        metrics[name] = lam
    _write_metrics(out_dir, metrics)
    return EXIT_OK


def cmd_calibrate(problem, out_dir, args):
    """Sweep (h, m, tau): record the forward eigenvalue error against the
    disk reference and the inside/outside pixel-score margins on the
    insulating-disk phantom; the table shows which tau separate them."""
    import itertools

    from .reconstruction import _Scanner, _box_cells

    t0 = time.perf_counter()
    h_list = _get(problem.cfg, "calibrate.h", default=[0.1, 0.08])
    m_list = _get(problem.cfg, "calibrate.m", default=[8, 16])
    tau_list = _get(problem.cfg, "calibrate.tau", default=[1e-4, 1e-5, 1e-6])

    rows = ["h m tau oracle_err worst_in best_out tau_ok"]
    for h, m in itertools.product(h_list, m_list):
        dom = problem.domain
        fam = pixel_family(dom, problem.grid_n, roi=problem.roi)
        regions, spec = phantoms.build_phantom("insulating_disk")
        mesh = triangulate(dom, regions, target_h=h,
                           extra_segments=fam.grid_segments())
        fld = CoefficientField(mesh=mesh, gamma0=1.0).validate()
        basis = build_basis(dom, m, mesh=mesh)
        bg_field = CoefficientField(mesh=mesh.relabeled({"D0": "bg"}), gamma0=1.0)
        nd_bg = nd_matrix(mesh, bg_field, basis, label="bg")
        eigs = np.sort(nd_bg.generalized_eigenvalues())[::-1]
        oracle_err = 0.0
        for n in range(1, m // 2 + 1):
            lam = disk_nd_eigenvalue(n, 0.0, 1.0)
            pair = eigs[2 * n - 2:2 * n]
            oracle_err = max(oracle_err, float(np.max(np.abs(pair - lam) / lam)))

        nd_g = nd_matrix(mesh, fld, basis, label="gamma")
        scanner = _Scanner(nd_g, mesh, fam, 1.0, basis, problem.rtol)
        box = scanner.min_box("lower", min(tau_list))
        cx, cy = fam.cell_centers()
        worst_in, best_out = 0.0, -np.inf
        for (i, j) in sorted(_box_cells(box)):
            score = scanner.pixel_score((i, j), "lower", set())
            if np.hypot(cx[i], cy[j]) <= 0.3:
                worst_in = min(worst_in, score)
            else:
                best_out = max(best_out, score)
        for tau in tau_list:
            ok = worst_in >= -tau >= best_out if np.isfinite(best_out) \
                else worst_in >= -tau
            rows.append(f"{h} {m} {tau} {oracle_err:.3e} {worst_in:.3e} "
                        f"{best_out:.3e} {int(ok)}")
    (out_dir / "calibration.txt").write_text("\n".join(rows) + "\n")
    _write_metrics(out_dir, {"rows": len(rows) - 1,
                             "wall_time": time.perf_counter() - t0})
    return EXIT_OK


COMMANDS = {
    "forward": cmd_forward,
    "reconstruct": cmd_reconstruct,
    "chain": cmd_chain,
    "calibrate": cmd_calibrate,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="eitmono",
        description="Forward ND maps and monotonicity-scan reconstruction "
                    "for extreme and weighted conductivities.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--noise-rel", type=float, default=0.0)
    args = parser.parse_args(argv)

    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    try:
        problem = Problem(cfg)
    except (ConfigError, CoefficientError, GeometryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    _snapshot(cfg, out_dir)
    try:
        return COMMANDS[args.command](problem, out_dir, args)
    except (ConfigError, CoefficientError, GeometryError,
            MeshConformityError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (fem.SolverError, fem.ConfigurationError, NDError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
