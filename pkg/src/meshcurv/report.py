"""Desk-scale experiment harness.

Runs the synthetic-oracle experiments (sphere accuracy, planar
classification, wedge limits, multi-scale robustness, density mapping,
density-guided simplification, runtime scaling) and writes a CSV report
plus diagnostic matplotlib figures into an output directory.
"""

from __future__ import annotations

import csv
import math
import os
import time

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .curvature import (CASE_PLANAR, ScaleParams, build_adjacency,
                        compute_curvature_field, compute_vertex_normals,
                        fixed_radius_field, initial_scales, sample_profile,
                        smooth_scales, fit_cubic)
from .density import DensityParams, map_density
from .mesh import Mesh
from .shapes import ShapeSpec, synth_shape
from .simplify import simplify


class Report:
    def __init__(self, outdir):
        self.outdir = outdir
        self.rows = []
        os.makedirs(outdir, exist_ok=True)

    def add(self, experiment, metric, value, expected, ok):
        self.rows.append({
            "experiment": experiment,
            "metric": metric,
            "value": f"{value:.6g}" if isinstance(value, float) else str(value),
            "expected": expected,
            "status": "pass" if ok else "FAIL",
        })
        print(f"[{self.rows[-1]['status']}] {experiment}: {metric}="
              f"{self.rows[-1]['value']} (expected {expected})")

    def write(self):
        path = os.path.join(self.outdir, "report.csv")
        with open(path, "w", newline="", encoding="ascii") as fh:
            w = csv.DictWriter(fh, fieldnames=["experiment", "metric", "value",
                                               "expected", "status"])
            w.writeheader()
            w.writerows(self.rows)
        return path

    def figure_path(self, name):
        return os.path.join(self.outdir, name)


def interior_mask(mesh: Mesh, margin_factor: float,
                  params: ScaleParams) -> np.ndarray:
    """Vertices farther from the mesh boundary than their own largest
    sampling radius (times margin_factor)."""
    adj = build_adjacency(mesh)
    scales = smooth_scales(initial_scales(mesh, adj), adj, params.lam,
                           params.n_smooth)
    rmax = scales * params.f_initial * params.f_inc ** params.n_radii
    if not adj.boundary.any():
        return np.ones(mesh.n_vertices, bool)
    from scipy.spatial import cKDTree
    btree = cKDTree(mesh.vertices[adj.boundary])
    d, _ = btree.query(mesh.vertices)
    return d > margin_factor * rmax


def sphere_experiment(report: Report, subdivisions: int, workers: int):
    spec = ShapeSpec("icosphere", radius=1.0, subdivisions=subdivisions)
    mesh = synth_shape(spec)
    field = compute_curvature_field(mesh, workers=workers)
    mean_h = float(field.h.mean())
    std_h = float(field.h.std())
    report.add("sphere", "H_mean", mean_h, "1.0 +- 0.05", abs(mean_h - 1.0) <= 0.05)
    report.add("sphere", "H_std", std_h, "<= 0.05", std_h <= 0.05)

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.hist(field.h, bins=40, color="#3a7ca5")
    ax.axvline(1.0, color="k", lw=1, ls="--", label="exact 1/R")
    ax.set_xlabel("mean curvature")
    ax.set_ylabel("vertices")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(report.figure_path("sphere_hist.png"), dpi=130)
    plt.close(fig)
    return mesh, field


def plane_experiment(report: Report, n: int, workers: int):
    mesh = synth_shape(ShapeSpec("plane-grid", nx=n, ny=n, edge=1.0))
    params = ScaleParams()
    field = compute_curvature_field(mesh, params, workers=workers)
    interior = interior_mask(mesh, 1.0, params)
    planar = (field.case == CASE_PLANAR) & interior
    frac = planar.sum() / max(interior.sum(), 1)
    habs = np.abs(field.h[interior]).max() if interior.any() else math.nan
    report.add("plane", "planar_fraction", float(frac), ">= 0.95", frac >= 0.95)
    report.add("plane", "max_abs_H_interior", float(habs), "<= 0.02", habs <= 0.02)
    return mesh, field


def profile_figure(report: Report, workers: int):
    """Radius ladders for a sphere vertex, a plane vertex, and a wedge
    edge vertex (curvature and normalized curvature vs radius)."""
    cases = []
    sphere = synth_shape(ShapeSpec("icosphere", radius=1.0, subdivisions=3))
    plane = synth_shape(ShapeSpec("plane-grid", nx=24, ny=24))
    wedge = synth_shape(ShapeSpec("wedge", angle_deg=90, length_cells=40,
                                  width_cells=10))
    for name, mesh, vid in (("sphere", sphere, 40),
                            ("plane", plane, 312),
                            ("wedge edge", wedge, 20)):
        adj = build_adjacency(mesh)
        compute_vertex_normals(mesh)
        params = ScaleParams()
        scales = smooth_scales(initial_scales(mesh, adj), adj, params.lam,
                               params.n_smooth)
        profile = sample_profile(mesh, adj, vid, scales[vid], params)
        fit_cubic(profile, params.fit_tol)
        cases.append((name, profile))

    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    for name, p in cases:
        axes[0].plot(p.radii, p.h, "o-", ms=3, label=name)
        axes[1].plot(p.radii, p.h_norm, "o-", ms=3, label=name)
        dropped = ~p.retained
        if dropped.any():
            axes[1].plot(p.radii[dropped], p.h_norm[dropped], "x", ms=7,
                         color="crimson")
    axes[0].set_xlabel("radius")
    axes[0].set_ylabel("mean curvature")
    axes[1].set_xlabel("radius")
    axes[1].set_ylabel("normalized curvature")
    axes[1].axhline(4 / 3, color="gray", lw=0.8, ls=":")
    axes[1].axhline(0.0, color="gray", lw=0.8)
    axes[0].legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(report.figure_path("profiles.png"), dpi=130)
    plt.close(fig)


def wedge_experiment(report: Report):
    params = ScaleParams()
    for angle, sign, label in ((90.0, 1.0, "convex"), (270.0, -1.0, "concave")):
        mesh = synth_shape(ShapeSpec("wedge", angle_deg=angle,
                                     length_cells=60, width_cells=10))
        adj = build_adjacency(mesh)
        compute_vertex_normals(mesh)
        scales = smooth_scales(initial_scales(mesh, adj), adj, params.lam,
                               params.n_smooth)
        edge_ids = np.nonzero(mesh.scalars["edge_line"] > 0.5)[0]
        mid = edge_ids[len(edge_ids) // 2]
        profile = sample_profile(mesh, adj, int(mid), scales[mid], params)
        fit_cubic(profile, params.fit_tol)
        last = profile.h_norm[profile.retained][-1]
        ok = 1.0 <= abs(last) <= 1.45 and math.copysign(1.0, last) == sign
        report.add("wedge", f"{label}_Hnorm_limit", float(last),
                   f"{'+' if sign > 0 else '-'}4/3 within [1.0, 1.45]", ok)


def multiscale_experiment(report: Report, workers: int):
    spec = ShapeSpec("multiscale-plane", scale_ratio=10.0, edge=1.0,
                     ny=26, fine_cells=12, coarse_cells=26, noise=0.1, seed=11)
    mesh = synth_shape(spec)
    params = ScaleParams()
    field = compute_curvature_field(mesh, params, workers=workers)
    interior = interior_mask(mesh, 1.0, params)
    region = mesh.scalars["region"]
    for code, label in ((0.0, "fine"), (2.0, "coarse")):
        sel = (region == code) & interior
        if not sel.any():
            continue
        frac = ((field.case == CASE_PLANAR) & sel).sum() / sel.sum()
        report.add("multiscale", f"{label}_planar_fraction", float(frac),
                   ">= 0.95", frac >= 0.95)

    adj = build_adjacency(mesh)
    s0 = initial_scales(mesh, adj)
    fine_s0 = float(np.median(s0[region == 0.0]))
    fixed = fixed_radius_field(mesh, fine_s0, params, workers=workers)
    sel = (region == 2.0) & interior
    frac_fixed = (fixed.planar & sel).sum() / max(sel.sum(), 1)
    report.add("multiscale", "coarse_planar_fraction_fixed_radius",
               float(frac_fixed), "< 0.60 (baseline fails)", frac_fixed < 0.60)


def density_experiment(report: Report):
    rng = np.random.default_rng(5)
    h = rng.normal(0.0, 1.0, 4000)
    params = DensityParams(min_cut=0.2, max_cut=1.5, d_min=0.1, d_max=1.0)
    d = map_density(h, params)
    mid = map_density(np.array([0.2, 0.85, 1.5, 0.0, 5.0]), params)
    report.add("density", "d(min)", float(mid[0]), "d_min", mid[0] == 0.1)
    report.add("density", "d(mid)", float(mid[1]), "(d_min+d_max)/2",
               abs(mid[1] - 0.55) < 1e-9)
    report.add("density", "d(max)", float(mid[2]), "d_max",
               abs(mid[2] - 1.0) < 1e-12)
    report.add("density", "range_ok", bool((d >= 0.1).all() and (d <= 1.0).all()),
               "within [d_min, d_max]", bool((d >= 0.1).all() and (d <= 1.0).all()))

    xs = np.linspace(0.0, 2.0, 400)
    ds = map_density(xs, params)
    fig, ax = plt.subplots(figsize=(4.4, 3.0))
    ax.plot(xs, ds, color="#3a7ca5")
    ax.axvline(0.2, color="gray", lw=0.8, ls=":")
    ax.axvline(1.5, color="gray", lw=0.8, ls=":")
    ax.set_xlabel("|mean curvature|")
    ax.set_ylabel("density")
    fig.tight_layout()
    fig.savefig(report.figure_path("density_map.png"), dpi=130)
    plt.close(fig)


def simplify_experiment(report: Report, workers: int):
    spec = ShapeSpec("bumpy-plane", nx=48, ny=48, edge=1.0,
                     bump_sigma=4.0, bump_amplitude=4.0)
    mesh = synth_shape(spec)
    field = compute_curvature_field(mesh, workers=workers)
    density = map_density(field.h, DensityParams())
    target = max(4, int(math.ceil(0.04 * mesh.n_vertices)))
    ratios = {}
    for label, dens in (("guided", density), ("uniform", None)):
        res = simplify(mesh, dens, target_vertices=target)
        ratios[label] = bump_density_ratio(res.mesh, spec, mesh)
    report.add("simplify", "bump_ratio_guided", float(ratios["guided"]),
               ">= 3", ratios["guided"] >= 3.0)
    report.add("simplify", "bump_ratio_uniform", float(ratios["uniform"]),
               "<= 1.5", ratios["uniform"] <= 1.5)


def _region_surface_areas(reference: Mesh, spec: ShapeSpec):
    """True surface area of the bump disk and the flat remainder,
    measured on the unsimplified mesh (invariant denominators)."""
    w = spec.nx * spec.edge
    h = spec.ny * spec.edge
    center = np.array([0.5 * w, 0.5 * h])
    tris = reference.vertices[reference.faces]
    centroids = tris.mean(axis=1)
    areas = 0.5 * np.linalg.norm(
        np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1)
    d = np.linalg.norm(centroids[:, :2] - center, axis=1)
    margin = 0.05 * min(w, h)
    in_plane = ((centroids[:, 0] > margin) & (centroids[:, 0] < w - margin)
                & (centroids[:, 1] > margin) & (centroids[:, 1] < h - margin))
    r_in = 2.5 * spec.bump_sigma
    r_mid = 4.0 * spec.bump_sigma
    return (float(areas[d <= r_in].sum()),
            float(areas[(d >= r_mid) & in_plane].sum()))


def bump_density_ratio(mesh: Mesh, spec: ShapeSpec, reference: Mesh) -> float:
    """Vertex density per unit surface area inside the bump disk vs the
    flat remainder (transition annulus and outer margin excluded)."""
    w = spec.nx * spec.edge
    h = spec.ny * spec.edge
    center = np.array([0.5 * w, 0.5 * h])
    xy = mesh.vertices[:, :2]
    d = np.linalg.norm(xy - center, axis=1)
    r_in = 2.5 * spec.bump_sigma
    r_mid = 4.0 * spec.bump_sigma
    margin = 0.05 * min(w, h)
    inside_plane = ((xy[:, 0] > margin) & (xy[:, 0] < w - margin)
                    & (xy[:, 1] > margin) & (xy[:, 1] < h - margin))
    bump_count = int((d <= r_in).sum())
    flat_count = int(((d >= r_mid) & inside_plane).sum())
    bump_area, flat_area = _region_surface_areas(reference, spec)
    if flat_count == 0:
        return math.inf
    return (bump_count / bump_area) / (flat_count / flat_area)


def runtime_experiment(report: Report, subdivision_levels, workers: int):
    sizes = []
    times = []
    for k in subdivision_levels:
        mesh = synth_shape(ShapeSpec("icosphere", radius=1.0, subdivisions=k))
        t0 = time.perf_counter()
        compute_curvature_field(mesh, workers=workers)
        dt = time.perf_counter() - t0
        sizes.append(mesh.n_vertices)
        times.append(dt)
        report.add("runtime", f"seconds_{mesh.n_vertices}v", float(dt),
                   "(timing)", True)
    sizes = np.asarray(sizes, float)
    times = np.asarray(times, float)
    a, b = np.polyfit(sizes, times, 1)
    fit = a * sizes + b
    dev = float(np.max(np.abs(fit - times) / times))
    report.add("runtime", "max_linear_fit_deviation", dev, "<= 0.25",
               dev <= 0.25)

    fig, ax = plt.subplots(figsize=(4.4, 3.0))
    ax.plot(sizes, times, "o", color="#3a7ca5", label="measured")
    xs = np.linspace(0, sizes.max() * 1.05, 50)
    ax.plot(xs, a * xs + b, "-", color="gray", lw=1,
            label=f"fit {a * 1e3:.2f} ms/vertex")
    ax.set_xlabel("vertices")
    ax.set_ylabel("curvature time [s]")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(report.figure_path("runtime.png"), dpi=130)
    plt.close(fig)
    return dev


def run_bench(outdir, workers: int = 1, full: bool = False) -> str:
    """Run all experiments; `full` uses the acceptance-scale mesh sizes
    (substantially slower). Returns the report CSV path."""
    report = Report(outdir)
    sphere_experiment(report, 4 if full else 3, workers)
    plane_experiment(report, 50 if full else 24, workers)
    profile_figure(report, workers)
    wedge_experiment(report)
    multiscale_experiment(report, workers)
    density_experiment(report)
    simplify_experiment(report, workers)
    runtime_experiment(report, (4, 5, 6) if full else (2, 3, 4), workers)
    path = report.write()
    print(f"report written to {path}")
    return path
