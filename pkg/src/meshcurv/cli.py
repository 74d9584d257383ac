"""Command-line interface.

Subcommands: synth, curvature, density, simplify, colorize, bench.
All options are long-form flags; any flag can also come from a plain
key=value config file (flags win). Exit codes: 0 ok, 1 usage error,
2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import __version__
from .colormap import DIVERGING, RAMP, colorize
from .curvature import (ScaleParams, compute_curvature_field,
                        fixed_radius_field)
from .density import (DensityParams, map_density, smooth_field,
                      write_density_csv)
from .mesh import Mesh, MeshError, build_adjacency, check_orientation
from .meshio import FORMATS, MeshIOError, load_mesh, save_mesh
from .patch import extract_patch
from .shapes import KINDS, ShapeSpec, synth_shape
from .simplify import simplify

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_scale_params(p: _Parser):
    g = p.add_argument_group("curvature parameters")
    g.add_argument("--lam", type=float, default=0.5,
                   help="scale smoothing factor in (0, 1]")
    g.add_argument("--n-smooth", type=int, default=3,
                   help="scale smoothing iterations")
    g.add_argument("--f-initial", type=float, default=1.0,
                   help="starting radius multiplier (>= 1 smooths more)")
    g.add_argument("--f-inc", type=float, default=1.3,
                   help="radius growth factor")
    g.add_argument("--n-radii", type=int, default=8,
                   help="radius ladder exponent count (samples = n+1)")
    g.add_argument("--t-p", type=float, default=0.2,
                   help="planar threshold on normalized curvature")
    g.add_argument("--f-es", type=float, default=0.5,
                   help="edge smoothing factor in [0, 1]")
    g.add_argument("--fit-tol", type=float, default=0.02,
                   help="relative cubic fit error bound")
    g.add_argument("--border-depth", type=int, default=6,
                   help="sphere border subdivision depth")
    g.add_argument("--planar-signed", action="store_true",
                   help="planar test on the signed average of H_norm")
    g.add_argument("--literal-behind-test", action="store_true",
                   help="normal-dot-normal behind rule (comparison only)")


def _scale_params(args) -> ScaleParams:
    return ScaleParams(
        lam=args.lam, n_smooth=args.n_smooth, f_initial=args.f_initial,
        f_inc=args.f_inc, n_radii=args.n_radii, t_p=args.t_p, f_es=args.f_es,
        fit_tol=args.fit_tol, border_depth=args.border_depth,
        planar_signed=args.planar_signed,
        literal_behind_test=args.literal_behind_test)


def build_parser() -> _Parser:
    parser = _Parser(prog="meshcurv",
                     description="Adaptive multi-scale mean-curvature fields "
                                 "and density-guided simplification.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE",
                        help="key=value file supplying flag defaults")

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic oracle shape")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--subdivisions", type=int, default=3)
    p.add_argument("--nx", type=int, default=10)
    p.add_argument("--ny", type=int, default=10)
    p.add_argument("--edge", type=float, default=1.0)
    p.add_argument("--height", type=float, default=2.0)
    p.add_argument("--n-around", type=int, default=32)
    p.add_argument("--n-along", type=int, default=8)
    p.add_argument("--no-caps", action="store_true")
    p.add_argument("--angle-deg", type=float, default=90.0)
    p.add_argument("--length-cells", type=int, default=60)
    p.add_argument("--width-cells", type=int, default=10)
    p.add_argument("--scale-ratio", type=float, default=10.0)
    p.add_argument("--fine-cells", type=int, default=20)
    p.add_argument("--coarse-cells", type=int, default=12)
    p.add_argument("--bump-sigma", type=float, default=4.0)
    p.add_argument("--bump-amplitude", type=float, default=8.0)
    p.add_argument("--n-bumps", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("curvature", parents=[common],
                       help="compute the adaptive curvature field")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes (output independent of the count)")
    p.add_argument("--fixed-radius", type=float,
                   help="single-scale baseline at this radius instead of "
                        "adaptive selection")
    p.add_argument("--dump-profiles", metavar="CSV",
                   help="write per-vertex radius ladders")
    p.add_argument("--check-orientation", action="store_true",
                   help="report inconsistently wound edges before computing")
    p.add_argument("--dump-patch", nargs=3, metavar=("VERTEX", "RADIUS", "PLY"),
                   help="write one surface patch for inspection")
    _add_scale_params(p)

    p = sub.add_parser("density", parents=[common],
                       help="remap a curvature field to a density field")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--field", default="curvature",
                   help="scalar field holding the curvature")
    p.add_argument("--min-cut", default="p20",
                   help="lower cutoff (number or pNN percentile)")
    p.add_argument("--max-cut", default="p95")
    p.add_argument("--d-min", type=float, default=0.1)
    p.add_argument("--d-max", type=float, default=1.0)
    p.add_argument("--smooth-iters", type=int, default=0)
    p.add_argument("--smooth-lambda", type=float, default=0.5)
    p.add_argument("--csv", help="also write vertex_index,density rows")

    p = sub.add_parser("simplify", parents=[common],
                       help="density-guided decimation to a vertex budget")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--format", choices=FORMATS)
    tgt = p.add_mutually_exclusive_group(required=True)
    tgt.add_argument("--target-vertices", type=int)
    tgt.add_argument("--target-fraction", type=float)
    p.add_argument("--density-field", default="density",
                   help="scalar field with vertex importance")
    p.add_argument("--uniform-density", action="store_true",
                   help="ignore the density field")
    p.add_argument("--no-preserve-boundary", action="store_true")

    p = sub.add_parser("colorize", parents=[common],
                       help="bake a scalar field into vertex colors")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--field", required=True)
    p.add_argument("--colormap", choices=(RAMP, DIVERGING), default=RAMP)
    p.add_argument("--clamp", nargs=2, type=float, default=(1.0, 99.0),
                   metavar=("LO", "HI"), help="percentile clamp")
    p.add_argument("--log", action="store_true", help="log-scale mapping")

    p = sub.add_parser("bench", parents=[common],
                       help="run the oracle experiments; writes report.csv "
                            "and figures")
    p.add_argument("--output", "-o", required=True, metavar="DIR")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--full", action="store_true",
                   help="acceptance-scale mesh sizes (slow)")
    return parser


def _apply_config(parser: _Parser, argv):
    """Pre-read --config for the chosen subcommand and install its
    key=value pairs as defaults (explicit flags still win)."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        parser.error("--config needs a file argument")
    path = argv[i + 1]
    try:
        with open(path, encoding="utf-8") as fh:
            pairs = {}
            for lineno, raw in enumerate(fh, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    parser.error(f"{path}:{lineno}: expected key=value")
                key, value = line.split("=", 1)
                pairs[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise MeshIOError(path, f"cannot read config: {exc.strerror}")

    sub_actions = next(a for a in parser._actions
                       if isinstance(a, argparse._SubParsersAction))
    command = next((a for a in argv if not a.startswith("-")), None)
    if command not in sub_actions.choices:
        return argv
    sub = sub_actions.choices[command]
    valid = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in pairs.items():
        if key not in valid:
            parser.error(f"unknown config key {key!r}")
        action = valid[key]
        if isinstance(action, (argparse._StoreTrueAction,)):
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        elif action.nargs not in (None, 1):
            defaults[key] = [action.type(v) if action.type else v
                             for v in value.split()]
        elif action.type is not None:
            defaults[key] = action.type(value)
        else:
            defaults[key] = value
    sub.set_defaults(**defaults)
    return argv


def _cmd_synth(args) -> int:
    spec = ShapeSpec(
        kind=args.kind, radius=args.radius, subdivisions=args.subdivisions,
        nx=args.nx, ny=args.ny, edge=args.edge, height=args.height,
        n_around=args.n_around, n_along=args.n_along, caps=not args.no_caps,
        angle_deg=args.angle_deg, length_cells=args.length_cells,
        width_cells=args.width_cells, scale_ratio=args.scale_ratio,
        fine_cells=args.fine_cells, coarse_cells=args.coarse_cells,
        bump_sigma=args.bump_sigma, bump_amplitude=args.bump_amplitude,
        n_bumps=args.n_bumps, noise=args.noise, seed=args.seed)
    mesh = synth_shape(spec)
    save_mesh(mesh, args.output, args.format, fields=tuple(mesh.scalars))
    print(f"{args.output}: {mesh.n_vertices} vertices, {mesh.n_faces} faces")
    return EXIT_OK


def _cmd_curvature(args) -> int:
    mesh = load_mesh(args.input, args.format)
    params = _scale_params(args)
    if args.check_orientation:
        bad = check_orientation(mesh)
        if len(bad):
            print(f"orientation: {len(bad)} inconsistent edges, e.g. "
                  f"{bad[:5].tolist()}", file=sys.stderr)
        else:
            print("orientation: consistent", file=sys.stderr)
    if args.dump_patch:
        vid = int(args.dump_patch[0])
        radius = float(args.dump_patch[1])
        adj = build_adjacency(mesh)
        from .curvature import compute_vertex_normals
        compute_vertex_normals(mesh)
        patch = extract_patch(mesh, adj, vid, radius)
        save_mesh(Mesh(patch.vertices, patch.faces), args.dump_patch[2])
        print(f"patch at vertex {vid}, r={radius}: {patch.n_faces} faces "
              f"-> {args.dump_patch[2]}")

    if args.fixed_radius is not None:
        fixed = fixed_radius_field(mesh, args.fixed_radius, params,
                                   workers=args.threads)
        mesh.scalars["curvature"] = fixed.h
        mesh.scalars["radius"] = np.full(mesh.n_vertices, fixed.radius)
        mesh.scalars["case"] = np.where(fixed.planar, 0.0, 4.0)
    else:
        field = compute_curvature_field(
            mesh, params, workers=args.threads,
            collect_profiles=args.dump_profiles is not None)
        mesh.scalars["curvature"] = field.h
        mesh.scalars["radius"] = field.radius
        mesh.scalars["case"] = field.case.astype(np.float64)
        if args.dump_profiles:
            write_profiles_csv(args.dump_profiles, field.profiles)
    save_mesh(mesh, args.output, args.format, fields=tuple(mesh.scalars))
    print(f"{args.output}: curvature field over {mesh.n_vertices} vertices")
    return EXIT_OK


def write_profiles_csv(path, profiles) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("vertex,i,r,h,h_norm,retained\n")
        for p in profiles:
            for i in range(len(p.radii)):
                fh.write("%d,%d,%.9g,%.9g,%.9g,%d\n" % (
                    p.vertex, i, p.radii[i], p.h[i], p.h_norm[i],
                    int(p.retained[i])))


def _cmd_density(args) -> int:
    mesh = load_mesh(args.input, args.format)
    if args.field not in mesh.scalars:
        raise MeshError(f"input has no scalar field {args.field!r}")

    def cut(text):
        return text if str(text).startswith("p") else float(text)

    params = DensityParams(min_cut=cut(args.min_cut), max_cut=cut(args.max_cut),
                           d_min=args.d_min, d_max=args.d_max,
                           smooth_iters=args.smooth_iters,
                           smooth_lam=args.smooth_lambda)
    density = map_density(mesh.scalars[args.field], params)
    if params.smooth_iters > 0:
        adj = build_adjacency(mesh)
        density = smooth_field(density, adj, params.smooth_iters,
                               params.smooth_lam)
    mesh.scalars["density"] = density
    save_mesh(mesh, args.output, args.format, fields=tuple(mesh.scalars))
    if args.csv:
        write_density_csv(args.csv, density)
    print(f"{args.output}: density in [{density.min():.3g}, {density.max():.3g}]")
    return EXIT_OK


def _cmd_simplify(args) -> int:
    mesh = load_mesh(args.input, args.format)
    if args.target_fraction is not None:
        if not 0.0 < args.target_fraction <= 1.0:
            raise ValueError("target fraction must be in (0, 1]")
        target = int(math.ceil(args.target_fraction * mesh.n_vertices))
    else:
        target = args.target_vertices
    density = None
    if not args.uniform_density:
        if args.density_field not in mesh.scalars:
            raise MeshError(f"input has no scalar field {args.density_field!r};"
                            " run the density command first or pass"
                            " --uniform-density")
        density = mesh.scalars[args.density_field]
    result = simplify(mesh, density, target_vertices=target,
                      preserve_boundary=not args.no_preserve_boundary)
    save_mesh(result.mesh, args.output, args.format,
              fields=tuple(result.mesh.scalars))
    note = " (stopped early: no valid collapse left)" if result.early_stop else ""
    print(f"{args.output}: {result.mesh.n_vertices} vertices after "
          f"{result.collapses} collapses{note}")
    return EXIT_OK


def _cmd_colorize(args) -> int:
    mesh = load_mesh(args.input, args.format)
    if args.field not in mesh.scalars:
        raise MeshError(f"input has no scalar field {args.field!r}")
    colorize(mesh, mesh.scalars[args.field], args.colormap,
             tuple(args.clamp), args.log)
    save_mesh(mesh, args.output, args.format, fields=tuple(mesh.scalars))
    print(f"{args.output}: colored by {args.field!r}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    from .report import run_bench
    run_bench(args.output, workers=args.threads, full=args.full)
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "curvature": _cmd_curvature,
    "density": _cmd_density,
    "simplify": _cmd_simplify,
    "colorize": _cmd_colorize,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except MeshIOError as exc:
        print(f"meshcurv: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MeshError as exc:
        print(f"meshcurv: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"meshcurv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"meshcurv: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
