"""Command-line surface: generate, insert-cie, run, sweep, post.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import outputs
from .config import ConfigError, RunConfig, read_config_file
from .materials import MaterialError
from .mesh import (
    ALL_FACETS,
    INTERFACE_BOUNDARY_ONLY,
    MeshError,
    insert_cohesive_elements,
    read_mesh_file,
    write_mesh_file,
)
from .microstructure import (
    FIXED_LAYOUTS,
    MicrostructureSpec,
    PackingError,
    fixed_layouts,
    place_inclusions,
    write_geometry_file,
)
from .solver import EXPLICIT_DYNAMIC, ExplicitSolver, SolverError, StaggeredSolver

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _cmd_generate(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.layout == "random":
        spec = place_inclusions(
            MicrostructureSpec(
                shape=args.shape,
                volume_fraction=args.fraction,
                seed=args.seed,
                edge_length=args.edge,
            )
        )
    elif args.layout == "benchmark":
        from .config import benchmark_geometry

        spec = benchmark_geometry(args.edge)
    else:
        base = fixed_layouts(args.layout)
        from .mesh import GeometrySpec

        spec = GeometrySpec(base.width, base.height, args.edge, base.inclusions)
    write_geometry_file(spec, outdir / "model.geom")
    from .mesh import generate_structured_mesh, tag_phases

    mesh = tag_phases(generate_structured_mesh(spec, args.kind), spec)
    write_mesh_file(mesh, outdir / "model.mesh")
    sets = mesh.element_sets()
    print(f"wrote {outdir / 'model.geom'} and {outdir / 'model.mesh'}")
    print(f"nodes: {mesh.n_nodes}  elements: {mesh.n_elements}")
    for name, ids in sorted(sets.items()):
        print(f"  {name}: {len(ids)}")
    return EXIT_OK


def _cmd_insert_cie(args) -> int:
    mesh = read_mesh_file(args.mesh)
    mode = ALL_FACETS if args.mode == "all" else INTERFACE_BOUNDARY_ONLY
    out = insert_cohesive_elements(mesh, mode)
    write_mesh_file(out, args.out)
    n_cie = len(out.cie_ids)
    print(f"wrote {args.out}: {out.n_nodes} nodes, {len(out.bulk_ids)} bulk + {n_cie} cohesive elements")
    return EXIT_OK


def run_config(cfg: RunConfig, outdir: Path):
    """Execute one configuration, writing curve, snapshots and summary."""
    outdir.mkdir(parents=True, exist_ok=True)
    mesh = cfg.build_mesh()
    table = cfg.material_table()
    t0 = time.perf_counter()
    if cfg.solver.mode == EXPLICIT_DYNAMIC:
        solver = ExplicitSolver(mesh, table, cfg.solver)
    else:
        solver = StaggeredSolver(
            mesh, table, cfg.fracture_model(), cfg.solver,
            phase_property_map=cfg.phase_property_map(),
        )
    result = solver.run()
    wall = time.perf_counter() - t0
    outputs.write_curve_csv(result, outdir / "curve.csv")
    for snap in result.snapshots:
        outputs.write_vtk_snapshot(mesh, snap, outdir / f"snapshot_{snap.step:06d}.vtk")
    outputs.write_run_summary(result, wall, outdir / "run_summary.txt")
    if result.aborted:
        (outdir / "FAILED").write_text(result.abort_reason + "\n")
    return result


def _cmd_run(args) -> int:
    cfg = read_config_file(args.config)
    outdir = Path(args.out or cfg.output_dir)
    result = run_config(cfg, outdir)
    if result.aborted:
        print(f"solver aborted: {result.abort_reason}", file=sys.stderr)
        return EXIT_SOLVER
    print(
        f"{cfg.model} run complete: {len(result.records)} steps, "
        f"{result.total_iterations} iterations, peak reaction {result.peak_reaction:.4g} N"
    )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = read_config_file(args.config)
    values = [v for v in args.values.split(",") if v]
    if not values:
        raise ConfigError("empty sweep value list")
    outdir = Path(args.out or cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = ["parameter,value,peak_reaction_N,dissipated_Nmm,total_iterations,status"]
    failures = 0
    for value in values:
        run_cfg = read_config_file(args.config)
        if args.parameter == "lc":
            run_cfg.solver.lc = float(value)
        elif args.parameter == "mesh_size":
            run_cfg.edge_length = float(value)
        elif args.parameter == "interface_preset":
            run_cfg.material_overrides.setdefault("interface", {})["preset"] = value
        else:
            raise ConfigError(f"unknown sweep parameter {args.parameter!r}")
        subdir = outdir / f"{args.parameter}_{value}"
        try:
            result = run_config(run_cfg, subdir)
        except (SolverError, MeshError) as exc:
            rows.append(f"{args.parameter},{value},nan,nan,0,failed:{exc}")
            failures += 1
            continue
        from .solver import dissipated_fracture_energy

        status = "aborted" if result.aborted else "ok"
        failures += int(result.aborted)
        rows.append(
            f"{args.parameter},{value},{result.peak_reaction!r},"
            f"{dissipated_fracture_energy(result)!r},{result.total_iterations},{status}"
        )
    (outdir / "sweep.csv").write_text("\n".join(rows) + "\n")
    print(f"wrote {outdir / 'sweep.csv'} ({len(values)} runs, {failures} failures)")
    return EXIT_OK if failures == 0 else EXIT_SOLVER


def _cmd_post(args) -> int:
    curve = outputs.read_curve_csv(args.curve)
    out = args.out or str(Path(args.curve).with_suffix(".svg"))
    outputs.write_curve_svg(curve[:, 1:3], out)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracture2d", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write geometry and mesh files")
    g.add_argument("--layout", default="benchmark", help=f"benchmark | random | {' | '.join(FIXED_LAYOUTS)}")
    g.add_argument("--shape", default="circle", choices=["circle", "ellipse", "polygon"])
    g.add_argument("--fraction", type=float, default=0.20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--edge", type=float, default=0.3)
    g.add_argument("--kind", default="quad4", choices=["quad4", "tri3"])
    g.add_argument("--out", default="out")
    g.set_defaults(func=_cmd_generate)

    i = sub.add_parser("insert-cie", help="insert zero-thickness cohesive elements")
    i.add_argument("--mesh", required=True)
    i.add_argument("--mode", default="all", choices=["all", "boundary"])
    i.add_argument("--out", required=True)
    i.set_defaults(func=_cmd_insert_cie)

    r = sub.add_parser("run", help="run one configuration")
    r.add_argument("config")
    r.add_argument("--out", default=None)
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="run a parameter sweep")
    s.add_argument("config")
    s.add_argument("--parameter", required=True, choices=["lc", "mesh_size", "interface_preset"])
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--out", default=None)
    s.set_defaults(func=_cmd_sweep)

    o = sub.add_parser("post", help="plot a curve.csv to SVG")
    o.add_argument("curve")
    o.add_argument("--out", default=None)
    o.set_defaults(func=_cmd_post)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MaterialError, MeshError, PackingError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
