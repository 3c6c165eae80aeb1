"""Configuration files, CSV/VTK emission and the command-line surface."""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import assembly, linalg, quality, sim
from .mesh import MeshError, build_cartesian, build_dual, \
    build_structured_triangulation, load_mesh
from .gd import scheme_a, scheme_b
from .sim import ConfigError, RunConfig

_KEY_TYPES = {
    "test": str, "scheme": str, "variant": str,
    "n": int, "level": int, "mesh_file": str,
    "dt": float, "t_final": float,
    "m_ratio": float, "dm": float, "dl": float, "dt_disp": float,
    "phi": float, "perm": float,
    "out_dir": str, "vtk_every": int,
}
# config-file key -> RunConfig field
_KEY_FIELDS = {"level": "reps"}


def parse_config(path):
    """Read a key=value config file into a validated RunConfig."""
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, val = (s.strip() for s in line.partition("="))
            if key not in _KEY_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            try:
                values[_KEY_FIELDS.get(key, key)] = _KEY_TYPES[key](val)
            except ValueError:
                raise ConfigError(
                    f"{path}:{lineno}: bad value {val!r} for {key!r}")
    if "test" not in values:
        raise ConfigError(f"{path}: missing required key 'test'")
    return RunConfig(**values).resolved()


def serialize_config(config, path):
    """Write a config file that parses back to the same RunConfig."""
    with open(path, "w") as f:
        for key in _KEY_TYPES:
            val = getattr(config, _KEY_FIELDS.get(key, key))
            if val is None:
                continue
            f.write(f"{key}={val}\n")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def write_csv(path, fieldnames, rows):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in fieldnames])


ERROR_COLUMNS = ("scheme", "variant", "mesh", "dt", "l1", "l2", "ratio_l1")
DIAG_COLUMNS = ("step", "t", "mass_residual", "pressure_mean",
                "picard_iters", "cmin", "cmax")


def write_error_rows(path, rows):
    write_csv(path, ERROR_COLUMNS, rows)


def write_diagnostics(path, diagnostics):
    write_csv(path, DIAG_COLUMNS, diagnostics)


# ---------------------------------------------------------------------------
# legacy ASCII VTK

def _scheme_a_polygons(gd):
    grid = gd.geometry
    coords = np.arange(grid.N + 1) * grid.h
    lo = np.maximum(coords - grid.h / 2.0, 0.0)
    hi = np.minimum(coords + grid.h / 2.0, grid.L)
    points, polys = [], []
    for j in range(grid.N + 1):
        for i in range(grid.N + 1):
            base = len(points)
            points.extend([(lo[i], lo[j]), (hi[i], lo[j]),
                           (hi[i], hi[j]), (lo[i], hi[j])])
            polys.append([base, base + 1, base + 2, base + 3])
    return np.array(points), polys


def _scheme_b_polygons(gd):
    mesh, _ = gd.geometry
    nv = mesh.n_vertices
    corner_pts = [[] for _ in range(nv)]
    for tri, centroid in zip(mesh.triangles,
                             mesh.vertices[mesh.triangles].mean(axis=1)):
        for k in range(3):
            v = tri[k]
            m1 = 0.5 * (mesh.vertices[v] + mesh.vertices[tri[(k + 1) % 3]])
            m2 = 0.5 * (mesh.vertices[v] + mesh.vertices[tri[(k + 2) % 3]])
            corner_pts[v].extend([tuple(m1), tuple(m2), tuple(centroid)])
    boundary_vertices = set(mesh.boundary_edges().ravel().tolist())
    points, polys = [], []
    for v in range(nv):
        pts = {p for p in corner_pts[v]}
        if v in boundary_vertices:
            pts.add(tuple(mesh.vertices[v]))
        pts = np.array(sorted(pts))
        centre = pts.mean(axis=0)
        order = np.argsort(np.arctan2(pts[:, 1] - centre[1],
                                      pts[:, 0] - centre[0]))
        base = len(points)
        points.extend(pts[order].tolist())
        polys.append(list(range(base, base + len(pts))))
    return np.array(points), polys


def dof_velocity(gd, U):
    """Measure-weighted average of the gradient-cell velocity over each
    reconstruction cell."""
    mg = gd.grad_measures
    weights = gd.overlap.T @ mg
    vx = (gd.overlap.T @ (mg * U[:, 0])) / weights
    vy = (gd.overlap.T @ (mg * U[:, 1])) / weights
    return np.column_stack([vx, vy])


def write_vtk(gd, scalar_fields, path, velocity=None):
    """Write the reconstruction cells as polygons with CELL_DATA scalars
    (one value per cell) and, optionally, the cell-averaged Darcy velocity.

    ``scalar_fields`` maps names to per-dof arrays; ``velocity`` is the
    per-gradient-cell field, aggregated onto the reconstruction cells.
    """
    for name, values in scalar_fields.items():
        if len(values) != gd.ndof:
            raise ValueError(f"field {name!r} has {len(values)} values "
                             f"for {gd.ndof} cells")
    if gd.kind == "a":
        points, polys = _scheme_a_polygons(gd)
    else:
        points, polys = _scheme_b_polygons(gd)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write("gdflow fields\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {len(points)} double\n")
        for x, y in points:
            f.write(f"{x:.9g} {y:.9g} 0\n")
        size = sum(len(p) + 1 for p in polys)
        f.write(f"CELLS {len(polys)} {size}\n")
        for p in polys:
            f.write(" ".join(map(str, [len(p), *p])) + "\n")
        f.write(f"CELL_TYPES {len(polys)}\n")
        for p in polys:
            f.write("9\n" if len(p) == 4 else "7\n")
        f.write(f"CELL_DATA {len(polys)}\n")
        for name, values in scalar_fields.items():
            f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            for v in np.asarray(values, dtype=float):
                f.write(f"{v:.9g}\n")
        if velocity is not None:
            vel = dof_velocity(gd, velocity)
            f.write("VECTORS velocity double\n")
            for vx, vy in vel:
                f.write(f"{vx:.9g} {vy:.9g} 0\n")


def validate_vtk(path):
    """Self-consistency check: declared counts match the record counts."""
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f]
    idx = 0

    def find(prefix):
        nonlocal idx
        while idx < len(lines):
            if lines[idx].startswith(prefix):
                return lines[idx].split()
            idx += 1
        raise ValueError(f"{path}: missing {prefix!r} section")

    n_points = int(find("POINTS")[1])
    idx += n_points + 1
    fields = find("CELLS")
    n_cells, size = int(fields[1]), int(fields[2])
    counted = sum(int(lines[idx + 1 + k].split()[0]) + 1
                  for k in range(n_cells))
    if counted != size:
        raise ValueError(f"{path}: CELLS size {size} != records {counted}")
    idx += n_cells + 1
    if int(find("CELL_TYPES")[1]) != n_cells:
        raise ValueError(f"{path}: CELL_TYPES count mismatch")
    idx += n_cells + 1
    if int(find("CELL_DATA")[1]) != n_cells:
        raise ValueError(f"{path}: CELL_DATA count mismatch")
    while idx < len(lines):
        if lines[idx].startswith("SCALARS"):
            idx += 2
            vals = lines[idx:idx + n_cells]
            if len(vals) < n_cells or any(not v.strip() for v in vals):
                raise ValueError(f"{path}: truncated SCALARS array")
            idx += n_cells
        elif lines[idx].startswith("VECTORS"):
            idx += 1
            vals = lines[idx:idx + n_cells]
            if len(vals) < n_cells or any(len(v.split()) != 3 for v in vals):
                raise ValueError(f"{path}: truncated VECTORS array")
            idx += n_cells
        else:
            idx += 1
    return True


# ---------------------------------------------------------------------------
# CLI

def _cmd_run(args):
    config = parse_config(args.config)
    if args.out_dir:
        config = RunConfig(**{**config.__dict__, "out_dir": args.out_dir})
    out = Path(config.out_dir)

    def snapshot(step, t, state):
        vtk_path = out / f"fields_{step}.vtk"
        write_vtk(state.gd, {"c": state.gd.pi(state.c),
                             "p": state.gd.pi(state.p)},
                  vtk_path, velocity=state.U)
        validate_vtk(vtk_path)

    state, report = sim.run_coupled(config, snapshot_cb=snapshot)
    write_error_rows(out / "errors.csv", [{
        "scheme": config.scheme, "variant": config.variant,
        "mesh": config.mesh_label, "dt": config.dt,
        "l1": report.l1, "l2": report.l2, "ratio_l1": float("nan")}])
    write_diagnostics(out / "diagnostics.csv", report.diagnostics)
    print(f"run complete: {config.test} scheme {config.scheme} "
          f"({config.mesh_label}, dt={config.dt}) "
          f"L1={report.l1:.6g} L2={report.l2:.6g} "
          f"wall={report.wall_time:.1f}s")
    return 0


_SUITES = {
    "ta1": [("analytic1", "a", "centred", sim.TABLE1_A),
            ("analytic1", "b", "centred", sim.TABLE1_B)],
    "ta2a": [("analytic2", "a", "centred", sim.TABLE2_A),
             ("analytic2", "a", "upstream", sim.TABLE2_A),
             ("analytic2", "a", "dh", sim.TABLE2_A)],
    "ta2b": [("analytic2", "b", "centred", sim.TABLE2_B),
             ("analytic2", "b", "upstream", sim.TABLE2_B),
             ("analytic2", "b", "dh", sim.TABLE2_B)],
}


def _cmd_table(args):
    rows = []
    for test, scheme, variant, levels in _SUITES[args.suite]:
        rows.extend(sim.convergence_suite(test, scheme, variant, levels))
    path = Path(args.out_dir) / "errors.csv"
    write_error_rows(path, rows)
    for row in rows:
        print(f"{row['scheme']:>2} {row['variant']:>9} {row['mesh']:>10} "
              f"dt={row['dt']:<8g} L1={row['l1']:.6g} L2={row['l2']:.6g}")
    print(f"wrote {path}")
    return 0


def _cmd_quality(args):
    rows = []
    for lvl in range(args.levels):
        if args.scheme == "a":
            n = args.base * 2 ** lvl
            gd = scheme_a(build_cartesian(n, 1.0))
            mesh_label = f"{n}x{n}"
        else:
            reps = args.base * 2 ** lvl
            mesh = build_structured_triangulation(reps, 1.0)
            gd = scheme_b(mesh, build_dual(mesh))
            mesh_label = f"tri{reps}"
        rep = quality.quality_report(gd)
        rows.append({"mesh": mesh_label, "h": rep.h, "ndof": rep.ndof,
                     "C_D": rep.coercivity,
                     "S_D": rep.consistency["sin_product"],
                     "W_D": rep.limit_conformity["curl_bubble"]})
    path = Path(args.out_dir) / "quality.csv"
    write_csv(path, ("mesh", "h", "ndof", "C_D", "S_D", "W_D"), rows)
    for row in rows:
        print(f"{row['mesh']:>10} C_D={row['C_D']:.6g} "
              f"S_D={row['S_D']:.6g} W_D={row['W_D']:.6g}")
    return 0


def _cmd_mesh_info(args):
    if args.mesh_file:
        mesh = load_mesh(args.mesh_file)
    elif args.reps:
        mesh = build_structured_triangulation(args.reps, args.side)
    elif args.n:
        grid = build_cartesian(args.n, args.side)
        print(f"cartesian grid: {grid.N}x{grid.N} cells, h={grid.h:g}, "
              f"{grid.n_nodes} nodes, {grid.n_squares} primal squares, "
              f"recon area total {grid.recon_areas.sum():g}")
        return 0
    else:
        raise ConfigError("mesh-info needs one of --n, --reps, --mesh-file")
    dual = build_dual(mesh)
    areas = mesh.areas()
    print(f"triangulation: {mesh.n_vertices} vertices, "
          f"{mesh.n_triangles} triangles, "
          f"{len(mesh.boundary_edges())} boundary edges, "
          f"area {areas.sum():g}, "
          f"h_min={np.sqrt(areas.min()):.4g}, "
          f"dual measure total {dual.measures.sum():g}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gdflow",
        description="Gradient-discretisation miscible displacement solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one simulation from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out-dir", default=None)
    p_run.set_defaults(func=_cmd_run)

    p_table = sub.add_parser("table", help="reproduce an error table")
    p_table.add_argument("--suite", required=True, choices=sorted(_SUITES))
    p_table.add_argument("--out-dir", default="out")
    p_table.set_defaults(func=_cmd_table)

    p_q = sub.add_parser("quality", help="emit discretisation quality CSV")
    p_q.add_argument("--scheme", required=True, choices=("a", "b"))
    p_q.add_argument("--levels", type=int, default=3)
    p_q.add_argument("--base", type=int, default=8)
    p_q.add_argument("--out-dir", default="out")
    p_q.set_defaults(func=_cmd_quality)

    p_m = sub.add_parser("mesh-info", help="print mesh statistics")
    p_m.add_argument("--n", type=int, default=None)
    p_m.add_argument("--reps", type=int, default=None)
    p_m.add_argument("--mesh-file", default=None)
    p_m.add_argument("--side", type=float, default=1.0)
    p_m.set_defaults(func=_cmd_mesh_info)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MeshError, assembly.ConfigurationError,
            FileNotFoundError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (linalg.SolverError, assembly.PicardError,
            quality.QualityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
