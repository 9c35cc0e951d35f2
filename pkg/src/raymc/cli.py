"""Command line: run, bench, leak, validate-mesh.

Exit codes: 0 success, 1 configuration or input error, 2 runtime failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, geometry, pipeline, scoring
from .config import ConfigError, parse_config
from .geometry import MeshError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _add_run_flags(p):
    p.add_argument("--photons", help="photon count (scientific notation allowed)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--strategy", choices=pipeline.STRATEGIES)
    p.add_argument("--delta", type=float, help="ray origin retraction in mm")
    p.add_argument("--tmax", type=float, help="time gate in ns")
    p.add_argument("--precision", choices=pipeline.PRECISIONS)
    p.add_argument("--leak-detect", action="store_true", default=None)
    p.add_argument("--output", help="output prefix")


def build_parser():
    ap = argparse.ArgumentParser(prog="raymc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a simulation from a config file")
    p.add_argument("--config", required=True)
    _add_run_flags(p)

    p = sub.add_parser("bench", help="write a benchmark's files and run it")
    p.add_argument("name", choices=bench.NAMES + tuple(n.lower() for n in bench.NAMES))
    p.add_argument("--outdir", default=".")
    p.add_argument("--level", type=int, default=bench.DEFAULT_LEVEL)
    _add_run_flags(p)

    p = sub.add_parser("leak", help="leakage study on B5 or B6")
    p.add_argument("name", choices=("B5", "B6", "b5", "b6"))
    p.add_argument("--photons", default="1e6")
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--precision", choices=pipeline.PRECISIONS, default="single")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--workers", type=int)
    p.add_argument("--output", default="leak")

    p = sub.add_parser("validate-mesh", help="check a mesh file")
    p.add_argument("path")
    return ap


def _overrides(args):
    return {
        "photons": args.photons,
        "seed": args.seed,
        "workers": args.workers,
        "strategy": getattr(args, "strategy", None),
        "delta": args.delta,
        "tmax": getattr(args, "tmax", None),
        "precision": args.precision,
        "leak_detect": getattr(args, "leak_detect", None),
        "output": args.output,
    }


def write_outputs(cfg, fluence, summary):
    prov = cfg.provenance()
    prov["workers"] = summary.workers
    out = Path(cfg.output)
    if out.parent != Path("."):
        out.parent.mkdir(parents=True, exist_ok=True)
    raw, hdr = scoring.write_volume(out, fluence, prov)
    summ = scoring.write_summary(out, summary, prov)
    paths = [raw, hdr, summ]
    for s in cfg.slices:
        paths.append(scoring.write_slice_csv(out, fluence, s["axis"], int(s["index"])))
    return paths


def cmd_run(cfg):
    try:
        fluence, summary = pipeline.run_simulation(cfg)
    except (MeshError, FileNotFoundError) as exc:
        raise ConfigError(str(exc)) from None
    for p in write_outputs(cfg, fluence, summary):
        print(p)
    print(f"photons {summary.photons}  absorbed {summary.absorbed_weight:.6g}  "
          f"exited {summary.exited_weight:.6g}  timed out {summary.timed_out_weight:.6g}  "
          f"leaked {summary.leaked_count}  balance error {summary.balance_error():.3g}  "
          f"wall {summary.wall_time:.2f} s")
    return EXIT_OK


def cmd_bench(args):
    spec = bench.generate_benchmark(args.name, level=args.level)
    outdir = Path(args.outdir)
    cfg_path = spec.write(outdir)
    if spec.name == "B4":
        # the wide-field run keeps the axis slice for comparison with the pencil run
        data = json.loads(cfg_path.read_text())
        data["slices"] = [{"axis": "y", "index": 30}]
        cfg_path.write_text(json.dumps(data, indent=2))
    ov = _overrides(args)
    if ov["strategy"] == "tetra" and spec.tet is None:
        raise ConfigError(f"{spec.name} ships no tetrahedral mesh; supply one with 'tet_mesh'")
    cfg = parse_config(cfg_path, ov)
    print(cfg_path)
    return cmd_run(cfg)


def cmd_leak(args):
    report = bench.leak_study(args.name, int(float(args.photons)), args.delta, args.precision,
                              args.seed, args.workers)
    path = Path(args.output + ".leak.json")
    if path.parent != Path("."):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_json(), indent=1))
    print(path)
    print(f"{report.name}: {report.count} leaked of {report.nphoton} "
          f"({100 * report.fraction:.6f}%), {100 * report.after_scatter:.1f}% after a scatter")
    return EXIT_OK


def cmd_validate(path):
    mesh = geometry.load_mesh(path)
    if isinstance(mesh, geometry.TetMesh):
        region, nreg = geometry.tet_regions(mesh)
        vol = mesh.signed_volumes()
        print(f"tet mesh: {len(mesh.vertices)} vertices, {mesh.n_tets} tets, {nreg} regions, "
              f"volume {vol.sum():.6g} mm^3")
        surf = geometry.labeled_boundary(mesh)
    else:
        surf = mesh
        print(f"surface mesh: {len(mesh.vertices)} vertices, {mesh.n_triangles} triangles, "
              f"media {sorted(set(mesh.front_medium) | set(mesh.back_medium))}")
    flux, area = geometry.closed_surface_flux(surf)
    print(f"area {area:.6g} mm^2, normal flux |sum n*A| = {np.linalg.norm(flux):.3g}")
    try:
        regions, _ = geometry.surface_regions(surf)
        print(f"{len(regions)} closed regions")
    except MeshError as exc:
        print(f"not region-decomposable: {exc}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(parse_config(args.config, _overrides(args)))
        if args.command == "bench":
            return cmd_bench(args)
        if args.command == "leak":
            return cmd_leak(args)
        return cmd_validate(args.path)
    except (ConfigError, MeshError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, pipeline.MemoryBudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
