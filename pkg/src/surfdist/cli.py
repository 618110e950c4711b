"""Command-line front end.

Exit status is 0 on success, 1 when the input is valid but the computation
fails on domain grounds (topology, convergence), and 2 for usage and I/O
errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__

logger = logging.getLogger("surfdist")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2

# name: (default, type, help)
DEFAULTS: dict[str, tuple[object, type, str]] = {
    "n_samples": (256, int, "sample sites per surface (cWn, cP search)"),
    "cw_samples": (64, int, "sample sites per surface for cW"),
    "R": (0.5, float, "hyperbolic neighbourhood radius for cWn"),
    "n_theta": (64, int, "rotations in the one-parameter Möbius family"),
    "n_radial": (16, int, "radial nodes of the neighbourhood grid"),
    "n_angular": (64, int, "angular nodes of the neighbourhood grid"),
    "max_peaks": (8, int, "density peaks kept per surface"),
    "k_ring": (1, int, "neighbourhood size for peak detection"),
    "min_prominence": (0.05, float, "peak prominence threshold, relative"),
    "sigma": (0.3, float, "peak-warp kernel width"),
    "match_radius": (1.0, float, "hyperbolic radius for peak matching"),
    "tol": (0.05, float, "area-correction residual tolerance"),
    "max_iter": (100, int, "area-correction iteration cap"),
    "allow_reflection": (False, bool, "admit improper rigid motions"),
    "compose": (True, bool, "refine cP matrices with maps composed through a third specimen"),
    "permutations": (10000, int, "Mantel permutations"),
    "seed": (0, int, "random seed"),
    "jobs": (0, int, "worker processes (0: $SURFDIST_JOBS or 1)"),
}

_RANGES = {
    "n_samples": (1, 1024), "cw_samples": (1, 1024), "R": (1e-6, 10.0), "n_theta": (1, 4096),
    "n_radial": (1, 256), "n_angular": (1, 4096), "max_peaks": (1, 64), "k_ring": (1, 10),
    "min_prominence": (0.0, 1.0), "sigma": (1e-3, 10.0), "match_radius": (0.0, 100.0),
    "tol": (0.0, 10.0), "max_iter": (0, 100000), "permutations": (99, 10**8), "seed": (0, 2**63 - 1),
    "jobs": (0, 1024),
}


class UsageError(Exception):
    pass


class DomainError(Exception):
    pass


def _coerce(key: str, raw):
    default, typ, _ = DEFAULTS[key]
    if typ is bool:
        if isinstance(raw, bool):
            return raw
        s = str(raw).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{key}: expected a boolean, got {raw!r}")
    try:
        val = typ(raw)
    except (TypeError, ValueError):
        raise UsageError(f"{key}: expected {typ.__name__}, got {raw!r}") from None
    lo, hi = _RANGES.get(key, (-np.inf, np.inf))
    if not lo <= val <= hi:
        raise UsageError(f"{key}={val} outside [{lo}, {hi}]")
    return val


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment.  Unknown keys are errors."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            k, v = (x.strip() for x in line.split("=", 1))
            if k not in DEFAULTS:
                raise UsageError(f"{path}:{n}: unknown key {k!r}")
            out[k] = _coerce(k, v)
    return out


def resolve_config(args) -> dict:
    cfg = {k: d[0] for k, d in DEFAULTS.items()}
    if getattr(args, "config", None):
        cfg.update(read_config(args.config))
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = _coerce(k, v)
    return cfg


def defaults_table() -> str:
    w = max(len(k) for k in DEFAULTS)
    lines = [f"{'key':<{w}}  {'default':<8}  description"]
    for k, (d, _, h) in DEFAULTS.items():
        lines.append(f"{k:<{w}}  {str(d):<8}  {h}")
    return "\n".join(lines)


def provenance(command: str, cfg: dict, inputs) -> dict:
    import numba
    import scipy

    # parallelism never changes results, so it stays out of the record
    cfg = {k: v for k, v in cfg.items() if k != "jobs"}
    blob = json.dumps(cfg, sort_keys=True).encode()
    return {
        "command": command,
        "inputs": [str(p) for p in inputs],
        "config": cfg,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "seed": cfg.get("seed"),
        "versions": {
            "surfdist": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
            "python": platform.python_version(),
        },
    }


def _write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_provenance(out, command, cfg, inputs) -> None:
    if out:
        _write_json(provenance(command, cfg, inputs), str(out) + ".provenance.json")


def _load(path):
    from .mesh import load_mesh

    return load_mesh(path, specimen_id=Path(path).stem)


# ----------------------------------------------------------------- commands


def cmd_validate(args, cfg) -> int:
    from .mesh import load_mesh, validate_disk_topology

    status = EXIT_OK
    reports = []
    for p in args.paths:
        mesh = load_mesh(p, specimen_id=Path(p).stem, validate=False)
        rep = validate_disk_topology(mesh)
        d = {"path": str(p), **rep.as_dict()}
        reports.append(d)
        print(json.dumps(d, sort_keys=True))
        if not rep.passed:
            status = EXIT_DOMAIN
    if args.out:
        _write_json(reports, args.out)
        _write_provenance(args.out, "validate", cfg, args.paths)
    return status


def cmd_flatten(args, cfg) -> int:
    from .analysis import flatmap_figure
    from .flatten import angle_distortion, flatten
    from .mesh import normalize_mesh

    mesh = normalize_mesh(_load(args.mesh))
    flat = flatten(mesh)
    flat.to_csv(args.out)
    dist = angle_distortion(mesh, flat.disk_coords)
    print(json.dumps({
        "mesh": str(args.mesh),
        "vertices": mesh.n_vertices,
        "clamped_weights": flat.clamped_weights,
        "mean_angle_distortion": float(dist.mean()),
        "mass": float(flat.mass.sum()),
    }, sort_keys=True))
    if args.figure:
        flatmap_figure(flat, args.figure)
    _write_provenance(args.out, "flatten", cfg, [args.mesh])
    return EXIT_OK


def _cp_params(cfg):
    from .distances import CPParams

    return CPParams(**{k: cfg[k] for k in CPParams.__dataclass_fields__ if k in cfg})


def cmd_dist(args, cfg) -> int:
    from .distances import MobiusGrid, cp_distance, cw_distance, cwn_distance, sample_surface
    from .flatten import flatten
    from .mesh import normalize_mesh

    A = normalize_mesh(_load(args.mesh_a))
    B = normalize_mesh(_load(args.mesh_b))
    fA, fB = flatten(A), flatten(B)
    out = {"metric": args.metric, "source": A.specimen_id, "target": B.specimen_id}
    if args.metric == "cP":
        value, motion, cmap = cp_distance(A, B, fA, fB, _cp_params(cfg))
        out.update(value=value, residual=cmap.residual, converged=cmap.converged, rigid_motion=motion.as_list())
        if args.correspondence:
            cmap.to_csv(args.correspondence)
    elif args.metric == "cWn":
        n = cfg["n_samples"]
        sA = sample_surface(fA, A, min(n, int((~fA.boundary).sum())), interior_only=True)
        sB = sample_surface(fB, B, min(n, int((~fB.boundary).sum())), interior_only=True)
        value, plan = cwn_distance(fA, fB, sA, sB, cfg["R"], cfg["n_theta"], cfg["n_radial"], cfg["n_angular"])
        out.update(value=value)
        if args.plan:
            plan.to_csv(args.plan)
    else:
        n = cfg["cw_samples"]
        sA = sample_surface(fA, A, min(n, int((~fA.boundary).sum())), interior_only=True)
        sB = sample_surface(fB, B, min(n, int((~fB.boundary).sum())), interior_only=True)
        value = cw_distance(fA, fB, sA, sB, MobiusGrid())
        out.update(value=value)
    print(json.dumps(out, sort_keys=True))
    if args.out:
        _write_json(out, args.out)
    _write_provenance(args.out or args.correspondence or args.plan, "dist", cfg, [args.mesh_a, args.mesh_b])
    return EXIT_OK


def cmd_matrix(args, cfg) -> int:
    import csv

    from .analysis import pairwise_matrix, read_manifest

    col = read_manifest(args.manifest)
    log: list = []
    jobs = cfg["jobs"] or None
    D = pairwise_matrix(col, args.metric, cfg, jobs=jobs, log=log)
    D.to_csv(args.out)
    if args.log:
        with open(args.log, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["source", "target", "value", "error"])
            for a, b, v, e in log:
                w.writerow([a, b, "%.17g" % v, e])
    if args.figure:
        from .analysis import heatmap_figure, seriate

        heatmap_figure(D, D, seriate(D), args.figure)
    print(json.dumps({"metric": args.metric, "n": D.n, "complete": D.complete,
                      "raw_asymmetry": D.raw_asymmetry, "failures": len(D.failures)}, sort_keys=True))
    _write_provenance(args.out, "matrix", cfg, [args.manifest])
    return EXIT_OK if D.complete else EXIT_DOMAIN


def cmd_mantel(args, cfg) -> int:
    from .analysis import mantel, mantel_figure, read_matrix

    D1, D2 = read_matrix(args.matrix_a), read_matrix(args.matrix_b)
    res = mantel(D1, D2, cfg["permutations"], cfg["seed"])
    print(json.dumps(res.as_dict(), sort_keys=True))
    if args.out:
        _write_json(res.as_dict(), args.out)
    if args.figure:
        mantel_figure(res, args.figure)
    _write_provenance(args.out, "mantel", cfg, [args.matrix_a, args.matrix_b])
    return EXIT_OK


def cmd_classify(args, cfg) -> int:
    from .analysis import loo_classify, read_manifest, read_matrix

    D = read_matrix(args.matrix)
    col = read_manifest(args.labels)
    level = args.level or (col.levels[0] if col.levels else None)
    if level is None or level not in col.levels:
        raise UsageError(f"unknown label level {level!r}; available: {list(col.levels)}")
    res = loo_classify(D, col.labels(level), level)
    print(json.dumps({"level": level, "success_rate": res.success_rate}, sort_keys=True))
    if args.out:
        res.to_json(args.out)
    _write_provenance(args.out, "classify", cfg, [args.matrix, args.labels])
    return EXIT_OK


def cmd_propagate(args, cfg) -> int:
    from .analysis import propagate_along_path
    from .distances import read_correspondence
    from .mesh import read_landmarks, write_landmarks

    maps = [read_correspondence(p) for p in args.correspondence]
    if len(args.meshes) != len(maps) + 1:
        raise UsageError("give one mesh per path node (number of maps + 1)")
    meshes = [_load(p) for p in args.meshes]
    # the correspondence file names the specimens; the meshes fill them in
    meshes = [type(m)(m.vertices, m.faces, sid) for m, sid in
              zip(meshes, [maps[0].source_id] + [c.target_id for c in maps])]
    lm = read_landmarks(args.landmarks, meshes[0])
    out = propagate_along_path(maps, lm, meshes)
    write_landmarks(out, args.out)
    print(json.dumps({"landmarks": len(out), "steps": len(maps)}, sort_keys=True))
    _write_provenance(args.out, "propagate", cfg, [*args.correspondence, args.landmarks, *args.meshes])
    return EXIT_OK


def cmd_heatmap(args, cfg) -> int:
    from .analysis import heatmap_export, heatmap_figure, read_matrix, seriate

    U = read_matrix(args.upper)
    L = read_matrix(args.lower or args.upper)
    order = seriate(U) if args.order == "seriate" else list(U.ids)
    heatmap_export(U, L, order, args.out)
    if args.figure:
        heatmap_figure(U, L, order, args.figure)
    print(json.dumps({"n": len(order), "order": order}))
    _write_provenance(args.out, "heatmap", cfg, [args.upper, args.lower or args.upper])
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="surfdist",
        description="Landmark-free distances and correspondences between disk-type surfaces.",
        epilog="Defaults:\n" + defaults_table(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--show-defaults", action="store_true", help="print the defaults table and exit")
    p.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    for k, (d, typ, h) in DEFAULTS.items():
        flag = "--" + k.replace("_", "-")
        common.add_argument(flag, dest=k, default=None, type=str if typ is bool else typ, help=f"{h} [{d}]")
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("validate", parents=[common], help="check disk topology of mesh files")
    s.add_argument("paths", nargs="+")
    s.add_argument("--out", help="JSON report")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("flatten", parents=[common], help="conformally flatten a mesh")
    s.add_argument("mesh")
    s.add_argument("--out", required=True, help="CSV of disk coordinates and factors")
    s.add_argument("--figure", help="PNG of the density on the disk")
    s.set_defaults(func=cmd_flatten)

    s = sub.add_parser("dist", parents=[common], help="distance between two meshes")
    s.add_argument("mesh_a")
    s.add_argument("mesh_b")
    s.add_argument("--metric", default="cP", choices=["cP", "cWn", "cW"])
    s.add_argument("--correspondence", help="CSV for the cP correspondence map")
    s.add_argument("--plan", help="CSV for the cWn transport plan")
    s.add_argument("--out", help="JSON result")
    s.set_defaults(func=cmd_dist)

    s = sub.add_parser("matrix", parents=[common], help="pairwise matrix over a manifest")
    s.add_argument("manifest")
    s.add_argument("--metric", default="cP", choices=["cP", "cWn", "cW", "ODLP"])
    s.add_argument("--out", required=True, help="matrix CSV")
    s.add_argument("--log", help="per-pair CSV log")
    s.add_argument("--figure", help="PNG heatmap in seriated order")
    s.set_defaults(func=cmd_matrix)

    s = sub.add_parser("mantel", parents=[common], help="Mantel test between two matrices")
    s.add_argument("matrix_a")
    s.add_argument("matrix_b")
    s.add_argument("--out", help="JSON result")
    s.add_argument("--figure", help="PNG of the permutation null")
    s.set_defaults(func=cmd_mantel)

    s = sub.add_parser("classify", parents=[common], help="leave-one-out nearest-neighbour classification")
    s.add_argument("matrix")
    s.add_argument("labels", help="manifest CSV with label columns")
    s.add_argument("--level", help="label column (default: first)")
    s.add_argument("--out", help="classification JSON")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("propagate", parents=[common], help="carry landmarks through correspondence maps")
    s.add_argument("correspondence", nargs="+", help="map CSVs in path order")
    s.add_argument("--landmarks", required=True)
    s.add_argument("--meshes", nargs="+", required=True, help="source, intermediate and target meshes")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_propagate)

    s = sub.add_parser("heatmap", parents=[common], help="P6 heatmap of one or two matrices")
    s.add_argument("upper")
    s.add_argument("lower", nargs="?")
    s.add_argument("--out", required=True, help="P6 pixmap")
    s.add_argument("--order", choices=["seriate", "input"], default="seriate")
    s.add_argument("--figure", help="labelled PNG")
    s.set_defaults(func=cmd_heatmap)
    return p


def main(argv=None) -> int:
    from .distances import DegenerateAlignmentError
    from .flatten import FlattenError
    from .mesh import MeshError, MeshParseError
    from .transport import TransportError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    if args.show_defaults:
        print(defaults_table())
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = resolve_config(args)
        if cfg["jobs"] == 0:
            cfg["jobs"] = int(os.environ.get("SURFDIST_JOBS", "1") or 1)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"surfdist: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, MeshParseError) as exc:
        print(f"surfdist: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MeshError, FlattenError, TransportError, DegenerateAlignmentError, DomainError) as exc:
        print(f"surfdist: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ValueError as exc:
        print(f"surfdist: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
