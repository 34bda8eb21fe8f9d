"""Command-line interface: ``pmf {fps,match,eval,resample,transfer}``.

Space arguments accept a mesh (``.off``/``.ply``), an explicit distance
matrix (``.dmat``), a descriptor written by ``resample`` (``.json``), or
``circle:N[:C]`` for N equally spaced points on a circle of circumference
C (default N). All vertex indices are 0-based.

Exit codes: 0 ok, 2 usage, 3 input validation, 4 infeasible assignment,
5 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .assignment import AuctionConfig, BijectionError, InfeasibleAssignmentError
from .density import InfeasibleMaskError, KernelParams, load_matches
from .evaluation import (
    color_transfer_export,
    error_curve,
    geodesic_errors,
    read_permutation,
    write_permutation,
)
from .filtering import PmfConfig, SizeMismatchError, WidenPolicy, pmf_multiscale, pmf_single_scale
from .geometry import MeshParseError, MeshValidationError, load_mesh, shape_diameter
from .metric import CircleSpace, MeshGeodesicSpace, MetricError, SubsetSpace, load_explicit, write_explicit
from .sampling import default_schedule, farthest_point_sampling, write_hierarchy

logger = logging.getLogger("pmf")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 2, 3, 4, 5
MESH_SUFFIXES = {".off", ".ply"}
EXPLICIT_RESAMPLE_CAP = 2048


class CliError(Exception):
    def __init__(self, code: int, stage: str, message: str):
        super().__init__(message)
        self.code = code
        self.stage = stage


@contextmanager
def stage(name: str):
    """Map library exceptions raised inside a stage to exit codes."""
    try:
        yield
    except CliError:
        raise
    except FileNotFoundError as e:
        raise CliError(EXIT_USAGE, name, f"file not found: {e.filename}") from e
    except (InfeasibleAssignmentError, InfeasibleMaskError) as e:
        raise CliError(EXIT_INFEASIBLE, name, str(e)) from e
    except BijectionError as e:
        raise CliError(EXIT_INTERNAL, name, str(e)) from e
    except (MeshParseError, MeshValidationError, MetricError, SizeMismatchError, ValueError, OSError) as e:
        raise CliError(EXIT_INPUT, name, str(e)) from e
    except Exception as e:
        raise CliError(EXIT_INTERNAL, name, f"{type(e).__name__}: {e}") from e


def _require_file(path, what: str, stage_name: str) -> Path:
    p = Path(path)
    # pipes from process substitution count as files
    if not p.exists() or p.is_dir():
        raise CliError(EXIT_USAGE, stage_name, f"{what} not found: {path}")
    return p


# ----------------------------------------------------------------------------
# space specifications


def _load_descriptor(path: Path):
    desc = json.loads(path.read_text(encoding="utf-8"))
    kind = desc.get("kind")
    base = path.parent
    if kind == "explicit":
        return load_explicit(base / desc["matrix"], area=desc.get("area"), check=False)
    if kind == "subset":
        parent = load_space(str(base / desc["parent"]))
        idx = np.loadtxt(base / desc["indices"], dtype=np.int64, ndmin=1)
        return SubsetSpace(parent, idx)
    raise ValueError(f"{path}: unknown descriptor kind {kind!r}")


def load_space(spec: str):
    """Build a metric space from a command-line specification."""
    if spec.startswith("circle:"):
        parts = spec.split(":")[1:]
        if not 1 <= len(parts) <= 2:
            raise CliError(EXIT_USAGE, "load", f"bad circle spec {spec!r}; use circle:N[:C]")
        try:
            n = int(parts[0])
            c = float(parts[1]) if len(parts) == 2 else None
        except ValueError:
            raise CliError(EXIT_USAGE, "load", f"bad circle spec {spec!r}; use circle:N[:C]") from None
        return CircleSpace(n, c)
    p = _require_file(spec, "input", "load")
    suffix = p.suffix.lower()
    if suffix in MESH_SUFFIXES:
        return MeshGeodesicSpace(load_mesh(p))
    if suffix == ".json":
        return _load_descriptor(p)
    return load_explicit(p)


def _parse_sizes(text: str, n: int) -> list[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise CliError(EXIT_USAGE, "args", f"sizes must be comma-separated integers, got {text!r}") from None
    if not sizes:
        raise CliError(EXIT_USAGE, "args", "empty size list")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise CliError(EXIT_USAGE, "args", f"sizes must be strictly increasing, got {sizes}")
    if sizes[0] < 1 or sizes[-1] > n:
        raise CliError(EXIT_USAGE, "args", f"sizes must lie in [1, {n}], got {sizes}")
    return sizes


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _versions() -> dict:
    import numba
    import scipy

    return {
        "pmf": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


# ----------------------------------------------------------------------------
# commands


def cmd_fps(args) -> int:
    with stage("load"):
        space = load_space(args.space)
        space.threads = args.threads
    sizes = _parse_sizes(args.sizes, space.n) if args.sizes else default_schedule(space.n)
    if not 0 <= args.seed < space.n:
        raise CliError(EXIT_USAGE, "args", f"seed {args.seed} out of range [0, {space.n})")
    with stage("fps"):
        h = farthest_point_sampling(space, sizes, seed=args.seed)
    with stage("write"):
        write_hierarchy(h, args.out)
    print(f"{len(h)} levels: " + ", ".join(f"{s} (r={r:.6g})" for s, r in zip(h.sizes, h.radii)))
    return EXIT_OK


def cmd_match(args) -> int:
    timings = {}
    t = time.perf_counter()
    _require_file(args.matches, "match file", "load")
    with stage("load"):
        sx = load_space(args.x)
        sy = load_space(args.y)
        for s in (sx, sy):
            s.threads = args.threads
        init = load_matches(args.matches)
    if sx.n != sy.n:
        raise CliError(
            EXIT_INPUT, "load",
            f"point counts differ (X has {sx.n}, Y has {sy.n}); run 'pmf resample' on the larger shape first",
        )
    with stage("load"):
        init.check_range(sx.n, sy.n)
    timings["load"] = time.perf_counter() - t

    kernel = KernelParams(sigma_sq_rel=args.sigma_rel)
    cfg = PmfConfig(
        kernel=kernel,
        max_iters=args.iters,
        stop_on_fixed_point=not args.no_fixed_point,
        solver=args.solver,
        auction=AuctionConfig(),
        level_iters=args.level_iters,
    )
    resolved = {
        "sigma_sq_rel": args.sigma_rel,
        "sigma_sq": None,
        "target_area": None,
        "solver": args.solver,
        "max_iters": args.iters,
        "stop_on_fixed_point": cfg.stop_on_fixed_point,
        "multiscale": bool(args.multiscale),
        "threads": args.threads,
    }
    with stage("config"):
        params = kernel.resolve(sy)
        resolved["sigma_sq"] = params.resolved
        resolved["target_area"] = float(sy.area())

    t = time.perf_counter()
    if args.multiscale:
        sizes = _parse_sizes(args.schedule, sx.n) if args.schedule else default_schedule(sx.n)
        if sizes[-1] != sx.n:
            raise CliError(EXIT_USAGE, "args", f"the schedule must end at n = {sx.n}, got {sizes}")
        seed_x = int(init.xi[0]) if args.seed_x is None else args.seed_x
        seed_y = int(init.eta[0]) if args.seed_y is None else args.seed_y
        for s, v, side in ((sx, seed_x, "X"), (sy, seed_y, "Y")):
            if not 0 <= v < s.n:
                raise CliError(EXIT_USAGE, "args", f"{side} seed {v} out of range [0, {s.n})")
        with stage("fps"):
            hx = farthest_point_sampling(sx, sizes, seed=seed_x)
            hy = farthest_point_sampling(sy, sizes, seed=seed_y)
        timings["fps"] = time.perf_counter() - t
        resolved.update({
            "schedule": sizes,
            "seed_x": seed_x,
            "seed_y": seed_y,
            "level_iters": args.level_iters,
            "widen": args.widen,
            "mask_factor": 2.0,
            "fine_level_solver": "auction_sparse",
        })
        t = time.perf_counter()
        with stage("match"):
            res = pmf_multiscale(sx, sy, hx, hy, init, cfg, WidenPolicy(mode=args.widen))
    else:
        with stage("match"):
            res = pmf_single_scale(sx, sy, init, cfg)
    timings["match"] = time.perf_counter() - t

    prefix = Path(args.out)
    perm_path = Path(f"{prefix}.perm.txt")
    manifest_path = Path(f"{prefix}.manifest.json")
    t = time.perf_counter()
    with stage("write"):
        if perm_path.parent and not perm_path.parent.exists():
            perm_path.parent.mkdir(parents=True)
        write_permutation(res.final, perm_path)
    timings["write"] = time.perf_counter() - t
    manifest = {
        "inputs": {"x": args.x, "y": args.y, "matches": args.matches},
        "config": resolved,
        "versions": _versions(),
        "timings": timings,
        "outputs": [str(perm_path), str(manifest_path)],
        "result": {
            "iterations": res.iterations_run,
            "objective_trace": res.objective_trace,
            "meta": res.meta,
        },
    }
    with stage("write"):
        manifest_path.write_text(json.dumps(manifest, indent=2, default=_json_default) + "\n", encoding="utf-8")
    print(f"wrote {perm_path} ({res.iterations_run} iterations, objective {res.objective_trace[-1]:.6g})")
    return EXIT_OK


def cmd_eval(args) -> int:
    _require_file(args.perm, "permutation file", "load")
    _require_file(args.truth, "ground-truth file", "load")
    with stage("load"):
        perm = read_permutation(args.perm)
        truth = read_permutation(args.truth)
        sy = load_space(args.y)
        sy.threads = args.threads
    if len(perm) != len(truth):
        raise CliError(EXIT_INPUT, "eval", f"map sizes differ: permutation has {len(perm)}, truth has {len(truth)}")
    if len(perm) != sy.n:
        raise CliError(EXIT_INPUT, "eval", f"map has {len(perm)} entries, Y has {sy.n} points")
    with stage("eval"):
        diam = args.diameter if args.diameter is not None else shape_diameter(sy)
        err = geodesic_errors(perm, truth, sy, diam)
        curve = error_curve(err)
    out = args.out or _default_curve_path(args.perm)
    with stage("write"):
        curve.write_csv(out)
    pct = 100.0 * float(np.mean(err <= 0.05))
    print(f"mean {round(float(err.mean()), 6)}, ≤0.05: {pct:g}%")
    return EXIT_OK


def _default_curve_path(perm_path: str) -> str:
    s = str(perm_path)
    return (s[: -len(".perm.txt")] if s.endswith(".perm.txt") else s) + ".curve.csv"


def cmd_resample(args) -> int:
    with stage("load"):
        space = load_space(args.space)
        space.threads = args.threads
    if not 1 <= args.count <= space.n:
        raise CliError(EXIT_USAGE, "args", f"target count {args.count} outside [1, {space.n}]")
    if not 0 <= args.seed < space.n:
        raise CliError(EXIT_USAGE, "args", f"seed {args.seed} out of range [0, {space.n})")
    with stage("fps"):
        h = farthest_point_sampling(space, [args.count], seed=args.seed)
    idx = np.sort(h.levels[-1].indices)
    prefix = Path(args.out)
    index_path = Path(f"{prefix}.index.txt")
    desc_path = Path(f"{prefix}.json")
    desc = {
        "source": args.space,
        "count": int(args.count),
        "seed": int(args.seed),
        "covering_radius": h.levels[-1].radius,
        "area": float(space.area()),
        "indices": index_path.name,
    }
    with stage("write"):
        np.savetxt(index_path, idx, fmt="%d")
        written = [str(index_path)]
        if args.count <= EXPLICIT_RESAMPLE_CAP:
            mat_path = Path(f"{prefix}.dmat")
            write_explicit(SubsetSpace(space, idx).full_distance_matrix(), mat_path)
            desc.update({"kind": "explicit", "matrix": mat_path.name})
            written.append(str(mat_path))
        else:
            src = Path(args.space)
            if args.space.startswith("circle:"):
                raise CliError(EXIT_USAGE, "write", "subset descriptors need a file-backed source space")
            desc.update({"kind": "subset", "parent": str(src.resolve())})
        desc_path.write_text(json.dumps(desc, indent=2, default=_json_default) + "\n", encoding="utf-8")
        written.append(str(desc_path))
    print(f"{args.count} of {space.n} points, covering radius {h.levels[-1].radius:.6g}; wrote " + ", ".join(written))
    return EXIT_OK


def cmd_transfer(args) -> int:
    for p, what in ((args.x, "mesh X"), (args.y, "mesh Y"), (args.perm, "permutation file")):
        _require_file(p, what, "load")
    with stage("load"):
        mx = load_mesh(args.x)
        my = load_mesh(args.y)
        perm = read_permutation(args.perm)
    with stage("transfer"):
        color_transfer_export(mx, my, perm, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


# ----------------------------------------------------------------------------


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pmf", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def threads(p):
        p.add_argument("--threads", type=_positive_int, default=1,
                       help="worker threads for distance columns (results do not depend on it)")

    p = sub.add_parser("fps", help="farthest-point sampling hierarchy")
    p.add_argument("space")
    p.add_argument("--sizes", help="comma-separated level sizes (default: 1000,2000,...,16000,n clipped to n)")
    p.add_argument("--seed", type=int, default=0, help="first sample (default 0)")
    p.add_argument("-o", "--out", required=True)
    threads(p)
    p.set_defaults(func=cmd_fps)

    p = sub.add_parser("match", help="dense bijective correspondence from sparse matches")
    p.add_argument("x", help="source space")
    p.add_argument("y", help="target space")
    p.add_argument("matches", help="'xi eta [weight]' per line")
    p.add_argument("-o", "--out", required=True, help="output prefix")
    p.add_argument("--sigma-rel", type=_positive_float, default=0.02,
                   help="kernel variance relative to the target area (default 0.02)")
    p.add_argument("--iters", type=_positive_int, default=10)
    p.add_argument("--no-fixed-point", action="store_true", help="always run --iters iterations")
    p.add_argument("--solver", choices=("exact", "auction"), default="exact")
    p.add_argument("--multiscale", action="store_true")
    p.add_argument("--schedule", help="comma-separated level sizes ending at n")
    p.add_argument("--seed-x", type=int, help="FPS seed on X (default: first match)")
    p.add_argument("--seed-y", type=int, help="FPS seed on Y (default: image of the first match)")
    p.add_argument("--level-iters", type=_positive_int, default=1)
    p.add_argument("--widen", choices=("widen", "fail"), default="widen",
                   help="on an infeasible mask, widen it or stop")
    threads(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="geodesic error curve against a ground-truth map")
    p.add_argument("perm")
    p.add_argument("truth")
    p.add_argument("y", help="target space")
    p.add_argument("-o", "--out", help="curve CSV (default: <perm prefix>.curve.csv)")
    p.add_argument("--diameter", type=_positive_float, help="normalizing diameter (default: FPS estimate)")
    threads(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("resample", help="FPS-subsample a space to a target point count")
    p.add_argument("space")
    p.add_argument("count", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True, help="output prefix")
    threads(p)
    p.set_defaults(func=cmd_resample)

    p = sub.add_parser("transfer", help="color Y by X's coordinates through a map")
    p.add_argument("x")
    p.add_argument("y")
    p.add_argument("perm")
    p.add_argument("out")
    p.set_defaults(func=cmd_transfer)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CliError as e:
        print(f"pmf {args.command}: [{e.stage}] {e}", file=sys.stderr)
        return e.code
    except Exception as e:  # pragma: no cover - last resort
        print(f"pmf {args.command}: [internal] {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
