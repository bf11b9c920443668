"""Command-line front end: run, curvature, verify, limits.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical
failure during a run, 4 verification failure.

Config files are flat key=value text ('#' starts a comment).  Every run
writes a manifest whose content hash covers the resolved configuration,
the package version, and the calibration constants in effect, but not
wall-clock times: rerunning the same config reproduces the same output
filenames and bit-identical CSV bytes.
"""

import argparse
import hashlib
import json
import os
import sys
import time as _time

import numpy as np

from . import __version__
from .calibration import UNIT_CIRCLE_HS, UNIT_DISK_PER_S
from .errors import (
    ConfigInvalid,
    CurveDegenerate,
    NumericalBreakdown,
    StepCollapse,
)
from .flow import _SPEED_KINDS, FlowConfig, run, speed_function
from .geometry import (
    build_curve,
    circle_points,
    ellipse_points,
    resample,
    rounded_polygon_points,
)
from .nonlocal_ops import KernelPolicy, _order, a2_all, h_s_all, laplace_all
from .diagnostics import (
    DiagnosticsObserver,
    write_checks_csv,
    write_records_csv,
)

_SHAPE_KINDS = ("circle", "ellipse", "rounded_polygon")

# config schema: key -> (caster tag, default); None default means the key
# is required (or, for shape.a/shape.b/speed.p/seed, resolved per kind)
_SCHEMA = {
    "shape.kind": ("str", None),
    "shape.a": ("float", None),
    "shape.b": ("float", None),
    "s": ("float", None),
    "speed.kind": ("str", "identity"),
    "speed.p": ("float", None),
    "n_points": ("int", 512),
    "cfl": ("float", 0.2),
    "t_end": ("float", None),
    "renormalize": ("bool", True),
    "resample_every": ("int", 25),
    "window_m": ("int", 2),
    "seed": ("int", None),
    "out_stride": ("int", 100),
}
_REQUIRED = ("shape.kind", "s", "t_end")

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def parse_config_text(text):
    """Parse key=value lines into a raw string dict.

    Raises ConfigInvalid on malformed lines, duplicate keys, or keys
    outside the schema.
    """
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        if not sep:
            raise ConfigInvalid(
                f"line {lineno}: expected key=value, got {body!r}")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            raise ConfigInvalid(f"unknown config key {key!r} (line {lineno})")
        if key in raw:
            raise ConfigInvalid(f"duplicate config key {key!r} (line {lineno})")
        if not value:
            raise ConfigInvalid(f"{key}: empty value (line {lineno})")
        raw[key] = value
    return raw


def _cast(key, value):
    tag = _SCHEMA[key][0]
    if tag == "str":
        return value
    if tag == "bool":
        low = value.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigInvalid(f"{key}: expected a boolean, got {value!r}")
    try:
        return int(value) if tag == "int" else float(value)
    except ValueError:
        raise ConfigInvalid(
            f"{key}: expected {'an integer' if tag == 'int' else 'a number'},"
            f" got {value!r}") from None


def resolve_config(raw):
    """Apply types and defaults to a raw string dict.

    Returns a fully resolved dict (every schema key present, typed;
    optional keys may be None).  This resolved form is what the manifest
    echoes, and it re-parses to the same configuration.
    """
    for key in raw:
        if key not in _SCHEMA:
            raise ConfigInvalid(f"unknown config key {key!r}")
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigInvalid(f"missing required config key {key!r}")
    resolved = {}
    for key, (_, default) in _SCHEMA.items():
        resolved[key] = _cast(key, raw[key]) if key in raw else default

    kind = resolved["shape.kind"]
    if kind not in _SHAPE_KINDS:
        raise ConfigInvalid(
            f"shape.kind: unknown shape {kind!r}; choose from "
            f"{', '.join(_SHAPE_KINDS)}")
    if resolved["shape.a"] is None:
        resolved["shape.a"] = {"circle": 1.0, "ellipse": 2.0,
                               "rounded_polygon": 1.0}[kind]
    if resolved["shape.b"] is None:
        resolved["shape.b"] = {"circle": 0.0, "ellipse": 1.0,
                               "rounded_polygon": 0.3}[kind]
    if resolved["shape.a"] <= 0.0:
        raise ConfigInvalid("shape.a: must be positive")
    if kind != "circle" and resolved["shape.b"] <= 0.0:
        raise ConfigInvalid("shape.b: must be positive")
    return resolved


def build_config(resolved):
    """Turn a resolved config dict into (FlowConfig, shape dict, out_stride)."""
    try:
        _order(resolved["s"])
    except ValueError as exc:
        raise ConfigInvalid(f"s: {exc}") from None

    kind = resolved["speed.kind"]
    if kind not in _SPEED_KINDS:
        raise ConfigInvalid(
            f"speed.kind: unknown speed {kind!r}; choose from "
            f"{', '.join(_SPEED_KINDS)}")
    try:
        speed = speed_function(kind, p=resolved["speed.p"])
    except ValueError as exc:
        raise ConfigInvalid(f"speed.p: {exc}") from None

    try:
        policy = KernelPolicy(m=resolved["window_m"])
    except ValueError as exc:
        raise ConfigInvalid(f"window_m: {exc}") from None

    if resolved["out_stride"] < 0:
        raise ConfigInvalid("out_stride: must be >= 0")

    try:
        config = FlowConfig(
            s=resolved["s"],
            speed=speed,
            n_points=resolved["n_points"],
            t_end=resolved["t_end"],
            cfl=resolved["cfl"],
            renormalize_volume=resolved["renormalize"],
            resample_every=resolved["resample_every"],
            policy=policy,
            rng_seed=resolved["seed"],
        )
    except ValueError as exc:
        # FlowConfig names the offending field in its message
        raise ConfigInvalid(str(exc)) from None

    shape = {"kind": resolved["shape.kind"], "a": resolved["shape.a"],
             "b": resolved["shape.b"]}
    return config, shape, resolved["out_stride"]


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config file {path}: {exc}") from None
    return resolve_config(parse_config_text(text))


def seed_curve_from_shape(shape, n_points, tol_convex=1e-10):
    """Build an arc-length-uniform seed polygon for a named shape.

    Non-circular shapes are sampled densely in parameter angle and then
    resampled to equal arcs; seeding runs on a non-uniform grid makes
    the first scheduled resample jump the nonlocal perimeter by more
    than a time step's worth, which breaks the dissipation diagnostics.
    """
    kind = shape["kind"]
    if kind == "circle":
        pts = circle_points(n_points, radius=shape["a"])
        return build_curve(pts, tol_convex=tol_convex)
    dense = max(4 * n_points, 2048)
    if kind == "ellipse":
        pts = ellipse_points(dense, a=shape["a"], b=shape["b"])
    elif kind == "rounded_polygon":
        pts = rounded_polygon_points(dense, k=int(shape.get("k", 6)),
                                     circumradius=shape["a"],
                                     corner_radius=shape["b"])
    else:
        raise ConfigInvalid(f"shape.kind: unknown shape {kind!r}")
    return resample(build_curve(pts, tol_convex=tol_convex), n_points)


def parse_shape_spec(spec):
    """Parse a --shape spec like 'ellipse:a=2,b=1' into a shape dict.

    Kinds and their parameters: circle (r), ellipse (a, b),
    rounded_polygon (k, R, r).
    """
    kind, _, rest = spec.partition(":")
    kind = kind.strip()
    if kind not in _SHAPE_KINDS:
        raise ConfigInvalid(
            f"shape spec: unknown shape {kind!r}; choose from "
            f"{', '.join(_SHAPE_KINDS)}")
    params = {}
    if rest.strip():
        for item in rest.split(","):
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigInvalid(
                    f"shape spec: expected key=value, got {item!r}")
            try:
                params[key.strip()] = float(value)
            except ValueError:
                raise ConfigInvalid(
                    f"shape spec: {key.strip()}: expected a number, got "
                    f"{value.strip()!r}") from None
    allowed = {"circle": {"r"}, "ellipse": {"a", "b"},
               "rounded_polygon": {"k", "R", "r"}}[kind]
    for key in params:
        if key not in allowed:
            raise ConfigInvalid(
                f"shape spec: {kind} takes {sorted(allowed)}, got {key!r}")
    if kind == "circle":
        shape = {"kind": kind, "a": params.get("r", 1.0), "b": 0.0}
    elif kind == "ellipse":
        shape = {"kind": kind, "a": params.get("a", 2.0),
                 "b": params.get("b", 1.0)}
    else:
        shape = {"kind": kind, "a": params.get("R", 1.0),
                 "b": params.get("r", 0.3), "k": params.get("k", 6.0)}
    if shape["a"] <= 0 or (kind != "circle" and shape["b"] <= 0):
        raise ConfigInvalid("shape spec: dimensions must be positive")
    return shape


# ---------------------------------------------------------------------------
# manifest

def manifest_payload(resolved):
    """The hashed portion of a run manifest.

    Covers everything that determines the output bytes: resolved config,
    package version, and the calibration constants the kernels use.
    Wall-clock times stay outside so reruns keep their filenames.
    """
    s = resolved["s"]
    return {
        "version": __version__,
        "config": dict(resolved),
        "calibration": {
            "unit_circle_hs": {f"{k:g}": v for k, v in
                               sorted(UNIT_CIRCLE_HS.items())},
            "unit_disk_per_s": {f"{k:g}": v for k, v in
                                sorted(UNIT_DISK_PER_S.items())},
            "per_s_prefactor": "(1-s)/s",
            "per_s_prefactor_value": (1.0 - s) / s,
        },
    }


def content_hash(payload):
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def execute_run(resolved, out_dir):
    """Run a config and write manifest, CSVs, and snapshot JSONL.

    Returns (status, result, observer, paths); status 3 means the run
    aborted on a numerical failure (partial outputs are still written).
    Kept separate from cmd_run so callers can reach the observer.
    """
    config, shape, out_stride = build_config(resolved)
    seed_curve = seed_curve_from_shape(shape, config.n_points,
                                       tol_convex=config.tol_convex)
    observer = DiagnosticsObserver(config, full_every=1, eqh_every=25,
                                   eqh_until=0.15 * config.t_end)

    payload = manifest_payload(resolved)
    digest = content_hash(payload)
    run_id = digest[:12]
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "manifest": os.path.join(out_dir, f"manifest_{run_id}.json"),
        "diagnostics": os.path.join(out_dir, f"diagnostics_{run_id}.csv"),
        "checks": os.path.join(out_dir, f"checks_{run_id}.csv"),
        "snapshots": os.path.join(out_dir, f"snapshots_{run_id}.jsonl"),
    }

    started = _time.time()
    status = 0
    failure = ""
    result = None
    try:
        result = run(seed_curve, config, observer=observer,
                     snapshot_stride=out_stride)
    except (StepCollapse, CurveDegenerate, NumericalBreakdown) as exc:
        status = 3
        failure = f"{type(exc).__name__}: {exc}"
    finished = _time.time()

    write_records_csv(observer.records, paths["diagnostics"])
    write_checks_csv(observer.checks, paths["checks"])
    with open(paths["snapshots"], "w", encoding="utf-8") as fh:
        if result is not None:
            for t, snap in zip(result.snapshot_times, result.snapshots):
                row = {"time": t, "points": snap.curve.points.tolist()}
                fh.write(json.dumps(row, separators=(",", ":")) + "\n")

    manifest = dict(payload)
    manifest["content_hash"] = digest
    manifest["run_id"] = run_id
    manifest["outputs"] = {k: os.path.basename(v) for k, v in paths.items()
                           if k != "manifest"}
    manifest["wall_time"] = {
        "started_utc": _time.strftime("%Y-%m-%dT%H:%M:%SZ",
                                      _time.gmtime(started)),
        "elapsed_seconds": finished - started,
    }
    manifest["exit_status"] = status
    if failure:
        manifest["failure"] = failure
    if result is not None:
        manifest["totals"] = {
            "steps": result.total_steps,
            "repairs": result.repairs,
            "records": len(observer.records),
            "snapshots": len(result.snapshots),
        }
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return status, result, observer, paths


def cmd_run(config_path, out_dir):
    resolved = load_config(config_path)
    status, result, observer, paths = execute_run(resolved, out_dir)
    if status != 0:
        print(f"run {os.path.basename(paths['manifest'])}: numerical "
              f"failure; partial outputs written to {out_dir}",
              file=sys.stderr)
        return status
    final = observer.records[-1]
    print(f"run {paths['manifest'].rsplit('_', 1)[-1][:12]}: "
          f"{result.total_steps} steps to t={final.time:g}, "
          f"{result.repairs} repairs")
    print(f"final: area={final.area:.12g} per_s={final.per_s:.12g} "
          f"sphere_dev={final.sphere_dev:.3e} hs_spread={final.hs_spread:.3e}")
    for key in ("manifest", "diagnostics", "checks", "snapshots"):
        print(f"wrote {paths[key]}")
    return 0


def cmd_curvature(shape_spec, s, n):
    try:
        _order(s)
    except ValueError as exc:
        raise ConfigInvalid(f"s: {exc}") from None
    if n < 16:
        raise ConfigInvalid("n: need at least 16 points")
    shape = parse_shape_spec(shape_spec)
    curve = seed_curve_from_shape(shape, n)
    h = h_s_all(curve, s)
    a2 = a2_all(curve, s)
    arclen = np.concatenate(([0.0], np.cumsum(curve.edge_lengths[:-1])))
    print("index,arclength,x,y,h_s,nonlocal_a2")
    for i in range(curve.n):
        print(f"{i},{arclen[i]:.17g},{curve.points[i, 0]:.17g},"
              f"{curve.points[i, 1]:.17g},{h[i]:.17g},{a2[i]:.17g}")
    return 0


def _neville_at_zero(eps, vals):
    """Polynomial extrapolation of vals(eps) to eps=0."""
    eps = np.asarray(eps, dtype=float)
    table = np.asarray(vals, dtype=float).copy()
    k = len(table)
    for level in range(1, k):
        for i in range(k - level):
            table[i] = (eps[i + level] * table[i]
                        - eps[i] * table[i + 1]) / (eps[i + level] - eps[i])
    return float(table[0])


def cmd_limits(s_values, n):
    for s in s_values:
        try:
            _order(s)
        except ValueError as exc:
            raise ConfigInvalid(f"s: {exc}") from None
    if n < 16:
        raise ConfigInvalid("n: need at least 16 points")
    curve = build_curve(circle_points(n))
    f = curve.points[:, 0].copy()  # cos(theta) on the unit circle
    w = curve.weights
    norm = float(np.sum(w * f * f))
    rows = []
    for s in sorted(s_values):
        scale = 2.0 * s * (1.0 - s)
        lap = scale * laplace_all(curve, s, f)
        # coefficient of -cos(theta): the scaled operator tends to 2 f''
        lap_coeff = float(np.sum(w * lap * (-f)) / norm)
        a2_mean = scale * float(np.sum(w * a2_all(curve, s)) / np.sum(w))
        rows.append((s, lap_coeff, a2_mean))
    print("s,scaled_laplace_coeff,scaled_a2_mean")
    for s, lc, am in rows:
        print(f"{s:g},{lc:.12g},{am:.12g}")
    if len(rows) >= 2:
        eps = [1.0 - r[0] for r in rows]
        lap_lim = _neville_at_zero(eps, [r[1] for r in rows])
        a2_lim = _neville_at_zero(eps, [r[2] for r in rows])
        print(f"extrapolated,{lap_lim:.12g},{a2_lim:.12g}")
    # planar limits: 2 f'' projects to coefficient 2, and 2 kappa^2 = 2
    # on the unit circle
    print("analytic_target,2,2")
    return 0


def cmd_verify(level):
    from .verify import run_battery
    return run_battery(level)


def _apply_thread_env():
    raw = os.environ.get("FRACFLOW_THREADS", "").strip()
    if not raw:
        return
    try:
        count = int(raw)
    except ValueError:
        raise ConfigInvalid(
            f"FRACFLOW_THREADS: expected an integer, got {raw!r}") from None
    if count < 0:
        raise ConfigInvalid("FRACFLOW_THREADS: must be >= 0")
    if count > 0:
        import numba
        numba.set_num_threads(count)


def _parser():
    p = argparse.ArgumentParser(
        prog="fracflow",
        description="Volume-preserving fractional curvature flow of convex "
                    "plane curves.")
    sub = p.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="run a flow from a config file")
    p_run.add_argument("--config", required=True, help="key=value config file")
    p_run.add_argument("--out", required=True, help="output directory")

    p_curv = sub.add_parser(
        "curvature", help="print per-vertex nonlocal curvature for a shape")
    p_curv.add_argument("--shape", default="circle:r=1",
                        help="shape spec, e.g. ellipse:a=2,b=1")
    p_curv.add_argument("--s", type=float, default=0.5,
                        help="fractional order in (0,1)")
    p_curv.add_argument("--n", type=int, default=1024,
                        help="number of vertices")

    p_ver = sub.add_parser("verify", help="run the acceptance battery")
    p_ver.add_argument("--level", choices=("fast", "full"), default="fast")

    p_lim = sub.add_parser(
        "limits", help="table of scaled operators on the unit circle "
                       "approaching s=1")
    p_lim.add_argument("--s", default="0.9,0.99,0.999",
                       help="comma-separated s values")
    p_lim.add_argument("--n", type=int, default=2048,
                       help="number of vertices")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        _apply_thread_env()
        if args.cmd == "run":
            return cmd_run(args.config, args.out)
        if args.cmd == "curvature":
            return cmd_curvature(args.shape, args.s, args.n)
        if args.cmd == "verify":
            return cmd_verify(args.level)
        if args.cmd == "limits":
            try:
                s_values = [float(tok) for tok in args.s.split(",") if tok]
            except ValueError:
                raise ConfigInvalid(
                    f"s: expected comma-separated numbers, got "
                    f"{args.s!r}") from None
            if not s_values:
                raise ConfigInvalid("s: no values given")
            return cmd_limits(s_values, args.n)
        raise AssertionError(f"unhandled command {args.cmd!r}")
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (StepCollapse, CurveDegenerate, NumericalBreakdown) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
