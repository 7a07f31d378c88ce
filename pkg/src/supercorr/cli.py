"""Command line entry point: ``supercorr simulate | sweep | validate``.

Scenario files are strict JSON; unknown keys are rejected. Example::

    {
      "geometry":   {"kind": "chain", "N": 8, "a": 0.2, "polarization": "circular"},
      "reservoir":  {"type": "free_space"},
      "method":     "cumulant3",
      "integrator": {"rel_tol": 1e-6, "t_max": 5.0},
      "output":     {"dir": "out"}
    }

In sweep configs ``geometry.N``, ``geometry.a`` and ``reservoir.ka`` may be
lists; every combination becomes one point.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .couplings import build_dicke, build_free_space, build_waveguide
from .errors import CapacityError, DomainError, IntegrationError, ParseError, SupercorrError
from .geometry import build_lattice, load_custom
from .integrate import IntegratorConfig
from .liouville import DEFAULT_CAP

log = logging.getLogger("supercorr")

THREADS_ENV = "SUPERCORR_THREADS"
METHODS = ("exact", "exact_with_hamiltonian", "dicke", "cumulant2", "cumulant3")
RESERVOIRS = ("free_space", "waveguide", "dicke")
SOFT_LIMITS = {"cumulant2": 400, "cumulant3": 200}
PEAK_COLUMNS = ("method", "N", "a", "ka", "pol", "R_peak", "t_peak", "boundary", "status", "walltime_s")

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

_GEOMETRY_KEYS = {"kind", "N", "dims", "a", "polarization", "path"}
_RESERVOIR_KEYS = {"type", "ka"}
_OUTPUT_KEYS = {"dir", "trajectory"}
_TOP_KEYS = {"geometry", "reservoir", "method", "integrator", "output", "cap"}


class ConfigError(SupercorrError):
    pass


def fmt(x) -> str:
    """17 significant digits for floats; empty string for missing values."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


# ---------------------------------------------------------------------------
# config parsing

@dataclass
class Point:
    """One fully specified simulation."""

    method: str
    kind: str
    n: int
    dims: tuple | None = None
    a: float | None = None
    ka: float | None = None
    polarization: str | None = None
    path: str | None = None
    reservoir: str = "free_space"
    cap: int = DEFAULT_CAP
    integrator: dict = field(default_factory=dict)

    def label(self):
        parts = [self.method, f"N{self.n}"]
        if self.a is not None:
            parts.append(f"a{self.a:g}")
        if self.ka is not None:
            parts.append(f"ka{self.ka:.6g}")
        return "_".join(parts)


@dataclass
class Scenario:
    points: list
    out_dir: Path
    write_trajectory: bool
    raw: dict


def _reject_unknown(section, allowed, where):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    extra = sorted(set(section) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _as_list(v, name, allow_list):
    if isinstance(v, list):
        if not allow_list:
            raise ConfigError(f"{name} must be a scalar for simulate (lists are for sweep)")
        if not v:
            raise ConfigError(f"{name} list is empty")
        return v
    return [v]


def _num(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{name} must be a finite number, got {v!r}")
    return float(v)


def _count(v, name):
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(f"{name} must be a positive integer, got {v!r}")
    return v


def _lattice_dims(kind, n, dims):
    if dims is not None:
        if not isinstance(dims, list) or not all(isinstance(x, int) and x >= 1 for x in dims):
            raise ConfigError(f"dims must be a list of positive integers, got {dims!r}")
        return tuple(dims)
    if kind in ("chain", "ring"):
        return (n,)
    power = {"square": 2, "cube": 3}[kind]
    side = round(n ** (1.0 / power))
    if side**power != n:
        raise ConfigError(f"N={n} is not a perfect {'square' if power == 2 else 'cube'}; give dims")
    return (side,) * power


def parse_config(raw: dict, *, sweep: bool, out_override=None) -> Scenario:
    _reject_unknown(raw, _TOP_KEYS, "config")
    for key in ("geometry", "method"):
        if key not in raw:
            raise ConfigError(f"missing required section {key!r}")
    method = raw["method"]
    if method not in METHODS:
        raise ConfigError(f"method must be one of {', '.join(METHODS)}, got {method!r}")
    cap = raw.get("cap", DEFAULT_CAP)
    cap = _count(cap, "cap")

    res = raw.get("reservoir", {"type": "free_space"})
    _reject_unknown(res, _RESERVOIR_KEYS, "reservoir")
    rtype = res.get("type", "free_space")
    if rtype not in RESERVOIRS:
        raise ConfigError(f"reservoir.type must be one of {', '.join(RESERVOIRS)}, got {rtype!r}")
    if rtype == "waveguide":
        if "ka" not in res:
            raise ConfigError("waveguide reservoir needs ka")
        kas = [_num(k, "reservoir.ka") for k in _as_list(res["ka"], "reservoir.ka", sweep)]
    else:
        if "ka" in res:
            raise ConfigError(f"ka is only valid for the waveguide reservoir, not {rtype}")
        kas = [None]

    geo = raw["geometry"]
    _reject_unknown(geo, _GEOMETRY_KEYS, "geometry")
    kind = geo.get("kind", "chain")
    pol = geo.get("polarization")
    if rtype == "free_space":
        if kind not in ("chain", "ring", "square", "cube", "custom"):
            raise ConfigError(f"geometry.kind must be chain, ring, square, cube or custom, got {kind!r}")
        if pol is None:
            pol = "linear"
        if pol not in ("linear", "circular"):
            raise ConfigError(f"polarization must be 'linear' or 'circular', got {pol!r}")
    else:
        for key in ("a", "polarization", "path", "dims"):
            if key in geo:
                raise ConfigError(f"geometry.{key} has no meaning for the {rtype} reservoir")
        if kind != "chain":
            raise ConfigError(f"the {rtype} reservoir only supports geometry.kind 'chain'")

    integ = raw.get("integrator", {})
    _reject_unknown(integ, {f.name for f in fields(IntegratorConfig)}, "integrator")
    try:
        IntegratorConfig(**integ)
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"integrator: {exc}") from None

    points = []
    if kind == "custom":
        if "path" not in geo:
            raise ConfigError("custom geometry needs a path")
        for key in ("N", "dims", "a"):
            if key in geo:
                raise ConfigError(f"geometry.{key} is not used with a custom path")
        try:
            arr = load_custom(geo["path"])
        except ParseError as exc:
            raise ConfigError(f"custom geometry: {exc}") from None
        points.append(Point(method, "custom", arr.n, path=str(geo["path"]),
                            polarization="custom", cap=cap, integrator=integ))
    else:
        if "path" in geo:
            raise ConfigError("geometry.path is only valid with kind 'custom'")
        if "N" not in geo and "dims" not in geo:
            raise ConfigError("geometry needs N or dims")
        if "dims" in geo and sweep and isinstance(geo.get("N"), list):
            raise ConfigError("give either an N list or dims, not both")
        if "dims" in geo:
            dims0 = _lattice_dims(kind, None, geo["dims"])
            ns = [int(np.prod(dims0))]
            if "N" in geo and geo["N"] != ns[0]:
                raise ConfigError(f"N={geo['N']} disagrees with dims {list(dims0)}")
        else:
            ns = [_count(n, "geometry.N") for n in _as_list(geo["N"], "geometry.N", sweep)]
        if rtype == "free_space":
            if "a" not in geo:
                raise ConfigError("free-space geometry needs a spacing a")
            spacings = [_num(a, "geometry.a") for a in _as_list(geo["a"], "geometry.a", sweep)]
        else:
            spacings = [None]
        for n, a, ka in itertools.product(ns, spacings, kas):
            dims = _lattice_dims(kind, n, geo.get("dims")) if rtype == "free_space" else None
            points.append(Point(method, kind, n, dims, a, ka, pol if rtype == "free_space" else None,
                                None, rtype, cap, integ))

    for p in points:
        _check_point(p)
    if sweep and len(points) < 2:
        raise ConfigError("sweep needs at least one list-valued axis (geometry.N, geometry.a or reservoir.ka)")

    out = raw.get("output", {})
    _reject_unknown(out, _OUTPUT_KEYS, "output")
    out_dir = Path(out_override or out.get("dir", "supercorr_out"))
    write_traj = out.get("trajectory", not sweep)
    if not isinstance(write_traj, bool):
        raise ConfigError("output.trajectory must be true or false")
    return Scenario(points, out_dir, write_traj, raw)


def _check_point(p: Point):
    if p.method in ("exact", "exact_with_hamiltonian") and p.n > p.cap:
        raise ConfigError(f"exact methods are capped at N={p.cap} (got N={p.n}); raise 'cap' explicitly")
    if p.method == "dicke":
        ok = p.reservoir == "dicke" or (
            p.reservoir == "waveguide" and abs(math.remainder(p.ka, 2 * math.pi)) < 1e-9)
        if not ok:
            raise ConfigError("method 'dicke' needs the dicke reservoir or a waveguide with ka a multiple of 2*pi")
    limit = SOFT_LIMITS.get(p.method)
    if limit is not None and p.n > limit:
        log.warning("%s with N=%d is beyond the tested range (N <= %d)", p.method, p.n, limit)
    if p.method == "cumulant3" and p.n < 3 or p.method == "cumulant2" and p.n < 2:
        log.warning("N=%d is below the closure order; the exact solver is used instead", p.n)


# ---------------------------------------------------------------------------
# running

def build_model(p: Point, with_hamiltonian=False):
    if p.reservoir == "dicke":
        return build_dicke(p.n)
    if p.reservoir == "waveguide":
        return build_waveguide(p.n, p.ka)
    arr = load_custom(p.path) if p.kind == "custom" else build_lattice(p.kind, p.dims, p.a, p.polarization)
    return build_free_space(arr, include_hamiltonian=with_hamiltonian)


def run_point(p: Point):
    """Run one point; returns (trajectory or None, peak row dict, error message)."""
    from .cumulants import evolve_moments
    from .dicke import evolve_ladder
    from .liouville import evolve_exact
    from .peaks import find_peak

    config = IntegratorConfig(**p.integrator)
    row = {"method": p.method, "N": p.n, "a": p.a, "ka": p.ka, "pol": p.polarization,
           "R_peak": None, "t_peak": None, "boundary": None, "status": "ok", "walltime_s": None}
    t0 = time.perf_counter()
    traj, err = None, None
    try:
        if p.method == "dicke":
            traj = evolve_ladder(p.n, config)
        elif p.method.startswith("exact"):
            withh = p.method == "exact_with_hamiltonian"
            traj = evolve_exact(build_model(p, withh), withh, config, cap=p.cap)
        else:
            traj = evolve_moments(build_model(p), int(p.method[-1]), config)
    except IntegrationError as exc:
        err = str(exc)
        traj = exc.partial
        row["status"] = "failed: " + err
    except (DomainError, CapacityError, ParseError) as exc:
        err = str(exc)
        row["status"] = "error: " + err
    row["walltime_s"] = time.perf_counter() - t0
    if traj is not None and len(traj.t) >= 3:
        try:
            pk = find_peak(traj)
            row.update(R_peak=pk.r_peak, t_peak=pk.t_peak, boundary=pk.boundary_peak)
        except DomainError as exc:
            log.debug("no peak for %s: %s", p.label(), exc)
    return traj, row, err


def _run_point_packed(p):
    traj, row, err = run_point(p)
    packed = None
    if traj is not None:
        packed = (np.asarray(traj.t), np.asarray(traj.rate), np.asarray(traj.n_exc), traj.meta)
    return packed, row, err


def write_trajectory(path: Path, t, rate, n_exc):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "R", "N_exc"))
        for row in zip(t, rate, n_exc):
            w.writerow([fmt(float(x)) for x in row])


def write_peaks(path: Path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PEAK_COLUMNS)
        for r in rows:
            w.writerow([fmt(r[c]) for c in PEAK_COLUMNS])


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def scaling_series(rows):
    """fit_scaling per (method, a or ka, polarization) series with >= 3 successful points."""
    from .peaks import fit_scaling

    groups: dict = {}
    for r in rows:
        key = (r["method"], r["a"], r["ka"], r["pol"])
        groups.setdefault(key, []).append(r)
    out = []
    for (method, a, ka, pol), rs in groups.items():
        entry = {"method": method, "a": a, "ka": ka, "pol": pol,
                 "N": [r["N"] for r in rs], "R_peak": [r["R_peak"] for r in rs],
                 "t_peak": [r["t_peak"] for r in rs]}
        good = [(r["N"], r["R_peak"]) for r in rs if r["status"] == "ok" and r["R_peak"]]
        if len({n for n, _ in good}) >= 3:
            try:
                entry["fit"] = fit_scaling(good).to_dict()
            except DomainError as exc:
                entry["fit_error"] = str(exc)
        else:
            entry["fit_error"] = "fewer than 3 distinct successful N values"
        out.append(entry)
    return out


def resolve_threads(arg):
    if arg is not None:
        return max(1, int(arg))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
    return 1


def _load(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def _run_meta(scn, extra):
    return _json_safe({"config": scn.raw, **extra})


def cmd_simulate(args) -> int:
    scn = parse_config(_load(args.config), sweep=False, out_override=args.out)
    (p,) = scn.points
    scn.out_dir.mkdir(parents=True, exist_ok=True)
    traj, row, err = run_point(p)
    if traj is not None and scn.write_trajectory:
        write_trajectory(scn.out_dir / "trajectory.csv", traj.t, traj.rate, traj.n_exc)
    write_peaks(scn.out_dir / "peaks.csv", [row])
    meta = traj.meta if traj is not None else {}
    (scn.out_dir / "run.json").write_text(json.dumps(_run_meta(scn, {"meta": meta, "peak": row}), indent=2) + "\n")
    if err:
        print(f"supercorr: {row['status']}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{p.label()}: R_peak={fmt(row['R_peak'])} t_peak={fmt(row['t_peak'])} "
          f"({row['walltime_s']:.2f} s) -> {scn.out_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    scn = parse_config(_load(args.config), sweep=True, out_override=args.out)
    scn.out_dir.mkdir(parents=True, exist_ok=True)
    threads = resolve_threads(args.threads)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_point_packed, scn.points))
    else:
        results = [_run_point_packed(p) for p in scn.points]

    rows = []
    metas = []
    for p, (packed, row, err) in zip(scn.points, results):
        rows.append(row)
        if err:
            log.warning("%s: %s", p.label(), err)
        if packed is not None:
            metas.append(packed[3])
            if scn.write_trajectory:
                tdir = scn.out_dir / "trajectories"
                tdir.mkdir(exist_ok=True)
                write_trajectory(tdir / f"{p.label()}.csv", *packed[:3])
        print(f"{p.label()}: {row['status']} R_peak={fmt(row['R_peak'])} t_peak={fmt(row['t_peak'])}")
    write_peaks(scn.out_dir / "peaks.csv", rows)
    series = scaling_series(rows)
    (scn.out_dir / "scaling.json").write_text(json.dumps(_json_safe(series), indent=2) + "\n")
    (scn.out_dir / "run.json").write_text(
        json.dumps(_run_meta(scn, {"threads": threads, "points": metas}), indent=2) + "\n")
    return EXIT_OK if any(r["status"] == "ok" for r in rows) else EXIT_RUNTIME


def cmd_validate(args) -> int:
    from .validation import run_checks

    only = None
    if args.only:
        try:
            only = {int(x) for x in args.only.split(",")}
        except ValueError:
            raise ConfigError(f"--only expects comma-separated check numbers, got {args.only!r}") from None
    results = run_checks(only=only, threads=resolve_threads(args.threads), echo=print)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "validate.json").write_text(json.dumps(_json_safe([r.to_dict() for r in results]), indent=2) + "\n")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_VALIDATION


def build_parser():
    ap = argparse.ArgumentParser(prog="supercorr", description="Superradiant burst simulator")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker processes (default: ${THREADS_ENV} or 1)")
    common.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    for name, hlp in (("simulate", "run one scenario"), ("sweep", "run a parameter sweep")):
        sp = sub.add_parser(name, parents=[common], help=hlp)
        sp.add_argument("-c", "--config", required=True, help="scenario JSON file")
    sp = sub.add_parser("validate", parents=[common], help="run the acceptance checks")
    sp.add_argument("--only", default=None, help="comma-separated check numbers, e.g. 1,3,9")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"simulate": cmd_simulate, "sweep": cmd_sweep, "validate": cmd_validate}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"supercorr: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
