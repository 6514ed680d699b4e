"""Command-line entry point ``drivenscatter``.

Every subcommand reads an optional ``--config`` file (``key=value`` lines),
writes its CSV/JSON results and a ``*.manifest.json`` listing each output
with its sha256 digest. Exit status is 0 on success, 1 on usage errors and
2 on runtime errors.

Config keys and defaults::

    potential=v1   driver=f2   omega=0.7   e0=1.0   nu=0.8   envelope_n=340
    dt=T/2000 (none)   escape_x=50   t_noreturn=200 T (none)   max_steps=2e9
    x0=0   v0=0   k_max=500   cutoff_periods=500   seed=0

The worker count defaults to the usable CPUs; ``DRIVENSCATTER_WORKERS``
overrides it and ``--workers`` overrides both.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path
from typing import Dict, Optional, Sequence

from . import __version__
from .dynamics import Driver, DynamicsError, SystemConfig
from .io import (
    ParseError, RunManifest, ValidationError, config_to_dict, load_config, write_csv,
    write_json,
)
from .parallel import worker_count
from .plotting import MissingColumn, PlotKind, PlotSpec, default_specs, emit_plot

__all__ = ["main", "run_command", "UsageError"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class _Run:
    """Bookkeeping shared by the subcommands: config, outputs, manifest."""

    def __init__(self, args, config: SystemConfig, run: Dict):
        self.args = args
        self.config = config
        self.run = run
        self.workers = worker_count(args.workers)
        self.out = Path(args.out)
        self.manifest = RunManifest(args.command, config_to_dict(config), dict(run),
                                    code_version=__version__, workers=self.workers)
        self.t0 = time.perf_counter()

    def sibling(self, suffix: str) -> Path:
        return self.out.with_name(self.out.stem + suffix)

    def csv(self, path, header, rows) -> Path:
        p = write_csv(path, header, rows)
        self.manifest.add_output(p)
        return p

    def json(self, path, obj) -> Path:
        p = write_json(path, obj)
        self.manifest.add_output(p)
        return p

    def finish(self, complete: bool = True) -> Path:
        self.manifest.wall_time = time.perf_counter() - self.t0
        self.manifest.complete = complete
        return self.manifest.write(self.sibling(".manifest.json"))


def _need(cond: bool, message: str) -> None:
    if not cond:
        raise UsageError(message)


# ---------------------------------------------------------------------------
# scattering scans

SWEEP_HEADER = ["input", "n_c", "h0_final", "delay_time", "classification", "regular",
                "escape_time", "error"]


def _sweep_rows(recs):
    return [(r.input, r.n_c, r.h0_final, r.delay_time, r.classification, r.regular,
             r.escape_time, r.error or "") for r in recs]


def _write_sweep(ctx: _Run, recs, hierarchy: bool) -> None:
    from .scattering import DegenerateScan, segment_intervals, smooth_nc_jumps, validate_hierarchy

    ctx.csv(ctx.out, SWEEP_HEADER, _sweep_rows(recs))
    if ctx.args.h0_samples:
        rows = [(r.input, k, h) for r in recs for k, h in enumerate(r.h0_out)]
        ctx.csv(ctx.sibling(".h0.csv"), ["input", "k", "h0"], rows)
    try:
        seg = segment_intervals(recs)
    except DegenerateScan as exc:
        ctx.json(ctx.sibling(".segmentation.json"), {"degenerate": str(exc)})
        return
    info = {"segmentation": seg.to_dict(),
            "smooth_jumps": [list(j) for j in smooth_nc_jumps(seg)]}
    if hierarchy:
        info["hierarchy"] = validate_hierarchy(seg).to_dict()
    ctx.json(ctx.sibling(".segmentation.json"), info)


def cmd_sweep(ctx: _Run) -> None:
    from .scattering import sweep

    a = ctx.args
    _need(a.samples >= 2, "samples must be >= 2")
    _need(a.max > a.min, "need --min < --max")
    x0 = ctx.run["x0"] if a.x0 is None else a.x0
    v0 = ctx.run["v0"] if a.v0 is None else a.v0
    recs = sweep(ctx.config, a.axis, a.min, a.max, a.samples, x0=x0, v0=v0,
                 k_max=ctx.run["k_max"], workers=ctx.workers)
    _write_sweep(ctx, recs, hierarchy=a.axis != "e0")


def cmd_e0_sweep(ctx: _Run) -> None:
    from .scattering import sweep

    a = ctx.args
    _need(a.samples >= 2, "samples must be >= 2")
    _need(a.max > a.min, "need --min < --max")
    cfg = ctx.config.with_(driver=Driver.F1, nu=a.nu, envelope_n=a.envelope_n)
    ctx.manifest.config = config_to_dict(cfg)
    recs = sweep(cfg, "e0", a.min, a.max, a.samples, x0=a.x0, v0=a.v0,
                 k_max=ctx.run["k_max"], workers=ctx.workers)
    # the hierarchy is not expected to hold along the amplitude axis
    _write_sweep(ctx, recs, hierarchy=False)


def cmd_grid(ctx: _Run) -> None:
    from .scattering import grid_nc

    a = ctx.args
    _need(a.nx >= 2 and a.nv >= 2, "--nx and --nv must be >= 2")
    _need(a.x0_max > a.x0_min and a.v0_max > a.v0_min, "empty grid range")
    g = grid_nc(ctx.config, (a.x0_min, a.x0_max), (a.v0_min, a.v0_max), a.nx, a.nv,
                k_max=ctx.run["k_max"], workers=ctx.workers)
    rows = [(x, v, g.n_c_field[i, j], g.same_as_neighbors_mask[i, j], g.trapped[i, j])
            for i, x in enumerate(g.x0_axis) for j, v in enumerate(g.v0_axis)]
    ctx.csv(ctx.out, ["x0", "v0", "n_c", "same_as_neighbors", "trapped"], rows)
    ctx.json(ctx.sibling(".summary.json"),
             {"errors": g.errors, "trapped": int(g.trapped.sum()),
              "same_fraction": float(g.same_as_neighbors_mask.mean())})


# ---------------------------------------------------------------------------
# escape statistics

def _ensemble(ctx: _Run):
    from .statistics import EnsembleSpec, run_ensemble

    a = ctx.args
    _need(a.count >= 1, "--count must be >= 1")
    _need(a.v0_max > a.v0_min, "need --v0-min < --v0-max")
    x0 = ctx.run["x0"] if a.x0 is None else a.x0
    ens = EnsembleSpec(x0, a.v0_min, a.v0_max, a.count, a.sampling,
                       seed=ctx.run["seed"] if a.sampling == "uniform_random" else None)
    cutoff = ctx.run["cutoff_periods"] * ctx.config.period
    orbits = run_ensemble(ctx.config, ens, cutoff=cutoff, workers=ctx.workers)
    ctx.csv(ctx.sibling(".orbits.csv"), ["v0", "n_c", "t_first", "t_last", "trapped", "error"],
            [(o.v0, o.n_c, o.t_first, o.t_last, o.trapped, o.error or "") for o in orbits])
    return orbits, cutoff


def _fit_or_note(curve, fit_range):
    from .statistics import InsufficientData, powerlaw_fit

    try:
        return powerlaw_fit(curve, fit_range).to_dict()
    except InsufficientData as exc:
        return {"error": str(exc)}


def cmd_survive(ctx: _Run) -> None:
    from .statistics import default_time_range, survival_curve

    orbits, cutoff = _ensemble(ctx)
    curve = survival_curve(orbits, cutoff, ctx.args.bins)
    ctx.csv(ctx.out, ["t", "N"], zip(curve.abscissa, curve.counts))
    rng = default_time_range(curve, ctx.config.period)
    fit = _fit_or_note(curve, rng)
    ctx.json(ctx.sibling(".fit.json"), {"fit": fit, "size": curve.size, "trapped": curve.trapped,
                                        "excluded": curve.excluded, "cutoff": cutoff})


def cmd_zeros(ctx: _Run) -> None:
    from .statistics import staircase_detect, zeros_curve

    a = ctx.args
    orbits, cutoff = _ensemble(ctx)
    good = [o for o in orbits if o.error is None]
    curve = zeros_curve([o.n_c for o in good], trapped=sum(o.trapped for o in good),
                        excluded=len(orbits) - len(good), cutoff=cutoff)
    ctx.csv(ctx.out, ["n", "N"], zip(curve.abscissa, curve.counts))
    fit = _fit_or_note(curve, (a.n_min, a.n_max))
    ctx.json(ctx.sibling(".fit.json"), {"fit": fit, "staircase": staircase_detect(curve, a.n_max),
                                        "size": curve.size, "trapped": curve.trapped,
                                        "excluded": curve.excluded})


# ---------------------------------------------------------------------------
# return map

def cmd_return_map(ctx: _Run) -> None:
    from .returnmap import SectionPoint, area_check, boundary_bisect

    a = ctx.args
    _need(a.p_max > a.p_min >= 0, "need 0 <= --p-min < --p-max")
    res = boundary_bisect(ctx.config, a.tau, a.p_min, a.p_max, a.direction, tol=a.tol)
    ctx.csv(ctx.out, ["p", "return_time"], res.inside_path)
    info = {"tau": a.tau, "p_boundary": res.p_boundary, "p_inside": res.p_inside,
            "p_outside": res.p_outside, "label": res.label}
    if a.area_samples:
        chk = area_check(ctx.config, SectionPoint(a.center_p, a.center_tau), a.radius,
                         a.area_samples, workers=ctx.workers, seed=ctx.run["seed"])
        info["area"] = {"ratio": chk.ratio, "stderr": chk.stderr,
                        "polygon_ratio": chk.polygon_ratio, "samples": chk.samples}
    ctx.json(ctx.sibling(".boundary.json"), info)


# ---------------------------------------------------------------------------
# saddle geometry

def _mapping(ctx: _Run):
    from .saddle import KickedBarrierMap, StroboMap

    a = ctx.args
    if a.map == "kicked":
        return KickedBarrierMap(a.k)
    return StroboMap(ctx.config, a.phase)


def _fixed_points(ctx: _Run, m):
    from .saddle import find_fixed_points

    a = ctx.args
    fs = find_fixed_points(m, tuple(a.x_range), tuple(a.p_range), tuple(a.seeds),
                           workers=ctx.workers)
    ctx.json(ctx.sibling(".fixed_points.json"), [fp.to_dict() for fp in fs.points])
    return fs


def cmd_manifolds(ctx: _Run) -> None:
    from .saddle import manifold_continuation, sprinkler

    a = ctx.args
    m = _mapping(ctx)
    if a.sprinkler:
        region = (tuple(a.x_range), tuple(a.p_range))
        res = sprinkler(m, region, tuple(a.grid), a.t_stay, workers=ctx.workers)
        rows = [(x, p, 0) for x, p in res.stable] + [(x, p, 1) for x, p in res.unstable]
        ctx.csv(ctx.sibling(".sprinkler.csv"), ["x", "p", "unstable"], rows)
    fs = _fixed_points(ctx, m)
    rows, names = [], []
    for fp in fs.saddles:
        for kind in ("unstable", "stable"):
            for branch in (1, -1):
                c = manifold_continuation(m, fp, kind, branch, a.length, stop_on_blowup=True)
                idx = len(names)
                names.append({"curve": idx, "owner": fp.label, "kind": kind, "branch": branch,
                              "truncated": c.truncated, "order_marks": c.order_marks})
                rows += [(x, p, idx, s) for (x, p), s in zip(c.points, c.arclength)]
    ctx.csv(ctx.out, ["x", "p", "curve", "s"], rows)
    ctx.json(ctx.sibling(".curves.json"), names)


def cmd_gamma(ctx: _Run) -> None:
    from .saddle import development_parameter, fundamental_region

    a = ctx.args
    m = _mapping(ctx)
    fs = _fixed_points(ctx, m)
    fr = fundamental_region(m, fs.by_label("A"), fs.by_label("B"), fs.by_label("inner"),
                            max_arclength=a.length)
    rep = development_parameter(m, fr, a.n)
    ctx.csv(ctx.out, ["x", "p"], list(fr.polygon.exterior.coords))
    ctx.json(ctx.sibling(".gamma.json"),
             {"report": rep.to_dict(), "corners": fr.corners, "area": fr.area,
              "image_area": fr.image_area})


# ---------------------------------------------------------------------------
# plots

def cmd_plot(ctx: _Run) -> None:
    a = ctx.args
    if a.preset:
        spec = default_specs()[a.preset]
    else:
        _need(a.x is not None and a.y is not None, "--x and --y are required without --preset")
        spec = PlotSpec(PlotKind(a.kind), [(a.x, a.y)], value=a.value, group=a.group,
                        hlines=a.hline or [])
    if a.hline and a.preset:
        spec.hlines = list(a.hline)
    p = emit_plot(spec, a.csv, ctx.out)
    ctx.manifest.add_output(p)


# ---------------------------------------------------------------------------

def _parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value config file (defaults when omitted)")
    common.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: DRIVENSCATTER_WORKERS or CPU count)")

    top = _Parser(prog="drivenscatter", description=__doc__.split("\n")[0],
                  epilog=__doc__.split("\n\n", 1)[1], formatter_class=argparse.RawDescriptionHelpFormatter)
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, helptext, out):
        p = sub.add_parser(name, parents=[common], help=helptext, description=helptext)
        p.add_argument("--out", default=out, help=f"primary output (default {out})")
        return p

    p = add("sweep", "scattering function along v0, x0 or e0", "sweep.csv")
    p.add_argument("--axis", choices=("v0", "x0", "e0"), default="v0")
    p.add_argument("--min", type=float, required=True)
    p.add_argument("--max", type=float, required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--x0", type=float, default=None, help="fixed x0 (default from config)")
    p.add_argument("--v0", type=float, default=None, help="fixed v0 (default from config)")
    p.add_argument("--h0-samples", action="store_true",
                   help="also write every stroboscopic energy sample")

    p = add("e0-sweep", "outgoing energy against the amplitude of the finite driver",
            "e0_sweep.csv")
    p.add_argument("--min", type=float, default=0.0)
    p.add_argument("--max", type=float, default=0.8)
    p.add_argument("--samples", type=int, default=1500)
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--v0", type=float, default=1.049)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--envelope-n", type=int, default=360)
    p.add_argument("--h0-samples", action="store_true")

    p = add("grid", "zero-count field on an (x0, v0) grid", "grid.csv")
    p.add_argument("--x0-min", type=float, required=True)
    p.add_argument("--x0-max", type=float, required=True)
    p.add_argument("--v0-min", type=float, required=True)
    p.add_argument("--v0-max", type=float, required=True)
    p.add_argument("--nx", type=int, default=100)
    p.add_argument("--nv", type=int, default=100)

    for name, helptext, out in (("survive", "survival function N(t) and power-law fit", "survive.csv"),
                                ("zeros-dist", "zero-count distribution N(n) and fit", "zeros.csv")):
        p = add(name, helptext, out)
        p.add_argument("--v0-min", type=float, required=True)
        p.add_argument("--v0-max", type=float, required=True)
        p.add_argument("--count", type=int, default=20000)
        p.add_argument("--x0", type=float, default=None)
        p.add_argument("--sampling", choices=("uniform_grid", "uniform_random"),
                       default="uniform_grid")
        if name == "survive":
            p.add_argument("--bins", type=int, default=200)
        else:
            p.add_argument("--n-min", type=float, default=5)
            p.add_argument("--n-max", type=float, default=60)

    p = add("return-map", "no-return boundary along a ray of the section", "return_map.csv")
    p.add_argument("--tau", type=float, default=math.pi)
    p.add_argument("--p-min", type=float, default=0.5)
    p.add_argument("--p-max", type=float, default=3.0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--direction", choices=("forward", "backward"), default="forward")
    p.add_argument("--area-samples", type=int, default=0, help="also run an area check")
    p.add_argument("--center-p", type=float, default=0.6)
    p.add_argument("--center-tau", type=float, default=3.6)
    p.add_argument("--radius", type=float, default=0.2)

    for name, helptext, out in (("manifolds", "period-one saddles and their manifolds", "manifolds.csv"),
                                ("gamma", "fundamental region and development parameter", "region.csv")):
        p = add(name, helptext, out)
        p.add_argument("--map", choices=("strobo", "kicked"), default="strobo")
        p.add_argument("--k", type=float, default=1.6, help="kick strength of the kicked map")
        p.add_argument("--phase", type=float, default=0.0, help="strobe phase")
        p.add_argument("--x-range", type=float, nargs=2, default=(-6.0, 6.0))
        p.add_argument("--p-range", type=float, nargs=2, default=(-2.0, 2.0))
        p.add_argument("--seeds", type=int, nargs=2, default=(25, 9))
        p.add_argument("--length", type=float, default=15.0, help="manifold arclength")
        if name == "manifolds":
            p.add_argument("--sprinkler", action="store_true", help="also write sprinkler clouds")
            p.add_argument("--grid", type=int, nargs=2, default=(2000, 600))
            p.add_argument("--t-stay", type=int, default=6)
        else:
            p.add_argument("--n", type=int, default=2)

    p = add("plot", "SVG figure from a CSV", "plot.svg")
    p.add_argument("--csv", required=True)
    p.add_argument("--preset", choices=sorted(default_specs()))
    p.add_argument("--kind", choices=[k.value for k in PlotKind], default="scatter_xy")
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--value")
    p.add_argument("--group")
    p.add_argument("--hline", type=float, action="append", help="horizontal reference level")
    return top


COMMANDS = {
    "sweep": cmd_sweep, "e0-sweep": cmd_e0_sweep, "grid": cmd_grid, "survive": cmd_survive,
    "zeros-dist": cmd_zeros, "return-map": cmd_return_map, "manifolds": cmd_manifolds,
    "gamma": cmd_gamma, "plot": cmd_plot,
}


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; the return value is the process exit status."""
    try:
        args = _parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help, --version
        return int(exc.code or 0)
    try:
        config, run = load_config(args.config)
        ctx = _Run(args, config, run)
    except (ParseError, ValidationError, OSError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        COMMANDS[args.command](ctx)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        ctx.finish(complete=False)
        print("interrupted: partial manifest written", file=sys.stderr)
        return 2
    except (DynamicsError, MissingColumn, ArithmeticError, RuntimeError, ValueError,
            KeyError, OSError) as exc:
        ctx.finish(complete=False)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    ctx.finish()
    return 0


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
