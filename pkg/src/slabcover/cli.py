"""Command line front end.

    slabcover gen --kind cantor-product --ratio 0.3333333333333333 --depth 3 -o c.msr
    slabcover cover c.msr --delta 0.5 --strategy single:1 -o cover.json
    slabcover collapse c.msr --delta 0.1 -o report.json
    slabcover plot c.msr cover.json -o cover.svg

Every flag may also come from ``--config FILE`` (a JSON object keyed by flag
name); flags given on the command line win.  Exit codes: 0 success, 2 usage,
3 budget or assertion failure (the report is still written), 4 I/O.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import _jit
from .collapse import run_experiment
from .cover import SlabFamily, plan_cover
from .disjoint import SeparatedFamily
from .measures import (
    MeasureFormatError, MeasureValidationError, atomic_write, gen_cantor_lebesgue, gen_cantor_product,
    format_measure, gen_ifs, gen_lebesgue_grid, gen_segment, load_measure,
)

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_IO = 0, 2, 3, 4

KINDS = ("cantor-product", "cantor-lebesgue", "segment", "lebesgue-grid", "ifs")


class IOFailure(Exception):
    pass


def _floats(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def _write(path, text):
    try:
        atomic_write(path, text)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc.strerror or exc}") from None


def _read_measure(path):
    try:
        return load_measure(path)
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc.strerror or exc}") from None
    except (MeasureFormatError, MeasureValidationError) as exc:
        raise IOFailure(f"{path}: {exc}") from None


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise IOFailure(f"{path}: not valid JSON ({exc.msg}, line {exc.lineno})") from None


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


def _generate(args, error):
    kind = args.kind
    if kind is None:
        error("the following arguments are required: --kind")
    try:
        if kind == "cantor-product":
            return gen_cantor_product(args.ratio, args.depth, args.dim, args.seed)
        if kind == "cantor-lebesgue":
            return gen_cantor_lebesgue(args.ratio, args.depth, args.samples, args.seed)
        if kind == "segment":
            return gen_segment(_floats(args.a), _floats(args.b), args.count, args.seed)
        if kind == "lebesgue-grid":
            return gen_lebesgue_grid(args.k, args.dim, args.seed)
        scales = _floats(args.scales)
        offsets = [_floats(row) for row in str(args.offsets).split(";")]
        probs = _floats(args.probabilities) if args.probabilities else [1.0 / len(scales)] * len(scales)
        return gen_ifs(scales, offsets, probs, args.depth, args.seed)
    except (ValueError, TypeError) as exc:
        error(f"invalid measure spec: {exc}")


def cmd_gen(args, error):
    mu = _generate(args, error)
    _write(args.output, format_measure(mu))
    print(f"{mu.count} atoms, mass {mu.total_mass:.17g} -> {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# cover
# ---------------------------------------------------------------------------


def _strategy(args, n, error):
    if args.direction is not None and args.strategy is not None:
        error("give either --direction or --strategy, not both")
    if args.direction is not None:
        if not 1 <= args.direction <= n:
            error(f"--direction must be in 1..{n} for a {n}-dimensional measure")
        return f"single:{args.direction}"
    s = args.strategy or args.default_strategy
    if s.startswith("partition:"):
        labels = _read_json(s.split(":", 1)[1])
        return ("partition", np.asarray(labels, dtype=np.int64))
    if s.startswith("single"):
        _, _, j = s.partition(":")
        try:
            jj = int(j) if j else 1
        except ValueError:
            error(f"bad strategy {s!r}")
        if not 1 <= jj <= n:
            error(f"direction must be in 1..{n} for a {n}-dimensional measure")
    elif s != "greedy":
        error(f"unknown strategy {s!r} (single:J, greedy or partition:FILE)")
    return s


def _profile_path(args):
    if args.profile:
        return args.profile
    root, _ = os.path.splitext(args.output)
    return root + ".profile.json"


def cmd_cover(args, error):
    mu = _read_measure(args.measure)
    strategy = _strategy(args, mu.dimension, error)
    if not args.delta > 0:
        error("--delta must be positive")
    ks = [args.k] if args.k else None
    try:
        rep = plan_cover(mu, args.delta, strategy, k_max=args.k_max, mass_tol=args.mass_tol, ks=ks)
    except ValueError as exc:
        error(str(exc))
    body = rep.to_json(include_slabs=True)
    body["measure"] = os.path.basename(args.measure)
    _write(args.output, _dump(body))
    _write(_profile_path(args), _dump({str(j): p.to_json() for j, p in rep.profiles.items()}))
    status = "ok" if rep.success else "FAILED"
    print(f"cover {status}: k={rep.k} width={rep.total_width:.6g} delta={args.delta:g} "
          f"slabs={sum(rep.ell_k.values())} ({rep.message})")
    return EXIT_OK if rep.success else EXIT_FAIL


# ---------------------------------------------------------------------------
# collapse
# ---------------------------------------------------------------------------


def cmd_collapse(args, error):
    mu = _read_measure(args.measure)
    strategy = _strategy(args, mu.dimension, error)
    if not args.delta > 0:
        error("--delta must be positive")
    try:
        rep = run_experiment(
            mu, args.delta, strategy, k_max=args.k_max, mass_tol=args.mass_tol,
            samples=args.samples, seed=args.seed, fd_step=args.fd_step,
        )
    except ValueError as exc:
        error(str(exc))
    body = rep.to_json()
    body["measure"] = os.path.basename(args.measure)
    _write(args.output, _dump(body))
    det = "n/a" if rep.det_integral is None else f"{rep.det_integral:.6g}"
    print(f"collapse {'pass' if rep.passed else 'FAILED'}: integral det = {det}, "
          f"delta = {args.delta:g} ({rep.message})")
    return EXIT_OK if rep.passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------

SIZE, PAD = 640, 40
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _boundary_sets(doc):
    """(direction, width, evaluate) per slab group found in a cover or report."""
    out = []
    if "families" in doc:
        for f in doc["families"]:
            fam = SlabFamily.from_json(f)
            if len(fam):
                out.append((fam.direction, fam.widths, fam.evaluate, fam.total_width))
    elif "separated" in doc:
        for s in doc["separated"]:
            sep = SeparatedFamily.from_json(s)
            if sep.N:
                out.append((sep.direction, np.full(sep.N, sep.half_width), sep.evaluate, sep.epsilon))
    else:
        raise IOFailure("plot input has neither 'families' nor 'separated'")
    return out


def render_svg(mu, doc) -> str:
    if mu.dimension != 2:
        raise ValueError("plot supports dimension 2 only")
    groups = _boundary_sets(doc)
    lo = min(0.0, float(mu.points.min())) if mu.count else 0.0
    hi = max(1.0, float(mu.points.max())) if mu.count else 1.0
    scale = (SIZE - 2 * PAD) / (hi - lo)

    def px(x):
        return PAD + (x - lo) * scale

    def py(y):
        return SIZE - PAD - (y - lo) * scale

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE + 60}" '
        f'viewBox="0 0 {SIZE} {SIZE + 60}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{px(0):.2f}" y="{py(1):.2f}" width="{scale:.2f}" height="{scale:.2f}" '
        'fill="none" stroke="#999" stroke-dasharray="4 3"/>',
        '<g id="atoms" fill="black">',
    ]
    for x, y in mu.points.tolist():
        out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="1.2"/>')
    out.append("</g>")

    t = np.linspace(lo, hi, 512)
    total_width, total_slabs, legend = 0.0, 0, []
    for gi, (j, widths, evaluate, width_sum) in enumerate(groups):
        color = COLORS[(j - 1) % len(COLORS)]
        vals = evaluate(t[:, None])
        out.append(f'<g id="slabs-{j}-{gi}" fill="none" stroke="{color}" stroke-width="0.8">')
        for i in range(vals.shape[1]):
            for sign in (-1.0, 1.0):
                edge = vals[:, i] + sign * widths[i]
                # direction 1 means x_1 is the graph value over x_2
                pts = zip(edge, t) if j == 1 else zip(t, edge)
                path = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in pts)
                out.append(f'<polyline points="{path}"/>')
        out.append("</g>")
        total_width += width_sum
        total_slabs += vals.shape[1]
        legend.append((color, f"direction {j}: {vals.shape[1]} slabs, width {width_sum:.6g}"))
    legend.insert(0, ("black", f"{mu.count} atoms; slabs: {total_slabs}; total width {total_width:.6g}"))
    for r, (color, text) in enumerate(legend):
        out.append(f'<text x="{PAD}" y="{SIZE - 10 + 18 * r}" font-family="monospace" '
                   f'font-size="12" fill="{color}">{text}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_plot(args, error):
    mu = _read_measure(args.measure)
    if mu.dimension != 2:
        error("plot supports dimension 2 only")
    doc = _read_json(args.cover)
    if "cover" in doc and "families" not in doc and not doc.get("separated"):
        doc = doc["cover"]
    _write(args.output, render_svg(mu, doc))
    print(f"wrote {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of flag values (flags win)")

    p = argparse.ArgumentParser(prog="slabcover", description="Slab covers of singular measures.",
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a measure file")
    g.add_argument("--kind", choices=KINDS)
    g.add_argument("--ratio", type=float, default=1.0 / 3.0)
    g.add_argument("--depth", type=int, default=3)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--samples", type=int, default=16, help="samples per fibre (cantor-lebesgue)")
    g.add_argument("--a", default="0.5,0", help="segment start, comma separated")
    g.add_argument("--b", default="0.5,1", help="segment end, comma separated")
    g.add_argument("--count", type=int, default=256, help="segment atoms")
    g.add_argument("--k", type=int, default=16, help="lebesgue-grid cells per side")
    g.add_argument("--scales", default="0.5,0.5,0.5", help="ifs contraction factors")
    g.add_argument("--offsets", default="0,0;0.5,0;0.25,0.5", help="ifs offsets, rows split by ';'")
    g.add_argument("--probabilities", default=None, help="ifs weights (default uniform)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", default="measure.msr")
    g.set_defaults(func=cmd_gen)

    def run_flags(sp, default_strategy):
        sp.add_argument("measure", help="measure file")
        sp.add_argument("--delta", type=float, required=False, default=None)
        sp.add_argument("--strategy", default=None, help="single:J, greedy or partition:FILE")
        sp.add_argument("--direction", type=int, default=None, help="shorthand for single:J")
        sp.add_argument("--k-max", dest="k_max", type=int, default=2**20)
        sp.add_argument("--mass-tol", dest="mass_tol", type=float, default=1e-12)
        sp.set_defaults(default_strategy=default_strategy)

    c = sub.add_parser("cover", parents=[common], help="plan a slab cover")
    run_flags(c, "single:1")
    c.add_argument("--k", type=int, default=None, help="use this single grid size")
    c.add_argument("-o", "--output", default="cover.json")
    c.add_argument("--profile", default=None, help="chain profile JSON (default: <output>.profile.json)")
    c.set_defaults(func=cmd_cover)

    m = sub.add_parser("collapse", parents=[common], help="run the collapse experiment")
    run_flags(m, "greedy")
    m.add_argument("--fd-step", dest="fd_step", type=float, default=None)
    m.add_argument("--samples", type=int, default=10_000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("-o", "--output", default="report.json")
    m.set_defaults(func=cmd_collapse)

    pl = sub.add_parser("plot", parents=[common], help="draw a 2D cover as SVG")
    pl.add_argument("measure")
    pl.add_argument("cover", help="cover JSON or collapse report JSON")
    pl.add_argument("-o", "--output", default="cover.svg")
    pl.set_defaults(func=cmd_plot)

    return p, {"gen": g, "cover": c, "collapse": m, "plot": pl}


def _apply_config(argv, subs, parser):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = _read_json(known.config)
    if not isinstance(cfg, dict):
        parser.error("config file must hold a JSON object")
    cmd = next((a for a in argv if a in subs), None)
    if cmd is None:
        return
    sp = subs[cmd]
    dests = {a.dest for a in sp._actions}
    values = {}
    for key, val in cfg.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest in ("command", "config"):
            continue
        if dest not in dests:
            sp.error(f"unknown config key {key!r}")
        values[dest] = val
    sp.set_defaults(**values)
    # positional arguments can come from the file too
    for a in sp._actions:
        if not a.option_strings and a.dest in values:
            a.nargs = "?"


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _jit.set_threads(os.environ.get("SLABCOVER_THREADS") or None)
    parser, subs = build_parser()
    try:
        _apply_config(argv, subs, parser)
        args = parser.parse_args(argv)
        sp = subs[args.command]
        if args.command in ("cover", "collapse") and args.delta is None:
            sp.error("the following arguments are required: --delta")
        if args.command != "gen" and args.measure is None:
            sp.error("the following arguments are required: measure")
        return args.func(args, sp.error)
    except IOFailure as exc:
        print(f"slabcover: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
