"""Command-line entry point.

Exit codes: 0 success, 2 bad input (graph, config, arguments), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .boundary import calculus, krein_resolvent, steklov_spectrum
from .effective import build_effective, spectrum as effective_spectrum
from .graph_model import CORPUS, GraphError, corpus_graph, load_graph
from .lab import MODELS, ConfigError, SweepConfig, fit_rate, in_window, read_report, run_sweep, thin_spectrum
from .numerics import DEFAULT_SEED, NumericalError
from .thin_mesh import MeshError, build_mesh

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _graph(arg: str):
    if Path(arg).exists():
        return load_graph(arg)
    if arg in CORPUS:
        return corpus_graph(arg)
    raise GraphError(f"no such graph file or corpus name (corpus: {', '.join(CORPUS)})", arg)


def _pair(text: str, kind=float):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got '{text}'")
    return tuple(kind(p) for p in parts)


def cmd_spectrum(args) -> int:
    g = _graph(args.graph)
    lo, hi = args.window
    if args.thin:
        mesh = build_mesh(g, args.eps, args.nw)
        vals = thin_spectrum(mesh, (lo, hi), 8, 1e-8, DEFAULT_SEED)
        vals = in_window(vals, (lo, hi))
    else:
        vals = effective_spectrum(build_effective(g), (lo, hi))
    for v in vals:
        print(f"{v:.12g}")
    return EXIT_OK


def cmd_steklov(args) -> int:
    g = _graph(args.graph)
    print("eps,vertex,lambda1,lambda2,lambda2_times_eps")
    for eps in args.eps_list:
        mesh = build_mesh(g, eps, args.nw)
        for v in g.vertices:
            l1, l2 = steklov_spectrum(mesh, v.id, 2)
            print(f"{eps:.6g},{v.id},{l1:.6e},{l2:.6e},{abs(l2) * eps:.6e}")
    return EXIT_OK


def cmd_krein(args) -> int:
    g = _graph(args.graph)
    mesh = build_mesh(g, args.eps, args.nw)
    z = complex(*args.z)
    calc = calculus(mesh)
    rng = np.random.default_rng(DEFAULT_SEED)
    f = rng.standard_normal((mesh.n_cells, args.probes)) + 1j * rng.standard_normal((mesh.n_cells, args.probes))
    I = np.eye(mesh.n_trace)
    ref = calc.neumann_resolvent(z, f)
    got = krein_resolvent(mesh, z, 0 * I, I, f)
    res = float(np.linalg.norm(got - ref) / np.linalg.norm(ref))
    print(f"krein residual {res:.3e} (eps={args.eps}, n_w={args.nw}, z={z}, {mesh.n_cells} cells)")
    return EXIT_OK if res <= args.gate else EXIT_NUMERICAL


def cmd_sweep(args) -> int:
    cfg = SweepConfig.load(args.config)
    if args.output:
        cfg.output = str(Path(args.output).resolve())
    report = run_sweep(cfg)
    out = cfg.output_dir()
    for name, fit in report.fits.items():
        if hasattr(fit, "slope"):
            print(f"{name:8s} slope {fit.slope:.4f}  ci95 [{fit.ci95[0]:.3f}, {fit.ci95[1]:.3f}]  "
                  f"residual {fit.residual:.2e}")
        else:
            print(f"{name:8s} {fit['error']}")
    print(f"report written to {out}")
    failed = [r for r in report.records if r.error]
    return EXIT_NUMERICAL if failed and len(failed) == len(report.records) else EXIT_OK


def cmd_rate(args) -> int:
    eps, errs = read_report(args.report)
    fit = fit_rate(eps, errs, args.model)
    print(json.dumps(asdict(fit), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thingraph", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("spectrum", help="eigenvalues of the limiting graph operator or the thin grid")
    s.add_argument("graph", help="graph JSON file or corpus name")
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--effective", action="store_true", help="limiting operator (default)")
    mode.add_argument("--thin", action="store_true", help="Neumann grid operator of the thin domain")
    s.add_argument("--eps", type=float, default=1 / 16)
    s.add_argument("--nw", type=int, default=8)
    s.add_argument("--window", type=_pair, required=True, metavar="A,B")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("steklov", help="two lowest vertex Steklov eigenvalues per vertex")
    s.add_argument("graph")
    s.add_argument("--eps-list", type=float, nargs="+", required=True)
    s.add_argument("--nw", type=int, default=8)
    s.set_defaults(func=cmd_steklov)

    s = sub.add_parser("krein-check", help="Krein formula against a direct Neumann solve")
    s.add_argument("graph")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--z", type=_pair, required=True, metavar="RE,IM")
    s.add_argument("--nw", type=int, default=4)
    s.add_argument("--probes", type=int, default=4)
    s.add_argument("--gate", type=float, default=1e-8)
    s.set_defaults(func=cmd_krein)

    s = sub.add_parser("sweep", help="run an epsilon sweep from a JSON config")
    s.add_argument("config")
    s.add_argument("--output", help="override the config's output directory")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("rate", help="fit the convergence rate of a report.csv")
    s.add_argument("report")
    s.add_argument("--model", choices=MODELS, default="eps-log")
    s.set_defaults(func=cmd_rate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (GraphError, MeshError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
