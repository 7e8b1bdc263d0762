"""``secure-iscc`` command line: run, sweep, audit, presets."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from ..config import PRESETS, ConfigError
from ..model import EveRegion
from ..orchestrator import SCHEMES, audit_feasibility, initialize_state
from .config_io import config_text, load_config
from .runner import EXIT_INFEASIBLE, EXIT_OK, EXIT_SOLVER, SWEEP_AXES, RunSpec, exit_code, load_state, run


def _common(p: argparse.ArgumentParser):
    p.add_argument("--scenario", default="scenario1", help="preset name or path to a JSON config")
    p.add_argument("--scheme", default="proposed", choices=SCHEMES)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=None, help="convergence tolerance in joules")
    p.add_argument("--seed", type=int, default=0, help="seed of the beam randomization draws")
    p.add_argument("--grid", type=int, default=None, help="eavesdropper samples per side")
    p.add_argument("--out", default="results", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="secure-iscc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("run", help="run one scenario and write its result bundle"))

    sw = sub.add_parser("sweep", help="run one cell per value of a sweep axis")
    _common(sw)
    sw.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sw.add_argument("--values", required=True, type=float, nargs="+")
    sw.add_argument("--jobs", type=int, default=1, help="cells run concurrently")

    au = sub.add_parser("audit", help="constraint violations of a result bundle or of the initial point")
    au.add_argument("run_dir", nargs="?", help="cell directory written by run/sweep")
    au.add_argument("--scenario", default="scenario1")
    au.add_argument("--scheme", default="proposed", choices=SCHEMES)
    au.add_argument("--grid", type=int, default=None)

    pr = sub.add_parser("presets", help="list presets or print one as JSON")
    pr.add_argument("name", nargs="?", choices=sorted(PRESETS))
    return parser


def _audit(args) -> int:
    if args.run_dir:
        cfg, state, scheme = load_state(args.run_dir)
    else:
        cfg, scheme = load_config(args.scenario), args.scheme
        if args.grid is not None:
            cfg = cfg.replace(eve_grid=args.grid)
        state = initialize_state(cfg, scheme)
    report = audit_feasibility(state, cfg, EveRegion.from_config(cfg), radar=scheme != "bench3")
    print(json.dumps(report | {"worst": max(report.values())}, indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "presets":
            if args.name:
                sys.stdout.write(config_text(load_config(args.name)))
            else:
                print("\n".join(sorted(PRESETS)))
            return EXIT_OK
        if args.command == "audit":
            return _audit(args)
        spec = RunSpec(
            source=args.scenario, scheme=args.scheme, out_dir=args.out, seed=args.seed,
            max_iters=args.max_iters, tol=args.tol, grid=args.grid,
            sweep_axis=getattr(args, "axis", None), sweep_values=tuple(getattr(args, "values", ()) or ()),
            jobs=getattr(args, "jobs", 1),
        )
        summaries = run(spec)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for s in summaries:
        if "final_objective" in s:
            print(f"{s['scenario']} {s['scheme']}: {s['final_objective']!r} J, "
                  f"{s['iterations']} iterations, {s['status']}")
        else:
            print(f"{s['scenario']} {s['scheme']}: {s['status']}: {s['message']}")
    return exit_code(summaries)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
