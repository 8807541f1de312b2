"""Command-line entry point: ``gabigan {search,compare,gradcheck,report}``.

Exit codes: 0 success, 1 run failure or gradient-check breach, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from gabigan import harness
from gabigan.config import METHODS, ConfigError, load_config, resolve_out_dir
from gabigan.history import RunHistory

log = logging.getLogger("gabigan")


def _load(args):
    cfg = load_config(args.config)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    return replace(cfg, **changes) if changes else cfg


def cmd_search(args) -> int:
    cfg = _load(args)
    out = resolve_out_dir(args.out, cfg)

    def progress(rec):
        log.info("generation %d: best %.4f mean %.4f", rec.generation, rec.best_fitness,
                 rec.mean_fitness)

    history = harness.run_method(cfg, on_generation=progress)
    history.write(out)
    cfg.save(out / "config.json")
    print(f"best fitness {history.best_fitness:.6f} after {history.total_evaluations} "
          f"evaluations; wrote {out}")
    return 0


def cmd_compare(args) -> int:
    cfg = _load(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigError(f"unknown method: {', '.join(unknown)}")
    if args.equal_time is not None:
        cfg = replace(cfg, ga=replace(cfg.ga, budget_seconds=args.equal_time,
                                      budget_evals=None, generations=None))
    out = resolve_out_dir(args.out, cfg)
    rows = harness.compare(cfg, methods, args.seeds,
                           on_run=lambda r: log.info("%s seed %d: %.4f", r["method"], r["seed"],
                                                     r["best_fitness"]))
    path = harness.write_comparison(rows, out)
    print(harness.median_table(rows), end="")
    print(f"wrote {path}")
    return 0


def cmd_gradcheck(args) -> int:
    rows = harness.gradcheck_matrix(seed=args.seed, corrupt=args.corrupt_gradient)
    for r in rows:
        status = "ok" if r["ok"] else "FAIL"
        print(f"{r['name']:<20} max_rel_err={r['error']:.3e} tol={r['tolerance']:.0e} {status}")
    return 0 if all(r["ok"] for r in rows) else 1


def cmd_report(args) -> int:
    history = RunHistory.read(args.run)
    best = history.best_candidate()
    if best is None:
        raise ValueError("history holds no evaluated candidate")
    print(harness.format_candidate(best, history.method), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gabigan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log per-generation progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("search", help="run one search")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_search)

    c = sub.add_parser("compare", help="equal-budget comparison over several seeds")
    c.add_argument("--config", required=True)
    c.add_argument("--methods", default="proposed,small_set,random")
    c.add_argument("--seeds", type=int, default=5)
    c.add_argument("--seed", type=int, help="first seed (default: config seed)")
    c.add_argument("--out")
    c.add_argument("--workers", type=int)
    c.add_argument("--equal-time", type=float, metavar="SECONDS",
                   help="give every run the same wall-clock budget instead of evaluations")
    c.set_defaults(func=cmd_compare)

    g = sub.add_parser("gradcheck", help="finite-difference check of the network library")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    g.set_defaults(func=cmd_gradcheck)

    r = sub.add_parser("report", help="print the best candidate of a finished run")
    r.add_argument("--run", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
