"""Command-line entry point: ``mica {simulate,estimate,group,bench,distance}``.

Exit status is 0 on success, 1 for usage or input errors and 2 when a
numerical step fails (singular covariance, constant projection, too many
failed replications).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .estimator import MicaConfig, estimate_mica, estimate_mica_sequential
from .exceptions import (
    DegenerateDenominator,
    DegenerateProjection,
    MicaError,
    SingularCovariance,
    TooManyFailures,
)
from .group import GroupStructure, algorithm1, estimate_gmica_known, estimate_r, group_from_graph, pair_stats
from .io import fmt, read_matrix, write_matrix
from .ortho import as_ortho, d_distance_scaled, dtilde_distance_scaled, split_blocks
from .simulate import DESIGNS, DISTRIBUTIONS, DgpSpec, adjusted_truth, generate, whiten

NUMERICAL = (DegenerateDenominator, DegenerateProjection, SingularCovariance, TooManyFailures,
             np.linalg.LinAlgError, FloatingPointError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _sizes(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated sizes, got {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("group sizes must be positive")
    return sizes


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    spec = DgpSpec(args.design, args.p, args.n, args.dist, args.seed, args.burn_in)
    data = generate(spec)
    _, transform = whiten(data.y)
    truth = adjusted_truth(data.a_true, data.x_true, data.groups_true, transform)
    out = _outdir(args.out)
    write_matrix(out / "y.csv", data.y, "y")
    write_matrix(out / "x_true.csv", data.x_true, "x")
    write_matrix(out / "a_true.csv", data.a_true, "a")
    write_matrix(out / "b_true.csv", truth, "b")
    _dump({"design": args.design, "p": args.p, "n": args.n, "dist": args.dist,
           "seed": args.seed, "burn_in": args.burn_in,
           "group_sizes": list(data.groups_true.sizes)}, out / "meta.json")
    print(f"wrote {out}/y.csv ({args.n} x {args.p})")
    return 0


def cmd_estimate(args) -> int:
    _, y = read_matrix(args.input)
    w, transform = whiten(y) if not args.no_whiten else (y - y.mean(axis=0), np.eye(y.shape[1]))
    cfg = MicaConfig(h0=args.h0, n_starts=args.n_starts, seed=args.seed)
    summary = {"method": args.method, "h0": args.h0, "seed": args.seed, "n": y.shape[0], "p": y.shape[1]}
    if args.method == "mica":
        res = estimate_mica(w, cfg)
        a_hat, comps = res.a_hat, res.components
        summary.update(objective=res.objective, start_index=res.start_index,
                       converged=res.converged, iterations=len(res.trace) - 1)
    elif args.method == "mica-sequential":
        res = estimate_mica_sequential(w, cfg)
        a_hat, comps = res.a_hat, res.components
        summary.update(objective=res.objective, converged=res.converged)
    elif args.method == "gmica-known":
        if args.groups is None:
            raise UsageError("estimate: --groups is required for gmica-known")
        groups = GroupStructure.from_sizes(args.groups)
        res = estimate_gmica_known(w, groups, cfg)
        a_hat, comps = res.a_hat, res.components
        summary.update(objective=res.objective, converged=res.converged, group_sizes=list(groups.sizes))
    else:
        res = algorithm1(w, cfg, c0=args.c0, max_outer=args.max_outer)
        a_hat, comps = res.a_hat, res.components
        summary.update(objective=res.objective, converged=res.converged, r_hat=res.r_hat,
                       iterations=res.iterations, group_sizes=list(res.groups.sizes))
    out = _outdir(args.out)
    write_matrix(out / "a_hat.csv", a_hat, "a")
    write_matrix(out / "components.csv", comps, "x")
    write_matrix(out / "transform.csv", transform, "t")
    _dump({k: (fmt(v) if isinstance(v, float) else v) for k, v in summary.items()},
          out / "summary.json")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_group(args) -> int:
    _, x = read_matrix(args.input)
    stats = pair_stats(x, args.h0)
    r_hat = estimate_r(stats, args.c0) if x.shape[1] >= 3 else int(stats[0, 1] > 1e-10)
    found = group_from_graph(stats, r_hat)
    result = {"r_hat": r_hat, "group_sizes": list(found.sizes),
              "groups": [m.tolist() for m in found.members()]}
    if args.out:
        out = _outdir(args.out)
        write_matrix(out / "pair_stats.csv", stats, "m")
        _dump(result, out / "groups.json")
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    cfg = harness.load_config(args.config, h0=args.h0, replications=args.reps,
                              base_seed=args.seed, workers=args.workers)
    report = harness.run_experiment(cfg)
    out = args.out or cfg.output
    if out:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        report.write_summary(out, timing=args.timing)
        report.write_replications(out.with_suffix(".replications.csv"), timing=args.timing)
    pi = "" if not cfg.grouped else f" pi={report.pi:.3f}"
    print(f"{cfg.setting}: mean_d2={report.mean_distance:.4f} sd_d2={report.sd_distance:.4f}{pi}"
          f" failed={report.failed}")
    return 0


def cmd_distance(args) -> int:
    _, a = read_matrix(args.a)
    _, b = read_matrix(args.b)
    a, b = as_ortho(a), as_ortho(b)
    if a.shape != b.shape:
        raise MicaError(f"matrix shapes differ: {a.shape} vs {b.shape}")
    if args.groups:
        sizes = args.groups
        value = dtilde_distance_scaled(split_blocks(a, sizes), split_blocks(b, sizes))
    else:
        value = d_distance_scaled(a, b)
    print(repr(float(value)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mica", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a simulation design as CSV")
    s.add_argument("--design", choices=DESIGNS, required=True)
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--dist", choices=DISTRIBUTIONS, default="normal")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--burn-in", type=int, default=500)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate the separating matrix of a CSV series")
    e.add_argument("--input", required=True)
    e.add_argument("--method", choices=harness.METHODS, default="mica")
    e.add_argument("--h0", type=int, default=1)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--n-starts", type=int, default=200)
    e.add_argument("--groups", type=_sizes, help="group sizes for gmica-known, e.g. 3,2,1")
    e.add_argument("--c0", type=float, default=0.75)
    e.add_argument("--max-outer", type=int, default=10)
    e.add_argument("--no-whiten", action="store_true", help="input is already white")
    e.add_argument("--out", required=True, help="output directory")
    e.set_defaults(func=cmd_estimate)

    g = sub.add_parser("group", help="pair statistics and grouping of component series")
    g.add_argument("--input", required=True)
    g.add_argument("--h0", type=int, default=1)
    g.add_argument("--c0", type=float, default=0.75)
    g.add_argument("--out")
    g.set_defaults(func=cmd_group)

    b = sub.add_parser("bench", help="run a Monte Carlo experiment config")
    b.add_argument("--config", required=True)
    b.add_argument("--h0", type=int)
    b.add_argument("--reps", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--workers", type=int)
    b.add_argument("--out")
    b.add_argument("--timing", action="store_true", help="record wall-clock runtimes")
    b.set_defaults(func=cmd_bench)

    d = sub.add_parser("distance", help="scaled distance between two orthogonal matrices")
    d.add_argument("a")
    d.add_argument("b")
    d.add_argument("--groups", type=_sizes, help="block sizes; gives the block distance")
    d.set_defaults(func=cmd_distance)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except MicaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
