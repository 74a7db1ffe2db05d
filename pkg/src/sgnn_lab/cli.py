"""Command-line entry point exposing the verification suites and the two
experiments.

Subcommands::

    moment-check    closed-form second moments and nonlinearity variance
                    contraction vs brute-force enumeration / Monte Carlo
    variance-sweep  Monte-Carlo output variance vs the first-order bound
                    over a grid of link probabilities
    grad-check      analytic gradients vs central finite differences
    convergence     multi-seed training runs reporting the running minimum
                    of the squared gradient norm
    train-source    the source-localization experiment (accuracy table)
    train-flock     the flocking experiment (closed-loop cost table)

Every subcommand takes ``--seed`` and bit-reproduces its output files under
a fixed seed (timing columns are zeroed in files for that reason).  Exit
codes: 0 success, 1 assertion failure (with ``--assert`` where applicable),
2 invalid configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import variance
from .errors import ConfigError, DivergenceError
from .experiments import common as _common
from .experiments.flocking import FlockingConfig, run_flock_seed
from .experiments.source import SourceLocConfig, run_source_seed
from .graphs import (
    ADJACENCY,
    LAPLACIAN,
    ShiftOperator,
    build_sbm,
    expected_shift_square,
    to_shift,
)
from .model import SgnnConfig, init_tensor, sample_architecture, save_checkpoint
from .rng import Rng
from .training import (TrainConfig, TrainingSet, convergence_metric,
                       gradient_rel_error, train)

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2


def _small_graphs(rng: Rng, max_edges: int) -> list[tuple[str, ShiftOperator]]:
    """The enumeration battery: triangle, path, star, and one random graph."""
    triangle = build_sbm(3, 1, 1.0, 1.0, rng.child(0))
    path4 = ShiftOperator(ADJACENCY, np.diag([1.0, 1, 1], 1) + np.diag([1.0, 1, 1], -1))
    star = np.zeros((6, 6))
    star[0, 1:] = star[1:, 0] = 1.0
    graphs = [("k3", triangle), ("p4", path4), ("star5", ShiftOperator(ADJACENCY, star))]
    for attempt in range(1, 1000):
        random_adj = build_sbm(6, 2, 0.8, 0.5, rng.child(attempt))
        if 1 <= random_adj.num_edges <= max_edges:
            graphs.append(("random6", random_adj))
            break
    return [(name, g) for name, g in graphs if g.num_edges <= max_edges]


def _write_rows(rows: list[dict], columns: list[str], out: Path, name: str, fmt: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out / f"{name}.json"
        with open(path, "w", encoding="ascii") as fh:
            json.dump(rows, fh, indent=1, sort_keys=True)
            fh.write("\n")
    else:
        path = out / f"{name}.csv"
        with open(path, "w", encoding="ascii") as fh:
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_fmt_cell(row[c]) for c in columns) + "\n")
    return path


def _fmt_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _apply_overrides(cfg, overrides: list[str]):
    """Apply key=value overrides to a dataclass config; unknown keys are
    rejected."""
    fields = {f.name: f for f in dataclasses.fields(cfg)}
    updates = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r} (known: {sorted(fields)})")
        current = getattr(cfg, key)
        if isinstance(current, bool):
            updates[key] = raw.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            updates[key] = int(raw)
        elif isinstance(current, float):
            updates[key] = float(raw)
        elif isinstance(current, tuple):
            elem = float if (len(current) == 0 or isinstance(current[0], float)) else int
            updates[key] = tuple(elem(v) for v in raw.split(";") if v != "")
        else:
            updates[key] = raw
    return dataclasses.replace(cfg, **updates)


# ---------------------------------------------------------------------------
# moment-check


def cmd_moment_check(args) -> int:
    rng = Rng(args.seed)
    kinds = [ADJACENCY, LAPLACIAN] if args.kind == "both" else [args.kind]
    rows = []
    ok = True
    for name, adj in _small_graphs(rng.child(0), args.max_edges):
        for kind in kinds:
            shift = to_shift(adj, kind)
            for p in (0.3, 0.5, 0.9):
                closed = expected_shift_square(shift, p)
                brute = variance.enumerate_expected_shift_square(shift, p, args.max_edges)
                err = float(np.abs(closed - brute).max())
                passed = err <= 1e-12
                ok &= passed
                rows.append({"check": "second_moment", "case": f"{name}/{kind}/p={p}",
                             "value": err, "pass": passed})
    dists = [
        ("normal", lambda r, n: r.normal(0.0, 1.0, n)),
        ("uniform", lambda r, n: r.uniform(-2.0, 3.0, n)),
        ("exponential", lambda r, n: r.generator.exponential(1.5, n) - 1.0),
        ("coin", lambda r, n: np.where(r.random(n) < 0.5, -1.0, 1.0)),
        ("laplace", lambda r, n: r.generator.laplace(0.5, 1.0, n)),
    ]
    for kind in ("relu", "abs"):
        for d_idx, (dist_name, sampler) in enumerate(dists):
            child = rng.child(100 + d_idx)
            var_in, var_out = variance.check_nonlinearity_variance(
                kind, lambda n: sampler(child, n), args.samples)
            rel_se = variance.variance_std_error(sampler(rng.child(200 + d_idx), args.samples)) / max(var_in, 1e-12)
            passed = var_out <= var_in * (1.0 + 3.0 * rel_se)
            ok &= passed
            rows.append({"check": "nonlinearity_variance", "case": f"{kind}/{dist_name}",
                         "value": var_out / max(var_in, 1e-12), "pass": passed})
    path = _write_rows(rows, ["check", "case", "value", "pass"], Path(args.out),
                       "moment_check", args.format)
    print(f"moment-check: {sum(r['pass'] for r in rows)}/{len(rows)} cases pass -> {path}")
    return EXIT_OK if ok else EXIT_ASSERTION


# ---------------------------------------------------------------------------
# variance-sweep


def cmd_variance_sweep(args) -> int:
    rng = Rng(args.seed)
    adj = build_sbm(10, 2, 0.8, 0.2, rng.child(0))
    from .graphs import NORMALIZED_ADJACENCY

    base = to_shift(adj, NORMALIZED_ADJACENCY)
    cfg = SgnnConfig(layers=2, features=2, order=2, nonlinearity="relu")
    tensor = init_tensor(cfg, rng.child(1), 0.4)
    x = rng.child(2).normal(size=10)
    constants = variance.tensor_constants(tensor, base, rng=rng.child(3))
    p_grid = args.p if args.p else [0.0, 0.5, 0.8, 0.9, 0.95, 0.99, 1.0]
    reports = [
        variance.make_sgnn_report(tensor, base, p, x, args.samples, rng.child(10 + i), constants)
        for i, p in enumerate(p_grid)
    ]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        path = out / "variance_sweep.json"
        with open(path, "w", encoding="ascii") as fh:
            fh.write("[\n" + ",\n".join(r.to_json() for r in reports) + "\n]\n")
    else:
        path = out / "variance_sweep.csv"
        with open(path, "w", encoding="ascii") as fh:
            fh.write(variance.VarianceReport.csv_header() + "\n")
            for r in reports:
                fh.write(r.to_csv_row() + "\n")
    print(f"variance-sweep: {len(reports)} rows -> {path}")
    if args.check:
        for r in reports:
            if r.p in (0.0, 1.0) and r.mc_variance > 1e-12:
                print(f"  FAIL p={r.p}: deterministic endpoint has variance {r.mc_variance}")
                return EXIT_ASSERTION
            if r.p >= 0.9 and r.p < 1.0 and r.mc_variance > r.bound_first_order + 3 * r.mc_std_error:
                print(f"  FAIL p={r.p}: mc {r.mc_variance} exceeds bound {r.bound_first_order}")
                return EXIT_ASSERTION
        print("  bound holds on the stable-link grid")
    return EXIT_OK


# ---------------------------------------------------------------------------
# grad-check


def cmd_grad_check(args) -> int:
    from .model import FilterTensor, forward
    from .training import backward, _loss_pair

    rng = Rng(args.seed)
    rows = []
    worst = 0.0
    case = 0
    attempts = 0
    while case < args.cases and attempts < args.cases * 20:
        attempts += 1
        r = rng.child(attempts)
        n = int(r.child(0).integers(6, 11))
        adj = build_sbm(n, 2, 0.9, 0.4, r.child(1)) if n % 2 == 0 else build_sbm(n - 1, 2, 0.9, 0.4, r.child(1))
        n = adj.n
        if adj.num_edges == 0:
            continue
        from .graphs import NORMALIZED_ADJACENCY

        base = to_shift(adj, NORMALIZED_ADJACENCY)
        nl = ("relu", "abs", "tanh")[case % 3]
        loss = ("mse", "cross_entropy")[case % 2]
        readout = ("none", "pooled", "per_node")[case % 3]
        if loss == "cross_entropy":
            readout = "pooled"
        cfg = SgnnConfig(layers=2, features=2, order=2, nonlinearity=nl,
                         in_features=1, out_features=1 if readout == "none" else 2,
                         readout=readout, readout_dim=0 if readout == "none" else 3)
        tensor = init_tensor(cfg, r.child(2), 0.6)
        reals = sample_architecture(base, 0.7, cfg, r.child(3))
        x = r.child(4).normal(size=(1, n, 3))
        out, cache = forward(tensor, reals, x)
        # keep kink-prone cases away from non-differentiable points
        if nl in ("relu", "abs") and min(np.abs(u).min() for u in cache.pre_activations) < 1e-4:
            continue
        if loss == "cross_entropy":
            y = r.child(5).integers(0, 3, 3)
        else:
            y = r.child(5).normal(size=out.shape)
        cost, dout = _loss_pair(loss, out, y)
        grad = backward(tensor, reals, cache, dout).flatten()
        flat = tensor.flatten()
        fd = np.zeros_like(flat)
        eps = 1e-5
        for i in range(len(flat)):
            up, dn = flat.copy(), flat.copy()
            up[i] += eps
            dn[i] -= eps
            cu = _loss_pair(loss, forward(FilterTensor.from_flat(cfg, up), reals, x, return_cache=False)[0], y)[0]
            cd = _loss_pair(loss, forward(FilterTensor.from_flat(cfg, dn), reals, x, return_cache=False)[0], y)[0]
            fd[i] = (cu - cd) / (2 * eps)
        rel = gradient_rel_error(grad, fd)
        worst = max(worst, rel)
        rows.append({"case": case, "nonlinearity": nl, "loss": loss,
                     "readout": readout, "max_rel_err": rel})
        case += 1
    path = _write_rows(rows, ["case", "nonlinearity", "loss", "readout", "max_rel_err"],
                       Path(args.out), "grad_check", args.format)
    print(f"grad-check: {len(rows)} cases, max rel err {worst:.3e} -> {path}")
    return EXIT_OK if worst <= 1e-5 and len(rows) == args.cases else EXIT_ASSERTION


# ---------------------------------------------------------------------------
# convergence


def _rate_task(seed: int):
    """Small source-localization instance used for the rate check."""
    rng = Rng(seed, stream=77)
    adj = build_sbm(10, 2, 0.8, 0.2, rng.child(0))
    from .graphs import NORMALIZED_ADJACENCY
    from .experiments.source import gen_source_dataset

    base = to_shift(adj, NORMALIZED_ADJACENCY)
    ds = gen_source_dataset(base, 2, (500, 50, 50), 8, 0.01, rng.child(1))
    cfg = SgnnConfig(layers=1, features=8, order=4, nonlinearity="relu",
                     in_features=1, out_features=8, readout="pooled", readout_dim=2)
    tensor = init_tensor(cfg, rng.child(2), 1.0)
    return tensor, base, TrainingSet(ds.train.inputs, ds.train.labels)


def _convergence_worker(payload) -> dict:
    seed, iterations, p, schedule = payload
    tensor, base, train_set = _rate_task(seed)
    cfg = TrainConfig(iterations=iterations, batch_size=len(train_set), lr=0.05,
                      schedule=schedule, optimizer="sgd", link_p=p, seed=seed,
                      loss="cross_entropy")
    trace = train(tensor, base, train_set, cfg)
    running = convergence_metric(trace)
    return {"seed": seed, "iterations": iterations, "min_grad_sq": float(running[-1]),
            "final_cost": float(trace.costs[-1])}


def cmd_convergence(args) -> int:
    p = args.p[0] if args.p else 0.9
    rows = []
    for seed in range(args.seeds):
        rows.append(_convergence_worker((seed, args.iterations, p, args.schedule)))
    mean_min = float(np.mean([r["min_grad_sq"] for r in rows]))
    rows.append({"seed": "mean", "iterations": args.iterations,
                 "min_grad_sq": mean_min,
                 "final_cost": float(np.mean([r["final_cost"] for r in rows]))})
    path = _write_rows(rows, ["seed", "iterations", "min_grad_sq", "final_cost"],
                       Path(args.out), f"convergence_T{args.iterations}", args.format)
    print(f"convergence: T={args.iterations} p={p} mean running-min |grad|^2 = "
          f"{mean_min:.6g} -> {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiments


def cmd_train_source(args) -> int:
    cfg = _apply_overrides(SourceLocConfig(), args.overrides)
    if args.p:
        cfg = dataclasses.replace(cfg, train_p=args.p[0])
    if args.iterations:
        cfg = dataclasses.replace(cfg, iterations=args.iterations)
    seeds = cfg.seeds[: args.seeds] if args.seeds else cfg.seeds
    cfg = dataclasses.replace(cfg, seeds=tuple(seeds))
    results = _common.map_over_seeds(run_source_seed, cfg, cfg.seeds, args.jobs)
    rows = [row for res in results for row in res["rows"]]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _common.write_results(rows, out / f"source_accuracy.{args.format}", args.format)
    for res, seed in zip(results, cfg.seeds):
        res["sgnn_trace"].to_csv(out / f"source_sgnn_trace_seed{seed}.csv", include_timing=False)
        res["gnn_trace"].to_csv(out / f"source_gnn_trace_seed{seed}.csv", include_timing=False)
        save_checkpoint(res["sgnn_trace"].tensor, out / f"source_sgnn_seed{seed}.ckpt",
                        kind="normalized_adjacency")
        save_checkpoint(res["gnn_trace"].tensor, out / f"source_gnn_seed{seed}.ckpt",
                        kind="normalized_adjacency")
    print(f"train-source: {len(rows)} rows -> {out}")
    if args.check:
        return _check_source_rows(rows, cfg)
    return EXIT_OK


def _mean_acc(rows, method, p):
    vals = [r["value"] for r in rows if r["method"] == method and r["p"] == p]
    return float(np.mean(vals)) if vals else float("nan")


def _check_source_rows(rows, cfg) -> int:
    chance = 1.0 / cfg.communities
    sg7, gn7 = _mean_acc(rows, "sgnn", 0.7), _mean_acc(rows, "gnn", 0.7)
    sg5, gn5 = _mean_acc(rows, "sgnn", 0.5), _mean_acc(rows, "gnn", 0.5)
    checks = [
        ("sgnn >= gnn at p=0.7", sg7 >= gn7),
        ("sgnn beats chance at p=0.5", sg5 > chance),
        ("gnn within 0.1 of chance at p=0.5", abs(gn5 - chance) <= 0.1),
    ]
    for label, passed in checks:
        print(f"  {'PASS' if passed else 'FAIL'}: {label}")
    return EXIT_OK if all(p for _, p in checks) else EXIT_ASSERTION


def cmd_train_flock(args) -> int:
    cfg = _apply_overrides(FlockingConfig(), args.overrides)
    if args.p:
        cfg = dataclasses.replace(cfg, train_p=args.p[0])
    if args.iterations:
        cfg = dataclasses.replace(cfg, iterations=args.iterations)
    seeds = cfg.seeds[: args.seeds] if args.seeds else cfg.seeds
    cfg = dataclasses.replace(cfg, seeds=tuple(seeds))
    results = _common.map_over_seeds(run_flock_seed, cfg, cfg.seeds, args.jobs)
    rows = [row for res in results for row in res["rows"]]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _common.write_results(rows, out / f"flock_cost.{args.format}", args.format)
    for res, seed in zip(results, cfg.seeds):
        res["sgnn_trace"].to_csv(out / f"flock_sgnn_trace_seed{seed}.csv", include_timing=False)
        res["gnn_trace"].to_csv(out / f"flock_gnn_trace_seed{seed}.csv", include_timing=False)
        save_checkpoint(res["sgnn_trace"].tensor, out / f"flock_sgnn_seed{seed}.ckpt",
                        kind="normalized_adjacency")
        save_checkpoint(res["gnn_trace"].tensor, out / f"flock_gnn_seed{seed}.ckpt",
                        kind="normalized_adjacency")
    print(f"train-flock: {len(rows)} rows -> {out}")
    if args.check:
        sg = _mean_acc(rows, "sgnn", 0.7)
        gn = _mean_acc(rows, "gnn", 0.7)
        zero = _mean_acc(rows, "zero", 0.7)
        checks = [
            ("sgnn cost <= gnn cost at p=0.7", sg <= gn),
            ("sgnn beats zero policy at p=0.7", sg < zero),
            ("gnn beats zero policy at p=0.7", gn < zero),
        ]
        for label, passed in checks:
            print(f"  {'PASS' if passed else 'FAIL'}: {label}")
        return EXIT_OK if all(p for _, p in checks) else EXIT_ASSERTION
    return EXIT_OK


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgnn-lab",
        description="Verification suites and experiments for stochastic graph "
                    "filters and networks over unreliable links.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common_flags(p, overrides=False):
        p.add_argument("--seed", type=int, default=0, help="root random seed (default 0)")
        p.add_argument("--out", default=None, help="output directory (default runs/<command>)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for multi-seed fan-out")
        p.add_argument("--assert", dest="check", action="store_true",
                       help="exit 1 if the command's acceptance checks fail")
        p.add_argument("--p", type=float, nargs="*", default=None,
                       help="link probability (grid where applicable)")
        p.add_argument("--T", dest="iterations", type=int, default=None,
                       help="training iterations")
        if overrides:
            p.add_argument("overrides", nargs="*", metavar="key=value",
                           help="config overrides; tuple values use ';' separators")

    p = sub.add_parser("moment-check", help="second-moment closed forms vs enumeration")
    common_flags(p)
    p.add_argument("--kind", choices=(ADJACENCY, LAPLACIAN, "both"), default="both")
    p.add_argument("--max-edges", type=int, default=12)
    p.add_argument("--samples", type=int, default=100_000)
    p.set_defaults(func=cmd_moment_check)

    p = sub.add_parser("variance-sweep", help="Monte-Carlo variance vs first-order bound")
    common_flags(p)
    p.add_argument("--samples", type=int, default=2000)
    p.set_defaults(func=cmd_variance_sweep)

    p = sub.add_parser("grad-check", help="analytic gradients vs finite differences")
    common_flags(p)
    p.add_argument("--cases", type=int, default=20)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("convergence", help="running-min gradient norm for a horizon")
    common_flags(p)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--schedule", choices=("horizon", "invsqrt", "constant"), default="invsqrt")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("train-source", help="source-localization experiment")
    common_flags(p, overrides=True)
    p.add_argument("--seeds", type=int, default=None, help="use only the first N seeds")
    p.set_defaults(func=cmd_train_source)

    p = sub.add_parser("train-flock", help="flocking experiment")
    common_flags(p, overrides=True)
    p.add_argument("--seeds", type=int, default=None, help="use only the first N seeds")
    p.set_defaults(func=cmd_train_flock)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    if args.iterations is not None and args.iterations < 1:
        print("error: --T must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.out is None:
        args.out = f"runs/{args.command}"
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSERTION


if __name__ == "__main__":
    sys.exit(main())
