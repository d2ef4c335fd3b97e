"""Command-line driver: dataset ingestion, experiment runs, CSV artifacts.

Subcommands: ``train``, ``residue-density``, ``sample-test``, ``reference``.
Options may also come from a flat ``key=value`` config file; explicit flags
win over config entries.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
from scipy import stats

from .data import load_dataset, scale_features, synthetic_dataset
from .losses import LOSS_KINDS, make_loss
from .samplers import AliasTable, CdfSampler, TreeSampler, marginals_of, plan_build, plan_draw_many
from .solver import SolverConfig, run, run_reference, trace_to_csv

TARGETS = (1e-4, 1e-6)


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def _read_config(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise SystemExit(f"config line {lineno}: expected key=value, got {line!r}")
        values[key.strip().replace("-", "_")] = val.strip()
    return values


def _merged(args: argparse.Namespace) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    conf = _read_config(args.config)
    for key, raw in conf.items():
        if not hasattr(args, key):
            raise SystemExit(f"unknown config key {key!r}")
        if getattr(args, key) is not None:
            continue  # flags win
        if key in ("variant", "seed", "epochs_at"):
            setattr(args, key, raw.split(","))
        else:
            setattr(args, key, raw)
    return args


def _get_dataset(args, parser):
    if bool(args.data) == bool(args.synthetic):
        parser.error("exactly one of --data and --synthetic is required")
    if args.data:
        ds = load_dataset(args.data, dim=int(args.dim) if args.dim else None)
    else:
        try:
            n, d, density, seed = args.synthetic.split(",")
            ds = synthetic_dataset(int(n), int(d), float(density), int(seed))
        except ValueError as exc:
            parser.error(f"bad --synthetic spec {args.synthetic!r}: {exc}")
    scale = args.scale or "none"
    return scale_features(ds, scale)


def _resolve_lambda(args, ds) -> float:
    if args.lam is not None:
        return float(args.lam)
    return 1.0 / math.sqrt(ds.n)


_VARIANT_ALIASES = {
    "dfsdca": "dfsdca",
    "adfsdca": "adfsdca",
    "adfsdca+": "adfsdca_plus",
    "adfsdca_plus": "adfsdca_plus",
    "minibatch": "minibatch",
}


def _parse_variant(spec: str, base: SolverConfig, parser) -> tuple[str, SolverConfig]:
    name, _, opts = spec.partition(":")
    name = name.strip()
    if name not in _VARIANT_ALIASES:
        parser.error(f"unknown variant {name!r}")
    cfg = SolverConfig(**{**base.__dict__, "variant": _VARIANT_ALIASES[name]})
    label = _VARIANT_ALIASES[name]
    for item in filter(None, (s.strip() for s in opts.split(","))):
        key, sep, val = item.partition("=")
        if not sep:
            parser.error(f"bad variant option {item!r} (expected key=value)")
        if key in ("s", "shrink"):
            cfg.shrink = float(val)
            label += f"_s{val}"
        elif key in ("b", "batch"):
            cfg.batch = int(val)
            label += f"_b{val}"
        elif key == "eso":
            cfg.eso_mode = val
        elif key == "policy":
            cfg.theta_policy = val
        elif key == "theta":
            cfg.theta = float(val)
        else:
            parser.error(f"unknown variant option {key!r}")
    return label, cfg


def cmd_train(args, parser) -> int:
    ds = _get_dataset(args, parser)
    lam = _resolve_lambda(args, ds)
    loss = make_loss(args.loss or "quadratic")
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in (args.seed or ["0"])]
    epochs = int(args.epochs if args.epochs is not None else 20)
    base = SolverConfig(
        lam=lam,
        case=args.case or "all_convex",
        theta_policy=args.theta_policy or "adaptive",
        shrink=float(args.shrink) if args.shrink is not None else 10.0,
        batch=int(args.batch) if args.batch is not None else 1,
        eso_mode=args.eso_mode or "example_nnz",
        epochs=epochs,
    )
    runs = []
    for spec in args.variant or ["adfsdca"]:
        label, cfg = _parse_variant(spec, base, parser)
        try:
            cfg.validate(ds.n)
        except ValueError as exc:
            parser.error(str(exc))
        runs.append((label, cfg))

    t0 = time.perf_counter()
    reference = run_reference(ds, loss, lam)
    meta_lines = [
        f"started={time.strftime('%Y-%m-%dT%H:%M:%S')}",
        f"n={ds.n} d={ds.d} loss={loss.kind} lambda={_fmt(lam)}",
        f"reference_primal={_fmt(reference.primal)}",
        f"reference_grad_inf={_fmt(reference.grad_inf)}",
        f"reference_approximate={reference.approximate}",
        f"reference_seconds={_fmt(time.perf_counter() - t0)}",
    ]
    summary_rows = []
    for label, cfg in runs:
        for seed in seeds:
            cfg_run = SolverConfig(**{**cfg.__dict__, "seed": seed})
            t1 = time.perf_counter()
            result = run(cfg_run, ds, loss, reference)
            elapsed = time.perf_counter() - t1
            name = f"{label}_seed{seed}"
            # timing is machine-dependent, so it lives next to the trace,
            # keeping the trace file itself reproducible byte-for-byte
            (out / f"{name}.csv").write_text(trace_to_csv(result.trace, include_seconds=False))
            _write_csv(
                out / f"{name}_timing.csv",
                ["epoch", "seconds"],
                [[row.epoch, _fmt(row.seconds)] for row in result.trace],
            )
            reached = [result.epochs_to(t) for t in TARGETS]
            summary_rows.append(
                [label, seed]
                + ["" if e is None else e for e in reached]
                + [_fmt(elapsed)]
            )
            meta_lines.append(f"run={name} seconds={_fmt(elapsed)} message={result.message!r}")
    _write_csv(out / "summary.csv", ["variant", "seed", "epochs_to_1e-4", "epochs_to_1e-6", "seconds"], summary_rows)
    (out / "metadata.txt").write_text("\n".join(meta_lines) + "\n")
    return 0


def cmd_residue_density(args, parser) -> int:
    ds = _get_dataset(args, parser)
    lam = _resolve_lambda(args, ds)
    loss = make_loss(args.loss or "quadratic")
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    epochs_at = tuple(int(e) for e in (args.epochs_at or []))
    if not epochs_at:
        return 0
    total = int(args.epochs if args.epochs is not None else max(epochs_at) or 1)
    total = max(total, max(epochs_at), 1)
    seed = int((args.seed or ["0"])[0])
    for variant in ("dfsdca", "adfsdca"):
        cfg = SolverConfig(variant=variant, lam=lam, epochs=total, seed=seed, residue_epochs=epochs_at)
        result = run(cfg, ds, loss)
        for epoch, kappa_abs in sorted(result.residue_snapshots.items()):
            top = float(kappa_abs.max())
            edges = np.linspace(0.0, top if top > 0 else 1.0, 51)
            counts, _ = np.histogram(kappa_abs, bins=edges)
            _write_csv(
                out / f"residue_{variant}_epoch{epoch}.csv",
                ["bin_lo", "bin_hi", "count"],
                [[_fmt(lo), _fmt(hi), int(c)] for lo, hi, c in zip(edges[:-1], edges[1:], counts)],
            )
    return 0


def _parse_marginals(args, parser) -> tuple[np.ndarray, int]:
    b = int(args.batch if args.batch is not None else 2)
    if args.dist == "uniform":
        n = int(args.n if args.n is not None else 8)
        q = np.full(n, b / n)
    else:
        try:
            q = np.asarray([float(x) for x in args.dist.split(",")])
        except ValueError:
            parser.error(f"bad --dist {args.dist!r}")
    bad = np.flatnonzero((q <= 0.0) | (q >= 1.0))
    if bad.size:
        i = int(bad[0])
        print(f"infeasible marginal: q[{i}]={q[i]} outside (0, 1)", file=sys.stderr)
        raise SystemExit(2)
    if abs(q.sum() - b) > 1e-9:
        print(f"infeasible marginals: sum {q.sum()} != batch {b}", file=sys.stderr)
        raise SystemExit(2)
    return q, b


def cmd_sample_test(args, parser) -> int:
    q, b = _parse_marginals(args, parser)
    draws = int(args.draws if args.draws is not None else 10**6)
    seed = int((args.seed or ["0"])[0])
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.Philox(seed))

    plan = plan_build(q, b)
    _write_csv(
        out / "levels.csv",
        ["level", "t", "i", "j"],
        [[k + 1, _fmt(t), int(lo), int(hi)] for k, (t, lo, hi) in enumerate(zip(plan.t, plan.lo, plan.hi))],
    )
    exact = marginals_of(plan)
    batches = plan_draw_many(plan, rng, draws)
    counts = np.bincount(batches.ravel(), minlength=q.size)
    empirical = counts / draws
    _write_csv(
        out / "marginals.csv",
        ["coord", "q", "q_exact", "q_empirical"],
        [[i, _fmt(q[i]), _fmt(exact[i]), _fmt(empirical[i])] for i in range(q.size)],
    )

    # coordinate-level fit of the plan, then the three single-coordinate samplers on p = q/b
    rows = []
    expected = exact * draws
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    rows.append(["plan", _fmt(chi2), q.size - 1, _fmt(1.0 - stats.chi2.cdf(chi2, q.size - 1))])
    p = q / b
    for name, sampler in (
        ("cdf", CdfSampler(p)),
        ("alias", AliasTable(p)),
        ("tree", TreeSampler(p)),
    ):
        idx = sampler.draw_many(rng, draws)
        c = np.bincount(idx, minlength=p.size)
        stat, pval = stats.chisquare(c, f_exp=p * draws)
        rows.append([name, _fmt(stat), p.size - 1, _fmt(pval)])
    _write_csv(out / "chi2.csv", ["sampler", "chi2", "dof", "p_value"], rows)
    return 0


def cmd_reference(args, parser) -> int:
    ds = _get_dataset(args, parser)
    lam = _resolve_lambda(args, ds)
    loss = make_loss(args.loss or "quadratic")
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    tol = float(args.tol if args.tol is not None else 1e-12)
    ref = run_reference(ds, loss, lam, tol=tol)
    rows = [["w", j, _fmt(v)] for j, v in enumerate(ref.w)]
    rows += [["alpha", i, _fmt(v)] for i, v in enumerate(ref.alpha)]
    _write_csv(out / "reference.csv", ["kind", "index", "value"], rows)
    (out / "reference_meta.txt").write_text(
        f"primal={_fmt(ref.primal)}\ngrad_inf={_fmt(ref.grad_inf)}\napproximate={ref.approximate}\n"
    )
    return 0


def _add_data_flags(sub):
    sub.add_argument("--data", help="LIBSVM file (gzip accepted via .gz suffix)")
    sub.add_argument("--synthetic", help="n,d,density,seed synthetic instance")
    sub.add_argument("--dim", help="feature dimension override")
    sub.add_argument("--scale", choices=["none", "unit_norm"], help="row scaling (default none)")
    sub.add_argument("--loss", choices=list(LOSS_KINDS), help="loss family (default quadratic)")
    sub.add_argument("--lambda", dest="lam", type=float, help="regularization (default 1/sqrt(n))")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adfsdca", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    train = subs.add_parser("train", help="run solver variants and write traces")
    _add_data_flags(train)
    train.add_argument("--variant", action="append", help="name[:k=v,...]; repeatable")
    train.add_argument("--epochs", type=int)
    train.add_argument("--seed", action="append", help="repeatable")
    train.add_argument("--shrink", type=float)
    train.add_argument("--batch", type=int)
    train.add_argument("--eso-mode", dest="eso_mode", choices=["example_nnz", "feature_degree"])
    train.add_argument("--theta-policy", dest="theta_policy", choices=["adaptive", "fixed"])
    train.add_argument("--case", choices=["all_convex", "average_convex"])
    train.add_argument("--out")
    train.add_argument("--config")

    dens = subs.add_parser("residue-density", help="dump residue histograms per epoch")
    _add_data_flags(dens)
    dens.add_argument("--epochs-at", dest="epochs_at", action="append", help="epochs to snapshot; repeatable")
    dens.add_argument("--epochs", type=int)
    dens.add_argument("--seed", action="append")
    dens.add_argument("--out")
    dens.add_argument("--config")

    samp = subs.add_parser("sample-test", help="exercise the samplers on given marginals")
    samp.add_argument("--dist", required=True, help="comma-separated marginals or 'uniform'")
    samp.add_argument("--n", type=int, help="size for --dist uniform")
    samp.add_argument("--batch", type=int)
    samp.add_argument("--draws", type=int)
    samp.add_argument("--seed", action="append")
    samp.add_argument("--out")

    ref = subs.add_parser("reference", help="compute a high-accuracy solution")
    _add_data_flags(ref)
    ref.add_argument("--tol", type=float)
    ref.add_argument("--out")
    ref.add_argument("--config")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _merged(args)
    handlers = {
        "train": cmd_train,
        "residue-density": cmd_residue_density,
        "sample-test": cmd_sample_test,
        "reference": cmd_reference,
    }
    return handlers[args.command](args, parser)


if __name__ == "__main__":
    sys.exit(main())
