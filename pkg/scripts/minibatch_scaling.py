#!/usr/bin/env python3
"""Batch-size scan for the mini-batch solver: iterations and epochs to a
target suboptimality for b in a doubling range."""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from adfsdca import SolverConfig, load_dataset, make_loss, run, run_reference, scale_features, synthetic_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data")
    ap.add_argument("--synthetic", default="800,80,0.15,1")
    ap.add_argument("--unit-norm", action="store_true", default=True, help="row-normalize (default)")
    ap.add_argument("--no-unit-norm", dest="unit_norm", action="store_false")
    ap.add_argument("--loss", default="quadratic", choices=["quadratic", "logistic"])
    ap.add_argument("--lambda", dest="lam", type=float, default=None)
    ap.add_argument("--batches", default="1,2,4,8,16,32")
    ap.add_argument("--target", type=float, default=1e-4)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if args.data:
        ds = load_dataset(args.data)
    else:
        n, d, density, seed = args.synthetic.split(",")
        ds = synthetic_dataset(int(n), int(d), float(density), int(seed))
    if args.unit_norm:
        ds = scale_features(ds, "unit_norm")
    lam = args.lam if args.lam is not None else 1.0 / np.sqrt(ds.n)
    loss = make_loss(args.loss)

    reference = run_reference(ds, loss, lam)
    print(f"n={ds.n} d={ds.d} loss={loss.kind} lambda={lam:.5g} target={args.target:g}")
    print(f"{'b':>4s} {'iters':>8s} {'b*iters/iters(1)':>17s} {'epochs':>7s}")
    base_iters = None
    for b in (int(x) for x in args.batches.split(",")):
        cfg = SolverConfig(variant="minibatch", batch=b, lam=lam, epochs=args.epochs, seed=args.seed)
        result = run(cfg, ds, loss, reference)
        it = result.iterations_to(args.target)
        ep = result.epochs_to(args.target)
        if it is None:
            print(f"{b:4d} {'-':>8s} {'-':>17s} {'-':>7s}")
            continue
        if base_iters is None:
            base_iters = it
        print(f"{b:4d} {it:8d} {b * it / base_iters:17.2f} {ep:7d}")


if __name__ == "__main__":
    main()
